"""First-stage task sweep: joint, POS only, WSG only, and no first stage."""
from _common import corpus_config, parser, run, setup, table


def main():
    args = parser(__doc__).parse_args()
    work = setup(args)
    rows = []
    for task in ("joint", "pos_only", "wsg_only"):
        per_seed = {seed: run(corpus_config(args, seed, work), stage1_task=task, seed=seed) for seed in args.seeds}
        rows.append((task, "M2", {s: per_seed[s]["M2"] for s in args.seeds}))
        rows.append((task, "M3", {s: per_seed[s]["M3"] for s in args.seeds}))
    mb = {seed: run(corpus_config(args, seed, work), stage1_task="none", seed=seed)["Mb"] for seed in args.seeds}
    rows.append(("none", "Mb", mb))
    table(rows, work / "multitask_ablation.json")


if __name__ == "__main__":
    main()
