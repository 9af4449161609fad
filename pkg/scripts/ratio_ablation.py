"""Annotated-data ratio sweep: baseline Mb against M2 and M3 at each R_a."""
from _common import corpus_config, parser, run, setup, table


def main():
    p = parser(__doc__)
    p.add_argument("--ratios-annotated", type=float, nargs="+", default=[0.25, 0.5, 1.0])
    p.add_argument("--ratio-projected", type=float, default=1.0)
    args = p.parse_args()
    work = setup(args)
    rows = []
    for ra in args.ratios_annotated:
        mb, joint = {}, {}
        for seed in args.seeds:
            base = corpus_config(args, seed, work)
            common = dict(ratio_annotated=ra, ratio_projected=args.ratio_projected, seed=seed)
            mb[seed] = run(base, stage1_task="none", **common)["Mb"]
            joint[seed] = run(base, stage1_task="joint", **common)
        setting = f"R_a={ra:g} R_p={args.ratio_projected:g}"
        rows.append((setting, "Mb", mb))
        rows.append((setting, "M2", {s: joint[s]["M2"] for s in joint}))
        rows.append((setting, "M3", {s: joint[s]["M3"] for s in joint}))
    table(rows, work / "ratio_ablation.json")


if __name__ == "__main__":
    main()
