"""M1 / M2 / M3 on the synthetic corpus, medians over seeds."""
from _common import corpus_config, parser, run, setup, table


def main():
    args = parser(__doc__).parse_args()
    work = setup(args)
    per_seed = {}
    for seed in args.seeds:
        per_seed[seed] = run(corpus_config(args, seed, work))
    rows = [("joint", m, {s: per_seed[s][m] for s in args.seeds}) for m in ("M1", "M2", "M3")]
    table(rows, work / "trend.json")


if __name__ == "__main__":
    main()
