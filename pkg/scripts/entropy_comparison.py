"""Final output entropy and accuracy of every loss on the pretrained benchmark.

Prints one row per loss with mean final entropy, test entropy and A_T, plus
per-seed sign agreement against CE.
"""

from _common import load, mean_std, parser, run_all

LOSSES = ["CE", "EPG", "aEPG", "Focal", "LabelSmooth", "ConfPenalty", "EntropyPenalty", "REINFORCE"]


def main():
    p = parser(__doc__.splitlines()[0], "benchmark.json")
    p.add_argument("--losses", nargs="+", default=LOSSES)
    args = p.parse_args()
    results = {k: run_all(load(args, **{"loss.kind": k})) for k in args.losses}
    ce = [r.final_entropy for r in results["CE"]] if "CE" in results else None
    print(f"{'loss':15s} {'final entropy':>22s} {'test entropy':>22s} {'A_T':>22s}  seeds above CE")
    for kind, runs in results.items():
        ent = [r.final_entropy for r in runs]
        above = f"{sum(e > c for e, c in zip(ent, ce))}/{len(ent)}" if ce else "-"
        print(f"{kind:15s} {mean_std(ent):>22s} {mean_std(r.test_entropy for r in runs):>22s} "
              f"{mean_std(r.metrics['A_T'] for r in runs):>22s}  {above}")


if __name__ == "__main__":
    main()
