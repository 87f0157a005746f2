"""CE versus aEPG accuracy with and without symmetric label noise."""

from _common import load, mean_std, parser, run_all


def main():
    p = parser(__doc__, "benchmark.json")
    p.add_argument("--etas", type=float, nargs="+", default=[0.0, 0.2])
    args = p.parse_args()
    for eta in args.etas:
        for kind in ("CE", "aEPG"):
            runs = run_all(load(args, eta=eta, **{"loss.kind": kind}))
            print(f"eta={eta:<4} {kind:5s} A_T {mean_std(r.metrics['A_T'] for r in runs)}  "
                  f"A~_T {mean_std(r.metrics['A_tilde_T'] for r in runs)}")


if __name__ == "__main__":
    main()
