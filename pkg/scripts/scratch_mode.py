"""Training from random initialization: CE against constant-alpha mixtures."""

from _common import load, mean_std, parser, run_all


def main():
    p = parser(__doc__, "scratch.json")
    p.add_argument("--alphas", type=float, nargs="+", default=[0.0, 0.2, 0.5])
    args = p.parse_args()
    runs = run_all(load(args, **{"loss.kind": "CE"}))
    print(f"CE          A_T {mean_std(r.metrics['A_T'] for r in runs)}")
    for a in args.alphas:
        cfg = load(args, **{"loss.kind": "aEPG", "schedule.kind": "constant", "schedule.alpha": a})
        runs = run_all(cfg)
        print(f"alpha={a:<5} A_T {mean_std(r.metrics['A_T'] for r in runs)}")


if __name__ == "__main__":
    main()
