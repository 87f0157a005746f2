"""Per-task accuracy matrices and forgetting for one loss, averaged over seeds."""

import numpy as np

from _common import load, parser, run_all


def main():
    p = parser(__doc__, "benchmark.json")
    p.add_argument("--loss", default="aEPG")
    args = p.parse_args()
    runs = run_all(load(args, **{"loss.kind": args.loss}))
    T = runs[0].trace.matrix.n_tasks
    mean = np.full((T, T), np.nan)
    for j in range(T):
        for i in range(j + 1):
            mean[j, i] = np.mean([r.trace.matrix.columns[j][i] for r in runs])
    print(f"{args.loss}: mean accuracy on task i (columns) after task j (rows)")
    for j in range(T):
        print(f"after {j}: " + " ".join(f"{v:6.3f}" if not np.isnan(v) else "     -" for v in mean[j]))
    print("forgetting:", " ".join(f"{np.mean([r.metrics['forgetting'][i] for r in runs]):.3f}"
                                  for i in range(T - 1)))


if __name__ == "__main__":
    main()
