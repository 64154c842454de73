"""Run the seeded robustness experiment and print a per-variant table.

    python scripts/run_robustness.py --out runs/robustness
    python scripts/run_robustness.py --seeds 0 --variants union single:parser1
"""

import argparse
import logging

from depfuse.experiments import ExperimentConfig, run_robustness


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="runs/robustness")
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2, 3, 4])
    ap.add_argument("--variants", nargs="+", default=None)
    ap.add_argument("--n-sentences", type=int, default=2000)
    ap.add_argument("--epochs", type=int, default=5)
    ap.add_argument("--lr", type=float, default=1e-3)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    logging.getLogger("depfuse.train").setLevel(logging.WARNING)

    cfg = ExperimentConfig(seeds=tuple(args.seeds), n_sentences=args.n_sentences,
                           max_epochs=args.epochs, lr=args.lr)
    res = run_robustness(cfg, args.out, args.variants)
    print("variant\tmean_acc\tstd_acc\tper_seed")
    for name, accs in res.accuracy.items():
        s = res.summary()["variants"][name]
        print(f"{name}\t{s['mean_accuracy']:.4f}\t{s['std_accuracy']:.4f}\t" + " ".join(f"{a:.4f}" for a in accs))
    print(f"# {res.seconds:.0f} s, summary in {args.out}/summary.json")


if __name__ == "__main__":
    main()
