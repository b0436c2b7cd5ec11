"""Supervised vit-trans fine-tuning with all features (1111) versus no
climate series (1100), on the same splits, over several seeds."""
import argparse
import statistics

from geossl.experiments import ablation_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--config", default="vit-trans")
    args = ap.parse_args()
    full, none = [], []
    for seed in range(args.seeds):
        a, b = ablation_benchmark(seed, args.config)
        full.append(a.test_report.rmse)
        none.append(b.test_report.rmse)
        print(f"seed {seed}: 1111 rmse {full[-1]:.3f}  1100 rmse {none[-1]:.3f}", flush=True)
    print(f"median 1111 {statistics.median(full):.3f}, median 1100 {statistics.median(none):.3f}")


if __name__ == "__main__":
    main()
