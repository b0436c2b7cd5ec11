"""SSL-initialised versus supervised fine-tuning over several seeds of the
planted-signal synthetic world (desk preset)."""
import argparse
import time

from geossl.experiments import ssl_benchmark


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--config", default="vit-trans")
    args = ap.parse_args()
    wins, gains, start = 0, [], time.time()
    for seed in range(args.seeds):
        c = ssl_benchmark(seed, args.config)
        wins += c.improvement > 0
        gains.append(c.improvement)
        print(f"seed {seed}: ssl rmse {c.ssl.test_report.rmse:.3f}  supervised rmse "
              f"{c.supervised.test_report.rmse:.3f}  ({time.time() - start:.0f}s)", flush=True)
    print(f"ssl wins {wins}/{args.seeds}, mean improvement {sum(gains) / len(gains):.3f}")


if __name__ == "__main__":
    main()
