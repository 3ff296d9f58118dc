"""Full-size Att-LSTM run on the German histcorp split (multi-hour on CPU).

    python scripts/run_full_german.py /data/histcorp/german runs/german-att-lstm

Expects ``train.txt``, ``dev.txt`` and ``test.txt`` (tab-separated
historical/modern pairs) in the data directory. Uses the full-size model
profile and default training schedule, then decodes and scores the test split.
"""
import argparse
import logging
from pathlib import Path

from histnorm.experiment import ExperimentConfig, run_cycle


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("data_dir")
    ap.add_argument("out_dir")
    ap.add_argument("--preset", default="Att-LSTM")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

    d = Path(args.data_dir)
    cfg = ExperimentConfig(train=str(d / "train.txt"), dev=str(d / "dev.txt"), test=str(d / "test.txt"),
                           output_dir=args.out_dir, preset=args.preset, profile="full", seed=args.seed)
    row = run_cycle(cfg.validate())
    if row.status != "ok":
        raise SystemExit(row.error)
    print(row.report.to_keyvalue())


if __name__ == "__main__":
    main()
