"""Write the rule-generated benchmark corpus as train/dev/test TSV files."""
import argparse
from pathlib import Path

from histnorm.data import corpus_stats, save_tsv
from histnorm.synthetic import synthetic_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out_dir")
    ap.add_argument("--pairs", type=int, default=5000)
    ap.add_argument("--types", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    ds = synthetic_dataset(n_pairs=args.pairs, n_types=args.types, seed=args.seed)
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name in ("train", "dev", "test"):
        save_tsv(getattr(ds, name), out / f"{name}.tsv")
    print(corpus_stats(ds).to_keyvalue())


if __name__ == "__main__":
    main()
