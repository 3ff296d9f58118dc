"""Train and score each preset on the synthetic corpus.

    python scripts/synthetic_benchmark.py --presets Att-RNN Att-GRU Att-LSTM Transformer

Prints one row per preset (accuracy, CER, best dev perplexity, wall time) and
the copy-everything baseline for reference.
"""
import argparse
import logging
import time

from histnorm.decoding import normalize_batch
from histnorm.evaluation import cer, report
from histnorm.models import Seq2Seq, make_config
from histnorm.segmentation import Segmenter
from histnorm.synthetic import synthetic_dataset
from histnorm.training import TOY_TRAIN, TrainConfig, train


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--presets", nargs="+", default=["Att-RNN", "Att-GRU", "Att-LSTM", "Transformer"])
    ap.add_argument("--max-updates", type=int, default=6000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--beam-size", type=int, default=5)
    ap.add_argument("-v", "--verbose", action="store_true")
    args = ap.parse_args()
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")

    ds = synthetic_dataset()
    seg = Segmenter.fit([p.historical for p in ds.train] + [p.modern for p in ds.train])
    sources = [p.historical for p in ds.test]
    print(f"identity baseline: CER {cer(sources, [p.modern for p in ds.test]):.4f}")
    print(f"{'preset':<14}{'acc':>7}{'cer':>8}{'dev ppl':>9}{'updates':>9}{'secs':>7}")
    for preset in args.presets:
        model = Seq2Seq(make_config(preset, len(seg.vocab), "toy"), seed=args.seed)
        t0 = time.perf_counter()
        res = train(model, seg, ds.train, ds.dev,
                    TrainConfig(**TOY_TRAIN, max_updates=args.max_updates, seed=args.seed))
        rep = report(ds.test, normalize_batch(sources, "neural", model, seg, beam_size=args.beam_size))
        print(f"{preset:<14}{100 * rep.word_accuracy:>7.2f}{rep.cer:>8.4f}"
              f"{res.best.dev_perplexity:>9.4f}{res.updates:>9}{time.perf_counter() - t0:>7.0f}",
              flush=True)


if __name__ == "__main__":
    main()
