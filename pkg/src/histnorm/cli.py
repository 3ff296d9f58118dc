"""``histnorm`` command line.

Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

from .data import CorpusFormatError, corpus_stats, format_stats_table, load_dataset, load_tsv, resplit, save_tsv
from .decoding import build_unchanged_lexicon, normalize_batch
from .evaluation import report
from .experiment import (
    DEFAULT_SWEEP_SIZES, ExperimentConfig, format_sweep, run_sweep, run_training,
)
from .models import ConfigError, load_checkpoint
from .models.checkpoint import CheckpointError
from .segmentation import Vocabulary, bpe_learn

log = logging.getLogger("histnorm")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or inputs; exit code 2."""


def _require_file(path: str, what: str = "file") -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} not found: {path}")
    return p


def _read_lines(path: str) -> list[str]:
    text = _require_file(path, "input file").read_text(encoding="utf-8")
    # first column only, so a corpus TSV works as input too
    return [line.split("\t", 1)[0].strip() for line in text.splitlines() if line.strip()]


def _write_lines(lines, path: str | None) -> None:
    body = "".join(s + "\n" for s in lines)
    if path in (None, "-"):
        sys.stdout.write(body)
    else:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(body, encoding="utf-8")


def _experiment(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig()
    for name in ("train", "dev", "test", "output_dir", "preset", "profile", "bpe_size", "seed"):
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    for item in args.set or []:
        if "=" not in item:
            raise UsageError(f"--set expects name=value, got {item!r}")
        k, v = item.split("=", 1)
        cfg.set_option(k, v)
    return cfg.validate()


# ---------------------------------------------------------------------------
# commands


def cmd_stats(args) -> int:
    for p in (args.train, args.dev, args.test):
        _require_file(p, "corpus file")
    ds = load_dataset(args.train, args.dev, args.test, args.language)
    st = corpus_stats(ds)
    if args.format in ("table", "both"):
        print(format_stats_table([st]))
    if args.format in ("keyvalue", "both"):
        print(st.to_keyvalue())
    return EXIT_OK


def cmd_bpe_learn(args) -> int:
    pairs = load_tsv(_require_file(args.corpus, "corpus file"))
    tokens = [p.historical for p in pairs] + [p.modern for p in pairs]
    model = bpe_learn(tokens, args.size)
    model.save(args.out)
    print(f"{len(model.merges)} merges written to {args.out}")
    return EXIT_OK


def cmd_train(args) -> int:
    cfg = _experiment(args)
    _, _, result = run_training(cfg)
    best = result.best
    print(f"best checkpoint: update {best.update_step}, dev perplexity {best.dev_perplexity:.4f}"
          f" ({result.updates} updates{', stopped early' if result.stopped_early else ''})")
    print(f"output: {cfg.resolved_output_dir()}")
    return EXIT_OK


def cmd_normalize(args) -> int:
    ckpt = _require_file(args.checkpoint, "checkpoint")
    tokens = _read_lines(args.input)
    if not tokens:
        _write_lines([], args.output)
        return EXIT_OK
    model, seg, _ = load_checkpoint(ckpt)
    if args.vocab:
        expected = Vocabulary.load(_require_file(args.vocab, "vocabulary file"))
        if expected.symbols != seg.vocab.symbols:
            raise CheckpointError(f"vocabulary {args.vocab} does not match checkpoint {ckpt}")
    lexicon = None
    if args.mode == "hybrid":
        if not args.train:
            raise UsageError("--mode hybrid needs --train (the lexicon source)")
        lexicon = build_unchanged_lexicon(load_tsv(_require_file(args.train, "training corpus")),
                                          args.lexicon_policy, args.casefold)
        log.info("lexicon: %d copy-through forms (%s)", len(lexicon), args.lexicon_policy)
    preds = normalize_batch(tokens, args.mode, model, seg, lexicon, args.beam_size,
                            args.length_penalty)
    _write_lines(preds, args.output)
    return EXIT_OK


def _predictions(path, n_expected, label="predictions") -> list[str]:
    text = _require_file(path, f"{label} file").read_text(encoding="utf-8")
    preds = [line.strip() for line in text.splitlines()]
    if len(preds) != n_expected:
        raise UsageError(f"{path}: {len(preds)} {label} for {n_expected} test pairs")
    return preds


def cmd_evaluate(args) -> int:
    test = load_tsv(_require_file(args.test, "test corpus"))
    rep = report(test, _predictions(args.predictions, len(test)))
    if args.format in ("table", "both"):
        print(rep.to_table())
    if args.format in ("keyvalue", "both"):
        print(rep.to_keyvalue())
    if args.compare:
        base = report(test, _predictions(args.compare, len(test), "baseline predictions"))
        delta = 100 * (rep.word_accuracy - base.word_accuracy)
        print(f"baseline_word_accuracy={100 * base.word_accuracy:.2f}")
        print(f"delta_accuracy={delta:+.2f}")
    return EXIT_OK


def cmd_resplit(args) -> int:
    for p in (args.train, args.dev, args.test):
        _require_file(p, "corpus file")
    ds = load_dataset(args.train, args.dev, args.test)
    try:
        new = resplit(ds, args.to_train, args.to_dev, args.discard)
    except ValueError as e:
        raise UsageError(str(e)) from None
    out = Path(args.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for name, pairs in (("train", new.train), ("dev", new.dev), ("test", new.test)):
        save_tsv(pairs, out / f"{name}.tsv")
    print(f"{len(new.train)}/{len(new.dev)}/{len(new.test)} written to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _experiment(args)
    sizes = DEFAULT_SWEEP_SIZES
    if args.sizes:
        try:
            sizes = [int(s) for s in args.sizes.split(",") if s.strip()]
        except ValueError:
            raise UsageError(f"--sizes must be comma-separated integers, got {args.sizes!r}") from None
    rows = run_sweep(cfg, sizes, args.jobs)
    table = format_sweep(rows)
    print(table)
    out = cfg.resolved_output_dir()
    out.mkdir(parents=True, exist_ok=True)
    (out / "sweep.txt").write_text(table + "\n", encoding="utf-8")
    return EXIT_OK if all(r.status == "ok" for r in rows) else EXIT_RUNTIME


# ---------------------------------------------------------------------------


def _experiment_args(p):
    p.add_argument("config", nargs="?", help="experiment INI file")
    p.add_argument("--train")
    p.add_argument("--dev")
    p.add_argument("--test")
    p.add_argument("--output-dir", dest="output_dir")
    p.add_argument("--preset")
    p.add_argument("--profile", choices=("toy", "full"))
    p.add_argument("--bpe-size", dest="bpe_size", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--set", action="append", metavar="NAME=VALUE",
                   help="override any config option, e.g. --set max_updates=2000")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="histnorm", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stats", help="corpus statistics")
    p.add_argument("train")
    p.add_argument("dev")
    p.add_argument("test")
    p.add_argument("--language", default="")
    p.add_argument("--format", choices=("table", "keyvalue", "both"), default="both")
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("bpe-learn", help="learn joint BPE merges from a training TSV")
    p.add_argument("corpus")
    p.add_argument("--size", type=int, required=True, help="total symbol budget")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bpe_learn)

    p = sub.add_parser("train", help="train one model")
    _experiment_args(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("normalize", help="normalise tokens with a checkpoint")
    p.add_argument("checkpoint")
    p.add_argument("input", help="one token per line (extra TSV columns ignored)")
    p.add_argument("-o", "--output", default="-")
    p.add_argument("--mode", choices=("neural", "hybrid"), default="neural")
    p.add_argument("--train", help="training TSV for the hybrid lexicon")
    p.add_argument("--lexicon-policy", choices=("majority", "any-unchanged"), default="majority")
    p.add_argument("--casefold", action="store_true", help="case-insensitive lexicon lookup")
    p.add_argument("--beam-size", type=int, default=5)
    p.add_argument("--length-penalty", type=float, default=0.0)
    p.add_argument("--vocab", help="refuse to run unless the checkpoint uses this vocabulary")
    p.set_defaults(func=cmd_normalize)

    p = sub.add_parser("evaluate", help="score predictions against a test TSV")
    p.add_argument("predictions")
    p.add_argument("test")
    p.add_argument("--compare", help="second predictions file; prints the accuracy delta")
    p.add_argument("--format", choices=("table", "keyvalue", "both"), default="both")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("resplit", help="move test pairs into train/dev")
    p.add_argument("train")
    p.add_argument("dev")
    p.add_argument("test")
    p.add_argument("--to-train", type=int, required=True)
    p.add_argument("--to-dev", type=int, required=True)
    p.add_argument("--discard", type=int, default=0)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_resplit)

    p = sub.add_parser("sweep", help="train and evaluate once per BPE size")
    _experiment_args(p)
    p.add_argument("--sizes", help=f"comma-separated (default {','.join(map(str, DEFAULT_SWEEP_SIZES))})")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    args = ap.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command in ("normalize",) and args.beam_size < 1:
            raise UsageError("--beam-size must be >= 1")
        return args.func(args)
    except (UsageError, ConfigError, CorpusFormatError) as e:
        print(f"histnorm {args.command}: {e}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as e:  # noqa: BLE001
        print(f"histnorm {args.command}: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
