"""Experiment configuration (INI files) and the train -> decode -> evaluate cycle."""
from __future__ import annotations

import configparser
import io
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .data import TokenPair, load_tsv
from .decoding import build_unchanged_lexicon, normalize_batch
from .evaluation import EvalReport, report
from .models import CHAR_COUNTERPART, PRESETS, ConfigError, Seq2Seq, make_config, save_checkpoint
from .segmentation import Segmenter
from .training import TOY_TRAIN, TrainConfig, TrainResult, train

log = logging.getLogger(__name__)

OUTPUT_DIR_ENV = "HISTNORM_OUTPUT_DIR"
DEFAULT_SWEEP_SIZES = (0, 100, 200, 300, 500, 1000, 5000)
MODES = ("neural", "hybrid")
LEXICON_POLICIES = ("majority", "any-unchanged")
BEST_MARKER = "BEST"

# model hyper-parameters an experiment may override on top of its profile
MODEL_OVERRIDES = {
    "num_layers": int, "embed_dim": int, "hidden_dim": int, "num_heads": int,
    "ffn_dim": int, "dropout": float, "tie_output_embeddings": bool, "attention_score": str,
}
TRAIN_OVERRIDES = {
    "base_lr": float, "warmup_steps": int, "checkpoint_every": int, "patience": int,
    "batch_size": int, "max_updates": int, "clip_norm": float, "eval_batch_size": int,
}


def _parse_value(kind, text: str):
    text = text.strip()
    if kind is bool:
        low = text.lower()
        if low in ("1", "true", "yes", "on"):
            return True
        if low in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"not a boolean: {text!r}")
    if kind is float and text.lower() == "none":
        return None
    try:
        return kind(text)
    except ValueError:
        raise ConfigError(f"cannot read {text!r} as {kind.__name__}") from None


def _format_value(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "none"
    return repr(v) if isinstance(v, float) else str(v)


@dataclass
class ExperimentConfig:
    train: str = ""
    dev: str = ""
    test: str = ""
    output_dir: str = ""
    preset: str = "Att-GRU"
    profile: str = "toy"
    bpe_size: int = 0
    seed: int = 0
    mode: str = "neural"
    lexicon_policy: str = "majority"
    beam_size: int = 5
    length_penalty: float = 0.0
    casefold_lexicon: bool = False
    model_overrides: dict = field(default_factory=dict)
    train_overrides: dict = field(default_factory=dict)

    # -- validation ------------------------------------------------------

    def validate(self) -> "ExperimentConfig":
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        subword = PRESETS[self.preset][0] == "subword"
        if self.bpe_size < 0:
            raise ConfigError("bpe_size must be >= 0")
        if subword and self.bpe_size == 0:
            raise ConfigError(f"{self.preset} is a subword preset and needs bpe_size > 0")
        if not subword and self.bpe_size:
            raise ConfigError(f"{self.preset} is a character-level preset; bpe_size must be 0")
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}")
        if self.lexicon_policy not in LEXICON_POLICIES:
            raise ConfigError(f"unknown lexicon policy {self.lexicon_policy!r}")
        if self.beam_size < 1:
            raise ConfigError("beam_size must be >= 1")
        for k in self.model_overrides:
            if k not in MODEL_OVERRIDES:
                raise ConfigError(f"unknown model option {k!r}")
        for k in self.train_overrides:
            if k not in TRAIN_OVERRIDES:
                raise ConfigError(f"unknown training option {k!r}")
        self.train_config()   # TrainConfig checks its own ranges
        return self

    def train_config(self) -> TrainConfig:
        kw = dict(TOY_TRAIN) if self.profile == "toy" else {}
        kw.update(self.train_overrides)
        kw["seed"] = self.seed
        try:
            return TrainConfig(**kw)
        except (ValueError, NotImplementedError) as e:
            raise ConfigError(str(e)) from None

    def resolved_output_dir(self) -> Path:
        out = self.output_dir or os.environ.get(OUTPUT_DIR_ENV, "")
        if not out:
            raise ConfigError(f"no output directory: set [output] dir or ${OUTPUT_DIR_ENV}")
        return Path(out)

    # -- INI round-trip ----------------------------------------------------

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp["data"] = {"train": self.train, "dev": self.dev, "test": self.test}
        cp["output"] = {"dir": self.output_dir}
        cp["model"] = {"preset": self.preset, "profile": self.profile,
                       "bpe_size": str(self.bpe_size), "seed": str(self.seed)}
        for k in sorted(self.model_overrides):
            cp["model"][k] = _format_value(self.model_overrides[k])
        cp["training"] = {k: _format_value(self.train_overrides[k])
                          for k in sorted(self.train_overrides)}
        cp["decoding"] = {"mode": self.mode, "lexicon_policy": self.lexicon_policy,
                          "beam_size": str(self.beam_size),
                          "length_penalty": _format_value(self.length_penalty),
                          "casefold_lexicon": _format_value(self.casefold_lexicon)}
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()

    @classmethod
    def from_ini(cls, text: str, base_dir: str | os.PathLike | None = None) -> "ExperimentConfig":
        """Parse INI text. Relative data/output paths resolve against ``base_dir``."""
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read_string(text)
        except configparser.Error as e:
            raise ConfigError(f"malformed config: {e}") from None
        known = {"data", "output", "model", "training", "decoding"}
        extra = set(cp.sections()) - known
        if extra:
            raise ConfigError(f"unknown config section(s): {sorted(extra)}")
        cfg = cls()

        def path(v):
            if v and base_dir is not None and not os.path.isabs(v):
                return os.path.normpath(os.path.join(base_dir, v))
            return v

        if cp.has_section("data"):
            for k, v in cp["data"].items():
                if k not in ("train", "dev", "test"):
                    raise ConfigError(f"unknown data option {k!r}")
                setattr(cfg, k, path(v))
        if cp.has_section("output"):
            for k, v in cp["output"].items():
                if k != "dir":
                    raise ConfigError(f"unknown output option {k!r}")
                cfg.output_dir = path(v)
        if cp.has_section("model"):
            for k, v in cp["model"].items():
                if k in ("preset", "profile"):
                    setattr(cfg, k, v.strip())
                elif k in ("bpe_size", "seed"):
                    setattr(cfg, k, _parse_value(int, v))
                elif k in MODEL_OVERRIDES:
                    cfg.model_overrides[k] = _parse_value(MODEL_OVERRIDES[k], v)
                else:
                    raise ConfigError(f"unknown model option {k!r}")
        if cp.has_section("training"):
            for k, v in cp["training"].items():
                if k not in TRAIN_OVERRIDES:
                    raise ConfigError(f"unknown training option {k!r}")
                cfg.train_overrides[k] = _parse_value(TRAIN_OVERRIDES[k], v)
        if cp.has_section("decoding"):
            types = {"mode": str, "lexicon_policy": str, "beam_size": int,
                     "length_penalty": float, "casefold_lexicon": bool}
            for k, v in cp["decoding"].items():
                if k not in types:
                    raise ConfigError(f"unknown decoding option {k!r}")
                setattr(cfg, k, _parse_value(types[k], v))
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        p = Path(path)
        try:
            text = p.read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {p}: {e.strerror}") from None
        return cls.from_ini(text, base_dir=p.parent)

    def set_option(self, key: str, value: str) -> None:
        """Apply one ``name=value`` override given on the command line."""
        key = key.strip().replace("-", "_")
        scalar = {f.name: f for f in fields(self) if not f.name.endswith("_overrides")}
        if key in MODEL_OVERRIDES:
            self.model_overrides[key] = _parse_value(MODEL_OVERRIDES[key], value)
        elif key in TRAIN_OVERRIDES:
            self.train_overrides[key] = _parse_value(TRAIN_OVERRIDES[key], value)
        elif key in scalar:
            kind = type(getattr(ExperimentConfig(), key))
            setattr(self, key, _parse_value(kind, value))
        else:
            raise ConfigError(f"unknown option {key!r}")

    def copy(self, **kw) -> "ExperimentConfig":
        return replace(self, model_overrides=dict(self.model_overrides),
                       train_overrides=dict(self.train_overrides), **kw)


# ---------------------------------------------------------------------------


@dataclass
class CycleResult:
    bpe_size: int
    preset: str
    status: str                      # "ok" or "failed"
    report: EvalReport | None = None
    best_perplexity: float | None = None
    updates: int = 0
    seconds: float = 0.0
    error: str = ""


def load_split(path: str, name: str) -> list[TokenPair]:
    if not path:
        raise ConfigError(f"no {name} corpus configured")
    if not Path(path).is_file():
        raise ConfigError(f"{name} corpus not found: {path}")
    return load_tsv(path)


def fit_segmenter(train_pairs, bpe_size: int) -> Segmenter:
    tokens = [p.historical for p in train_pairs] + [p.modern for p in train_pairs]
    return Segmenter.fit(tokens, bpe_size)


def build_model(cfg: ExperimentConfig, segmenter: Segmenter) -> Seq2Seq:
    mc = make_config(cfg.preset, len(segmenter.vocab), cfg.profile, **cfg.model_overrides)
    return Seq2Seq(mc, seed=cfg.seed)


def run_training(cfg: ExperimentConfig, train_pairs=None, dev_pairs=None
                 ) -> tuple[Seq2Seq, Segmenter, TrainResult]:
    """Train one model; writes checkpoints, ``train.log``, ``BEST`` and the config."""
    cfg.validate()
    out = cfg.resolved_output_dir()
    train_pairs = train_pairs if train_pairs is not None else load_split(cfg.train, "train")
    dev_pairs = dev_pairs if dev_pairs is not None else load_split(cfg.dev, "dev")
    segmenter = fit_segmenter(train_pairs, cfg.bpe_size)
    model = build_model(cfg, segmenter)
    out.mkdir(parents=True, exist_ok=True)
    (out / "experiment.ini").write_text(cfg.to_ini(), encoding="utf-8")
    if segmenter.bpe is not None:
        segmenter.bpe.save(out / "bpe.merges")
    segmenter.vocab.save(out / "vocab.txt")
    result = train(model, segmenter, train_pairs, dev_pairs, cfg.train_config(),
                   out_dir=out / "checkpoints", log_file=out / "train.log")
    best = result.best
    best_path = out / "best.bin"
    save_checkpoint(best_path, model, segmenter, asdict(best))
    (out / BEST_MARKER).write_text(json.dumps(
        {"checkpoint": Path(best.path).name if best.path else None,
         "update_step": best.update_step, "dev_perplexity": best.dev_perplexity},
        sort_keys=True) + "\n", encoding="utf-8")
    return model, segmenter, result


def decode_pairs(cfg: ExperimentConfig, model: Seq2Seq, segmenter: Segmenter,
                 tokens, train_pairs=None) -> list[str]:
    lexicon = None
    if cfg.mode == "hybrid":
        if train_pairs is None:
            raise ConfigError("hybrid mode needs the training corpus for its lexicon")
        lexicon = build_unchanged_lexicon(train_pairs, cfg.lexicon_policy, cfg.casefold_lexicon)
    return normalize_batch(tokens, cfg.mode, model, segmenter, lexicon, cfg.beam_size,
                           cfg.length_penalty)


def run_cycle(cfg: ExperimentConfig) -> CycleResult:
    """Train, decode the test split and evaluate. Failures become a ``failed`` row."""
    t0 = time.perf_counter()
    try:
        train_pairs = load_split(cfg.train, "train")
        test_pairs = load_split(cfg.test, "test")
        model, seg, result = run_training(cfg, train_pairs)
        preds = decode_pairs(cfg, model, seg, [p.historical for p in test_pairs], train_pairs)
        out = cfg.resolved_output_dir()
        (out / "predictions.txt").write_text("".join(p + "\n" for p in preds), encoding="utf-8")
        rep = report(test_pairs, preds)
        (out / "report.txt").write_text(rep.to_keyvalue() + "\n", encoding="utf-8")
        return CycleResult(cfg.bpe_size, cfg.preset, "ok", rep, result.best.dev_perplexity,
                           result.updates, time.perf_counter() - t0)
    except Exception as e:  # noqa: BLE001 - a sweep row records any failure
        log.error("cycle %s/bpe=%d failed: %s", cfg.preset, cfg.bpe_size, e)
        return CycleResult(cfg.bpe_size, cfg.preset, "failed", seconds=time.perf_counter() - t0,
                           error=f"{type(e).__name__}: {e}")


_TO_SUBWORD = {char: sub for sub, char in CHAR_COUNTERPART.items()}


def sweep_configs(cfg: ExperimentConfig, sizes) -> list[ExperimentConfig]:
    """One configuration per BPE size; size 0 uses the character-level counterpart."""
    sizes = sorted(set(int(s) for s in sizes))
    if not sizes or sizes[0] < 0:
        raise ConfigError("sweep sizes must be non-negative integers")
    if PRESETS.get(cfg.preset, ("",))[0] == "subword":
        subword, char = cfg.preset, CHAR_COUNTERPART[cfg.preset]
    elif cfg.preset in _TO_SUBWORD:
        subword, char = _TO_SUBWORD[cfg.preset], cfg.preset
    else:
        raise ConfigError(f"{cfg.preset} has no subword counterpart to sweep")
    root = cfg.resolved_output_dir()
    out = []
    for s in sizes:
        c = cfg.copy(bpe_size=s, preset=subword if s else char,
                     output_dir=str(root / f"bpe-{s}"))
        out.append(c.validate())
    return out


def _run_cycle_ini(ini: str) -> CycleResult:
    return run_cycle(ExperimentConfig.from_ini(ini))


def run_sweep(cfg: ExperimentConfig, sizes=DEFAULT_SWEEP_SIZES, jobs: int = 1) -> list[CycleResult]:
    configs = sweep_configs(cfg, sizes)
    if jobs <= 1:
        rows = [run_cycle(c) for c in configs]
    else:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cycle_ini, [c.to_ini() for c in configs]))
    return sorted(rows, key=lambda r: r.bpe_size)


def format_sweep(rows: list[CycleResult]) -> str:
    lines = [f"{'BPE':>6}  {'Preset':<16}{'Status':<8}{'Acc':>7}{'CER':>8}{'DevPPL':>9}"]
    for r in rows:
        if r.status == "ok":
            lines.append(f"{r.bpe_size:>6}  {r.preset:<16}{r.status:<8}"
                         f"{100 * r.report.word_accuracy:>7.2f}{r.report.cer:>8.4f}"
                         f"{r.best_perplexity:>9.4f}")
        else:
            lines.append(f"{r.bpe_size:>6}  {r.preset:<16}{r.status:<8}{'-':>7}{'-':>8}{'-':>9}"
                         f"  {r.error}")
    return "\n".join(lines)

