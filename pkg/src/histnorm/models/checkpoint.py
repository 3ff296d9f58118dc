"""Self-describing checkpoint container.

Layout: the magic line ``HISTNORM-CKPT 1``, an 8-byte little-endian header
length, a UTF-8 JSON header (model config, vocabulary, BPE merges, training
metadata, tensor table), then the raw little-endian tensor bytes in table
order.
"""
from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..autograd import Tensor
from ..segmentation import BpeModel, Segmenter, Vocabulary
from .config import ModelConfig
from .seq2seq import Seq2Seq

MAGIC = b"HISTNORM-CKPT 1\n"


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: Seq2Seq, segmenter: Segmenter, meta: dict | None = None) -> Path:
    path = Path(path)
    le = model.dtype.newbyteorder("<")
    table, blobs, offset = [], [], 0
    for name, p in model.params.items():
        raw = np.ascontiguousarray(p.data, dtype=le).tobytes()
        table.append({"name": name, "shape": list(p.shape), "dtype": le.str,
                      "offset": offset, "nbytes": len(raw)})
        blobs.append(raw)
        offset += len(raw)
    header = {
        "config": model.config.to_dict(),
        "vocab": list(segmenter.vocab.symbols),
        "bpe_merges": None if segmenter.bpe is None else [list(m) for m in segmenter.bpe.merges],
        "bpe_target_vocab_size": None if segmenter.bpe is None else segmenter.bpe.target_vocab_size,
        "meta": meta or {},
        "tensors": table,
    }
    hb = json.dumps(header, ensure_ascii=False, sort_keys=True).encode("utf-8")
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "wb") as f:
        f.write(MAGIC)
        f.write(struct.pack("<Q", len(hb)))
        f.write(hb)
        for raw in blobs:
            f.write(raw)
    tmp.replace(path)
    return path


def read_header(path) -> dict:
    with open(path, "rb") as f:
        if f.read(len(MAGIC)) != MAGIC:
            raise CheckpointError(f"{path}: not a histnorm checkpoint")
        (n,) = struct.unpack("<Q", f.read(8))
        return json.loads(f.read(n).decode("utf-8"))


def load_checkpoint(path) -> tuple[Seq2Seq, Segmenter, dict]:
    data = Path(path).read_bytes()
    if not data.startswith(MAGIC):
        raise CheckpointError(f"{path}: not a histnorm checkpoint")
    pos = len(MAGIC)
    (n,) = struct.unpack_from("<Q", data, pos)
    pos += 8
    header = json.loads(data[pos: pos + n].decode("utf-8"))
    base = pos + n
    params = {}
    dtype = None
    for entry in header["tensors"]:
        dt = np.dtype(entry["dtype"])
        start = base + entry["offset"]
        arr = np.frombuffer(data, dtype=dt, count=int(np.prod(entry["shape"], dtype=np.int64)),
                            offset=start).reshape(entry["shape"])
        dtype = dt.newbyteorder("=")
        params[entry["name"]] = Tensor(arr.astype(dtype), requires_grad=True)
    config = ModelConfig.from_dict(header["config"])
    vocab = Vocabulary(tuple(header["vocab"]))
    if len(vocab) != config.vocab_size:
        raise CheckpointError(
            f"{path}: vocabulary has {len(vocab)} symbols, model expects {config.vocab_size}")
    bpe = None
    if header.get("bpe_merges") is not None:
        bpe = BpeModel(tuple(tuple(m) for m in header["bpe_merges"]),
                       header.get("bpe_target_vocab_size") or 0)
    model = Seq2Seq(config, dtype=dtype or np.float32, params=params)
    return model, Segmenter(vocab, bpe), header.get("meta", {})
