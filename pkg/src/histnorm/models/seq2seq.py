"""Encoder-decoder networks for every preset.

Recurrent models: a bidirectional first encoder layer (forward and backward
states concatenated and projected back to ``hidden_dim``), unidirectional
layers above it. Every decoder layer starts from ``tanh(A_l s + c_l)`` where
``s`` is the encoder summary (the top-layer state at the last source
position). The no-attention decoder sees nothing else from the encoder.

Self-attention models: pre-layer-norm Transformer blocks with sinusoidal
positions.

Output logits are ``readout @ E_tgt^T + bias`` when embeddings are tied.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .. import autograd as ag
from ..autograd import Tensor, concat, embedding, layer_norm, matmul, stack, tanh
from ..segmentation import BOS_ID, EOS_ID, PAD_ID
from . import cells
from .attention import multi_head_attention, precompute_keys, sinusoidal_positions, soft_attention
from .config import ModelConfig


# ---------------------------------------------------------------------------
# parameters


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    V, E, H, L = cfg.vocab_size, cfg.embed_dim, cfg.hidden_dim, cfg.num_layers
    shapes: dict[str, tuple[int, ...]] = {"src_emb": (V, E), "tgt_emb": (V, E)}

    def cell(prefix, n_in):
        for k, s in cells.cell_shapes(cfg.architecture, n_in, H).items():
            shapes[f"{prefix}.{k}"] = s

    if cfg.is_transformer:
        F = cfg.ffn_dim

        def block(prefix, cross):
            parts = ["self"] + (["cross"] if cross else [])
            for i, part in enumerate(parts, 1):
                shapes[f"{prefix}.ln{i}.g"] = (E,)
                shapes[f"{prefix}.ln{i}.b"] = (E,)
                for m in ("W_q", "W_k", "W_v", "W_o"):
                    shapes[f"{prefix}.{part}.{m}"] = (E, E)
            n = len(parts) + 1
            shapes[f"{prefix}.ln{n}.g"] = (E,)
            shapes[f"{prefix}.ln{n}.b"] = (E,)
            shapes[f"{prefix}.ffn.W1"] = (E, F)
            shapes[f"{prefix}.ffn.b1"] = (F,)
            shapes[f"{prefix}.ffn.W2"] = (F, E)
            shapes[f"{prefix}.ffn.b2"] = (E,)

        for l in range(L):
            block(f"enc.{l}", cross=False)
        shapes["enc.ln.g"], shapes["enc.ln.b"] = (E,), (E,)
        for l in range(L):
            block(f"dec.{l}", cross=True)
        shapes["dec.ln.g"], shapes["dec.ln.b"] = (E,), (E,)
        readout_dim = E
    else:
        cell("enc.0.fwd", E)
        cell("enc.0.bwd", E)
        shapes["enc.0.proj.W"] = (2 * H, H)
        shapes["enc.0.proj.b"] = (H,)
        for l in range(1, L):
            cell(f"enc.{l}", H)
        for l in range(L):
            shapes[f"dec.init.{l}.W"] = (H, H)
            shapes[f"dec.init.{l}.b"] = (H,)
        for l in range(L):
            cell(f"dec.{l}", E if l == 0 else H)
        if cfg.attention == "soft" and cfg.attention_score == "additive":
            shapes["att.W_q"] = (H, H)
            shapes["att.W_k"] = (H, H)
            shapes["att.v"] = (H,)
        n_read = 2 * H if cfg.attention == "soft" else H
        shapes["out.W"] = (n_read, E)
        shapes["out.b"] = (E,)
        readout_dim = E
    if not cfg.tie_output_embeddings:
        shapes["out.proj"] = (readout_dim, V)
    shapes["out.bias"] = (V,)
    return shapes


def init_params(cfg: ModelConfig, rng: np.random.Generator, dtype=np.float32) -> dict[str, Tensor]:
    """Glorot-uniform matrices, zero biases, unit layer-norm gains."""
    params = {}
    for name, shape in param_shapes(cfg).items():
        leaf = name.rsplit(".", 1)[-1]
        if len(shape) == 2:
            bound = math.sqrt(6.0 / (shape[0] + shape[1]))
            arr = rng.uniform(-bound, bound, size=shape)
        elif leaf == "v":
            bound = math.sqrt(3.0 / shape[0])
            arr = rng.uniform(-bound, bound, size=shape)
        elif leaf == "g":
            arr = np.ones(shape)
        else:
            arr = np.zeros(shape)
        params[name] = Tensor(arr.astype(dtype), requires_grad=True)
    return params


# ---------------------------------------------------------------------------
# containers


@dataclass
class EncoderOutput:
    per_position_states: Tensor      # B, S, H
    summary_state: Tensor            # B, H
    mask: np.ndarray                 # B, S (1.0 = real symbol)
    keys: Tensor | None = None       # cached attention keys

    def expand(self, k: int) -> "EncoderOutput":
        """Repeat a batch-1 encoding ``k`` times (for beam hypotheses)."""
        if self.per_position_states.shape[0] == k:
            return self
        rep = lambda t: None if t is None else Tensor(np.repeat(t.data, k, axis=0))  # noqa: E731
        return EncoderOutput(rep(self.per_position_states), rep(self.summary_state),
                             np.repeat(self.mask, k, axis=0), rep(self.keys))


@dataclass
class DecoderState:
    architecture: str
    layers: list = field(default_factory=list)   # h or (h, c) per layer
    prefix: np.ndarray | None = None             # self-attention: symbols fed so far

    def select(self, idx) -> "DecoderState":
        idx = np.asarray(idx)

        def pick(s):
            if isinstance(s, tuple):
                return tuple(Tensor(t.data[idx]) for t in s)
            return Tensor(s.data[idx])

        return DecoderState(self.architecture, [pick(s) for s in self.layers],
                            None if self.prefix is None else self.prefix[idx])


@dataclass
class Batch:
    src: np.ndarray        # B, S int
    src_mask: np.ndarray   # B, S float
    tgt_in: np.ndarray     # B, T int (BOS + target)
    tgt_out: np.ndarray    # B, T int (target + EOS)
    tgt_mask: np.ndarray   # B, T float

    @property
    def n_target_symbols(self) -> int:
        return int(self.tgt_mask.sum())


def make_batch(sources: list[list[int]], targets: list[list[int]] | None = None,
               dtype=np.float32) -> Batch:
    if not sources or any(len(s) == 0 for s in sources):
        raise ValueError("make_batch: empty source sequence")
    B = len(sources)
    S = max(len(s) for s in sources)
    src = np.full((B, S), PAD_ID, dtype=np.int64)
    src_mask = np.zeros((B, S), dtype=dtype)
    for i, s in enumerate(sources):
        src[i, : len(s)] = s
        src_mask[i, : len(s)] = 1
    if targets is None:
        empty = np.zeros((B, 0), dtype=np.int64)
        return Batch(src, src_mask, empty, empty, np.zeros((B, 0), dtype=dtype))
    T = max(len(t) for t in targets) + 1
    tgt_in = np.full((B, T), PAD_ID, dtype=np.int64)
    tgt_out = np.full((B, T), PAD_ID, dtype=np.int64)
    tgt_mask = np.zeros((B, T), dtype=dtype)
    for i, t in enumerate(targets):
        n = len(t)
        tgt_in[i, 0] = BOS_ID
        tgt_in[i, 1: n + 1] = t
        tgt_out[i, :n] = t
        tgt_out[i, n] = EOS_ID
        tgt_mask[i, : n + 1] = 1
    return Batch(src, src_mask, tgt_in, tgt_out, tgt_mask)


# ---------------------------------------------------------------------------


class Seq2Seq:
    def __init__(self, config: ModelConfig, seed: int = 0, dtype=np.float32,
                 params: dict[str, Tensor] | None = None):
        self.config = config
        self.dtype = np.dtype(dtype)
        if params is None:
            params = init_params(config, np.random.default_rng(seed), self.dtype)
        expected = param_shapes(config)
        if set(params) != set(expected):
            raise ValueError("parameter names do not match the configuration")
        for k, s in expected.items():
            if params[k].shape != s:
                raise ValueError(f"parameter {k} has shape {params[k].shape}, expected {s}")
        self.params = params

    def num_parameters(self) -> int:
        return sum(p.data.size for p in self.params.values())

    def _w(self, prefix: str) -> dict:
        n = len(prefix) + 1
        return {k[n:]: v for k, v in self.params.items() if k.startswith(prefix + ".")}

    def _const(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.dtype))

    def _drop(self, x, train, rng):
        return ag.dropout(x, self.config.dropout, rng, train)

    def _check_ids(self, ids):
        if ids.size and (ids.min() < 0 or ids.max() >= self.config.vocab_size):
            raise ValueError(f"symbol id out of range [0, {self.config.vocab_size})")

    # -- encoder ----------------------------------------------------------

    def encode(self, src: np.ndarray, src_mask: np.ndarray | None = None,
               train: bool = False, rng=None) -> EncoderOutput:
        src = np.atleast_2d(np.asarray(src, dtype=np.int64))
        if src.shape[1] == 0:
            raise ValueError("encode: empty source")
        self._check_ids(src)
        if src_mask is None:
            src_mask = np.ones(src.shape, dtype=self.dtype)
        src_mask = np.asarray(src_mask, dtype=self.dtype)
        x = embedding(self.params["src_emb"], src)
        if self.config.is_transformer:
            states = self._encode_transformer(x, src_mask, train, rng)
            w = src_mask / src_mask.sum(1, keepdims=True)
            summary = (states * self._const(w[:, :, None])).sum(axis=1)
            return EncoderOutput(states, summary, src_mask)
        states = self._encode_recurrent(self._drop(x, train, rng), src_mask, train, rng)
        lengths = src_mask.sum(1).astype(int)
        last = np.zeros(src_mask.shape, dtype=self.dtype)
        last[np.arange(len(lengths)), lengths - 1] = 1
        summary = (states * self._const(last[:, :, None])).sum(axis=1)
        keys = None
        if self.config.attention == "soft":
            keys = precompute_keys(states, self._w("att"), self.config.attention_score)
        return EncoderOutput(states, summary, src_mask, keys)

    def _run_layer(self, w, x, mask, reverse=False):
        arch = self.config.architecture
        B, S, _ = x.shape
        xw = cells.input_projection(x, w)
        state = cells.zero_state(arch, B, self.config.hidden_dim, self.dtype)
        outs = [None] * S
        order = range(S - 1, -1, -1) if reverse else range(S)
        for t in order:
            new = cells.step_from_proj(arch, xw[:, t], state, w)
            col = mask[:, t]
            if not col.all():
                m = self._const(col[:, None])
                if arch == "lstm":
                    new = tuple(o + m * (n - o) for n, o in zip(new, state))
                else:
                    new = state + m * (new - state)
            state = new
            outs[t] = cells.hidden(arch, state)
        return stack(outs, axis=1)

    def _encode_recurrent(self, x, mask, train, rng):
        fwd = self._run_layer(self._w("enc.0.fwd"), x, mask)
        bwd = self._run_layer(self._w("enc.0.bwd"), x, mask, reverse=True)
        h = matmul(concat([fwd, bwd], -1), self.params["enc.0.proj.W"]) + self.params["enc.0.proj.b"]
        for l in range(1, self.config.num_layers):
            h = self._run_layer(self._w(f"enc.{l}"), self._drop(h, train, rng), mask)
        return h

    def _positions(self, x: Tensor, offset: int = 0) -> Tensor:
        d = self.config.embed_dim
        pe = sinusoidal_positions(offset + x.shape[1], d, self.dtype)[offset:]
        return x * math.sqrt(d) + self._const(pe[None])

    def _ffn(self, w, h):
        return matmul(ag.gelu(matmul(h, w["ffn.W1"]) + w["ffn.b1"]), w["ffn.W2"]) + w["ffn.b2"]

    def _encode_transformer(self, x, mask, train, rng):
        cfg = self.config
        h = self._drop(self._positions(x), train, rng)
        key_mask = mask[:, None, :] > 0
        for l in range(cfg.num_layers):
            w = self._w(f"enc.{l}")
            a = layer_norm(h, w["ln1.g"], w["ln1.b"])
            h = h + self._drop(multi_head_attention(a, a, a, self._w(f"enc.{l}.self"),
                                                    cfg.num_heads, key_mask), train, rng)
            a = layer_norm(h, w["ln2.g"], w["ln2.b"])
            h = h + self._drop(self._ffn(w, a), train, rng)
        return layer_norm(h, self.params["enc.ln.g"], self.params["enc.ln.b"])

    # -- decoder ----------------------------------------------------------

    def init_state(self, enc: EncoderOutput) -> DecoderState:
        cfg = self.config
        B = enc.summary_state.shape[0]
        if cfg.is_transformer:
            return DecoderState(cfg.architecture, prefix=np.zeros((B, 0), dtype=np.int64))
        layers = []
        for l in range(cfg.num_layers):
            h = tanh(matmul(enc.summary_state, self.params[f"dec.init.{l}.W"])
                     + self.params[f"dec.init.{l}.b"])
            if cfg.architecture == "lstm":
                h = (h, Tensor(np.zeros(h.shape, dtype=self.dtype)))
            layers.append(h)
        return DecoderState(cfg.architecture, layers)

    def output_logits(self, readout: Tensor) -> Tensor:
        if self.config.tie_output_embeddings:
            W = ag.transpose(self.params["tgt_emb"])
        else:
            W = self.params["out.proj"]
        return matmul(readout, W) + self.params["out.bias"]

    def readout(self, top: Tensor, context: Tensor | None) -> Tensor:
        """Recurrent decoders: combine the top hidden state with the context."""
        x = top if context is None else concat([top, context], -1)
        return tanh(matmul(x, self.params["out.W"]) + self.params["out.b"])

    def advance(self, state: DecoderState, prev: np.ndarray, train=False, rng=None):
        """Recurrent decoders: feed ``prev`` symbols through the layer stack."""
        arch = self.config.architecture
        x = self._drop(embedding(self.params["tgt_emb"], prev), train, rng)
        new_layers = []
        for l, s in enumerate(state.layers):
            if l:
                x = self._drop(x, train, rng)
            w = self._w(f"dec.{l}")
            s = cells.step_from_proj(arch, cells.input_projection(x, w), s, w)
            new_layers.append(s)
            x = cells.hidden(arch, s)
        return x, DecoderState(arch, new_layers)

    def decode_step(self, state: DecoderState, prev_symbols, enc: EncoderOutput):
        """One inference step for a batch of partial hypotheses.

        Returns ``(logits (B, V), new_state)``.
        """
        cfg = self.config
        if state.architecture != cfg.architecture:
            raise ValueError(
                f"decoder state built for {state.architecture}, model is {cfg.architecture}")
        prev = np.asarray(prev_symbols, dtype=np.int64).reshape(-1)
        self._check_ids(prev)
        if cfg.is_transformer:
            prefix = np.concatenate([state.prefix, prev[:, None]], axis=1)
            out = self._decode_transformer(prefix, enc, False, None)
            return Tensor(out.data[:, -1]), DecoderState(cfg.architecture, prefix=prefix)
        top, new_state = self.advance(state, prev)
        ctx = None
        if cfg.attention == "soft":
            ctx, _ = soft_attention(top, enc.per_position_states, self._w("att"),
                                    keys=enc.keys, mask=enc.mask, scoring=cfg.attention_score)
        return self.output_logits(self.readout(top, ctx)), new_state

    def _decode_transformer(self, tgt_in, enc, train, rng):
        cfg = self.config
        T = tgt_in.shape[1]
        h = self._drop(self._positions(embedding(self.params["tgt_emb"], tgt_in)), train, rng)
        causal = np.tril(np.ones((T, T), dtype=bool))[None]
        src_mask = enc.mask[:, None, :] > 0
        mem = enc.per_position_states
        for l in range(cfg.num_layers):
            w = self._w(f"dec.{l}")
            a = layer_norm(h, w["ln1.g"], w["ln1.b"])
            h = h + self._drop(multi_head_attention(a, a, a, self._w(f"dec.{l}.self"),
                                                    cfg.num_heads, causal), train, rng)
            a = layer_norm(h, w["ln2.g"], w["ln2.b"])
            h = h + self._drop(multi_head_attention(a, mem, mem, self._w(f"dec.{l}.cross"),
                                                    cfg.num_heads, src_mask), train, rng)
            a = layer_norm(h, w["ln3.g"], w["ln3.b"])
            h = h + self._drop(self._ffn(w, a), train, rng)
        h = layer_norm(h, self.params["dec.ln.g"], self.params["dec.ln.b"])
        return self.output_logits(h)

    def forward(self, batch: Batch, train: bool = False, rng=None) -> Tensor:
        """Teacher-forced logits ``(B, T, V)``."""
        cfg = self.config
        enc = self.encode(batch.src, batch.src_mask, train, rng)
        if cfg.is_transformer:
            return self._decode_transformer(batch.tgt_in, enc, train, rng)
        arch = cfg.architecture
        state = self.init_state(enc)
        x = self._drop(embedding(self.params["tgt_emb"], batch.tgt_in), train, rng)
        T = batch.tgt_in.shape[1]
        for l, s in enumerate(state.layers):
            if l:
                x = self._drop(x, train, rng)
            w = self._w(f"dec.{l}")
            xw = cells.input_projection(x, w)
            outs = []
            for t in range(T):
                s = cells.step_from_proj(arch, xw[:, t], s, w)
                outs.append(cells.hidden(arch, s))
            x = stack(outs, axis=1)
        ctx = None
        if cfg.attention == "soft":
            ctx, _ = soft_attention(x, enc.per_position_states, self._w("att"),
                                    keys=enc.keys, mask=enc.mask, scoring=cfg.attention_score)
        return self.output_logits(self.readout(x, ctx))

    def loss(self, batch: Batch, train: bool = True, rng=None) -> Tensor:
        """Mean cross-entropy per target symbol (EOS included)."""
        logits = self.forward(batch, train, rng)
        return ag.cross_entropy(logits, batch.tgt_out, batch.tgt_mask)

    def nll(self, batch: Batch) -> tuple[float, int]:
        """Summed negative log-likelihood and target-symbol count, no dropout."""
        logits = self.forward(batch, train=False).data.astype(np.float64)
        x = logits - logits.max(-1, keepdims=True)
        logp = x - np.log(np.exp(x).sum(-1, keepdims=True))
        picked = np.take_along_axis(logp, batch.tgt_out[..., None], -1)[..., 0]
        return float(-(picked * batch.tgt_mask).sum()), batch.n_target_symbols

    # -- parameter plumbing -------------------------------------------------

    def state_dict(self) -> dict[str, np.ndarray]:
        return {k: v.data.copy() for k, v in self.params.items()}

    def load_state_dict(self, sd: dict[str, np.ndarray]) -> None:
        for k, p in self.params.items():
            p.data[...] = sd[k]
