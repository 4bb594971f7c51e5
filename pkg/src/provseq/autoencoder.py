"""Transformer encoder-decoder autoencoder over sketch sequences.

Pure NumPy (fp64), with hand-written backward passes for every layer so
analytic gradients can be verified against central finite differences.
Sequences are 2-D arrays (positions x features); batching is gradient
accumulation over whole sequences.

Architecture, per block:

* encoder layer: self-attention, feed-forward; each sub-layer output is
  ``layer_norm(x + sublayer(x))`` (residual then normalisation).
* decoder layer: causally masked self-attention, cross-attention over
  the encoder memory, feed-forward; same residual wrapping.
* input projection maps sketch width -> model width, then sinusoidal
  position terms are added. A final projection maps back to sketch
  width.

Training minimises mean squared reconstruction error with teacher
forcing: the decoder consumes the one-step-shifted input sequence
prefixed by a learned start vector. After training the encoder doubles
as a sequence feature extractor (mean over positions of the final
encoder layer output).
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass

import numpy as np

from .errors import (
    DataError,
    DimensionMismatch,
    DivergenceDetected,
    EmptySequence,
    NonDivisibleHeads,
)

_CKPT_MAGIC = b"PSAE"
_CKPT_VERSION = 1
_INIT_STD = 0.02
LAYER_NORM_EPS = 1e-5


def positional_encoding(pos: int, j: int, d_model: int) -> float:
    """Sinusoidal position value for dimension j: sin on even dims,
    cos on odd dims, with frequency 1 / 10000^(2i/d_model) for pair i."""
    if not 0 <= j < d_model:
        raise DimensionMismatch(f"dimension index {j} outside [0, {d_model})")
    i = j // 2
    angle = pos / (10000.0 ** (2.0 * i / d_model))
    return math.sin(angle) if j % 2 == 0 else math.cos(angle)


def positional_matrix(n: int, d_model: int, offset: int = 0) -> np.ndarray:
    """(n, d_model) table of position terms for positions offset..offset+n-1."""
    pos = np.arange(offset, offset + n, dtype=np.float64)[:, None]
    j = np.arange(d_model, dtype=np.float64)[None, :]
    angle = pos / (10000.0 ** (2.0 * np.floor(j / 2.0) / d_model))
    out = np.empty((n, d_model), dtype=np.float64)
    out[:, 0::2] = np.sin(angle[:, 0::2])
    out[:, 1::2] = np.cos(angle[:, 1::2])
    return out


def softmax_rows(x: np.ndarray) -> np.ndarray:
    """Row-wise softmax with max subtraction; -inf entries become exact 0."""
    shifted = x - np.max(x, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def _require_finite(name: str, *arrays: np.ndarray) -> None:
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise DataError(f"{name}: non-finite values in input")


def scaled_dot_product_attention(q: np.ndarray, k: np.ndarray, v: np.ndarray,
                                 causal: bool = False) -> np.ndarray:
    """softmax(q k^T / sqrt(d_k)) v, optionally with a causal mask.

    q: (m_q, d_k), k: (m, d_k), v: (m, d_v). Masked entries (key index
    greater than query index) are set to -inf before the softmax, giving
    exactly zero attention weight.
    """
    q = np.asarray(q, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    v = np.asarray(v, dtype=np.float64)
    _require_finite("attention", q, k, v)
    if q.ndim != 2 or k.ndim != 2 or v.ndim != 2:
        raise DimensionMismatch("attention operands must be 2-D")
    if q.shape[1] != k.shape[1]:
        raise DimensionMismatch(f"query width {q.shape[1]} != key width {k.shape[1]}")
    if k.shape[0] != v.shape[0]:
        raise DimensionMismatch(f"key count {k.shape[0]} != value count {v.shape[0]}")
    scores = q @ k.T / math.sqrt(q.shape[1])
    if causal:
        if q.shape[0] != k.shape[0]:
            raise DimensionMismatch("causal mask needs equal query/key counts")
        scores = np.where(np.triu(np.ones_like(scores, dtype=bool), k=1), -np.inf, scores)
    return softmax_rows(scores) @ v


def feed_forward(x: np.ndarray, w1: np.ndarray, b1: np.ndarray,
                 w2: np.ndarray, b2: np.ndarray) -> np.ndarray:
    """max(0, x w1 + b1) w2 + b2 applied position-wise."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != w1.shape[0]:
        raise DimensionMismatch(f"input width {x.shape[-1]} != w1 rows {w1.shape[0]}")
    return np.maximum(0.0, x @ w1 + b1) @ w2 + b2


def layer_norm(x: np.ndarray, gain: np.ndarray, bias: np.ndarray,
               eps: float = LAYER_NORM_EPS) -> np.ndarray:
    """Per-position normalisation over the feature axis, then gain/bias."""
    mu = x.mean(axis=-1, keepdims=True)
    var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
    return (x - mu) / np.sqrt(var + eps) * gain + bias


# --- layers with backward passes --------------------------------------------


class LayerNorm:
    def __init__(self, dim: int):
        self.gain = np.ones(dim)
        self.bias = np.zeros(dim)
        self.d_gain = np.zeros(dim)
        self.d_bias = np.zeros(dim)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        mu = x.mean(axis=-1, keepdims=True)
        var = ((x - mu) ** 2).mean(axis=-1, keepdims=True)
        sigma = np.sqrt(var + LAYER_NORM_EPS)
        xhat = (x - mu) / sigma
        self._cache = (xhat, sigma)
        return xhat * self.gain + self.bias

    def backward(self, dy: np.ndarray) -> np.ndarray:
        xhat, sigma = self._cache
        self.d_gain += (dy * xhat).sum(axis=0)
        self.d_bias += dy.sum(axis=0)
        g = dy * self.gain
        m1 = g.mean(axis=-1, keepdims=True)
        m2 = (g * xhat).mean(axis=-1, keepdims=True)
        return (g - m1 - xhat * m2) / sigma

    def blocks(self):
        yield "gain", self.gain, self.d_gain
        yield "bias", self.bias, self.d_bias


class FeedForward:
    def __init__(self, d_model: int, d_ff: int, rng: np.random.Generator):
        self.w1 = rng.normal(0.0, _INIT_STD, size=(d_model, d_ff))
        self.b1 = np.zeros(d_ff)
        self.w2 = rng.normal(0.0, _INIT_STD, size=(d_ff, d_model))
        self.b2 = np.zeros(d_model)
        self.d_w1 = np.zeros_like(self.w1)
        self.d_b1 = np.zeros_like(self.b1)
        self.d_w2 = np.zeros_like(self.w2)
        self.d_b2 = np.zeros_like(self.b2)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        pre = x @ self.w1 + self.b1
        hidden = np.maximum(0.0, pre)
        self._cache = (x, pre, hidden)
        return hidden @ self.w2 + self.b2

    def backward(self, dy: np.ndarray) -> np.ndarray:
        x, pre, hidden = self._cache
        self.d_w2 += hidden.T @ dy
        self.d_b2 += dy.sum(axis=0)
        d_hidden = dy @ self.w2.T
        d_pre = d_hidden * (pre > 0.0)
        self.d_w1 += x.T @ d_pre
        self.d_b1 += d_pre.sum(axis=0)
        return d_pre @ self.w1.T

    def blocks(self):
        yield "w1", self.w1, self.d_w1
        yield "b1", self.b1, self.d_b1
        yield "w2", self.w2, self.d_w2
        yield "b2", self.b2, self.d_b2


class MultiHeadAttention:
    """Multi-head attention; the per-head projections live side by side
    in combined (d_model, d_model) matrices, column block i belonging to
    head i."""

    def __init__(self, d_model: int, heads: int, rng: np.random.Generator):
        if d_model % heads != 0:
            raise NonDivisibleHeads(f"{heads} heads do not divide d_model={d_model}")
        self.d_model = d_model
        self.heads = heads
        self.d_head = d_model // heads
        self.wq = rng.normal(0.0, _INIT_STD, size=(d_model, d_model))
        self.wk = rng.normal(0.0, _INIT_STD, size=(d_model, d_model))
        self.wv = rng.normal(0.0, _INIT_STD, size=(d_model, d_model))
        self.wo = rng.normal(0.0, _INIT_STD, size=(d_model, d_model))
        self.d_wq = np.zeros_like(self.wq)
        self.d_wk = np.zeros_like(self.wk)
        self.d_wv = np.zeros_like(self.wv)
        self.d_wo = np.zeros_like(self.wo)
        self._cache = None

    def _split(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        return x.reshape(n, self.heads, self.d_head).transpose(1, 0, 2)

    def _join(self, x: np.ndarray) -> np.ndarray:
        h, n, d = x.shape
        return x.transpose(1, 0, 2).reshape(n, h * d)

    def forward(self, q_in: np.ndarray, k_in: np.ndarray, v_in: np.ndarray,
                causal: bool = False) -> np.ndarray:
        if q_in.shape[1] != self.d_model or k_in.shape[1] != self.d_model:
            raise DimensionMismatch(
                f"attention inputs must have width {self.d_model}, "
                f"got {q_in.shape[1]} / {k_in.shape[1]}"
            )
        q = self._split(q_in @ self.wq)  # (h, n_q, d_head)
        k = self._split(k_in @ self.wk)  # (h, n_kv, d_head)
        v = self._split(v_in @ self.wv)
        scores = q @ k.transpose(0, 2, 1) / math.sqrt(self.d_head)
        if causal:
            mask = np.triu(np.ones(scores.shape[1:], dtype=bool), k=1)
            scores = np.where(mask[None, :, :], -np.inf, scores)
        weights = softmax_rows(scores)
        heads_out = weights @ v            # (h, n_q, d_head)
        joined = self._join(heads_out)     # (n_q, d_model)
        out = joined @ self.wo
        self._cache = (q_in, k_in, v_in, q, k, v, weights, joined)
        return out

    def backward(self, d_out: np.ndarray):
        q_in, k_in, v_in, q, k, v, weights, joined = self._cache
        self.d_wo += joined.T @ d_out
        d_joined = d_out @ self.wo.T
        d_heads = self._split(d_joined)                 # (h, n_q, d_head)
        d_weights = d_heads @ v.transpose(0, 2, 1)      # (h, n_q, n_kv)
        d_v = weights.transpose(0, 2, 1) @ d_heads
        row = (d_weights * weights).sum(axis=-1, keepdims=True)
        d_scores = (d_weights - row) * weights
        scale = 1.0 / math.sqrt(self.d_head)
        d_q = d_scores @ k * scale
        d_k = d_scores.transpose(0, 2, 1) @ q * scale
        d_q_lin = self._join(d_q)
        d_k_lin = self._join(d_k)
        d_v_lin = self._join(d_v)
        self.d_wq += q_in.T @ d_q_lin
        self.d_wk += k_in.T @ d_k_lin
        self.d_wv += v_in.T @ d_v_lin
        d_q_in = d_q_lin @ self.wq.T
        d_kv_in = d_k_lin @ self.wk.T + d_v_lin @ self.wv.T
        return d_q_in, d_kv_in

    def blocks(self):
        yield "wq", self.wq, self.d_wq
        yield "wk", self.wk, self.d_wk
        yield "wv", self.wv, self.d_wv
        yield "wo", self.wo, self.d_wo


class EncoderLayer:
    def __init__(self, d_model: int, heads: int, d_ff: int, rng: np.random.Generator):
        self.attn = MultiHeadAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_ff, rng)
        self.norm2 = LayerNorm(d_model)

    def forward(self, x: np.ndarray) -> np.ndarray:
        x = self.norm1.forward(x + self.attn.forward(x, x, x))
        return self.norm2.forward(x + self.ffn.forward(x))

    def backward(self, dy: np.ndarray) -> np.ndarray:
        d = self.norm2.backward(dy)
        d = d + self.ffn.backward(d)
        d = self.norm1.backward(d)
        dq, dkv = self.attn.backward(d)
        return d + dq + dkv

    def blocks(self):
        for sub, mod in (("attn", self.attn), ("norm1", self.norm1),
                         ("ffn", self.ffn), ("norm2", self.norm2)):
            for name, p, g in mod.blocks():
                yield f"{sub}.{name}", p, g


class DecoderLayer:
    def __init__(self, d_model: int, heads: int, d_ff: int, rng: np.random.Generator):
        self.self_attn = MultiHeadAttention(d_model, heads, rng)
        self.norm1 = LayerNorm(d_model)
        self.cross_attn = MultiHeadAttention(d_model, heads, rng)
        self.norm2 = LayerNorm(d_model)
        self.ffn = FeedForward(d_model, d_ff, rng)
        self.norm3 = LayerNorm(d_model)

    def forward(self, x: np.ndarray, memory: np.ndarray) -> np.ndarray:
        x = self.norm1.forward(x + self.self_attn.forward(x, x, x, causal=True))
        x = self.norm2.forward(x + self.cross_attn.forward(x, memory, memory))
        return self.norm3.forward(x + self.ffn.forward(x))

    def backward(self, dy: np.ndarray):
        d = self.norm3.backward(dy)
        d = d + self.ffn.backward(d)
        d = self.norm2.backward(d)
        dq, d_memory = self.cross_attn.backward(d)
        d = d + dq
        d = self.norm1.backward(d)
        dq, dkv = self.self_attn.backward(d)
        return d + dq + dkv, d_memory

    def blocks(self):
        for sub, mod in (("self_attn", self.self_attn), ("norm1", self.norm1),
                         ("cross_attn", self.cross_attn), ("norm2", self.norm2),
                         ("ffn", self.ffn), ("norm3", self.norm3)):
            for name, p, g in mod.blocks():
                yield f"{sub}.{name}", p, g


# --- full model ---------------------------------------------------------------


@dataclass(frozen=True)
class ModelConfig:
    """Architecture knobs; ``input_dim`` is the sketch length."""

    input_dim: int
    d_model: int = 64
    heads: int = 4
    d_ff: int = 128
    enc_layers: int = 6
    dec_layers: int = 6
    seed: int = 13

    def to_dict(self) -> dict:
        return {
            "input_dim": self.input_dim, "d_model": self.d_model, "heads": self.heads,
            "d_ff": self.d_ff, "enc_layers": self.enc_layers,
            "dec_layers": self.dec_layers, "seed": self.seed,
        }


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.05
    epochs: int = 200
    batch_size: int = 4
    seed: int = 17
    clip_norm: float = 1.0
    momentum: float = 0.9


class SequenceAutoencoder:
    """Encoder-decoder reconstruction model over feature sequences."""

    def __init__(self, cfg: ModelConfig):
        if cfg.d_model % cfg.heads != 0:
            raise NonDivisibleHeads(f"{cfg.heads} heads do not divide d_model={cfg.d_model}")
        self.cfg = cfg
        rng = np.random.default_rng(cfg.seed)
        self.w_in = rng.normal(0.0, _INIT_STD, size=(cfg.input_dim, cfg.d_model))
        self.b_in = np.zeros(cfg.d_model)
        self.start = rng.normal(0.0, _INIT_STD, size=cfg.d_model)
        self.encoder = [EncoderLayer(cfg.d_model, cfg.heads, cfg.d_ff, rng)
                        for _ in range(cfg.enc_layers)]
        self.decoder = [DecoderLayer(cfg.d_model, cfg.heads, cfg.d_ff, rng)
                        for _ in range(cfg.dec_layers)]
        self.w_out = rng.normal(0.0, _INIT_STD, size=(cfg.d_model, cfg.input_dim))
        self.b_out = np.zeros(cfg.input_dim)
        self.d_w_in = np.zeros_like(self.w_in)
        self.d_b_in = np.zeros_like(self.b_in)
        self.d_start = np.zeros_like(self.start)
        self.d_w_out = np.zeros_like(self.w_out)
        self.d_b_out = np.zeros_like(self.b_out)

    # -- parameter registry (declared order is the checkpoint block order) --

    def blocks(self):
        yield "w_in", self.w_in, self.d_w_in
        yield "b_in", self.b_in, self.d_b_in
        yield "start", self.start, self.d_start
        for i, layer in enumerate(self.encoder):
            for name, p, g in layer.blocks():
                yield f"enc.{i}.{name}", p, g
        for i, layer in enumerate(self.decoder):
            for name, p, g in layer.blocks():
                yield f"dec.{i}.{name}", p, g
        yield "w_out", self.w_out, self.d_w_out
        yield "b_out", self.b_out, self.d_b_out

    def parameters(self) -> dict[str, np.ndarray]:
        return {name: p for name, p, _ in self.blocks()}

    def zero_grads(self) -> None:
        for _, _, g in self.blocks():
            g[...] = 0.0

    # -- forward ----------------------------------------------------------

    def embed(self, seq: np.ndarray, offset: int = 0, add_positions: bool = True) -> np.ndarray:
        """Input projection plus position terms: seq @ w_in + b_in + PE."""
        seq = np.asarray(seq, dtype=np.float64)
        if seq.ndim != 2 or seq.shape[1] != self.cfg.input_dim:
            raise DimensionMismatch(
                f"expected (n, {self.cfg.input_dim}) input, got {seq.shape}"
            )
        if seq.shape[0] == 0:
            raise EmptySequence("sequence must have at least one position")
        out = seq @ self.w_in + self.b_in
        if add_positions:
            out = out + positional_matrix(seq.shape[0], self.cfg.d_model, offset)
        return out

    def encode(self, embedded: np.ndarray) -> np.ndarray:
        x = embedded
        for layer in self.encoder:
            x = layer.forward(x)
        return x

    def decode(self, embedded: np.ndarray, memory: np.ndarray) -> np.ndarray:
        x = embedded
        for layer in self.decoder:
            x = layer.forward(x, memory)
        return x @ self.w_out + self.b_out

    def _decoder_inputs(self, seq: np.ndarray) -> np.ndarray:
        """Teacher forcing: learned start vector, then the embedded
        sequence shifted right by one step."""
        n = seq.shape[0]
        rows = np.empty((n, self.cfg.d_model))
        rows[0] = self.start
        if n > 1:
            rows[1:] = seq[:-1] @ self.w_in + self.b_in
        return rows + positional_matrix(n, self.cfg.d_model)

    def forward(self, seq: np.ndarray) -> np.ndarray:
        """Reconstruct a sequence under teacher forcing; (n, input_dim) out."""
        seq = np.asarray(seq, dtype=np.float64)
        _require_finite("forward", seq)
        memory = self.encode(self.embed(seq))
        x = self._decoder_inputs(seq)
        for layer in self.decoder:
            x = layer.forward(x, memory)
        self._memory = memory
        self._dec_final = x
        self._last_seq = seq
        return x @ self.w_out + self.b_out

    def loss_and_backward(self, seq: np.ndarray) -> float:
        """One forward/backward pass; accumulates gradients, returns MSE."""
        recon = self.forward(seq)
        seq = self._last_seq
        n, d_in = recon.shape
        diff = recon - seq
        loss = float(np.mean(diff * diff))
        d_recon = 2.0 * diff / (n * d_in)

        self.d_w_out += self._dec_final.T @ d_recon
        self.d_b_out += d_recon.sum(axis=0)
        d = d_recon @ self.w_out.T
        d_memory_total = np.zeros_like(self._memory)
        for layer in reversed(self.decoder):
            d, d_memory = layer.backward(d)
            d_memory_total += d_memory
        # decoder inputs: start row, then shifted embeddings
        self.d_start += d[0]
        if n > 1:
            self.d_w_in += seq[:-1].T @ d[1:]
            self.d_b_in += d[1:].sum(axis=0)
        d_enc = d_memory_total
        for layer in reversed(self.encoder):
            d_enc = layer.backward(d_enc)
        self.d_w_in += seq.T @ d_enc
        self.d_b_in += d_enc.sum(axis=0)
        return loss

    def extract(self, seq: np.ndarray) -> np.ndarray:
        """Mean over positions of the final encoder layer output."""
        seq = np.asarray(seq, dtype=np.float64)
        if seq.size == 0 or seq.shape[0] == 0:
            raise EmptySequence("cannot extract features from an empty sequence")
        return self.encode(self.embed(seq)).mean(axis=0)


def mse_loss(model: SequenceAutoencoder, seq: np.ndarray) -> float:
    recon = model.forward(np.asarray(seq, dtype=np.float64))
    diff = recon - np.asarray(seq, dtype=np.float64)
    return float(np.mean(diff * diff))


def train(sequences, model_cfg: ModelConfig, train_cfg: TrainConfig):
    """Fit the autoencoder on benign sequences by SGD with momentum.

    Returns ``(model, losses)`` where ``losses[e]`` is the mean
    reconstruction MSE over all sequences during epoch e. Batch order,
    initialisation, and therefore the whole loss curve are fixed by the
    two seeds. Raises :class:`DivergenceDetected` if the loss leaves the
    finite range.
    """
    if train_cfg.learning_rate <= 0.0:
        raise ValueError("learning_rate must be positive")
    if train_cfg.batch_size < 1:
        raise ValueError("batch_size must be >= 1")
    if train_cfg.epochs < 0:
        raise ValueError("epochs must be >= 0")
    if not 0.0 <= train_cfg.momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    arrays = [np.asarray(getattr(s, "vectors", s), dtype=np.float64) for s in sequences]
    if not arrays:
        raise DataError("training needs at least one sequence")
    for a in arrays:
        if a.ndim != 2 or a.shape[1] != model_cfg.input_dim:
            raise DimensionMismatch(
                f"sequence shape {a.shape} incompatible with input_dim={model_cfg.input_dim}"
            )
    model = SequenceAutoencoder(model_cfg)
    velocity = {name: np.zeros_like(p) for name, p, _ in model.blocks()}
    order_rng = np.random.default_rng(train_cfg.seed)
    losses: list[float] = []

    for epoch in range(train_cfg.epochs):
        perm = order_rng.permutation(len(arrays))
        epoch_loss = 0.0
        for group_start in range(0, len(perm), train_cfg.batch_size):
            group = perm[group_start:group_start + train_cfg.batch_size]
            model.zero_grads()
            for idx in group:
                epoch_loss += model.loss_and_backward(arrays[idx])
            inv = 1.0 / len(group)
            grads = {name: g * inv for name, _, g in model.blocks()}
            total = math.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
            if train_cfg.clip_norm > 0.0 and total > train_cfg.clip_norm:
                scale = train_cfg.clip_norm / total
                for g in grads.values():
                    g *= scale
            for name, p, _ in model.blocks():
                v = velocity[name]
                v *= train_cfg.momentum
                v -= train_cfg.learning_rate * grads[name]
                p += v
        mean_loss = epoch_loss / len(arrays)
        if not math.isfinite(mean_loss):
            raise DivergenceDetected(
                f"loss became non-finite at epoch {epoch} (lr={train_cfg.learning_rate})"
            )
        losses.append(mean_loss)
    return model, losses


def extract_features(model: SequenceAutoencoder, seq) -> np.ndarray:
    """Frozen-extractor entry point; one d_model vector per sequence."""
    return model.extract(np.asarray(getattr(seq, "vectors", seq), dtype=np.float64))


# --- checkpoint container ----------------------------------------------------


def save_checkpoint(model: SequenceAutoencoder, path) -> None:
    """Versioned binary container: JSON header (hyperparameters and the
    declared block order), then raw float64 parameter blocks."""
    blocks = [(name, p) for name, p, _ in model.blocks()]
    header = {
        "container_version": _CKPT_VERSION,
        "model": model.cfg.to_dict(),
        "blocks": [{"name": name, "shape": list(p.shape)} for name, p in blocks],
    }
    payload = json.dumps(header, sort_keys=True).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_CKPT_MAGIC)
        fh.write(struct.pack("<II", _CKPT_VERSION, len(payload)))
        fh.write(payload)
        for _, p in blocks:
            fh.write(np.ascontiguousarray(p, dtype=np.float64).tobytes(order="C"))


def load_checkpoint(path) -> SequenceAutoencoder:
    with open(path, "rb") as fh:
        if fh.read(4) != _CKPT_MAGIC:
            raise DataError(f"{path}: not a model checkpoint")
        version, header_len = struct.unpack("<II", fh.read(8))
        if version != _CKPT_VERSION:
            raise DataError(f"{path}: unsupported checkpoint version {version}")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        model = SequenceAutoencoder(ModelConfig(**header["model"]))
        params = model.parameters()
        for spec in header["blocks"]:
            name, shape = spec["name"], tuple(spec["shape"])
            if name not in params:
                raise DataError(f"{path}: unknown parameter block {name!r}")
            target = params[name]
            if target.shape != shape:
                raise DataError(f"{path}: block {name!r} shape {shape} != {target.shape}")
            count = int(np.prod(shape, dtype=np.int64))
            raw = fh.read(8 * count)
            if len(raw) != 8 * count:
                raise DataError(f"{path}: truncated checkpoint at block {name!r}")
            target[...] = np.frombuffer(raw, dtype=np.float64).reshape(shape)
    return model
