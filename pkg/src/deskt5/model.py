"""A small pre-norm encoder-decoder transformer in plain numpy.

Forward and backward passes are written by hand. Layers use RMS-style layer
normalization with a gain and no bias, ReLU feed-forward blocks, learned
absolute positions, and an embedding matrix shared between the encoder input,
the decoder input and the output projection.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from .vocab import EOS, PAD

NORM_EPS = 1e-6


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    num_layers: int = 2
    d_model: int = 64
    num_heads: int = 4
    d_ff: int = 128
    max_len: int = 128

    def __post_init__(self):
        for name in ("vocab_size", "num_layers", "d_model", "num_heads", "d_ff", "max_len"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or value <= 0:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.d_model % self.num_heads:
            raise ValueError(f"d_model ({self.d_model}) must be divisible by num_heads ({self.num_heads})")

    @property
    def head_dim(self) -> int:
        return self.d_model // self.num_heads

    def as_dict(self) -> dict:
        return {k: int(getattr(self, k)) for k in
                ("vocab_size", "num_layers", "d_model", "num_heads", "d_ff", "max_len")}


def param_shapes(cfg: ModelConfig) -> dict[str, tuple[int, ...]]:
    """Name -> shape, in a fixed order."""
    d, f, L = cfg.d_model, cfg.d_ff, cfg.num_layers
    shapes: dict[str, tuple[int, ...]] = {
        "embed": (cfg.vocab_size, d),
        "enc_pos": (cfg.max_len, d),
        "dec_pos": (cfg.max_len, d),
    }
    for i in range(L):
        p = f"enc{i}."
        shapes[p + "ln1"] = (d,)
        for w in "qkvo":
            shapes[p + "attn." + w] = (d, d)
        shapes[p + "ln2"] = (d,)
        shapes[p + "ff.w1"] = (d, f)
        shapes[p + "ff.w2"] = (f, d)
    shapes["enc.ln_f"] = (d,)
    for i in range(L):
        p = f"dec{i}."
        shapes[p + "ln1"] = (d,)
        for w in "qkvo":
            shapes[p + "self." + w] = (d, d)
        shapes[p + "ln2"] = (d,)
        for w in "qkvo":
            shapes[p + "cross." + w] = (d, d)
        shapes[p + "ln3"] = (d,)
        shapes[p + "ff.w1"] = (d, f)
        shapes[p + "ff.w2"] = (f, d)
    shapes["dec.ln_f"] = (d,)
    return shapes


@dataclass
class Params:
    config: ModelConfig
    tensors: dict[str, np.ndarray]

    def __getitem__(self, name: str) -> np.ndarray:
        return self.tensors[name]

    @property
    def dtype(self):
        return self.tensors["embed"].dtype

    def num_params(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "Params":
        return Params(self.config, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype) -> "Params":
        return Params(self.config, {k: v.astype(dtype) for k, v in self.tensors.items()})


def init_model(cfg: ModelConfig, rng, dtype=np.float32) -> Params:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights, unit norm gains."""
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    tensors = {}
    for name, shape in param_shapes(cfg).items():
        if len(shape) == 1:
            tensors[name] = np.ones(shape, dtype=dtype)
            continue
        # embedding/positions act as d_model-input projections for the output layer
        fan_in = cfg.d_model if name in ("embed", "enc_pos", "dec_pos") else shape[0]
        a = 1.0 / math.sqrt(fan_in)
        tensors[name] = rng.uniform(-a, a, size=shape).astype(dtype)
    return Params(cfg, tensors)


@dataclass
class Batch:
    enc_ids: np.ndarray   # (B, S) int
    enc_mask: np.ndarray  # (B, S) bool
    dec_in: np.ndarray    # (B, T) int, target shifted right with PAD as BOS
    dec_tgt: np.ndarray   # (B, T) int
    dec_mask: np.ndarray  # (B, T) bool
    tags: tuple = ()      # objective of each row, for accounting

    @property
    def size(self) -> int:
        return self.enc_ids.shape[0]

    @property
    def num_tokens(self) -> int:
        return int(self.enc_mask.sum() + self.dec_mask.sum())

    @property
    def padded_tokens(self) -> int:
        return self.enc_ids.size + self.dec_tgt.size


def make_batch(inputs: Sequence[Sequence[int]], targets: Sequence[Sequence[int]],
               enc_len: Optional[int] = None, dec_len: Optional[int] = None) -> Batch:
    B = len(inputs)
    if B == 0 or len(targets) != B:
        raise ValueError("need a non-empty, equal number of inputs and targets")
    S = max(len(x) for x in inputs) if enc_len is None else enc_len
    T = max(len(y) for y in targets) if dec_len is None else dec_len
    S, T = max(S, 1), max(T, 1)
    enc = np.full((B, S), PAD, dtype=np.int64)
    enc_mask = np.zeros((B, S), dtype=bool)
    tgt = np.full((B, T), PAD, dtype=np.int64)
    dec_mask = np.zeros((B, T), dtype=bool)
    for b, (x, y) in enumerate(zip(inputs, targets)):
        if len(x) == 0:
            raise ValueError(f"example {b} has an empty encoder input")
        enc[b, :len(x)] = x
        enc_mask[b, :len(x)] = True
        tgt[b, :len(y)] = y
        dec_mask[b, :len(y)] = True
    dec_in = np.full_like(tgt, PAD)
    dec_in[:, 1:] = tgt[:, :-1]
    return Batch(enc, enc_mask, dec_in, tgt, dec_mask)


# ---------------------------------------------------------------- primitives

def _norm_fwd(x, g):
    r = 1.0 / np.sqrt(np.mean(x * x, axis=-1, keepdims=True) + NORM_EPS)
    n = x * r
    return n * g, (n, r, g)


def _norm_bwd(dy, cache):
    n, r, g = cache
    dg = (dy * n).reshape(-1, n.shape[-1]).sum(axis=0)
    dn = dy * g
    dx = r * (dn - n * np.mean(dn * n, axis=-1, keepdims=True))
    return dx, dg


def _split_heads(x, H):
    B, T, d = x.shape
    return x.reshape(B, T, H, d // H).transpose(0, 2, 1, 3)


def _merge_heads(x):
    B, H, T, dh = x.shape
    return x.transpose(0, 2, 1, 3).reshape(B, T, H * dh)


def _attn_fwd(xq, xkv, W, mask, H):
    """Multi-head attention. ``mask`` broadcasts to (B, 1, Tq, Tk); True attends."""
    wq, wk, wv, wo = W
    q = _split_heads(xq @ wq, H)
    k = _split_heads(xkv @ wk, H)
    v = _split_heads(xkv @ wv, H)
    scale = 1.0 / math.sqrt(q.shape[-1])
    s = (q @ k.transpose(0, 1, 3, 2)) * scale
    s = np.where(mask, s, -np.inf)
    s = s - s.max(axis=-1, keepdims=True)
    a = np.exp(s)
    a /= a.sum(axis=-1, keepdims=True)
    om = _merge_heads(a @ v)
    return om @ wo, (xq, xkv, q, k, v, a, om, scale)


def _attn_bwd(dy, cache, W, H):
    wq, wk, wv, wo = W
    xq, xkv, q, k, v, a, om, scale = cache
    d = wo.shape[0]
    dwo = om.reshape(-1, d).T @ dy.reshape(-1, d)
    do = _split_heads(dy @ wo.T, H)
    da = do @ v.transpose(0, 1, 3, 2)
    dv = a.transpose(0, 1, 3, 2) @ do
    ds = a * (da - np.sum(da * a, axis=-1, keepdims=True)) * scale
    dq = _merge_heads(ds @ k)
    dk = _merge_heads(ds.transpose(0, 1, 3, 2) @ q)
    dv = _merge_heads(dv)
    dwq = xq.reshape(-1, d).T @ dq.reshape(-1, d)
    dwk = xkv.reshape(-1, d).T @ dk.reshape(-1, d)
    dwv = xkv.reshape(-1, d).T @ dv.reshape(-1, d)
    dxq = dq @ wq.T
    dxkv = dk @ wk.T + dv @ wv.T
    return dxq, dxkv, (dwq, dwk, dwv, dwo)


def _ff_fwd(x, w1, w2):
    h = x @ w1
    r = np.maximum(h, 0)
    return r @ w2, (x, h, r)


def _ff_bwd(dy, cache, w1, w2):
    x, h, r = cache
    d, f = w1.shape
    dw2 = r.reshape(-1, f).T @ dy.reshape(-1, d)
    dr = (dy @ w2.T) * (h > 0)
    dw1 = x.reshape(-1, d).T @ dr.reshape(-1, f)
    return dr @ w1.T, dw1, dw2


# ------------------------------------------------------------------ forward

def _weights(p: Params, prefix: str):
    t = p.tensors
    return tuple(t[prefix + w] for w in "qkvo")


def _check_batch(p: Params, b: Batch):
    cfg = p.config
    for name in ("enc_ids", "dec_in", "dec_tgt"):
        ids = getattr(b, name)
        if ids.size and (ids.min() < 0 or ids.max() >= cfg.vocab_size):
            raise ValueError(f"{name} contains token ids outside [0, {cfg.vocab_size})")
    if b.enc_ids.shape[1] > cfg.max_len or b.dec_in.shape[1] > cfg.max_len:
        raise ValueError(f"sequence length exceeds max_len={cfg.max_len}")


def _encode(p: Params, enc_ids, enc_mask, caches=None):
    cfg, t = p.config, p.tensors
    H = cfg.num_heads
    S = enc_ids.shape[1]
    x = t["embed"][enc_ids] + t["enc_pos"][:S]
    mask = enc_mask[:, None, None, :]
    for i in range(cfg.num_layers):
        pre = f"enc{i}."
        h, c1 = _norm_fwd(x, t[pre + "ln1"])
        y, c2 = _attn_fwd(h, h, _weights(p, pre + "attn."), mask, H)
        x = x + y
        h, c3 = _norm_fwd(x, t[pre + "ln2"])
        y, c4 = _ff_fwd(h, t[pre + "ff.w1"], t[pre + "ff.w2"])
        x = x + y
        if caches is not None:
            caches.append((c1, c2, c3, c4))
    mem, cf = _norm_fwd(x, t["enc.ln_f"])
    if caches is not None:
        caches.append(cf)
    return mem


def _decode(p: Params, dec_in, mem, enc_mask, caches=None):
    cfg, t = p.config, p.tensors
    H = cfg.num_heads
    T = dec_in.shape[1]
    x = t["embed"][dec_in] + t["dec_pos"][:T]
    causal = np.tril(np.ones((T, T), dtype=bool))[None, None]
    cross = enc_mask[:, None, None, :]
    for i in range(cfg.num_layers):
        pre = f"dec{i}."
        h, c1 = _norm_fwd(x, t[pre + "ln1"])
        y, c2 = _attn_fwd(h, h, _weights(p, pre + "self."), causal, H)
        x = x + y
        h, c3 = _norm_fwd(x, t[pre + "ln2"])
        y, c4 = _attn_fwd(h, mem, _weights(p, pre + "cross."), cross, H)
        x = x + y
        h, c5 = _norm_fwd(x, t[pre + "ln3"])
        y, c6 = _ff_fwd(h, t[pre + "ff.w1"], t[pre + "ff.w2"])
        x = x + y
        if caches is not None:
            caches.append((c1, c2, c3, c4, c5, c6))
    h, cf = _norm_fwd(x, t["dec.ln_f"])
    if caches is not None:
        caches.append(cf)
    return h


def _token_nll(logits, targets):
    m = logits.max(axis=-1, keepdims=True)
    z = logits - m
    lse = np.log(np.exp(z).sum(axis=-1))
    picked = np.take_along_axis(z, targets[..., None], axis=-1)[..., 0]
    return lse - picked


def forward(p: Params, b: Batch):
    """Returns (logits, mean_token_loss) with the loss averaged over unmasked target tokens."""
    logits, loss, _ = _forward(p, b, keep=False)
    return logits, loss


def _forward(p: Params, b: Batch, keep: bool):
    _check_batch(p, b)
    w = b.dec_mask.astype(p.dtype)
    n = w.sum()
    if n == 0:
        raise ValueError("every target position in the batch is masked")
    enc_c: Optional[list] = [] if keep else None
    dec_c: Optional[list] = [] if keep else None
    mem = _encode(p, b.enc_ids, b.enc_mask, enc_c)
    h = _decode(p, b.dec_in, mem, b.enc_mask, dec_c)
    logits = h @ p.tensors["embed"].T
    nll = _token_nll(logits, b.dec_tgt)
    loss = float((nll * w).sum() / n)
    return logits, loss, (mem, h, enc_c, dec_c, w, n)


def per_example_loss(logits, b: Batch) -> np.ndarray:
    nll = _token_nll(logits, b.dec_tgt) * b.dec_mask
    counts = b.dec_mask.sum(axis=1)
    return np.where(counts > 0, nll.sum(axis=1) / np.maximum(counts, 1), 0.0)


# ----------------------------------------------------------------- backward

def loss_and_grads(p: Params, b: Batch):
    """Mean token loss and gradients for every tensor in ``p``."""
    logits, loss, (mem, h, enc_c, dec_c, w, n) = _forward(p, b, keep=True)
    if not np.isfinite(loss):
        raise FloatingPointError(f"non-finite loss ({loss}); {_nonfinite_report(p)}")
    cfg, t = p.config, p.tensors
    H = cfg.num_heads
    g = {name: np.zeros_like(v) for name, v in t.items()}
    E = t["embed"]
    V = cfg.vocab_size

    # softmax cross-entropy
    z = logits - logits.max(axis=-1, keepdims=True)
    probs = np.exp(z)
    probs /= probs.sum(axis=-1, keepdims=True)
    dlogits = probs
    np.put_along_axis(dlogits, b.dec_tgt[..., None],
                      np.take_along_axis(dlogits, b.dec_tgt[..., None], axis=-1) - 1, axis=-1)
    dlogits *= (w / n)[..., None]
    d = cfg.d_model
    g["embed"] += dlogits.reshape(-1, V).T @ h.reshape(-1, d)
    dx = dlogits @ E

    # decoder
    dx, g["dec.ln_f"] = _norm_bwd(dx, dec_c[-1])
    dmem = np.zeros_like(mem)
    for i in reversed(range(cfg.num_layers)):
        pre = f"dec{i}."
        c1, c2, c3, c4, c5, c6 = dec_c[i]
        dh, dw1, dw2 = _ff_bwd(dx, c6, t[pre + "ff.w1"], t[pre + "ff.w2"])
        g[pre + "ff.w1"] += dw1
        g[pre + "ff.w2"] += dw2
        dn, g[pre + "ln3"] = _norm_bwd(dh, c5)
        dx = dx + dn
        dq, dkv, dws = _attn_bwd(dx, c4, _weights(p, pre + "cross."), H)
        for wname, dwv in zip("qkvo", dws):
            g[pre + "cross." + wname] += dwv
        dmem += dkv
        dn, g[pre + "ln2"] = _norm_bwd(dq, c3)
        dx = dx + dn
        dq, dkv, dws = _attn_bwd(dx, c2, _weights(p, pre + "self."), H)
        for wname, dwv in zip("qkvo", dws):
            g[pre + "self." + wname] += dwv
        dn, g[pre + "ln1"] = _norm_bwd(dq + dkv, c1)
        dx = dx + dn
    T = b.dec_in.shape[1]
    g["dec_pos"][:T] += dx.sum(axis=0)
    np.add.at(g["embed"], b.dec_in, dx)

    # encoder
    dx, g["enc.ln_f"] = _norm_bwd(dmem, enc_c[-1])
    for i in reversed(range(cfg.num_layers)):
        pre = f"enc{i}."
        c1, c2, c3, c4 = enc_c[i]
        dh, dw1, dw2 = _ff_bwd(dx, c4, t[pre + "ff.w1"], t[pre + "ff.w2"])
        g[pre + "ff.w1"] += dw1
        g[pre + "ff.w2"] += dw2
        dn, g[pre + "ln2"] = _norm_bwd(dh, c3)
        dx = dx + dn
        dq, dkv, dws = _attn_bwd(dx, c2, _weights(p, pre + "attn."), H)
        for wname, dwv in zip("qkvo", dws):
            g[pre + "attn." + wname] += dwv
        dn, g[pre + "ln1"] = _norm_bwd(dq + dkv, c1)
        dx = dx + dn
    S = b.enc_ids.shape[1]
    g["enc_pos"][:S] += dx.sum(axis=0)
    np.add.at(g["embed"], b.enc_ids, dx)

    for name, gv in g.items():
        if not np.all(np.isfinite(gv)):
            raise FloatingPointError(f"non-finite gradient for tensor {name!r}")
    return loss, g


def _nonfinite_report(p: Params) -> str:
    bad = [name for name, v in p.tensors.items() if not np.all(np.isfinite(v))]
    if bad:
        return "non-finite values in tensors: " + ", ".join(bad)
    return "all parameter tensors are finite"


def finite_diff_check(p: Params, b: Batch, eps: float = 1e-5, num_coords: int = 200,
                      seed: int = 0) -> float:
    """Max relative error between analytic gradients and central differences.

    Runs at float64 on a copy of ``p``. Coordinates are drawn uniformly over
    the flattened parameter vector, skipping position rows beyond the batch
    lengths (their gradient is identically zero). Relative error is ``|a - n| / max(|a|, |n|, 1e-8)``.
    """
    p64 = p.astype(np.float64)
    _, grads = loss_and_grads(p64, b)
    rng = np.random.default_rng(seed)
    S, T = b.enc_ids.shape[1], b.dec_in.shape[1]
    candidates = []
    for name, v in p64.tensors.items():
        if name == "enc_pos":
            rows = np.arange(S)
        elif name == "dec_pos":
            rows = np.arange(T)
        else:
            candidates.append((name, np.arange(v.size)))
            continue
        cols = v.shape[1]
        flat = (rows[:, None] * cols + np.arange(cols)[None]).ravel()
        candidates.append((name, flat))
    sizes = np.array([len(c[1]) for c in candidates])
    total = sizes.sum()
    picks = rng.choice(total, size=min(num_coords, total), replace=False)
    offsets = np.concatenate([[0], np.cumsum(sizes)])
    worst = 0.0
    for pick in picks:
        ci = int(np.searchsorted(offsets, pick, side="right") - 1)
        name, flat = candidates[ci]
        idx = int(flat[pick - offsets[ci]])
        arr = p64.tensors[name].reshape(-1)
        orig = arr[idx]
        arr[idx] = orig + eps
        _, lp = forward(p64, b)
        arr[idx] = orig - eps
        _, lm = forward(p64, b)
        arr[idx] = orig
        num = (lp - lm) / (2 * eps)
        ana = grads[name].reshape(-1)[idx]
        rel = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
        worst = max(worst, rel)
    return worst


# ---------------------------------------------------------------- optimizer

@dataclass
class OptState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, p: Params, lr: float = 1e-3, **kw) -> "OptState":
        return cls({k: np.zeros_like(v) for k, v in p.tensors.items()},
                   {k: np.zeros_like(v) for k, v in p.tensors.items()}, 0, lr, **kw)

    def copy(self) -> "OptState":
        return replace(self, m={k: v.copy() for k, v in self.m.items()},
                       v={k: v.copy() for k, v in self.v.items()})


def adam_step(p: Params, grads: dict[str, np.ndarray], st: OptState) -> tuple[Params, OptState]:
    step = st.step + 1
    b1, b2 = st.beta1, st.beta2
    c1 = 1.0 - b1 ** step
    c2 = 1.0 - b2 ** step
    new_t, new_m, new_v = {}, {}, {}
    for name, w in p.tensors.items():
        g = grads[name]
        if g.shape != w.shape:
            raise ValueError(f"gradient shape {g.shape} does not match {name!r} {w.shape}")
        m = b1 * st.m[name] + (1 - b1) * g
        v = b2 * st.v[name] + (1 - b2) * (g * g)
        upd = st.lr * (m / c1) / (np.sqrt(v / c2) + st.eps)
        new_t[name] = (w - upd).astype(w.dtype, copy=False)
        new_m[name] = m.astype(w.dtype, copy=False)
        new_v[name] = v.astype(w.dtype, copy=False)
    return Params(p.config, new_t), replace(st, m=new_m, v=new_v, step=step)


# ----------------------------------------------------------------- decoding

def greedy_decode_batch(p: Params, inputs: Sequence[Sequence[int]], max_len: int) -> list[list[int]]:
    """Greedy argmax decoding; each output stops before EOS or at ``max_len`` tokens."""
    cfg = p.config
    if not inputs:
        return []
    for x in inputs:
        if len(x) > cfg.max_len:
            raise ValueError(f"input of length {len(x)} exceeds max_len={cfg.max_len}")
    max_len = min(max_len, cfg.max_len)
    B = len(inputs)
    S = max(len(x) for x in inputs)
    enc = np.full((B, S), PAD, dtype=np.int64)
    enc_mask = np.zeros((B, S), dtype=bool)
    for i, x in enumerate(inputs):
        enc[i, :len(x)] = x
        enc_mask[i, :len(x)] = True
    mem = _encode(p, enc, enc_mask)
    E = p.tensors["embed"]
    out = np.zeros((B, max_len), dtype=np.int64)
    done = np.zeros(B, dtype=bool)
    lengths = np.full(B, max_len)
    for step in range(max_len):
        dec_in = np.zeros((B, step + 1), dtype=np.int64)
        dec_in[:, 1:] = out[:, :step]
        h = _decode(p, dec_in, mem, enc_mask)
        nxt = np.argmax(h[:, -1] @ E.T, axis=-1)
        finished = (~done) & (nxt == EOS)
        lengths[finished] = step
        done |= finished
        out[:, step] = np.where(done, PAD, nxt)
        if done.all():
            break
    return [out[i, :lengths[i]].tolist() for i in range(B)]


def greedy_decode(p: Params, input: Sequence[int], max_len: int) -> list[int]:
    return greedy_decode_batch(p, [input], max_len)[0]
