"""Attention-for-adjacency decoder with hand-written reverse mode.

The decoder is a stack of attention layers

    Y = softmax(norm(X Wq) norm(X Wk)^T) (X Wv)

followed by a softmax-free head whose output matrix is read as
adjacency scores

    S = norm(X Wq*) norm(X Wk*)^T

where norm is row-wise L2 normalization, so every score is a cosine.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..raster import decode_csbt, encode_csbt
from .encoder import EMBED_LEN

EPS = 1e-6
_TINY = 1e-12


class AfaError(ValueError):
    pass


@dataclass
class AfaParams:
    """Named parameter tensors: ``layer{l}.{q,k,v}`` for each layer, then ``head.{q,k}``."""

    tensors: dict[str, np.ndarray] = field(default_factory=dict)
    layers: int = 2

    @classmethod
    def init(cls, d_in: int = EMBED_LEN, d_model: int = 256, layers: int = 2, seed: int = 0) -> AfaParams:
        if layers < 0 or d_in <= 0 or d_model <= 0:
            raise AfaError("layers must be >= 0 and widths positive")
        rng = np.random.default_rng(seed)
        tensors = {}
        width = d_in
        for l in range(layers):
            for name in "qkv":
                tensors[f"layer{l}.{name}"] = rng.normal(0.0, 1.0 / np.sqrt(width), (width, d_model))
            width = d_model
        for name in "qk":
            tensors[f"head.{name}"] = rng.normal(0.0, 1.0 / np.sqrt(width), (width, width))
        return cls(tensors, layers)

    def names(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> AfaParams:
        return AfaParams({k: v.copy() for k, v in self.tensors.items()}, self.layers)

    def validate(self) -> None:
        width = None
        for l in range(self.layers):
            q, k, v = (self.tensors[f"layer{l}.{n}"] for n in "qkv")
            if not (q.shape == k.shape == v.shape) or (width is not None and q.shape[0] != width):
                raise AfaError(f"inconsistent shapes in layer {l}")
            width = q.shape[1]
        hq, hk = self.tensors["head.q"], self.tensors["head.k"]
        if hq.shape != hk.shape or (width is not None and hq.shape[0] != width):
            raise AfaError("inconsistent head shapes")
        for name, t in self.tensors.items():
            if not np.all(np.isfinite(t)):
                raise AfaError(f"non-finite entries in {name}")

    def save(self, path) -> None:
        """CSBT stream of every tensor (names in order) plus a JSON sidecar manifest."""
        path = Path(path)
        manifest = {"layers": self.layers,
                    "tensors": [{"name": k, "shape": list(v.shape)} for k, v in self.tensors.items()]}
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(manifest, indent=1), encoding="utf-8")
        path.write_bytes(b"".join(encode_csbt(v) for v in self.tensors.values()))

    @classmethod
    def load(cls, path) -> AfaParams:
        path = Path(path)
        side = path.with_suffix(path.suffix + ".json")
        for p in (path, side):
            if not p.is_file():
                raise FileNotFoundError(f"checkpoint file not found: {p}")
        manifest = json.loads(side.read_text(encoding="utf-8"))
        data = path.read_bytes()
        tensors, offset = {}, 0
        for entry in manifest["tensors"]:
            arr, used = decode_csbt(data[offset:], str(path), with_size=True)
            if list(arr.shape) != entry["shape"]:
                raise AfaError(f"{path}: tensor {entry['name']} has shape {arr.shape}, manifest says {entry['shape']}")
            tensors[entry["name"]] = arr.astype(np.float64)
            offset += used
        if offset != len(data):
            raise AfaError(f"{path}: trailing bytes after the last tensor")
        params = cls(tensors, int(manifest["layers"]))
        params.validate()
        return params


def _finite(x: np.ndarray, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise AfaError(f"{what} must be a non-empty 2-D array, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise AfaError(f"{what} contains non-finite values")
    return x


def _normalize(a: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    r = np.maximum(np.sqrt((a * a).sum(axis=1, keepdims=True)), _TINY)
    return a / r, r


def _normalize_back(g: np.ndarray, n: np.ndarray, r: np.ndarray) -> np.ndarray:
    return (g - n * (g * n).sum(axis=1, keepdims=True)) / r


def _softmax(a: np.ndarray) -> np.ndarray:
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def attention_layer(x: np.ndarray, wq: np.ndarray, wk: np.ndarray, wv: np.ndarray, cache: dict | None = None):
    x = _finite(x, "attention input")
    q, k, v = x @ wq, x @ wk, x @ wv
    nq, rq = _normalize(q)
    nk, rk = _normalize(k)
    p = _softmax(nq @ nk.T)
    y = p @ v
    if cache is not None:
        cache.update(x=x, nq=nq, rq=rq, nk=nk, rk=rk, p=p, v=v)
    return y


def _attention_back(dy, c, wq, wk, wv):
    x, nq, nk, p, v = c["x"], c["nq"], c["nk"], c["p"], c["v"]
    dp = dy @ v.T
    dv = p.T @ dy
    da = p * (dp - (dp * p).sum(axis=1, keepdims=True))
    dq = _normalize_back(da @ nk, nq, c["rq"])
    dk = _normalize_back(da.T @ nq, nk, c["rk"])
    grads = (x.T @ dq, x.T @ dk, x.T @ dv)
    dx = dq @ wq.T + dk @ wk.T + dv @ wv.T
    return grads, dx


def afa_head(x: np.ndarray, wq: np.ndarray, wk: np.ndarray, cache: dict | None = None) -> np.ndarray:
    x = _finite(x, "head input")
    nq, rq = _normalize(x @ wq)
    nk, rk = _normalize(x @ wk)
    s = np.clip(nq @ nk.T, -1.0, 1.0)
    if cache is not None:
        cache.update(x=x, nq=nq, rq=rq, nk=nk, rk=rk)
    return s


def _head_back(ds, c, wq, wk):
    x, nq, nk = c["x"], c["nq"], c["nk"]
    dq = _normalize_back(ds @ nk, nq, c["rq"])
    dk = _normalize_back(ds.T @ nq, nk, c["rk"])
    return (x.T @ dq, x.T @ dk), dq @ wq.T + dk @ wk.T


def decoder_forward(emb: np.ndarray, params: AfaParams, caches: list | None = None) -> np.ndarray:
    x = _finite(emb, "embeddings")
    t = params.tensors
    for l in range(params.layers):
        c = {} if caches is not None else None
        x = attention_layer(x, t[f"layer{l}.q"], t[f"layer{l}.k"], t[f"layer{l}.v"], c)
        if caches is not None:
            caches.append(c)
    c = {} if caches is not None else None
    s = afa_head(x, t["head.q"], t["head.k"], c)
    if caches is not None:
        caches.append(c)
    return s


def score_probability(scores: np.ndarray) -> np.ndarray:
    """Map cosine scores to edge probabilities (s + 1) / 2, clamped away from 0 and 1."""
    return np.clip((np.asarray(scores, dtype=np.float64) + 1.0) / 2.0, EPS, 1.0 - EPS)


def check_label(label: np.ndarray) -> np.ndarray:
    lab = np.asarray(label, dtype=bool)
    if lab.ndim != 2 or lab.shape[0] != lab.shape[1]:
        raise AfaError(f"adjacency label must be square, got shape {lab.shape}")
    if not np.array_equal(lab, lab.T):
        raise AfaError("adjacency label is not symmetric")
    if lab.diagonal().any():
        raise AfaError("adjacency label has self-loops on the diagonal")
    return lab


def _bce(scores: np.ndarray, lab: np.ndarray) -> tuple[float, np.ndarray]:
    m = len(lab)
    off = ~np.eye(m, dtype=bool)
    n = max(int(off.sum()), 1)
    raw = (scores + 1.0) / 2.0
    p = np.clip(raw, EPS, 1.0 - EPS)
    y = lab.astype(np.float64)
    ent = -(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    loss = float(ent[off].sum() / n)
    dp = -(y / p - (1.0 - y) / (1.0 - p)) / n
    inside = (raw > EPS) & (raw < 1.0 - EPS)
    ds = np.where(off & inside, dp * 0.5, 0.0)
    return loss, ds


def adjacency_loss(emb: np.ndarray, label: np.ndarray, params: AfaParams) -> tuple[float, dict[str, np.ndarray]]:
    """Mean off-diagonal binary cross-entropy and its gradient for every parameter."""
    lab = check_label(label)
    caches: list[dict] = []
    scores = decoder_forward(emb, params, caches)
    if scores.shape != lab.shape:
        raise AfaError(f"label shape {lab.shape} does not match {scores.shape[0]} embeddings")
    loss, ds = _bce(scores, lab)
    t = params.tensors
    grads = {}
    (grads["head.q"], grads["head.k"]), dx = _head_back(ds, caches[-1], t["head.q"], t["head.k"])
    for l in reversed(range(params.layers)):
        names = [f"layer{l}.{n}" for n in "qkv"]
        gs, dx = _attention_back(dx, caches[l], *(t[n] for n in names))
        grads.update(zip(names, gs))
    return loss, {k: grads[k] for k in t}


def loss_value(scores: np.ndarray, label: np.ndarray) -> float:
    return _bce(np.asarray(scores, dtype=np.float64), check_label(label))[0]


def binarize_adjacency(scores: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Symmetric boolean adjacency: an edge where either direction exceeds ``threshold``."""
    s = np.asarray(scores, dtype=np.float64)
    if s.ndim != 2 or s.shape[0] != s.shape[1]:
        raise AfaError(f"scores must be square, got shape {s.shape}")
    a = s > threshold
    a = a | a.T
    np.fill_diagonal(a, False)
    return a
