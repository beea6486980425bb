"""Relaxed pixel precision/recall/F1, APLS and TLTS."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import ndimage
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import dijkstra

from .graph import BoundaryGraph, rasterize_graph, snap_vertex


@dataclass(frozen=True)
class MetricConfig:
    relax_ratios: tuple[float, ...] = (2.0, 5.0, 10.0)
    tlts_phi: float = 0.05
    sample_pairs: int = 500
    snap_radius: float = 20.0
    seed: int = 0

    def validate(self) -> None:
        if not self.relax_ratios or any(t <= 0 for t in self.relax_ratios):
            raise ValueError("relax_ratios must be positive")
        if not 0 < self.tlts_phi < 1:
            raise ValueError("tlts_phi must be in (0, 1)")
        if self.sample_pairs <= 0 or self.snap_radius <= 0:
            raise ValueError("sample_pairs and snap_radius must be positive")


@dataclass
class PixelScores:
    tau: float
    precision: float
    recall: float
    f1: float


@dataclass
class MetricReport:
    pixel: list[PixelScores] = field(default_factory=list)
    apls: float | None = None
    tlts: float | None = None
    pairs: int = 0
    unmatched: int = 0
    label: str = ""

    def f1(self, tau: float) -> float:
        for p in self.pixel:
            if p.tau == tau:
                return p.f1
        raise KeyError(tau)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pixel"] = [asdict(p) for p in self.pixel]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


def pixel_metrics(pred: BoundaryGraph, gt: BoundaryGraph, frame, config: MetricConfig = MetricConfig()) -> list[PixelScores]:
    """Relaxed precision and recall of centerline pixels at every tau.

    A pixel counts when its distance to the other set is strictly below tau.
    """
    pm = rasterize_graph(pred, frame, 1.0) > 0
    qm = rasterize_graph(gt, frame, 1.0) > 0
    d_to_q = ndimage.distance_transform_edt(~qm) if qm.any() else None
    d_to_p = ndimage.distance_transform_edt(~pm) if pm.any() else None
    n_p, n_q = int(pm.sum()), int(qm.sum())
    out = []
    for tau in config.relax_ratios:
        prec = float((d_to_q[pm] < tau).sum()) / n_p if n_p and d_to_q is not None else 0.0
        rec = float((d_to_p[qm] < tau).sum()) / n_q if n_q and d_to_p is not None else 0.0
        out.append(PixelScores(float(tau), prec, rec, _f1(prec, rec)))
    return out


def _csgraph(g: BoundaryGraph):
    ids = g.ids
    index = {v: i for i, v in enumerate(ids)}
    rows, cols, w = [], [], []
    for a, b in g.edges():
        rows.append(index[a])
        cols.append(index[b])
        # sparse graphs drop explicit zeros, so coincident endpoints keep a tiny weight
        w.append(max(g.edge_length(a, b), 1e-300))
    n = len(ids)
    mat = csr_matrix((w, (rows, cols)), shape=(n, n))
    return mat, index


def _distances(g: BoundaryGraph, pairs) -> list[float | None]:
    """Shortest path lengths for (a, b) id pairs; None when disconnected."""
    if not pairs:
        return []
    mat, index = _csgraph(g)
    sources = sorted({index[a] for a, _ in pairs})
    row = {s: k for k, s in enumerate(sources)}
    dist = dijkstra(mat, directed=False, indices=sources)
    out = []
    for a, b in pairs:
        d = dist[row[index[a]], index[b]]
        out.append(float(d) if np.isfinite(d) else None)
    return out


def sample_pairs(gt: BoundaryGraph, count: int, seed: int = 0) -> list[tuple[int, int]]:
    """Uniform sample of connected pairs of distinct gt vertices, sorted.

    Every pair is returned when there are no more than ``count``.
    """
    comps = [c for c in gt.components() if len(c) >= 2]
    sizes = np.array([len(c) * (len(c) - 1) // 2 for c in comps], dtype=np.int64)
    total = int(sizes.sum())
    if total == 0:
        return []
    if total <= count:
        picks = np.arange(total)
    else:
        picks = np.sort(np.random.default_rng(seed).choice(total, size=count, replace=False))
    starts = np.concatenate([[0], np.cumsum(sizes)])
    pairs = []
    for k in picks.tolist():
        ci = int(np.searchsorted(starts, k, side="right") - 1)
        comp = comps[ci]
        r = k - int(starts[ci])
        # row-major index into the strict upper triangle: row i holds n - 1 - i pairs
        rows = np.concatenate([[0], np.cumsum(np.arange(len(comp) - 1, 0, -1))])
        i = int(np.searchsorted(rows, r, side="right") - 1)
        a, b = comp[i], comp[i + 1 + r - int(rows[i])]
        pairs.append((min(a, b), max(a, b)))
    return sorted(pairs)


def path_pairs(gt: BoundaryGraph, pred: BoundaryGraph, config: MetricConfig):
    """(gt length, pred length or None) per sampled pair."""
    pairs = sample_pairs(gt, config.sample_pairs, config.seed)
    lg = _distances(gt, pairs)
    snapped = {}
    for v in sorted({v for p in pairs for v in p}):
        snapped[v] = snap_vertex(pred, gt.position(v), config.snap_radius) if len(pred) else None
    wanted = [(snapped[a], snapped[b]) for a, b in pairs]
    ok = [(p, q) for p, q in wanted if p is not None and q is not None]
    lp_ok = iter(_distances(pred, ok))
    lp = [next(lp_ok) if p is not None and q is not None else None for p, q in wanted]
    return list(zip(lg, lp))


def _apls_score(lg: float, lp: float | None) -> float:
    if lp is None:
        return 0.0
    return 1.0 - min(1.0, abs(lg - lp) / lg)


def _tlts_pass(lg: float, lp: float | None, phi: float) -> bool:
    return lp is not None and abs(lg - lp) <= lg * phi


def apls(gt: BoundaryGraph, pred: BoundaryGraph, config: MetricConfig = MetricConfig()) -> float | None:
    pp = path_pairs(gt, pred, config)
    if not pp:
        return None
    return float(np.mean([_apls_score(lg, lp) for lg, lp in pp]))


def tlts(gt: BoundaryGraph, pred: BoundaryGraph, config: MetricConfig = MetricConfig()) -> float | None:
    pp = path_pairs(gt, pred, config)
    if not pp:
        return None
    return float(np.mean([_tlts_pass(lg, lp, config.tlts_phi) for lg, lp in pp]))


def evaluate(pred: BoundaryGraph, gt: BoundaryGraph, frame, config: MetricConfig = MetricConfig(),
             label: str = "") -> MetricReport:
    config.validate()
    pp = path_pairs(gt, pred, config)
    rep = MetricReport(pixel_metrics(pred, gt, frame, config), label=label, pairs=len(pp))
    if pp:
        rep.apls = float(np.mean([_apls_score(lg, lp) for lg, lp in pp]))
        rep.tlts = float(np.mean([_tlts_pass(lg, lp, config.tlts_phi) for lg, lp in pp]))
        rep.unmatched = sum(lp is None for _, lp in pp)
    return rep


def mean_report(reports: list[MetricReport], label: str = "") -> MetricReport:
    """Average of several reports (patch-scale summary); absent scores are skipped."""
    out = MetricReport(label=label)
    if not reports:
        return out
    taus = [p.tau for p in reports[0].pixel]
    for k, tau in enumerate(taus):
        ps = [r.pixel[k] for r in reports]
        out.pixel.append(PixelScores(tau, *(float(np.mean([getattr(p, f) for p in ps]))
                                            for f in ("precision", "recall", "f1"))))
    for name in ("apls", "tlts"):
        vals = [getattr(r, name) for r in reports if getattr(r, name) is not None]
        setattr(out, name, float(np.mean(vals)) if vals else None)
    out.pairs = sum(r.pairs for r in reports)
    out.unmatched = sum(r.unmatched for r in reports)
    return out


def format_table(reports: list[MetricReport]) -> str:
    """Aligned plain-text table: one row per report, P/R/F1 per tau then APLS and TLTS."""
    if not reports:
        return ""
    taus = [p.tau for p in reports[0].pixel]
    head = ["scale"]
    for t in taus:
        head += [f"P@{t:g}", f"R@{t:g}", f"F1@{t:g}"]
    head += ["APLS", "TLTS", "pairs"]
    rows = [head]
    for r in reports:
        row = [r.label or "-"]
        for p in r.pixel:
            row += [f"{p.precision:.4f}", f"{p.recall:.4f}", f"{p.f1:.4f}"]
        row += ["n/a" if r.apls is None else f"{r.apls:.4f}",
                "n/a" if r.tlts is None else f"{r.tlts:.4f}", str(r.pairs)]
        rows.append(row)
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    lines = ["  ".join(c.rjust(w) if i else c.ljust(w) for i, (c, w) in enumerate(zip(row, widths)))
             for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
