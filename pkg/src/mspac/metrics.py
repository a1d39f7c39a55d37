"""Retrieval evaluation: squared-distance ranking, CMC rank-k and mAP.

Gallery items are ranked by ascending squared Euclidean distance with ties
broken by gallery index, so every number here depends on ranks only.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np

OUTDOOR_CAMERAS = frozenset({4, 5})
DEFAULT_KS = (1, 5, 10, 20)
REPORT_COLUMNS = ("mode", "shot", "r1", "r5", "r10", "r20", "mAP")


class ProtocolError(ValueError):
    pass


@dataclass
class RetrievalRun:
    dist: np.ndarray
    q_ids: np.ndarray
    g_ids: np.ndarray
    q_cams: Optional[np.ndarray] = None
    g_cams: Optional[np.ndarray] = None

    def __post_init__(self):
        self.dist = np.asarray(self.dist)
        self.q_ids = np.asarray(self.q_ids)
        self.g_ids = np.asarray(self.g_ids)
        if self.dist.ndim != 2 or self.dist.shape != (len(self.q_ids), len(self.g_ids)):
            raise ProtocolError(
                f"distance matrix {self.dist.shape} does not match {len(self.q_ids)} queries x {len(self.g_ids)} gallery"
            )
        if self.g_cams is not None:
            self.g_cams = np.asarray(self.g_cams)
            if len(self.g_cams) != len(self.g_ids):
                raise ProtocolError("gallery camera list length differs from gallery size")
        if self.q_cams is not None:
            self.q_cams = np.asarray(self.q_cams)

    def subset_gallery(self, keep: np.ndarray) -> "RetrievalRun":
        keep = np.asarray(keep)
        cams = None if self.g_cams is None else self.g_cams[keep]
        return RetrievalRun(self.dist[:, keep], self.q_ids, self.g_ids[keep], self.q_cams, cams)


@dataclass
class EvalMode:
    search: str = "all"  # all | indoor
    shot: str = "multi"  # single | multi
    trials: int = 10
    seed: int = 0

    def __post_init__(self):
        if self.search not in ("all", "indoor"):
            raise ValueError(f"eval.search must be all|indoor, got {self.search!r}")
        if self.shot not in ("single", "multi"):
            raise ValueError(f"eval.shot must be single|multi, got {self.shot!r}")
        if self.trials <= 0:
            raise ValueError("eval.trials must be positive")


@dataclass
class MetricsReport:
    mode: str
    shot: str
    cmc: Dict[int, float]
    mAP: float
    gallery_size: int
    trials: int = 1
    extra: Dict[str, float] = field(default_factory=dict)

    def row(self) -> List[str]:
        return [self.mode, self.shot] + [_fmt(self.cmc[k]) for k in DEFAULT_KS] + [_fmt(self.mAP)]

    def text(self) -> str:
        ranks = "  ".join(f"r{k}={self.cmc[k]:.4f}" for k in DEFAULT_KS)
        return f"{self.mode}/{self.shot}  {ranks}  mAP={self.mAP:.4f}  (gallery {self.gallery_size}, trials {self.trials})"


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def distance_matrix(q: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Squared Euclidean distances, computed in float64 and clipped at 0."""
    q = np.asarray(q, dtype=np.float64)
    g = np.asarray(g, dtype=np.float64)
    if q.ndim != 2 or g.ndim != 2 or q.shape[1] != g.shape[1]:
        raise ValueError(f"embedding dims differ: query {q.shape} vs gallery {g.shape}")
    d = (q * q).sum(1)[:, None] + (g * g).sum(1)[None, :] - 2.0 * (q @ g.T)
    return np.maximum(d, 0.0)


def _relevance(run: RetrievalRun) -> np.ndarray:
    present = set(run.g_ids.tolist())
    for i, y in enumerate(run.q_ids.tolist()):
        if y not in present:
            raise ProtocolError(f"query {i} has identity {y}, which is absent from the gallery")
    order = np.argsort(run.dist, axis=1, kind="stable")
    return run.g_ids[order] == run.q_ids[:, None]


def cmc(run: RetrievalRun, ks: Sequence[int] = DEFAULT_KS) -> Dict[int, float]:
    """Fraction of queries with a correct match in the top k, for each k.

    k larger than the gallery is treated as the whole gallery.
    """
    rel = _relevance(run)
    first = rel.argmax(axis=1)
    return {int(k): float(np.mean(first < k)) if len(first) else 0.0 for k in ks}


def average_precision(rel_row: np.ndarray) -> float:
    hits = np.flatnonzero(rel_row)
    if hits.size == 0:
        return 0.0
    return float(np.mean(np.arange(1, hits.size + 1) / (hits + 1)))


def mean_ap(run: RetrievalRun) -> float:
    rel = _relevance(run)
    if rel.shape[0] == 0:
        return 0.0
    return float(np.mean([average_precision(r) for r in rel]))


def camera_filter(run: RetrievalRun, search: str) -> RetrievalRun:
    if search == "all":
        return run
    if run.g_cams is None:
        raise ProtocolError("indoor search needs gallery camera ids")
    keep = np.flatnonzero(~np.isin(run.g_cams, list(OUTDOOR_CAMERAS)))
    if keep.size == 0:
        raise ProtocolError("indoor filter left an empty gallery")
    return run.subset_gallery(keep)


def single_shot_indices(g_ids: np.ndarray, g_cams: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One uniformly drawn gallery index per (identity, camera) group, in index order."""
    groups: Dict[tuple, List[int]] = {}
    for j, key in enumerate(zip(g_ids.tolist(), g_cams.tolist())):
        groups.setdefault(key, []).append(j)
    picked = [members[rng.integers(len(members))] for _, members in sorted(groups.items())]
    return np.sort(np.asarray(picked, dtype=np.int64))


def evaluate(run: RetrievalRun, mode: EvalMode, ks: Sequence[int] = DEFAULT_KS) -> MetricsReport:
    filtered = camera_filter(run, mode.search)
    if len(filtered.g_ids) == 0:
        raise ProtocolError("empty gallery")
    if mode.shot == "multi":
        return MetricsReport(mode.search, mode.shot, cmc(filtered, ks), mean_ap(filtered), len(filtered.g_ids))
    if filtered.g_cams is None:
        raise ProtocolError("single-shot sampling needs gallery camera ids")
    seeds = np.random.SeedSequence(mode.seed).spawn(mode.trials)
    curves, aps = [], []
    size = 0
    for s in seeds:
        sub = filtered.subset_gallery(single_shot_indices(filtered.g_ids, filtered.g_cams, np.random.default_rng(s)))
        size = len(sub.g_ids)
        curves.append(cmc(sub, ks))
        aps.append(mean_ap(sub))
    mean_curve = {k: float(np.mean([c[k] for c in curves])) for k in ks}
    return MetricsReport(mode.search, mode.shot, mean_curve, float(np.mean(aps)), size, mode.trials)


def write_report(path, reports: Sequence[MetricsReport]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in reports:
            w.writerow(r.row())
    return path


def read_report(path) -> List[Dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
