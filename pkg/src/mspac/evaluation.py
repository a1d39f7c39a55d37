"""Embed the query/gallery splits with a trained model and score retrieval."""
from __future__ import annotations

from typing import List, Sequence

import numpy as np

from .data import Dataset
from .metrics import EvalMode, MetricsReport, RetrievalRun, distance_matrix, evaluate
from .model import Model


class EvalIOError(IOError):
    pass


def retrieval_run(
    model: Model,
    ds: Dataset,
    query: tuple = ("query", "ir"),
    gallery: tuple = ("gallery", "rgb"),
) -> RetrievalRun:
    """Distances from every ``query`` (split, modality) image to every ``gallery`` image."""
    q = ds.select(*query)
    g = ds.select(*gallery)
    if not q or not g:
        raise EvalIOError(f"dataset has {len(q)} {query} and {len(g)} {gallery} images")
    qe = model.embed_images(ds.stack(q), query[1])
    ge = model.embed_images(ds.stack(g), gallery[1])
    return RetrievalRun(
        distance_matrix(qe, ge),
        np.array([r.identity for r in q]),
        np.array([r.identity for r in g]),
        np.array([r.camera for r in q]),
        np.array([r.camera for r in g]),
    )


def evaluate_model(model: Model, ds: Dataset, modes: Sequence[EvalMode]) -> List[MetricsReport]:
    run = retrieval_run(model, ds)
    return [evaluate(run, m) for m in modes]


def all_modes(base: EvalMode) -> List[EvalMode]:
    """The four search/shot combinations, sharing trial count and seed."""
    return [
        EvalMode(search, shot, base.trials, base.seed)
        for search in ("all", "indoor")
        for shot in ("multi", "single")
    ]
