"""Canceler state snapshots in the channel text format.

Each batch element contributes two records: ``W_P`` with index ``2b`` and
``W`` with index ``2b + 1``. The scalar field holds the iteration count and
the trailer holds the step size.
"""

from __future__ import annotations

import os
from typing import NamedTuple

import numpy as np

from . import textio
from .cancelers import DeepLmsState
from .errors import ChannelFileError


class Snapshot(NamedTuple):
    W_P: np.ndarray
    W: np.ndarray
    iteration: int
    mu: np.ndarray


def save_snapshot(path: str | os.PathLike, state: DeepLmsState) -> None:
    n = state.W_P.shape[-1]
    W_P = state.W_P.reshape(-1, n, n)
    W = state.W.reshape(-1, n, n)
    mu = np.broadcast_to(np.asarray(state.lms.mu, dtype=float), state.W_P.shape[:-2]).ravel()
    records = []
    for b in range(W_P.shape[0]):
        records.append(textio.ComplexRecord(2 * b, float(state.iter), W_P[b], float(mu[b])))
        records.append(textio.ComplexRecord(2 * b + 1, float(state.iter), W[b], float(mu[b])))
    textio.write_records(path, records)


def load_snapshot(path: str | os.PathLike) -> Snapshot:
    """Inverse of :func:`save_snapshot`; batch elements are stacked on axis 0."""
    recs = sorted(textio.read_records(path), key=lambda r: r.index)
    if not recs or len(recs) % 2 or [r.index for r in recs] != list(range(len(recs))):
        raise ChannelFileError(f"{path}: expected consecutive W_P/W record pairs")
    W_P = np.stack([r.matrix for r in recs[0::2]])
    W = np.stack([r.matrix for r in recs[1::2]])
    mu = np.array([r.trailer for r in recs[0::2]])
    return Snapshot(W_P, W, int(recs[0].scalar), mu)
