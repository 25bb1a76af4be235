"""Synthetic per-tone upstream channels.

The channel of one frequency bin is an N x N complex matrix ``H`` whose column
``h_i`` collects the gains seen by receiver ``i``; the received vector is
``r = H^H d + nu``. ``H`` is stored un-normalized, with the transmit power
already folded into ``noise_variance`` (sigma_nu^2 = raw noise / tx power).

The generator is a parametric stand-in for measured cable data. It keeps the
single property the Deep-LMS experiments depend on: relative to the direct
gains the FEXT couplings grow with frequency, so the row dominance ratio
``|h_ii| / sum_{j!=i} |h_ij|`` drops below one above a configurable
crossover frequency.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import textio
from .errors import ChannelFileError

# E|g| for g ~ CN(0, 1)
_MEAN_ABS_CN = math.sqrt(math.pi) / 2.0


@dataclass(frozen=True)
class ToneChannel:
    """Channel of one frequency bin, or a stack of bins.

    ``H`` may carry leading batch dimensions, ``(..., N, N)``; ``noise_variance``,
    ``tone_index`` and ``frequency`` then broadcast against ``H.shape[:-2]``.
    Use :func:`stack_channels` to build a batch from single tones.
    """

    H: np.ndarray
    noise_variance: float | np.ndarray
    tone_index: int | np.ndarray = 0
    frequency: float | np.ndarray = 0.0

    def __post_init__(self):
        H = np.asarray(self.H, dtype=complex)
        if H.ndim < 2 or H.shape[-1] != H.shape[-2]:
            raise ValueError(f"H must be (..., N, N), got shape {H.shape}")
        if H.shape[-1] < 2:
            raise ValueError("a channel needs at least N = 2 users")
        if not np.all(np.isfinite(H)):
            raise ValueError("H has non-finite entries")
        if np.any(np.diagonal(H, axis1=-2, axis2=-1) == 0):
            raise ValueError("H has a zero direct gain h_ii")
        nv = np.asarray(self.noise_variance, dtype=float)
        if not np.all(np.isfinite(nv)) or np.any(nv <= 0):
            raise ValueError("noise_variance must be finite and > 0")
        object.__setattr__(self, "H", H)
        object.__setattr__(self, "noise_variance", nv if nv.ndim else float(nv))

    @property
    def n_users(self) -> int:
        return self.H.shape[-1]

    @property
    def batch_shape(self) -> tuple[int, ...]:
        return self.H.shape[:-2]

    def __len__(self) -> int:
        if not self.batch_shape:
            raise TypeError("single ToneChannel has no length")
        return self.batch_shape[0]

    def __getitem__(self, k) -> "ToneChannel":
        if not self.batch_shape:
            raise TypeError("single ToneChannel is not indexable")

        def _pick(v):
            v = np.asarray(v)
            return v[k] if v.ndim else v[()]

        return ToneChannel(
            H=self.H[k],
            noise_variance=_pick(np.broadcast_to(self.noise_variance, self.batch_shape)),
            tone_index=_pick(np.broadcast_to(self.tone_index, self.batch_shape)),
            frequency=_pick(np.broadcast_to(self.frequency, self.batch_shape)),
        )

    def with_H(self, H: np.ndarray) -> "ToneChannel":
        return dataclasses.replace(self, H=H)


def stack_channels(channels: Sequence[ToneChannel]) -> ToneChannel:
    """Stack single-tone channels into one batched :class:`ToneChannel`."""
    if not channels:
        raise ValueError("no channels to stack")
    return ToneChannel(
        H=np.stack([c.H for c in channels]),
        noise_variance=np.array([c.noise_variance for c in channels], dtype=float),
        tone_index=np.array([c.tone_index for c in channels]),
        frequency=np.array([c.frequency for c in channels], dtype=float),
    )


@dataclass(frozen=True)
class CableConfig:
    """Parameters of the synthetic cable.

    Direct gains are ``exp(-kappa * length * sqrt(f))`` with a random phase.
    Off-diagonal gains are ``c(f) * |gamma_ij| * exp(j phi_ij(f))``: the
    magnitude ``|gamma_ij|`` of a ``CN(0, 1)`` draw is fixed per pair, the phase
    is redrawn at every tone, and

        c(f) = fext_scale * |h_ii(f)| * (f / f_c)**fext_growth / ((N - 1) E|gamma|)

    i.e. the coupled signal sees the same insertion loss as the direct path,
    and the coupling-to-direct ratio grows like ``f**fext_growth``. Computed from
    expected magnitudes, the dominance ratio is ``(f_c / f)**fext_growth / fext_scale``: one at
    ``f = crossover_hz`` for ``fext_scale = 1`` and falling above it.

    With FEXT enabled the crossover must lie inside the tone grid.

    Noise follows a two-level PSD profile: ``noise_psd_low_dbm_hz`` below
    ``noise_break_hz`` and ``noise_psd_high_dbm_hz`` above, normalized by the
    flat transmit PSD ``tx_psd_dbm_hz``.
    """

    n_users: int = 10
    n_tones: int = 35
    tone_start_hz: float = 20e6
    tone_spacing_hz: float = 5e6
    length_m: float = 100.0
    kappa: float = 2.3e-6
    fext_scale: float = 1.0
    fext_growth: float = 1.0
    crossover_hz: float = 30e6
    tx_psd_dbm_hz: float = -76.0
    noise_psd_low_dbm_hz: float = -140.0
    noise_psd_high_dbm_hz: float = -150.0
    noise_break_hz: float = 30e6

    def __post_init__(self):
        if self.n_users < 2:
            raise ValueError("CableConfig needs n_users >= 2")
        if self.n_tones < 1:
            raise ValueError("CableConfig needs at least one tone")
        if self.tone_spacing_hz <= 0 and self.n_tones > 1:
            raise ValueError("tone_spacing_hz must be > 0")
        if self.tone_start_hz <= 0 or self.crossover_hz <= 0:
            raise ValueError("frequencies must be positive")
        f = self.frequencies
        if self.fext_scale > 0 and self.n_tones > 1 and not f[0] <= self.crossover_hz <= f[-1]:
            raise ValueError(f"crossover {self.crossover_hz:g} Hz lies outside the tone grid "
                             f"[{f[0]:g}, {f[-1]:g}] Hz")

    @property
    def frequencies(self) -> np.ndarray:
        return self.tone_start_hz + self.tone_spacing_hz * np.arange(self.n_tones)

    def above_crossover(self) -> list[int]:
        """Indices of the tones strictly above the crossover frequency."""
        return [int(k) for k in np.flatnonzero(self.frequencies > self.crossover_hz)]

    def direct_gain(self, f) -> np.ndarray:
        return np.exp(-self.kappa * self.length_m * np.sqrt(np.asarray(f, dtype=float)))

    def fext_level(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        return (self.fext_scale * self.direct_gain(f) * (f / self.crossover_hz) ** self.fext_growth
                / ((self.n_users - 1) * _MEAN_ABS_CN))

    def noise_variance(self, f) -> np.ndarray:
        f = np.asarray(f, dtype=float)
        psd = np.where(f < self.noise_break_hz, self.noise_psd_low_dbm_hz,
                       self.noise_psd_high_dbm_hz)
        return 10.0 ** ((psd - self.tx_psd_dbm_hz) / 10.0)


def generate_cable(config: CableConfig, seed: int) -> list[ToneChannel]:
    """Draw one synthetic cable; deterministic in ``seed``."""
    rng = np.random.default_rng(seed)
    n, freqs = config.n_users, config.frequencies
    K = freqs.size
    phase = rng.uniform(0.0, 2.0 * np.pi, size=(K, n))
    # per-pair coupling magnitude, fresh phase at every tone
    gamma0 = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2)
    gamma = np.abs(gamma0) * np.exp(1j * rng.uniform(0.0, 2.0 * np.pi, size=(K, n, n)))

    H = config.fext_level(freqs)[:, None, None] * gamma
    diag = config.direct_gain(freqs)[:, None] * np.exp(1j * phase)
    idx = np.arange(n)
    H[:, idx, idx] = diag
    noise = config.noise_variance(freqs)
    return [
        ToneChannel(H=H[k], noise_variance=float(noise[k]), tone_index=k,
                    frequency=float(freqs[k]))
        for k in range(K)
    ]


def make_near_far(channels: Sequence[ToneChannel], near_count: int) -> list[ToneChannel]:
    """Near-far variant ``H_NF = blockdiag(I, H22) H``.

    The first ``near_count`` users keep their rows; the remaining (far) users'
    rows are multiplied by the far-far block ``H22``, which models an extra
    cable segment of the same type.
    """
    out = []
    for ch in channels:
        n = ch.n_users
        if not 0 < near_count < n:
            raise ValueError(f"near_count must be in (0, {n}), got {near_count}")
        H = ch.H
        T = np.zeros_like(H)
        T[..., :near_count, :near_count] = np.eye(near_count)
        T[..., near_count:, near_count:] = H[..., near_count:, near_count:]
        out.append(ch.with_H(T @ H))
    return out


def dominance_ratio(channel: ToneChannel) -> np.ndarray:
    """Row-wise ``|h_ii| / sum_{j != i} |h_ij|``; ``inf`` for a zero off-diagonal sum."""
    A = np.abs(channel.H)
    d = np.diagonal(A, axis1=-2, axis2=-1)
    off = A.sum(axis=-1) - d
    with np.errstate(divide="ignore"):
        return np.where(off > 0, d / np.where(off > 0, off, 1.0), np.inf)


def save_channels(path: str | os.PathLike, channels: Sequence[ToneChannel]) -> None:
    textio.write_records(path, (
        textio.ComplexRecord(int(c.tone_index), float(c.frequency), c.H, float(c.noise_variance))
        for c in channels
    ))


def load_channels(path: str | os.PathLike) -> list[ToneChannel]:
    out = []
    for rec in textio.read_records(path):
        try:
            out.append(ToneChannel(H=rec.matrix, noise_variance=rec.trailer,
                                   tone_index=rec.index, frequency=rec.scalar))
        except ValueError as exc:
            raise ChannelFileError(f"tone {rec.index}: {exc}") from exc
    if not out:
        raise ChannelFileError(f"{path}: no channel records")
    return out
