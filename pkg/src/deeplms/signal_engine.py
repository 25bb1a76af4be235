"""Pilots, noise, the received signal and exact second-order statistics.

Everything here broadcasts over leading batch dimensions: a channel stack of
shape ``(B, N, N)`` pairs with pilot blocks of shape ``(..., B, N)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .channel_model import ToneChannel

PilotKind = Literal["complex-gaussian", "qpsk"]

_QPSK = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)


def _as_shape(size) -> tuple[int, ...]:
    return (int(size),) if np.isscalar(size) else tuple(size)


def complex_gaussian(rng: np.random.Generator, shape, variance=1.0) -> np.ndarray:
    """Circularly symmetric CN(0, variance) samples, ``(x + jy) sqrt(variance / 2)``."""
    z = rng.standard_normal(_as_shape(shape) + (2,))
    return (z[..., 0] + 1j * z[..., 1]) * np.sqrt(np.asarray(variance) / 2.0)


@dataclass
class PilotSource:
    """Seeded stream of known pilot vectors ``d[n]`` with ``E{d d^H} = I``."""

    kind: PilotKind = "complex-gaussian"
    seed: int = 0
    rng: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self):
        if self.kind not in ("complex-gaussian", "qpsk"):
            raise ValueError(f"unknown pilot kind {self.kind!r}")
        self.rng = np.random.default_rng(self.seed)

    def draw(self, n_users: int, size=()) -> np.ndarray:
        shape = _as_shape(size) + (n_users,)
        if self.kind == "qpsk":
            return _QPSK[self.rng.integers(0, 4, size=shape)]
        return complex_gaussian(self.rng, shape)


def draw_pilot(source: PilotSource, n_users: int) -> np.ndarray:
    return source.draw(n_users)


def streams(seed: int, kind: PilotKind = "complex-gaussian") -> tuple[PilotSource, np.random.Generator]:
    """Independent pilot and noise streams derived from one experiment seed.

    Every algorithm compared under the same seed must consume these, so that
    pilot and noise sequences are identical across algorithms.
    """
    pilot_ss, noise_ss = np.random.SeedSequence(seed).spawn(2)
    pilots = PilotSource(kind=kind, seed=0)
    pilots.rng = np.random.default_rng(pilot_ss)
    return pilots, np.random.default_rng(noise_ss)


def hermitian_apply(H: np.ndarray, d: np.ndarray) -> np.ndarray:
    """``H^H d`` over batch dimensions."""
    return (np.asarray(d)[..., None, :] @ np.conj(H))[..., 0, :]


def received_signal(channel: ToneChannel, d: np.ndarray, rng: np.random.Generator | None = None,
                    noiseless: bool = False, noise: np.ndarray | None = None) -> np.ndarray:
    """``r = H^H d + nu`` with ``nu ~ CN(0, sigma_nu^2 I)``.

    Pass ``noise`` to supply a pre-drawn unit-variance CN(0, I) block, which is
    then scaled by ``sqrt(sigma_nu^2)``; otherwise noise is drawn from ``rng``.
    """
    d = np.asarray(d)
    if d.shape[-1] != channel.n_users:
        raise ValueError(f"pilot length {d.shape[-1]} != N = {channel.n_users}")
    r = hermitian_apply(channel.H, d)
    if noiseless:
        return r
    sigma = np.sqrt(np.asarray(channel.noise_variance))[..., None]
    if noise is None:
        if rng is None:
            raise ValueError("rng is required unless noiseless=True or noise is given")
        noise = complex_gaussian(rng, r.shape)
    return r + sigma * noise


@dataclass(frozen=True)
class SecondOrderStats:
    """Exact statistics of ``u = W_P^H r``.

    ``R = E{u u^H}``, ``R_ud = E{u d^H}``, ``noise_cov`` the covariance of the
    coloured noise ``W_P^H nu`` and ``sigma_tilde`` its diagonal.
    """

    R: np.ndarray
    R_ud: np.ndarray
    noise_cov: np.ndarray
    sigma_tilde: np.ndarray


def exact_stats(channel: ToneChannel, W_P: np.ndarray | None = None) -> SecondOrderStats:
    H = channel.H
    if W_P is None:
        W_P = np.broadcast_to(np.eye(channel.n_users, dtype=complex), H.shape)
    Ht = H @ W_P
    sig = np.asarray(channel.noise_variance)[..., None, None]
    noise_cov = sig * (W_P.conj().swapaxes(-1, -2) @ W_P)
    noise_cov = 0.5 * (noise_cov + noise_cov.conj().swapaxes(-1, -2))
    Rs = Ht.conj().swapaxes(-1, -2) @ Ht
    R = 0.5 * (Rs + Rs.conj().swapaxes(-1, -2)) + noise_cov
    return SecondOrderStats(
        R=R,
        R_ud=Ht.conj().swapaxes(-1, -2),
        noise_cov=noise_cov,
        sigma_tilde=np.real(np.diagonal(noise_cov, axis1=-2, axis2=-1)).copy(),
    )


def fourth_moment_identity(Sigma: np.ndarray, A: np.ndarray) -> np.ndarray:
    """``E{z z^H A z z^H} = tr(Sigma A) Sigma + Sigma A Sigma`` for ``z ~ CN(0, Sigma)``."""
    return np.trace(Sigma @ A) * Sigma + Sigma @ A @ Sigma


def fourth_moment_mc(Sigma: np.ndarray, A: np.ndarray, n_samples: int, rng: np.random.Generator,
                     chunk: int = 100_000) -> np.ndarray:
    """Monte Carlo estimate of ``E{z z^H A z z^H}``."""
    L = np.linalg.cholesky(Sigma)
    N = Sigma.shape[-1]
    acc = np.zeros((N, N), dtype=complex)
    done = 0
    while done < n_samples:
        m = min(chunk, n_samples - done)
        z = complex_gaussian(rng, (m, N)) @ L.T
        # z^H A z per sample, then sum of (z^H A z) z z^H
        quad = np.einsum("ti,ij,tj->t", z.conj(), A, z)
        acc += np.einsum("t,ti,tj->ij", quad, z, z.conj())
        done += m
    return acc / n_samples
