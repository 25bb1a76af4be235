"""SINR, MSE and achievable-rate metrics computed from ground-truth channels.

All SINRs are linear unless a name ends in ``_db``. User ``i``'s interference
terms are the off-diagonal entries of column ``i`` of the effective channel,
matching ``u_i = h_i^H d``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel_model import ToneChannel

SINR_FLOOR_DB = -60.0
DEFAULT_B_MAX = 12
DEFAULT_TONE_BANDWIDTH = 48000.0


@dataclass(frozen=True)
class EffectiveChannel:
    """End-to-end channel ``H_check = H W_P W`` and its per-output noise variance."""

    H_check: np.ndarray
    noise_var_out: np.ndarray


def _col_power(A: np.ndarray) -> np.ndarray:
    return np.sum(A.real ** 2 + A.imag ** 2, axis=-2)


def _diag(A: np.ndarray) -> np.ndarray:
    return np.diagonal(A, axis1=-2, axis2=-1)


def effective_channel(channel: ToneChannel, W_P: np.ndarray | None = None,
                      W: np.ndarray | None = None) -> EffectiveChannel:
    G = np.broadcast_to(np.eye(channel.n_users, dtype=complex), channel.H.shape)
    if W_P is not None:
        G = W_P
    if W is not None:
        G = G @ W
    sigma2 = np.asarray(channel.noise_variance)[..., None]
    return EffectiveChannel(H_check=channel.H @ G, noise_var_out=sigma2 * _col_power(G))


def _sinr(Hc: np.ndarray, noise: np.ndarray) -> np.ndarray:
    direct = np.abs(_diag(Hc)) ** 2
    interference = _col_power(Hc) - direct
    return direct / (np.maximum(interference, 0.0) + noise)


def input_sinr(channel: ToneChannel, W_P: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Per-user SINR at the LMS input and its minimum over users.

    ``Phi_i = |ht_ii|^2 / (sum_{j!=i} |ht_ji|^2 + sigma_tilde_i^2)`` for
    ``Ht = H W_P``.
    """
    eff = effective_channel(channel, W_P)
    phi = _sinr(eff.H_check, eff.noise_var_out)
    return phi, phi.min(axis=-1)


def output_sinr(eff: EffectiveChannel) -> np.ndarray:
    return _sinr(eff.H_check, eff.noise_var_out)


def output_mse(eff: EffectiveChannel) -> np.ndarray:
    """``eps_i = |1 - hc_ii|^2 + sum_{j!=i} |hc_ji|^2 + sigma_check_i^2``."""
    Hc = eff.H_check
    d = _diag(Hc)
    interference = _col_power(Hc) - np.abs(d) ** 2
    return np.abs(1.0 - d) ** 2 + np.maximum(interference, 0.0) + eff.noise_var_out


def to_db(x, floor_db: float = SINR_FLOOR_DB) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    with np.errstate(divide="ignore"):
        return np.maximum(10.0 * np.log10(x), floor_db)


def rate(sinr, tone_bandwidth: float = DEFAULT_TONE_BANDWIDTH,
         b_max: float = DEFAULT_B_MAX, tone_axis: int = 0) -> np.ndarray:
    """Per-user achievable rate in bit/s.

    ``R_i = W * sum_k min(log2(1 + SINR_ik), b_max)``; ``sinr`` is linear with
    tones along ``tone_axis``.
    """
    sinr = np.asarray(sinr, dtype=float)
    if np.any(sinr < 0):
        raise ValueError("SINR must be non-negative")
    bits = np.minimum(np.log2(1.0 + sinr), b_max)
    return tone_bandwidth * bits.sum(axis=tone_axis)
