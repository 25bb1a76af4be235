"""LMS, Deep-LMS and exponentially averaged crosstalk cancelers.

States are small dataclasses of numpy arrays. Every array may carry leading
batch dimensions (one entry per tone, seed or trial); all batch elements step
in lock-step, while update decisions are taken per element.

Conventions: ``W`` holds one filter per column, the canceler output is
``x = W^H u`` and the error ``e = d - x``. The LMS update is

    W <- W + 2 mu u e^H

which is the steepest-descent direction for this error definition.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .channel_model import ToneChannel
from .errors import ZeroDiagonal
from .metrics import input_sinr, to_db
from .signal_engine import SecondOrderStats, exact_stats, hermitian_apply


@dataclass
class LmsState:
    W: np.ndarray
    mu: float | np.ndarray


def lms_init(n_users: int, mu, batch_shape: tuple[int, ...] = ()) -> LmsState:
    W = np.broadcast_to(np.eye(n_users, dtype=complex), batch_shape + (n_users, n_users)).copy()
    return LmsState(W=W, mu=mu)


def lms_step(state: LmsState, u: np.ndarray, d: np.ndarray) -> tuple[LmsState, np.ndarray, np.ndarray]:
    """One LMS iteration; returns ``(new_state, x, e)``."""
    W = state.W
    u = np.asarray(u)
    d = np.asarray(d)
    if u.shape[-1] != W.shape[-2] or d.shape[-1] != W.shape[-1]:
        raise ValueError(f"dimension mismatch: W {W.shape}, u {u.shape}, d {d.shape}")
    x = hermitian_apply(W, u)
    e = d - x
    step = 2.0 * np.asarray(state.mu)[..., None, None]
    W_new = W + step * (u[..., :, None] * e.conj()[..., None, :])
    return LmsState(W=W_new, mu=state.mu), x, e


def choose_mu(stats: SecondOrderStats) -> float | np.ndarray:
    """The step size ``1 / (3 tr R)``."""
    tr = np.real(np.trace(stats.R, axis1=-2, axis2=-1))
    if np.any(tr <= 0):
        raise ValueError("trace(R) must be positive")
    mu = 1.0 / (3.0 * tr)
    return float(mu) if np.ndim(mu) == 0 else mu


def _dtilde_diag(H: np.ndarray, W_P: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    g = np.einsum("...ik,...ki->...i", H, W_P)
    if np.any(np.abs(g) < floor):
        raise ZeroDiagonal(f"effective direct gain below {floor:g}: min |(H W_P)_ii| = {np.abs(g).min():.3e}")
    return 1.0 / g


def compute_Dtilde(H: np.ndarray, W_P: np.ndarray, floor: float = 1e-12) -> np.ndarray:
    """Diagonal ``D`` with ``(H W_P D)_ii = 1``."""
    dg = _dtilde_diag(H, W_P, floor)
    return dg[..., None, :] * np.eye(dg.shape[-1])


@dataclass(frozen=True)
class DeepLmsConfig:
    """Update-schedule and normalization options.

    ``trigger_db``: fold the LMS into the preprocessor once the minimal SINR has
    improved by this much since the last update. ``n_tilde``: force an update
    after this many iterations. ``min_first_update``: no update before this
    iteration (defaults to N). ``mu_mode='sample'`` re-derives the step size from
    an exponentially averaged estimate of ``E{u u^H}`` with time constant
    ``sample_window`` instead of the exact covariance.
    """

    trigger_db: float = 5.0
    n_tilde: int = 1000
    d_tilde_mode: Literal["normalize", "identity"] = "normalize"
    min_first_update: int | None = None
    mu_mode: Literal["exact", "sample"] = "exact"
    sample_window: int = 256
    zero_floor: float = 1e-12

    def __post_init__(self):
        if self.d_tilde_mode not in ("normalize", "identity"):
            raise ValueError(f"unknown d_tilde_mode {self.d_tilde_mode!r}")
        if self.mu_mode not in ("exact", "sample"):
            raise ValueError(f"unknown mu_mode {self.mu_mode!r}")
        if self.n_tilde < 1:
            raise ValueError("n_tilde must be >= 1")


@dataclass
class DeepLmsState:
    lms: LmsState
    W_P: np.ndarray
    iter: int
    last_update_iter: np.ndarray
    sinr_at_last_update: np.ndarray
    config: DeepLmsConfig = field(default_factory=DeepLmsConfig)
    R_hat: np.ndarray | None = None

    @property
    def W(self) -> np.ndarray:
        return self.lms.W

    @property
    def composite(self) -> np.ndarray:
        return self.W_P @ self.lms.W


def deep_lms_init(channel: ToneChannel, config: DeepLmsConfig | None = None) -> DeepLmsState:
    """``W = I`` and ``W_P = D[0]`` (direct gains of ``H W_P`` normalized to one)."""
    config = config or DeepLmsConfig()
    n, batch = channel.n_users, channel.batch_shape
    eye = np.broadcast_to(np.eye(n, dtype=complex), batch + (n, n))
    W_P = compute_Dtilde(channel.H, eye, config.zero_floor)
    mu = choose_mu(exact_stats(channel, W_P))
    _, phi_min = input_sinr(channel, W_P)
    R_hat = np.zeros(batch + (n, n), dtype=complex) if config.mu_mode == "sample" else None
    return DeepLmsState(
        lms=lms_init(n, mu, batch),
        W_P=W_P,
        iter=0,
        last_update_iter=np.zeros(batch, dtype=np.int64),
        sinr_at_last_update=np.asarray(to_db(phi_min)),
        config=config,
        R_hat=R_hat,
    )


def update_trigger(state: DeepLmsState, current_min_sinr_db) -> np.ndarray:
    """Whether the coming iteration is an update instant.

    True once the minimal SINR gained ``trigger_db`` since the last update, or
    ``n_tilde`` iterations have passed since it; never before
    ``min_first_update`` (N by default).
    """
    cfg = state.config
    first = cfg.min_first_update if cfg.min_first_update is not None else state.W_P.shape[-1]
    gained = np.asarray(current_min_sinr_db) - state.sinr_at_last_update >= cfg.trigger_db
    stale = state.iter - state.last_update_iter >= cfg.n_tilde
    return (gained | stale) & (state.iter >= first)


def _masked(mask: np.ndarray, arr):
    """Select batch elements of ``arr`` (leading dims) where ``mask`` holds."""
    arr = np.asarray(arr)
    if mask.ndim == 0:
        return arr[None]
    return arr[mask]


def _assign(arr: np.ndarray, mask: np.ndarray, values: np.ndarray) -> np.ndarray:
    out = np.array(arr, copy=True)
    if mask.ndim == 0:
        return values[0].copy()
    out[mask] = values
    return out


def deep_lms_step(state: DeepLmsState, channel: ToneChannel, r: np.ndarray, d: np.ndarray,
                  update_now=False) -> tuple[DeepLmsState, np.ndarray, np.ndarray]:
    """One Deep-LMS iteration; returns ``(new_state, x, e)``.

    ``u = W_P^H r`` feeds a plain LMS step producing ``W_breve``. At update
    instants ``W_P <- W_P W_breve D`` (``D = I`` in identity mode), ``W <- I``
    and the step size is recomputed for the new input covariance.
    """
    lms, R_hat, x, e = _advance(state, r, d)
    return fold_update(state, channel, update_now, lms, R_hat, lms.W), x, e


def avg_deep_lms_step(state: DeepLmsState, avg: "AveragerState", channel: ToneChannel,
                      r: np.ndarray, d: np.ndarray, update_now=False
                      ) -> tuple[DeepLmsState, "AveragerState", np.ndarray, np.ndarray]:
    """Deep-LMS with an exponentially averaged inner filter.

    Adaptation is that of :func:`deep_lms_step`: the instantaneous ``W_breve``
    is folded into ``W_P``. Only the applied filter is averaged, and the
    average restarts from ``W = I`` at update instants, since filters from
    different preprocessors cannot be mixed.
    """
    new, x, e = deep_lms_step(state, channel, r, d, update_now)
    avg, _ = averaged_filter(avg, new.W)
    upd = np.broadcast_to(np.asarray(update_now, dtype=bool), state.W_P.shape[:-2])
    return new, averager_reset(avg, upd, restart=new.W), x, e


def _advance(state: DeepLmsState, r, d):
    cfg = state.config
    u = hermitian_apply(state.W_P, r)
    lms, x, e = lms_step(state.lms, u, d)
    R_hat = state.R_hat
    if R_hat is not None:
        beta = 1.0 - 1.0 / cfg.sample_window
        R_hat = beta * R_hat + (1.0 - beta) * (u[..., :, None] * u.conj()[..., None, :])
    return lms, R_hat, x, e


def fold_update(state: DeepLmsState, channel: ToneChannel, update_now, lms: LmsState,
                R_hat: np.ndarray | None, folded: np.ndarray) -> DeepLmsState:
    """Advance the iteration counter, folding ``folded`` into ``W_P`` where ``update_now``."""
    cfg = state.config
    batch = state.W_P.shape[:-2]
    upd = np.broadcast_to(np.asarray(update_now, dtype=bool), batch)
    W, W_P = lms.W, state.W_P
    mu = lms.mu
    last = state.last_update_iter
    sinr_last = state.sinr_at_last_update
    if upd.any():
        H_u = _masked(upd, np.broadcast_to(channel.H, state.W_P.shape))
        nv_u = _masked(upd, np.broadcast_to(channel.noise_variance, batch))
        M = _masked(upd, np.broadcast_to(folded, W.shape))
        if cfg.d_tilde_mode == "normalize":
            M = M * _dtilde_diag(H_u, _masked(upd, W_P) @ M, cfg.zero_floor)[..., None, :]
        Wp_new = _masked(upd, W_P) @ M
        sub = ToneChannel(H=H_u, noise_variance=nv_u)
        if R_hat is not None:
            Rh = M.conj().swapaxes(-1, -2) @ _masked(upd, R_hat) @ M
            R_hat = _assign(R_hat, upd, Rh)
            mu_new = 1.0 / (3.0 * np.real(np.trace(Rh, axis1=-2, axis2=-1)))
        else:
            mu_new = np.atleast_1d(choose_mu(exact_stats(sub, Wp_new)))
        _, phi_min = input_sinr(sub, Wp_new)

        eye = np.broadcast_to(np.eye(W.shape[-1], dtype=complex), M.shape)
        W = _assign(W, upd, eye)
        W_P = _assign(W_P, upd, Wp_new)
        mu = _assign(np.broadcast_to(mu, batch), upd, mu_new)
        last = _assign(last, upd, np.full(M.shape[0], state.iter))
        sinr_last = _assign(sinr_last, upd, to_db(phi_min))

    return dataclasses.replace(
        state,
        lms=LmsState(W=W, mu=mu),
        W_P=W_P,
        iter=state.iter + 1,
        last_update_iter=last,
        sinr_at_last_update=sinr_last,
        R_hat=R_hat,
    )


@dataclass
class AveragerState:
    """Exponentially weighted filter average.

    ``W_acc = sum_i theta^(n-i) W[i]`` (the raw accumulated sum) and
    ``weight_acc = sum_i theta^(n-i)``; the applied filter is their ratio.
    """

    theta: float = 0.95
    W_acc: np.ndarray | None = None
    weight_acc: float | np.ndarray = 0.0

    def __post_init__(self):
        if not 0.0 < self.theta < 1.0:
            raise ValueError("theta must lie in (0, 1)")

    @property
    def applied(self) -> np.ndarray:
        return self.W_acc / np.asarray(self.weight_acc)[..., None, None]


def averaged_filter(avg: AveragerState, W: np.ndarray) -> tuple[AveragerState, np.ndarray]:
    """Fold ``W`` into the average; returns ``(new_avg, W_applied)``."""
    if avg.W_acc is None:
        W_acc = np.array(W, dtype=complex, copy=True)
        weight = np.ones(np.shape(W)[:-2]) if np.ndim(W) > 2 else 1.0
    else:
        W_acc = avg.theta * avg.W_acc + W
        weight = avg.theta * np.asarray(avg.weight_acc) + 1.0
    new = AveragerState(theta=avg.theta, W_acc=W_acc, weight_acc=weight)
    return new, new.applied


def averager_reset(avg: AveragerState, mask, restart: np.ndarray | None = None) -> AveragerState:
    """Restart the average for the batch elements selected by ``mask``.

    With ``restart`` the average restarts from that filter (weight one);
    otherwise the accumulator is emptied.
    """
    if avg.W_acc is None:
        return avg
    mask = np.broadcast_to(np.asarray(mask, dtype=bool), avg.W_acc.shape[:-2])
    if not mask.any():
        return avg
    keep = ~mask
    W_acc = avg.W_acc * keep[..., None, None]
    weight = np.asarray(avg.weight_acc) * keep
    if restart is not None:
        W_acc = W_acc + np.broadcast_to(restart, W_acc.shape) * mask[..., None, None]
        weight = weight + mask
    return AveragerState(theta=avg.theta, W_acc=W_acc, weight_acc=weight if weight.ndim else float(weight))
