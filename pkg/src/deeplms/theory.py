"""Convergence theory of the inner LMS between two preprocessor updates.

Notation follows the canceler: ``R = U^H diag(lam) U`` is the input covariance
(eigenvalues ascending), ``W* = R^-1 R_ud`` the Wiener solution and
``V = U (W - W*)`` the rotated coefficient error. ``S = E|V|^2`` elementwise,
so column ``j`` of ``S`` belongs to user ``j``'s filter. Between updates

    S[n+1] = F S[n] + 4 mu^2 lam eps*^T,   F = diag(rho) + 4 mu^2 lam lam^T,
    rho_i  = 1 - 4 mu lam_i + 8 q mu^2 lam_i^2,
    eps[n] = lam^T S[n] + eps*,

with ``q = 1/2`` for complex and ``q = 1`` for real LMS. The SINR-based bounds
take ``Phi`` to be the minimal input SINR of a preprocessed channel whose
direct gains are normalized to one.
"""

from __future__ import annotations

import dataclasses
import math
import os
from dataclasses import dataclass
from typing import Iterable, Literal, NamedTuple

import numpy as np

from . import textio
from .cancelers import LmsState, choose_mu, compute_Dtilde, lms_step
from .channel_model import ToneChannel
from .errors import DivergentF, DomainError, SingularCovariance
from .metrics import effective_channel, input_sinr, output_mse
from .signal_engine import PilotSource, SecondOrderStats, complex_gaussian, exact_stats, received_signal

Field = Literal["complex", "real"]


def field_q(field: Field) -> float:
    if field == "complex":
        return 0.5
    if field == "real":
        return 1.0
    raise ValueError(f"unknown field {field!r}")


# --- scalar constants -------------------------------------------------------

def alpha(Phi, N: int):
    """``(N - 1 + sqrt(N - 1)) sqrt(Phi) + 2 (N - 1)``."""
    return (N - 1 + math.sqrt(N - 1)) * np.sqrt(Phi) + 2 * (N - 1)


def delta(Phi, N: int):
    a = alpha(Phi, N)
    if np.any(Phi <= a):
        raise DomainError(f"Phi = {Phi!r} does not exceed alpha = {a!r} for N = {N}")
    return (1 + 2 * a) / (Phi - a)


def gamma(Phi, N: int):
    return (alpha(Phi, N) + 1) / (Phi + 1)


def g(x, field: Field = "complex"):
    """``x - q x^2`` with ``q = 1/2`` (complex) or ``q = 1`` (real)."""
    x = np.asarray(x, dtype=float)
    out = x - field_q(field) * x ** 2
    return float(out) if out.ndim == 0 else out


def f_norm1_sinr_bound(Phi, N: int, field: Field = "complex"):
    """SINR-based upper bound ``1 - (8/9) g((1 - gamma(Phi)) / N)`` on ``||F||_1``."""
    delta(Phi, N)
    return 1 - 8 / 9 * g((1 - gamma(Phi, N)) / N, field)


def theorem1_constants(Phi, N: int, field: Field = "complex") -> tuple[float, float]:
    """Per-interval constants ``(c, a)`` of the SINR growth bound."""
    c = 1 / (1 + delta(Phi, N))
    a = 1 / f_norm1_sinr_bound(Phi, N, field)
    return c, a


class Theorem1Bound(NamedTuple):
    value: float
    valid: bool


def theorem1_bound(Phi_l, gap: int, eta_inf, N: int, field: Field = "complex") -> Theorem1Bound:
    """Lower bound on the next interval's minimal SINR after ``gap`` LMS steps.

    ``((c a^gap Phi_l)^-1 + eta_inf)^-1 - 1``. When the bracket is >= 1 the
    bound is non-positive and ``valid`` is False.
    """
    if gap < 0:
        raise ValueError("gap must be >= 0")
    c, a = theorem1_constants(Phi_l, N, field)
    log_growth = math.log(c) + gap * math.log(a) + math.log(Phi_l)
    inv = math.exp(-log_growth) + eta_inf
    valid = inv < 1.0
    return Theorem1Bound(1.0 / inv - 1.0, bool(valid))


def gershgorin_bounds(Phi, N: int) -> tuple[float, float, float]:
    """``(cond(R) bound, lam_min / tr(R) bound, B bound)`` for a normalized channel."""
    if np.any(np.asarray(Phi) <= 0):
        raise DomainError("Phi must be positive")
    a = alpha(Phi, N)
    return 1 + delta(Phi, N), (1 - (a + 1) / (Phi + 1)) / N, a / Phi


# --- propagation matrix -----------------------------------------------------

def build_F(lam, mu: float, field: Field = "complex") -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    q = field_q(field)
    rho = 1 - 4 * mu * lam + 8 * q * mu ** 2 * lam ** 2
    return np.diag(rho) + 4 * mu ** 2 * np.outer(lam, lam)


def induced_norm1(A: np.ndarray) -> float:
    """Induced l1 norm, i.e. the maximal absolute column sum."""
    return float(np.abs(A).sum(axis=-2).max(axis=-1))


def f_norm1_closed_form(lam, field: Field = "complex") -> float:
    """``||F||_1 = 1 - (8/9) g(lam_min / tr R)`` for ``mu = 1 / (3 tr R)``."""
    lam = np.asarray(lam, dtype=float)
    return 1 - 8 / 9 * g(lam.min() / lam.sum(), field)


# --- Wiener solution and the MSE recursion ---------------------------------

def wiener(stats: SecondOrderStats) -> tuple[np.ndarray, np.ndarray]:
    """``W* = R^-1 R_ud`` and ``eps*_i = 1 - r_i^H R^-1 r_i`` (unit-power pilots)."""
    try:
        np.linalg.cholesky(stats.R)
    except np.linalg.LinAlgError as exc:
        raise SingularCovariance("R is not positive definite") from exc
    W_star = np.linalg.solve(stats.R, stats.R_ud)
    eps = 1.0 - np.real(np.sum(stats.R_ud.conj() * W_star, axis=-2))
    return W_star, np.clip(eps, 0.0, 1.0)


def eig_ascending(R: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues (ascending) and the unitary ``U`` with ``R = U^H diag(lam) U``."""
    lam, Q = np.linalg.eigh(R)
    return lam, Q.conj().swapaxes(-1, -2)


@dataclass(frozen=True)
class MseRecursionState:
    lam: np.ndarray
    U: np.ndarray
    F: np.ndarray
    S: np.ndarray
    eps_star: np.ndarray
    mu: float
    field: Field = "complex"
    n: int = 0

    @property
    def q(self) -> float:
        return field_q(self.field)


def mse_recursion_init(stats: SecondOrderStats, W0: np.ndarray | None = None, mu: float | None = None,
                       field: Field = "complex") -> MseRecursionState:
    """Recursion state for an interval starting from filter ``W0`` (default ``I``)."""
    N = stats.R.shape[-1]
    W_star, eps_star = wiener(stats)
    lam, U = eig_ascending(stats.R)
    mu = choose_mu(stats) if mu is None else mu
    W0 = np.eye(N, dtype=complex) if W0 is None else W0
    S0 = np.abs(U @ (W0 - W_star)) ** 2
    return MseRecursionState(lam=lam, U=U, F=build_F(lam, mu, field), S=S0,
                             eps_star=eps_star, mu=mu, field=field)


def mse_recursion_step(state: MseRecursionState) -> MseRecursionState:
    forcing = 4 * state.mu ** 2 * np.outer(state.lam, state.eps_star)
    return dataclasses.replace(state, S=state.F @ state.S + forcing, n=state.n + 1)


def analytic_mse(state: MseRecursionState) -> np.ndarray:
    """Output MSE per user: ``lam^T S + eps*``."""
    return state.lam @ state.S + state.eps_star


def mse_trajectory(state: MseRecursionState, n_steps: int) -> tuple[np.ndarray, np.ndarray]:
    """``(S[0..n_steps], eps[0..n_steps])`` stacked along axis 0."""
    S, eps = [state.S], [analytic_mse(state)]
    for _ in range(n_steps):
        state = mse_recursion_step(state)
        S.append(state.S)
        eps.append(analytic_mse(state))
    return np.array(S), np.array(eps)


def spectral_radius(F: np.ndarray) -> float:
    return float(np.max(np.abs(np.linalg.eigvals(F))))


def steady_state_S(state: MseRecursionState) -> np.ndarray:
    """Fixed point ``S = F S + 4 mu^2 lam eps*^T`` by a direct solve."""
    N = state.lam.size
    forcing = 4 * state.mu ** 2 * np.outer(state.lam, state.eps_star)
    return np.linalg.solve(np.eye(N) - state.F, forcing)


class EtaInf(NamedTuple):
    bound: float
    series: float
    steady_state_mse: np.ndarray


def eta_inf_bound(state: MseRecursionState) -> EtaInf:
    """Steady-state MSE bound ``(1 + 4 mu^2 lam^T (I - F)^-1 lam) ||eps*||_inf``.

    ``series`` evaluates ``4 mu^2 sum_k lam^T F^k lam ||eps*|| + ||eps*||`` in
    closed form (the same number, computed through the resolvent explicitly),
    and ``steady_state_mse`` the exact per-user limit of the recursion.
    """
    if spectral_radius(state.F) >= 1.0:
        raise DivergentF("F has an eigenvalue >= 1; the MSE recursion diverges")
    N = state.lam.size
    lam, mu = state.lam, state.mu
    eps_inf = float(np.max(state.eps_star))
    resolvent = np.linalg.solve(np.eye(N) - state.F, lam)
    misadj = 4 * mu ** 2 * float(lam @ resolvent)
    bound = (1 + misadj) * eps_inf
    # F^k sum via the similar matrix Lambda F Lambda^-1 applied to lam^2
    Ft = lam[:, None] * state.F / lam[None, :]
    series_vec = np.linalg.solve(np.eye(N) - Ft, lam ** 2)
    series = 4 * mu ** 2 * float(series_vec.sum()) * eps_inf + eps_inf
    steady = lam @ steady_state_S(state) + state.eps_star
    return EtaInf(bound, series, steady)


# --- normalized channels and bound reports ---------------------------------

def normalize_preprocessor(channel: ToneChannel, W_P: np.ndarray | None = None) -> np.ndarray:
    """Right-scale ``W_P`` so that ``(H W_P)_ii = 1``."""
    if W_P is None:
        W_P = np.broadcast_to(np.eye(channel.n_users, dtype=complex), channel.H.shape)
    return W_P @ compute_Dtilde(channel.H, W_P)


@dataclass(frozen=True)
class BoundReport:
    """Bound quantities and measured counterparts for one interval."""

    N: int
    field: Field
    Phi: float
    alpha: float
    delta: float
    c: float
    a: float
    f_norm1: float
    f_norm1_bound: float
    eta_inf_bound: float
    cond_bound: float
    lam_min_trace_bound: float
    B_bound: float
    cond_measured: float
    lam_min_trace_measured: float
    B_measured: float

    def theorem1_sinr_lower_bound(self, gap: int) -> Theorem1Bound:
        return theorem1_bound(self.Phi, gap, self.eta_inf_bound, self.N, self.field)

    @property
    def lemma3_holds(self) -> bool:
        return (self.cond_measured <= self.cond_bound * (1 + 1e-12)
                and self.lam_min_trace_measured >= self.lam_min_trace_bound * (1 - 1e-12)
                and self.B_measured <= self.B_bound * (1 + 1e-12))

    def row(self, **extra) -> dict:
        row = dataclasses.asdict(self)
        row.update(extra)
        return row


def bound_report(channel: ToneChannel, W_P: np.ndarray | None = None,
                 field: Field = "complex") -> BoundReport:
    """Evaluate all interval bounds for ``channel`` preprocessed by ``W_P``.

    ``W_P`` is re-normalized to unit direct gains first, which changes
    neither SINR. Raises :class:`DomainError` when ``Phi <= alpha``.
    """
    W_P = normalize_preprocessor(channel, W_P)
    N = channel.n_users
    stats = exact_stats(channel, W_P)
    _, Phi = input_sinr(channel, W_P)
    Phi = float(Phi)
    cond_b, lmt_b, B_b = gershgorin_bounds(Phi, N)
    c, a = theorem1_constants(Phi, N, field)
    lam, U = eig_ascending(stats.R)
    mu = choose_mu(stats)
    rec = mse_recursion_init(stats, mu=mu, field=field)
    R = stats.R
    B_meas = float(np.max(np.abs(R).sum(axis=-1) - np.abs(np.diagonal(R))))
    return BoundReport(
        N=N, field=field, Phi=Phi, alpha=float(alpha(Phi, N)), delta=float(delta(Phi, N)),
        c=c, a=a, f_norm1=induced_norm1(rec.F), f_norm1_bound=f_norm1_sinr_bound(Phi, N, field),
        eta_inf_bound=eta_inf_bound(rec).bound, cond_bound=cond_b, lam_min_trace_bound=lmt_b,
        B_bound=B_b, cond_measured=float(lam[-1] / lam[0]),
        lam_min_trace_measured=float(lam[0] / lam.sum()), B_measured=B_meas,
    )


def write_bound_csv(path: str | os.PathLike, rows: Iterable[dict]) -> None:
    """One row per (tone, interval); see :meth:`BoundReport.row`."""
    textio.write_csv(path, rows, schema="deeplms-bounds/1")


# --- Monte Carlo oracle ----------------------------------------------------

class McResult(NamedTuple):
    S_mean: np.ndarray
    S_se: np.ndarray
    mse_mean: np.ndarray
    mse_se: np.ndarray


def mc_coefficient_mse(channel: ToneChannel, W_P: np.ndarray | None, mu: float, n_steps: int,
                       n_trials: int, seed: int, W0: np.ndarray | None = None,
                       pilot_kind: str = "complex-gaussian", block: int = 1000) -> McResult:
    """Brute-force estimate of ``E|V[n]|^2`` and the output MSE over LMS trials.

    Trials run in fixed-size blocks, each with its own RNG stream; the results
    depend only on ``seed`` and ``n_trials``. The MSE at step ``n`` is the
    expected squared error of the filter ``W[n]`` over a fresh symbol, averaged
    over trials.
    """
    N = channel.n_users
    eye = np.eye(N, dtype=complex)
    W_P = eye if W_P is None else W_P
    W0 = eye if W0 is None else W0
    stats = exact_stats(channel, W_P)
    W_star, _ = wiener(stats)
    _, U = eig_ascending(stats.R)

    sums = np.zeros((2, n_steps + 1, N, N))
    msums = np.zeros((2, n_steps + 1, N))
    n_blocks = -(-n_trials // block)
    for b, ss in enumerate(np.random.SeedSequence(seed).spawn(n_blocks)):
        T = min(block, n_trials - b * block)
        pilot_ss, noise_ss = ss.spawn(2)
        pilots = PilotSource(kind=pilot_kind)
        pilots.rng = np.random.default_rng(pilot_ss)
        noise_rng = np.random.default_rng(noise_ss)
        state = LmsState(W=np.broadcast_to(W0, (T, N, N)).copy(), mu=mu)
        for n in range(n_steps + 1):
            S = np.abs(U @ (state.W - W_star)) ** 2
            sums[0, n] += S.sum(axis=0)
            sums[1, n] += (S ** 2).sum(axis=0)
            m = output_mse(effective_channel(channel, W_P, state.W))
            msums[0, n] += m.sum(axis=0)
            msums[1, n] += (m ** 2).sum(axis=0)
            if n == n_steps:
                break
            d = pilots.draw(N, size=T)
            r = received_signal(channel, d, noise=complex_gaussian(noise_rng, (T, N)))
            u = np.einsum("ji,tj->ti", W_P.conj(), r)
            state, _, _ = lms_step(state, u, d)

    def _mean_se(s):
        mean = s[0] / n_trials
        var = np.maximum(s[1] / n_trials - mean ** 2, 0.0)
        return mean, np.sqrt(var / max(n_trials - 1, 1))

    S_mean, S_se = _mean_se(sums)
    mse_mean, mse_se = _mean_se(msums)
    return McResult(S_mean, S_se, mse_mean, mse_se)


def random_normalized_channel(rng: np.random.Generator, N: int, off_scale: float,
                              noise_variance: float) -> ToneChannel:
    """Channel with unit direct gains and CN(0, off_scale^2) crosstalk."""
    H = off_scale * complex_gaussian(rng, (N, N))
    np.fill_diagonal(H, 1.0)
    return ToneChannel(H=H, noise_variance=noise_variance)

