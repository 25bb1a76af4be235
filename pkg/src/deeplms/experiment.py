"""Multi-tone experiments comparing the LMS family of crosstalk cancelers.

All tones and seeds of an experiment run as one batch with leading dimensions
``(seed, tone)``. Each seed owns one pilot stream and one noise stream; every
algorithm consumes the same blocks, so the comparison is paired.

Traces are sampled at every iteration up to 100 and on a log-spaced grid
beyond. The minimal output SINR is tracked at every iteration, which feeds the
SINR-triggered updates and the iterations-to-target statistics.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import textio
from .cancelers import (AveragerState, DeepLmsConfig, averaged_filter, avg_deep_lms_step,
                        deep_lms_init, deep_lms_step, update_trigger)
from .channel_model import (CableConfig, ToneChannel, dominance_ratio, generate_cable,
                            load_channels, make_near_far, stack_channels)
from .metrics import (DEFAULT_B_MAX, DEFAULT_TONE_BANDWIDTH, EffectiveChannel, input_sinr,
                      output_mse, output_sinr, to_db)
from .signal_engine import complex_gaussian, hermitian_apply, received_signal, streams

ALGORITHMS = ("lms", "deep_lms", "avg_lms", "avg_deep_lms", "deep_lms_identity")
DEEP_ALGORITHMS = ("deep_lms", "avg_deep_lms", "deep_lms_identity")

TRACE_SCHEMA = "deeplms-trace/1"
SUMMARY_SCHEMA = "deeplms-summary/1"
RATES_SCHEMA = "deeplms-rates/1"
DOMINANCE_SCHEMA = "deeplms-dominance/1"


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything needed to reproduce one experiment.

    ``tones`` selects tone indices of the cable (all when ``None``);
    ``near_count > 0`` turns the cable into a near-far scenario whose first
    ``near_count`` users are near. ``target_db`` is the minimal-output-SINR
    level used for iterations-to-target.
    """

    cable: CableConfig = field(default_factory=CableConfig)
    channel_file: str | None = None
    cable_seed: int = 0
    near_count: int = 0
    pilot_kind: str = "complex-gaussian"
    algorithms: tuple[str, ...] = ("lms", "deep_lms", "avg_lms", "avg_deep_lms")
    n_iters: int = 20000
    trigger_db: float = 5.0
    n_tilde: int = 1000
    trigger_stride: int = 1
    theta: float = 0.95
    b_max: float = DEFAULT_B_MAX
    tone_bandwidth: float = DEFAULT_TONE_BANDWIDTH
    seeds: tuple[int, ...] = (0,)
    tones: tuple[int, ...] | None = None
    target_db: float = 30.0
    mc_trials: int = 5000
    mc_steps: int = 200
    bound_channels: int = 1000
    theorem_runs: int = 200
    theorem_iters: int = 3000
    out_dir: str = "results"
    chunk: int = 256

    def __post_init__(self):
        if self.n_iters < 1:
            raise ConfigError("n_iters must be >= 1")
        if not self.algorithms:
            raise ConfigError("at least one algorithm is required")
        unknown = set(self.algorithms) - set(ALGORITHMS)
        if unknown:
            raise ConfigError(f"unknown algorithms {sorted(unknown)}; choose from {ALGORITHMS}")
        if len(set(self.algorithms)) != len(self.algorithms):
            raise ConfigError("duplicate algorithm names")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not 0.0 < self.theta < 1.0:
            raise ConfigError("theta must lie in (0, 1)")
        if self.n_tilde < 1 or self.trigger_stride < 1 or self.chunk < 1:
            raise ConfigError("n_tilde, trigger_stride and chunk must be >= 1")
        if self.pilot_kind not in ("complex-gaussian", "qpsk"):
            raise ConfigError(f"unknown pilot kind {self.pilot_kind!r}")

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentSpec":
        data = dict(data)
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise ConfigError(f"unknown config keys {sorted(unknown)}")
        cable = data.pop("cable", None)
        if isinstance(cable, dict):
            cable_names = {f.name for f in dataclasses.fields(CableConfig)}
            bad = set(cable) - cable_names
            if bad:
                raise ConfigError(f"unknown cable keys {sorted(bad)}")
            try:
                data["cable"] = CableConfig(**cable)
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"cable: {exc}") from exc
        elif cable is not None:
            data["cable"] = cable
        for key in ("algorithms", "seeds", "tones"):
            if data.get(key) is not None:
                data[key] = tuple(data[key])
        try:
            return cls(**data)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_json(cls, path: str | os.PathLike) -> "ExperimentSpec":
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"{path}: top level must be an object")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> "ExperimentSpec":
        """Copy with the non-``None`` overrides applied."""
        overrides = {k: v for k, v in overrides.items() if v is not None}
        for key in ("algorithms", "seeds", "tones"):
            if key in overrides:
                overrides[key] = tuple(overrides[key])
        return dataclasses.replace(self, **overrides)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("algorithms", "seeds", "tones"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    def deep_config(self, algorithm: str) -> DeepLmsConfig:
        mode = "identity" if algorithm == "deep_lms_identity" else "normalize"
        # a non-updating Deep-LMS is plain LMS on the D[0]-normalized input
        never = algorithm in ("lms", "avg_lms")
        return DeepLmsConfig(trigger_db=np.inf if never else self.trigger_db,
                             n_tilde=np.iinfo(np.int64).max if never else self.n_tilde,
                             d_tilde_mode=mode)


@dataclass(frozen=True)
class TraceRecord:
    """Metrics of one (seed, tone, algorithm) at one sampled iteration."""

    seed: int
    tone: int
    algorithm: str
    iteration: int
    min_input_sinr_db: float
    output_sinr_db: tuple[float, ...]
    mse: tuple[float, ...]
    sum_rate: float
    update_flag: bool

    def row(self) -> dict:
        row = {"seed": self.seed, "tone": self.tone, "algorithm": self.algorithm,
               "iteration": self.iteration, "min_input_sinr_db": self.min_input_sinr_db}
        for i, v in enumerate(self.output_sinr_db):
            row[f"output_sinr_db_{i}"] = v
        for i, v in enumerate(self.mse):
            row[f"mse_{i}"] = v
        row["sum_rate"] = self.sum_rate
        row["update_flag"] = int(self.update_flag)
        return row


def trace_fieldnames(n_users: int) -> list[str]:
    return (["seed", "tone", "algorithm", "iteration", "min_input_sinr_db"]
            + [f"output_sinr_db_{i}" for i in range(n_users)]
            + [f"mse_{i}" for i in range(n_users)] + ["sum_rate", "update_flag"])


def sample_grid(n_iters: int, full: int = 100, n_log: int = 100) -> np.ndarray:
    """Iterations ``0..min(full, n_iters)`` plus a log-spaced tail up to ``n_iters``."""
    head = np.arange(min(full, n_iters) + 1)
    if n_iters <= full:
        return head
    tail = np.unique(np.round(np.geomspace(full, n_iters, n_log)).astype(np.int64))
    return np.union1d(head, tail)


def load_experiment_channels(spec: ExperimentSpec) -> list[ToneChannel]:
    if spec.channel_file is not None:
        channels = load_channels(spec.channel_file)
    else:
        channels = generate_cable(spec.cable, spec.cable_seed)
    if spec.tones is not None:
        try:
            channels = [channels[k] for k in spec.tones]
        except IndexError as exc:
            raise ConfigError(f"tone index out of range 0..{len(channels) - 1}") from exc
    if spec.near_count:
        channels = make_near_far(channels, spec.near_count)
    return channels


# --- engine -----------------------------------------------------------------

@dataclass
class SimResult:
    """Arrays indexed ``[algorithm, sample, seed, tone, ...]``.

    ``min_sinr_db`` is the per-iteration minimal output SINR averaged (in dB)
    over tones, shape ``(A, n_iters + 1, S)``.
    """

    algorithms: tuple[str, ...]
    seeds: tuple[int, ...]
    tone_index: np.ndarray
    iterations: np.ndarray
    output_sinr: np.ndarray
    mse: np.ndarray
    min_input_sinr_db: np.ndarray
    update_flag: np.ndarray
    min_sinr_db: np.ndarray
    n_updates: np.ndarray
    stream_digest: str

    def iterations_to_target(self, target_db: float) -> np.ndarray:
        """First iteration at which the tone-averaged minimal SINR reaches the target.

        ``nan`` where it never does; shape ``(A, S)``.
        """
        hit = self.min_sinr_db >= target_db
        first = np.argmax(hit, axis=1).astype(float)
        first[~hit.any(axis=1)] = np.nan
        return first


class _Runner:
    """Drives one algorithm over the batch.

    Besides the canceler state it tracks ``G = W_P W`` and ``C = H W_P W``
    (and their running averages for AVG variants). LMS steps are rank one, so
    these are updated with matrix-vector products; elements whose
    preprocessor changed are recomputed exactly, and everything is
    resynchronized every ``resync`` iterations.
    """

    def __init__(self, name: str, channel: ToneChannel, spec: ExperimentSpec, resync: int = 1024):
        self.name = name
        self.channel = channel
        self.state = deep_lms_init(channel, spec.deep_config(name))
        self.averaged = name.startswith("avg")
        self.avg = AveragerState(theta=spec.theta) if self.averaged else None
        self.deep = name in DEEP_ALGORITHMS
        self.resync_every = resync
        # W_P starts diagonal; the cheap path is dropped after the first update
        self.wp_diag = np.diagonal(self.state.W_P, axis1=-2, axis2=-1).copy()
        self.G_sum = self.C_sum = None
        self._resync()

    def _resync(self, mask=None):
        st, H = self.state, self.channel.H
        if mask is None:
            self.G = st.W_P @ st.W
            self.C = H @ self.G
            if self.avg is not None and self.avg.W_acc is not None:
                self.G_sum = st.W_P @ self.avg.W_acc
                self.C_sum = H @ self.G_sum
            return
        self.G[mask] = st.W_P[mask] @ st.W[mask]
        self.C[mask] = H[mask] @ self.G[mask]
        if self.G_sum is not None:
            self.G_sum[mask] = st.W_P[mask] @ self.avg.W_acc[mask]
            self.C_sum[mask] = H[mask] @ self.G_sum[mask]

    def step(self, r, d, update_now):
        st = self.state
        u = hermitian_apply(st.W_P, r)
        a = self.wp_diag * u if self.wp_diag is not None else (st.W_P @ u[..., None])[..., 0]
        b = (self.channel.H @ a[..., None])[..., 0]
        two_mu = 2.0 * np.asarray(st.lms.mu)[..., None, None]
        if self.name == "avg_deep_lms":
            self.state, self.avg, _, e = avg_deep_lms_step(
                st, self.avg, self.channel, r, d, update_now)
        else:
            self.state, _, e = deep_lms_step(st, self.channel, r, d, update_now)
            if self.averaged:
                self.avg, _ = averaged_filter(self.avg, self.state.W)
        ec = two_mu * e.conj()[..., None, :]
        self.G += a[..., :, None] * ec
        self.C += b[..., :, None] * ec
        if self.averaged:
            if self.G_sum is None:
                self.G_sum, self.C_sum = self.G.copy(), self.C.copy()
            else:
                self.G_sum = self.avg.theta * self.G_sum + self.G
                self.C_sum = self.avg.theta * self.C_sum + self.C
        upd = np.broadcast_to(np.asarray(update_now, dtype=bool), self.G.shape[:-2])
        if self.state.iter % self.resync_every == 0:
            self._resync(None)
        elif upd.any():
            self._resync(upd)
        if upd.any():
            self.wp_diag = None

    def effective(self, instantaneous: bool = False) -> EffectiveChannel:
        if self.averaged and self.G_sum is not None and not instantaneous:
            w = np.asarray(self.avg.weight_acc)[..., None, None]
            G, C = self.G_sum / w, self.C_sum / w
        else:
            G, C = self.G, self.C
        sigma2 = np.asarray(self.channel.noise_variance)[..., None]
        noise = sigma2 * np.sum(G.real ** 2 + G.imag ** 2, axis=-2)
        return EffectiveChannel(H_check=C, noise_var_out=noise)

    @property
    def applied_W(self) -> np.ndarray:
        return self.avg.applied if self.averaged and self.avg.W_acc is not None else self.state.W


def _batch_channel(channels: Sequence[ToneChannel], n_seeds: int) -> ToneChannel:
    stacked = stack_channels(list(channels))
    K, N = len(channels), stacked.n_users
    return ToneChannel(
        H=np.ascontiguousarray(np.broadcast_to(stacked.H, (n_seeds, K, N, N))),
        noise_variance=np.ascontiguousarray(np.broadcast_to(stacked.noise_variance, (n_seeds, K))),
        tone_index=stacked.tone_index,
        frequency=stacked.frequency,
    )


def simulate(spec: ExperimentSpec, channels: Sequence[ToneChannel]) -> SimResult:
    """Run every algorithm of ``spec`` on ``channels`` for all seeds."""
    S, K = len(spec.seeds), len(channels)
    N = channels[0].n_users
    batch = _batch_channel(channels, S)
    runners = [_Runner(a, batch, spec) for a in spec.algorithms]
    A = len(runners)
    grid = sample_grid(spec.n_iters)
    T = grid.size
    out_sinr = np.empty((A, T, S, K, N))
    mse = np.empty((A, T, S, K, N))
    phi_db = np.empty((A, T, S, K))
    flags = np.zeros((A, T, S, K), dtype=bool)
    min_db = np.empty((A, spec.n_iters + 1, S))
    n_updates = np.zeros((A, S, K), dtype=np.int64)

    source = [streams(s, spec.pilot_kind) for s in spec.seeds]
    digest = hashlib.sha256()
    slot = 0
    d_blk = nu_blk = None
    for n in range(spec.n_iters + 1):
        sampled = slot < T and grid[slot] == n
        trigger_db = []
        for a, run in enumerate(runners):
            eff = run.effective()
            psi = output_sinr(eff)
            cur = to_db(psi.min(axis=-1))
            min_db[a, n] = cur.mean(axis=-1)
            if run.deep and run.averaged:
                # the trigger watches the adapting filter, not the averaged output
                cur = to_db(output_sinr(run.effective(instantaneous=True)).min(axis=-1))
            trigger_db.append(cur)
            if sampled:
                out_sinr[a, slot] = psi
                mse[a, slot] = output_mse(eff)
                phi_db[a, slot] = to_db(input_sinr(batch, run.state.W_P)[1])
        if n == spec.n_iters:
            break
        k = n % spec.chunk
        if k == 0:
            c = min(spec.chunk, spec.n_iters - n)
            d_blk = np.stack([p.draw(N, size=(c, K)) for p, _ in source], axis=1)
            nu_blk = np.stack([complex_gaussian(g, (c, K, N)) for _, g in source], axis=1)
            digest.update(d_blk.tobytes())
            digest.update(nu_blk.tobytes())
        d = d_blk[k]
        r = received_signal(batch, d, noise=nu_blk[k])
        for a, run in enumerate(runners):
            if run.deep and n % spec.trigger_stride == 0:
                upd = update_trigger(run.state, trigger_db[a])
            else:
                upd = np.zeros((S, K), dtype=bool)
            run.step(r, d, upd)
            n_updates[a] += upd
            if sampled:
                flags[a, slot] = upd
        if sampled:
            slot += 1

    tone_index = np.array([int(c.tone_index) for c in channels])
    return SimResult(tuple(spec.algorithms), tuple(spec.seeds), tone_index, grid, out_sinr,
                     mse, phi_db, flags, min_db, n_updates, digest.hexdigest())


# --- reporting ------------------------------------------------------------------

def _per_user_bits(sinr: np.ndarray, b_max: float) -> np.ndarray:
    return np.minimum(np.log2(1.0 + sinr), b_max)


def trace_records(result: SimResult, spec: ExperimentSpec):
    """Yield :class:`TraceRecord` ordered by seed, tone, algorithm, iteration."""
    sinr_db = to_db(result.output_sinr)
    bits = _per_user_bits(result.output_sinr, spec.b_max)
    for s, seed in enumerate(result.seeds):
        for k, tone in enumerate(result.tone_index):
            for a, alg in enumerate(result.algorithms):
                for t, it in enumerate(result.iterations):
                    yield TraceRecord(
                        seed=int(seed), tone=int(tone), algorithm=alg, iteration=int(it),
                        min_input_sinr_db=float(result.min_input_sinr_db[a, t, s, k]),
                        output_sinr_db=tuple(float(v) for v in sinr_db[a, t, s, k]),
                        mse=tuple(float(v) for v in result.mse[a, t, s, k]),
                        sum_rate=float(spec.tone_bandwidth * bits[a, t, s, k].sum()),
                        update_flag=bool(result.update_flag[a, t, s, k]),
                    )


def user_rates(result: SimResult, spec: ExperimentSpec) -> np.ndarray:
    """Per-user rate summed over tones, shape ``(A, T, S, N)``."""
    bits = _per_user_bits(result.output_sinr, spec.b_max)
    return spec.tone_bandwidth * bits.sum(axis=3)


def _group_means(rates: np.ndarray, near_count: int) -> dict[str, np.ndarray]:
    out = {"all": rates.mean(axis=-1)}
    if near_count:
        out["near"] = rates[..., :near_count].mean(axis=-1)
        out["far"] = rates[..., near_count:].mean(axis=-1)
    return out


def summary_rows(result: SimResult, spec: ExperimentSpec) -> list[dict]:
    itt = result.iterations_to_target(spec.target_db)
    groups = _group_means(user_rates(result, spec)[:, -1], spec.near_count)
    rows = []
    for a, alg in enumerate(result.algorithms):
        finite = itt[a][np.isfinite(itt[a])]
        row = {
            "algorithm": alg,
            "target_db": spec.target_db,
            "seeds_reaching_target": int(finite.size),
            "median_iterations_to_target": float(np.median(itt[a])) if finite.size == itt[a].size
            else float("nan"),
            "final_min_sinr_db": float(np.median(result.min_sinr_db[a, -1])),
            "mean_updates_per_tone": float(result.n_updates[a].mean()),
        }
        for name, values in groups.items():
            row[f"avg_rate_{name}"] = float(values[a].mean())
        rows.append(row)
    return rows


def rate_rows(result: SimResult, spec: ExperimentSpec) -> list[dict]:
    """Seed-averaged user-mean rate against iteration (rate-vs-iteration plot data)."""
    groups = _group_means(user_rates(result, spec), spec.near_count)
    rows = []
    for a, alg in enumerate(result.algorithms):
        for t, it in enumerate(result.iterations):
            row = {"algorithm": alg, "iteration": int(it)}
            for name, values in groups.items():
                row[f"avg_rate_{name}"] = float(values[a, t].mean())
            rows.append(row)
    return rows


def dominance_rows(channels: Sequence[ToneChannel]) -> list[dict]:
    rows = []
    for ch in channels:
        ratio = dominance_ratio(ch)
        rows.append({"tone": int(ch.tone_index), "frequency_hz": float(ch.frequency),
                     "min_dominance": float(ratio.min()),
                     "median_dominance": float(np.median(ratio))})
    return rows


def run_experiment(spec: ExperimentSpec, out_dir: str | os.PathLike | None = None) -> SimResult:
    """Simulate and write ``trace.csv``, ``summary.csv``, ``rates.csv`` and ``dominance.csv``."""
    out = Path(out_dir if out_dir is not None else spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    channels = load_experiment_channels(spec)
    result = simulate(spec, channels)
    N = channels[0].n_users
    textio.write_csv(out / "trace.csv", (r.row() for r in trace_records(result, spec)),
                     TRACE_SCHEMA, trace_fieldnames(N))
    textio.write_csv(out / "summary.csv", summary_rows(result, spec), SUMMARY_SCHEMA)
    textio.write_csv(out / "rates.csv", rate_rows(result, spec), RATES_SCHEMA)
    textio.write_csv(out / "dominance.csv", dominance_rows(channels), DOMINANCE_SCHEMA)
    return result
