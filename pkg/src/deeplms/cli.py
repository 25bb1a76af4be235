"""Command-line entry point: ``deeplms [--config spec.json] [--suite ...]``.

Without ``--suite`` the experiment described by the config runs and writes
``trace.csv``, ``summary.csv``, ``rates.csv`` and ``dominance.csv``. With
``--suite`` only the chosen verification suites run, writing ``bounds.csv``
and/or ``oracle.csv``; the exit status is 0 iff every suite passed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import textio
from .cancelers import DeepLmsConfig
from .errors import DeepLmsError
from .experiment import (ConfigError, ExperimentSpec, load_experiment_channels, run_experiment,
                         summary_rows)
from .suites import BOUND_FIELDS, run_bound_suite, run_oracle_suite
from .theory import write_bound_csv

ORACLE_SCHEMA = "deeplms-oracle/1"


def _int_list(text: str) -> list[int]:
    """``"0,2,5-7"`` -> ``[0, 2, 5, 6, 7]``."""
    out = []
    for part in text.split(","):
        part = part.strip()
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1) if not part.startswith("-") else (part, part)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _name_list(text: str) -> list[str]:
    return [p.strip() for p in text.split(",") if p.strip()]


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="deeplms", description=__doc__.splitlines()[0])
    p.add_argument("--config", type=Path, help="JSON experiment spec; flags override its values")
    p.add_argument("--out", type=Path, help="output directory")
    p.add_argument("--seeds", type=_int_list, help="seed list, e.g. 0-15 or 1,4,9")
    p.add_argument("--algos", type=_name_list, help="comma-separated algorithm names")
    p.add_argument("--tones", type=_int_list, help="tone indices of the cable to simulate")
    p.add_argument("--iters", type=int, help="iterations per run")
    p.add_argument("--trigger-db", type=float, help="SINR gain that triggers an update")
    p.add_argument("--n-tilde", type=int, help="forced update period")
    p.add_argument("--theta", type=float, help="forgetting factor of the AVG variants")
    p.add_argument("--suite", choices=("bounds", "oracle", "all"),
                   help="run verification suites instead of the experiment")
    return p


def load_spec(args: argparse.Namespace) -> ExperimentSpec:
    spec = ExperimentSpec.from_json(args.config) if args.config else ExperimentSpec()
    return spec.with_overrides(
        out_dir=str(args.out) if args.out else None, seeds=args.seeds, algorithms=args.algos,
        tones=args.tones, n_iters=args.iters, trigger_db=args.trigger_db,
        n_tilde=args.n_tilde, theta=args.theta,
    )


def run_suites(spec: ExperimentSpec, which: str, out: Path) -> bool:
    out.mkdir(parents=True, exist_ok=True)
    passed = True
    seed = spec.seeds[0]
    if which in ("bounds", "all"):
        res = run_bound_suite(
            n_channels=spec.bound_channels, n_runs=spec.theorem_runs, n_iters=spec.theorem_iters,
            seed=seed, config=DeepLmsConfig(trigger_db=spec.trigger_db, n_tilde=spec.n_tilde),
            tone_channels=load_experiment_channels(spec),
        )
        write_bound_csv(out / "bounds.csv", ({k: r.get(k, "") for k in BOUND_FIELDS} for r in res.rows))
        print(f"bounds: lemma3 {res.lemma3_violations}/{res.lemma3_cases} violations; "
              f"theorem1 {res.theorem1_violations}/{res.theorem1_intervals} violations "
              f"(realized single-run: {res.theorem1_realized_violations}); "
              f"{res.trivial_intervals} trivial -> {'PASS' if res.passed else 'FAIL'}")
        passed &= res.passed
    if which in ("oracle", "all"):
        res = run_oracle_suite(n_trials=spec.mc_trials, n_steps=spec.mc_steps, seed=seed)
        textio.write_csv(out / "oracle.csv", res.rows, ORACLE_SCHEMA)
        print(f"oracle: max relative deviation {res.max_rel_dev:.4f} "
              f"(threshold {res.threshold}) -> {'PASS' if res.passed else 'FAIL'}")
        passed &= res.passed
    return passed


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        spec = load_spec(args)
        out = Path(spec.out_dir)
        if args.suite:
            return 0 if run_suites(spec, args.suite, out) else 1
        result = run_experiment(spec, out)
    except (ConfigError, DeepLmsError, OSError) as exc:
        print(f"deeplms: error: {exc}", file=sys.stderr)
        return 2
    with open(out / "spec.json", "w", encoding="utf-8") as fh:
        json.dump(spec.to_dict(), fh, indent=2, default=str)
    for row in summary_rows(result, spec):
        print(" ".join(f"{k}={v}" for k, v in row.items()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
