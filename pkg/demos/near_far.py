"""Near-far scenario: rates averaged separately over near and far users.

The far users' rows of the channel pass through an extra cable segment, so
their signals arrive weaker and carry crosstalk from the near users. The
experiment writes the usual CSV files into ``demos_out/near_far``.

Run: ``python demos/near_far.py`` (a few seconds).
"""

from pathlib import Path

from deeplms import CableConfig, ExperimentSpec, run_experiment
from deeplms.experiment import summary_rows


def main():
    out = Path("demos_out") / "near_far"
    spec = ExperimentSpec(near_count=5, seeds=(0, 1), n_iters=3000,
                          tones=tuple(CableConfig().above_crossover()[::4]),
                          algorithms=("lms", "deep_lms"))
    res = run_experiment(spec, out)
    print("algorithm   near users [Mbit/s]  far users [Mbit/s]")
    for row in summary_rows(res, spec):
        print(f"{row['algorithm']:10s}  {row['avg_rate_near'] / 1e6:19.1f}  "
              f"{row['avg_rate_far'] / 1e6:18.1f}")
    print(f"CSV files written to {out}/")


if __name__ == "__main__":
    main()
