"""LMS, Deep-LMS and their averaged variants on non-dominant tones.

All algorithms see the same pilot and noise sequences. The script reports
how many iterations each needs before the tone-averaged minimal output SINR
reaches 30 dB, and the average per-user rate at the end of the run.

Run: ``python demos/canceler_comparison.py`` (a few seconds).
"""

import numpy as np

from deeplms import CableConfig, ExperimentSpec, simulate
from deeplms.experiment import load_experiment_channels, summary_rows


def main():
    tones = tuple(CableConfig().above_crossover()[::4])
    spec = ExperimentSpec(seeds=(0, 1, 2, 3), n_iters=4000, tones=tones,
                          algorithms=("lms", "deep_lms", "avg_lms", "avg_deep_lms",
                                      "deep_lms_identity"))
    res = simulate(spec, load_experiment_channels(spec))
    print(f"{len(tones)} tones above the crossover, {len(spec.seeds)} seeds, "
          f"{spec.n_iters} iterations")
    print("algorithm             iters to 30 dB  final min SINR [dB]  rate [Mbit/s]  updates/tone")
    for row in summary_rows(res, spec):
        print(f"{row['algorithm']:20s}  {row['median_iterations_to_target']:14.0f}  "
              f"{row['final_min_sinr_db']:19.2f}  {row['avg_rate_all'] / 1e6:13.1f}  "
              f"{row['mean_updates_per_tone']:12.1f}")
    lms = np.nanmedian(res.iterations_to_target(30.0)[0])
    deep = np.nanmedian(res.iterations_to_target(30.0)[1])
    print(f"Deep-LMS needs {deep / lms:.2f} of the LMS iterations")


if __name__ == "__main__":
    main()
