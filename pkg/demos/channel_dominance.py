"""Row dominance of the synthetic cable against frequency.

Prints the median and minimum dominance ratio per tone for a few cable
seeds. Above the crossover frequency the direct gain no longer dominates
the summed FEXT couplings, which is the regime where a plain LMS canceler
starting from a diagonal preprocessor converges slowly.

Run: ``python demos/channel_dominance.py``
"""

import numpy as np

from deeplms import CableConfig, dominance_ratio, generate_cable


def main():
    cfg = CableConfig()
    per_seed = np.array([[np.median(dominance_ratio(c)) for c in generate_cable(cfg, s)]
                         for s in range(8)])
    worst = np.array([[np.min(dominance_ratio(c)) for c in generate_cable(cfg, s)]
                      for s in range(8)])
    print(f"{cfg.n_users} users, crossover {cfg.crossover_hz / 1e6:.0f} MHz")
    print(" f [MHz]  median ratio  min ratio")
    for k, f in enumerate(cfg.frequencies):
        mark = "  <- crossover" if abs(f - cfg.crossover_hz) < cfg.tone_spacing_hz / 2 else ""
        print(f"{f / 1e6:8.0f}  {np.median(per_seed[:, k]):12.3f}  {np.median(worst[:, k]):9.3f}{mark}")


if __name__ == "__main__":
    main()
