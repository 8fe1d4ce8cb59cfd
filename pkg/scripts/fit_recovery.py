"""Parameter recovery of the shared-parameter fit over synthetic seeds."""
import argparse

import numpy as np

from purcellsim import TWO_PI, bundled_device
from purcellsim import fitting


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=20)
    ap.add_argument("--noise", type=float, default=0.03)
    args = ap.parse_args()

    dev = bundled_device()
    wfs = dev.resonator_freq + TWO_PI * 1e9 * np.array([-0.4, -0.2, 0.0, 0.2, 0.4])
    truth = fitting.params_from_device(dev, wfs)
    names = fitting.SHARED_NAMES[1:]
    zs, hits = [], 0
    for seed in range(args.seeds):
        data = fitting.synth_dataset(dev, wfs, noise_frac=args.noise, seed=seed)
        res = fitting.fit_lm(data, fitting.initial_guess(data, dev), dev)
        z = (res.params[1:4] - truth[1:4]) / res.stderr[1:4]
        zs.append(z)
        hits += bool(res.converged and np.all(np.abs(z) <= 2))
        print(f"seed {seed:3d}  chi2_red {res.chi2_reduced:.3f}  "
              + "  ".join(f"z[{n}] {v:+.2f}" for n, v in zip(names, z)))
    zs = np.array(zs)
    print(f"{hits}/{args.seeds} seeds with all three within 2 stderr")
    print("z mean " + " ".join(f"{v:+.2f}" for v in zs.mean(0)) + "; z std "
          + " ".join(f"{v:.2f}" for v in zs.std(0, ddof=1)))


if __name__ == "__main__":
    main()
