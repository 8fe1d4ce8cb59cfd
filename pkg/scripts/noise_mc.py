"""Monte Carlo photon-noise dephasing against the spectral integral."""
import argparse

import numpy as np

from purcellsim import bundled_device
from purcellsim.linear import gamma_noise_integral
from purcellsim.noise import NoiseSpec, noise_mc_seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--duration-us", type=float, default=40.0)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    dev = bundled_device()
    spec = NoiseSpec.default(1.0, args.duration_us * 1e-6)
    res = noise_mc_seeds(spec, dev, range(args.seeds), threads=args.threads, max_rel_stderr=None)
    est = np.array([r.gamma for r in res])
    q = gamma_noise_integral(dev, 1.0)
    se = est.std(ddof=1) / np.sqrt(est.size)
    print(f"quadrature {q:.6g} 1/s; MC mean {est.mean():.6g} +- {se:.3g} 1/s "
          f"({(est.mean() / q - 1):+.3%}, z = {(est.mean() - q) / se:+.2f})")
    print(f"mean bootstrap stderr per seed {np.mean([r.stderr for r in res]):.3g}, "
          f"scatter between seeds {est.std(ddof=1):.3g}")


if __name__ == "__main__":
    main()
