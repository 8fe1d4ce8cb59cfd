"""Noise sensitivity of the bundled device versus filter detuning."""
import argparse

import numpy as np

from purcellsim import TWO_PI, bundled_device
from purcellsim.linear import noise_sensitivity_sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--span-ghz", type=float, default=0.6)
    ap.add_argument("--n", type=int, default=201)
    args = ap.parse_args()

    det = TWO_PI * 1e9 * np.linspace(-args.span_ghz, args.span_ghz, args.n)
    curve = noise_sensitivity_sweep(bundled_device(), det)
    for d, s in zip(curve.filter_detuning, curve.sensitivity):
        print(f"{d / TWO_PI / 1e9:+.4f} GHz  {s / TWO_PI / 1e3:10.2f} kHz per photon")
    print(f"max/min {curve.ratio:.3f}, argmax {curve.argmax / TWO_PI / 1e9:+.3f} GHz "
          f"(mirror {curve.argmax_mirror / TWO_PI / 1e9:+.3f} GHz), "
          f"argmin {curve.argmin / TWO_PI / 1e9:+.3f} GHz")


if __name__ == "__main__":
    main()
