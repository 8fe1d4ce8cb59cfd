"""Stable mean-field branches and measurement rate versus readout amplitude."""
import argparse

import numpy as np

from purcellsim import TWO_PI, DriveSpec, bundled_device
from purcellsim.meanfield import fitted_meas_slope, follow_branch, measurement_rate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--freq-ghz", type=float, default=9.8)
    ap.add_argument("--amp-max-ghz", type=float, default=0.76)
    ap.add_argument("--n", type=int, default=20)
    args = ap.parse_args()

    dev = bundled_device()
    w = TWO_PI * 1e9 * args.freq_ghz
    slope = fitted_meas_slope(dev, w)
    print(" Omega/2pi GHz   |c_g|^2   |f_g|^2   |c_e|^2   |f_e|^2   Gamma/2pi MHz  vs linear")
    for a in TWO_PI * 1e9 * np.linspace(args.amp_max_ghz / args.n, args.amp_max_ghz, args.n):
        g, _ = follow_branch(dev, DriveSpec(w, a, "g"))
        e, _ = follow_branch(dev, DriveSpec(w, a, "e"))
        rate = measurement_rate(dev, w, a).gamma_meas
        print(f"{a / TWO_PI / 1e9:12.3f} {g.n_c:9.3f} {g.n_f:9.4f} {e.n_c:9.3f} {e.n_f:9.4f} "
              f"{rate / TWO_PI / 1e6:14.3f} {rate / (slope * a * a):9.2f}")


if __name__ == "__main__":
    main()
