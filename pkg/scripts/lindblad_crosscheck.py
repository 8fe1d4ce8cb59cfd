"""Master-equation dephasing rate against the closed form and the semiclassical rate."""
import argparse
import math
import time

from purcellsim import TWO_PI, DriveSpec, bundled_device, effective_linewidth
from purcellsim.lindblad import FockConfig, extract_meas_dephasing
from purcellsim.linear import gamma_meas_closed
from purcellsim.meanfield import measurement_rate, mf_steady_branches


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-c", type=int, default=12)
    ap.add_argument("--n-f", type=int, default=6)
    ap.add_argument("--photons", type=float, default=0.5, help="target resonator photon number")
    ap.add_argument("--strong", action="store_true",
                    help="bundled coupling and linewidth (hybridised modes) instead of the weak device")
    args = ap.parse_args()

    base = bundled_device()
    dev = base.replace(filter_freq=base.resonator_freq, filter_anharm=0.0)
    if not args.strong:
        dev = dev.replace(g_cf=TWO_PI * 15e6, kappa_f=TWO_PI * 100e6, chi_qc=-TWO_PI * 10e6)
    w = dev.resonator_freq + 0.5 * dev.chi_qc
    (br,) = mf_steady_branches(dev, DriveSpec(w, 1.0, "g"))
    amp = math.sqrt(args.photons / br.n_c)
    t0 = time.perf_counter()
    fit = extract_meas_dephasing(dev, DriveSpec(w, amp, "g"), FockConfig(args.n_c, args.n_f))
    k_eff, _ = effective_linewidth(dev)
    closed = gamma_meas_closed(k_eff, dev.chi_qc, fit.n_c_mean)
    semi = measurement_rate(dev, w, amp).gamma_meas
    print(f"master equation {fit.gamma_phi:.5g} 1/s (R^2 {fit.r_squared:.6f}, <n_c> {fit.n_c_mean:.4f}, "
          f"{time.perf_counter() - t0:.0f} s)")
    print(f"closed form     {closed:.5g} 1/s  ratio {fit.gamma_phi / closed:.4f}")
    print(f"semiclassical   {semi:.5g} 1/s  ratio {fit.gamma_phi / semi:.4f}")


if __name__ == "__main__":
    main()
