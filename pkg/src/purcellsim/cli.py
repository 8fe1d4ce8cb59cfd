"""``purcellsim <subcommand> --config cfg.json [--out dir] [--seed N] [--threads N]``.

Every subcommand writes its CSV/JSON artifacts into ``--out`` and returns a
summary dict; ``--json-summary`` also prints that summary to stdout. Exit
codes: 1 configuration error, 2 numerical failure, 3 non-convergence.
"""
from __future__ import annotations

import argparse
import logging
import math
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import fitting, lindblad, linear, meanfield, noise
from .errors import ConfigError, MaxIterations, PurcellSimError
from .io import RunConfig, atomic_write_text, dumps_json, load_config, read_csv, write_csv, write_json
from .model import (
    TWO_PI,
    DriveSpec,
    critical_photon_number,
    effective_linewidth,
    qubit_resonator_coupling,
)

log = logging.getLogger("purcellsim")

HZ = TWO_PI  # multiply Hz by this to get rad/s


def _grid(start_hz, stop_hz, n):
    if int(n) < 1:
        raise ConfigError("n_points must be >= 1")
    return HZ * np.linspace(float(start_hz), float(stop_hz), int(n))


# --- subcommands -------------------------------------------------------------------

def cmd_spectrum(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    d = cfg.device
    p = cfg.block("spectrum", {"freq_start_hz": 9.4e9, "freq_stop_hz": 10.2e9, "n_points": 401,
                               "drive_amp_hz": 0.0, "states": ["g", "e"], "steps": 100,
                               "unstable": "nan"})
    freqs = _grid(p["freq_start_hz"], p["freq_stop_hz"], p["n_points"])
    amp = HZ * float(p["drive_amp_hz"])
    rows, summary = [], {"drive_amp_hz": p["drive_amp_hz"], "n_points": int(freqs.size)}
    for state in p["states"]:
        spec = meanfield.s11_nonlinear_sweep(d, amp, freqs, state, int(p["steps"]), threads,
                                             p["unstable"])
        s = spec.s11
        for w, v, m in zip(freqs, s, spec.multistable):
            rows.append((w / HZ, state, p["drive_amp_hz"], v.real, v.imag, abs(v), np.angle(v), bool(m)))
        summary[f"min_abs_s11_{state}"] = float(np.nanmin(np.abs(s)))
        summary[f"n_unstable_{state}"] = int(np.isnan(s).sum())
        summary[f"n_multistable_{state}"] = int(spec.multistable.sum())
    write_csv(out / "s11.csv", [("freq_hz", "Hz"), ("state", "-"), ("drive_amp_hz", "Hz"),
                                ("re", "1"), ("im", "1"), ("abs_s11", "1"),
                                ("phase_rad", "rad"), ("multistable", "bool")], rows)
    return summary


def cmd_sensitivity(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    p = cfg.block("sensitivity", {"detuning_start_hz": -0.6e9, "detuning_stop_hz": 0.6e9,
                                  "n_points": 201})
    det = _grid(p["detuning_start_hz"], p["detuning_stop_hz"], p["n_points"])
    curve = linear.noise_sensitivity_sweep(cfg.device, det, threads=threads)
    write_csv(out / "sensitivity.csv",
              [("detuning_hz", "Hz"), ("sensitivity_per_photon_hz", "Hz")],
              zip(curve.filter_detuning / HZ, curve.sensitivity / HZ))
    summary = {
        "min_hz": float(curve.sensitivity.min() / HZ),
        "max_hz": float(curve.sensitivity.max() / HZ),
        "ratio": curve.ratio,
        "argmin_hz": curve.argmin / HZ,
        "argmax_hz": curve.argmax / HZ,
        "argmax_mirror_hz": curve.argmax_mirror / HZ,
    }
    write_json(out / "sensitivity_summary.json", summary)
    return summary


def cmd_bifurcation(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    d = cfg.device
    p = cfg.block("bifurcation", {"drive_freq_hz": 9.8e9, "amp_max_hz": 0.76e9, "n_points": 77,
                                  "steps": 100})
    w = HZ * float(p["drive_freq_hz"])
    amps = _grid(0.0, p["amp_max_hz"], p["n_points"])
    slope = meanfield.fitted_meas_slope(d, w)
    branch_rows, rate_rows = [], []
    for a in amps:
        chosen = {}
        for state in ("g", "e"):
            drive = DriveSpec(w, a, state)
            branches = meanfield.mf_steady_branches(d, drive)
            sel = meanfield.follow_branch(d, drive, int(p["steps"]))[0] if a > 0 else branches[0]
            chosen[state] = sel
            for i, b in enumerate(branches):
                bout = meanfield.io_transform(b.state, drive, d).b_out
                branch_rows.append((w / HZ, a / HZ, state, i, b.n_f, b.n_c, b.stable,
                                    bout.real, bout.imag,
                                    math.isclose(b.n_f, sel.n_f, rel_tol=1e-9, abs_tol=1e-15)))
        rate = meanfield.measurement_rate(d, w, a, int(p["steps"])).gamma_meas
        lin = slope * a * a
        rate_rows.append((a / HZ, (a / HZ) ** 2, rate / HZ, lin / HZ,
                          rate / lin if lin > 0 else math.nan))
    write_csv(out / "bifurcation.csv",
              [("omega_hz", "Hz"), ("Omega_hz", "Hz"), ("state", "-"), ("branch_idx", "-"),
               ("n_f", "photons"), ("n_c", "photons"), ("stable", "bool"),
               ("re_bout", "sqrt(photons/s)"), ("im_bout", "sqrt(photons/s)"), ("selected", "bool")],
              branch_rows)
    write_csv(out / "meas_rate.csv",
              [("Omega_hz", "Hz"), ("Omega_hz_sq", "Hz^2"), ("gamma_meas_hz", "Hz"),
               ("linear_extrapolation_hz", "Hz"), ("enhancement", "1")], rate_rows)
    return {
        "drive_freq_hz": p["drive_freq_hz"], "drive_amp_hz": p["amp_max_hz"],
        "n_c_g": chosen["g"].n_c, "n_f_g": chosen["g"].n_f,
        "n_c_e": chosen["e"].n_c, "n_f_e": chosen["e"].n_f,
        "gamma_meas_hz": rate_rows[-1][2], "enhancement": rate_rows[-1][4],
    }


def cmd_purcell(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    d = cfg.device
    cfg.block("purcell", {})
    r = linear.purcell_report(d)
    k_eff, _ = effective_linewidth(d, "g")
    row = {
        "gamma_ex_filtered_hz": r.gamma_ex_filtered / HZ,
        "gamma_ex_bare_hz": r.gamma_ex_bare / HZ,
        "t1_limit_filtered": r.t1_limit_filtered,
        "t1_limit_bare": r.t1_limit_bare,
        "suppression_factor": r.suppression_factor,
        "g_qc_hz": qubit_resonator_coupling(d) / HZ,
        "n_crit": critical_photon_number(d),
        "kappa_eff_hz": k_eff / HZ,
    }
    units = {"t1_limit_filtered": "s", "t1_limit_bare": "s", "suppression_factor": "1", "n_crit": "photons"}
    write_csv(out / "purcell.csv", [(k, units.get(k, "Hz")) for k in row], [list(row.values())])
    return row


def cmd_lindblad(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    d = cfg.device
    p = cfg.block("lindblad", {"n_c": 12, "n_f": 6, "drive_freq_hz": None, "drive_amp_hz": 0.0,
                               "stride": 50, "t_window_s": None, "transient_s": None})
    fock = lindblad.FockConfig(int(p["n_c"]), int(p["n_f"]))
    w = HZ * float(p["drive_freq_hz"]) if p["drive_freq_hz"] is not None else d.resonator_freq + 0.5 * d.chi_qc
    drive = DriveSpec(w, HZ * float(p["drive_amp_hz"]), "g")
    fit = lindblad.extract_meas_dephasing(d, drive, fock, t_window=p["t_window_s"],
                                          transient=p["transient_s"], stride=int(p["stride"]))
    ev = fit.evolution
    write_csv(out / "lindblad_traj.csv",
              [("t_s", "s"), ("n_c_mean", "photons"), ("n_f_mean", "photons"), ("re_coh", "1"),
               ("im_coh", "1"), ("trace_err", "1")],
              zip(ev.t, ev.n_c, ev.n_f, ev.coherence.real, ev.coherence.imag, ev.trace_err))
    k_eff, _ = effective_linewidth(d, "g")
    summary = {
        "gamma_phi_hz": fit.gamma_phi / HZ,
        "gamma_total_hz": fit.gamma_total / HZ,
        "r_squared": fit.r_squared,
        "n_c_mean": fit.n_c_mean,
        "closed_form_hz": linear.gamma_meas_closed(k_eff, d.chi_qc, fit.n_c_mean) / HZ,
        "max_trace_drift": ev.max_trace_drift,
        "max_herm_drift": ev.max_herm_drift,
        "dt_s": ev.dt,
    }
    write_json(out / "lindblad_summary.json", summary)
    return summary


def cmd_noise_mc(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    p = cfg.block("noise_mc", {"n_noise": 1.0, "band_lo_hz": 9.425e9, "band_hi_hz": 10.425e9,
                               "sample_dt_s": 0.2e-9, "duration_s": 40e-6, "n_seeds": 5,
                               "n_blocks": 40})
    spec = noise.NoiseSpec(float(p["n_noise"]), HZ * float(p["band_lo_hz"]), HZ * float(p["band_hi_hz"]),
                           float(p["sample_dt_s"]), float(p["duration_s"]), seed)
    seeds = [seed + i for i in range(int(p["n_seeds"]))]
    res = noise.noise_mc_seeds(spec, cfg.device, seeds, threads, n_blocks=int(p["n_blocks"]))
    write_csv(out / "noise_mc.csv",
              [("seed", "-"), ("gamma_est_hz", "Hz"), ("stderr_hz", "Hz"), ("n_c_mean", "photons")],
              [(r.seed, r.gamma / HZ, r.stderr / HZ, r.n_c_mean) for r in res])
    quad = linear.gamma_noise_integral(cfg.device, spec.n_noise)
    g = np.array([r.gamma for r in res])
    e = np.array([r.stderr for r in res])
    mean = float(g.mean())
    err = float(np.sqrt(np.sum(e ** 2)) / len(e))
    return {"gamma_mean_hz": mean / HZ, "stderr_hz": err / HZ, "quadrature_hz": quad / HZ,
            "z_score": (mean - quad) / err if err > 0 else 0.0, "n_seeds": len(res)}


def _fit_datasets(cfg: RunConfig, p: dict, out: Path, seed: int):
    d = cfg.device
    if p["datasets"]:
        sets = []
        for item in p["datasets"]:
            cols = read_csv(cfg.resolve(item["csv"]))
            try:
                sets.append(fitting.FitDataset(item.get("tag", Path(item["csv"]).stem),
                                               HZ * cols["omega_meas_hz"], cols["p_meas_w"],
                                               HZ * cols["gamma_hz"], HZ * cols["sigma_hz"]))
            except KeyError as exc:
                raise ConfigError(f"{item['csv']}: missing column {exc}") from exc
        return sets, None
    syn = {"filter_detunings_hz": [-0.4e9, -0.2e9, 0.0, 0.2e9, 0.4e9], "noise_frac": 0.03,
           "p_meas_w": 1e-16, "n_points": 61, "half_span_hz": 150e6, **(p["synthetic"] or {})}
    wfs = d.resonator_freq + HZ * np.asarray(syn["filter_detunings_hz"], dtype=float)
    grid = fitting.default_grid(d, int(syn["n_points"]), HZ * float(syn["half_span_hz"]))
    sets = fitting.synth_dataset(d, wfs, grid, float(syn["p_meas_w"]), float(syn["noise_frac"]), seed)
    for ds in sets:
        write_csv(out / f"fit_data_{ds.group_tag}.csv",
                  [("omega_meas_hz", "Hz"), ("p_meas_w", "W"), ("gamma_hz", "Hz"), ("sigma_hz", "Hz")],
                  zip(ds.omega / HZ, ds.p_meas, ds.gamma / HZ, ds.sigma / HZ))
    return sets, fitting.params_from_device(d, wfs)


def cmd_fit(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    p = cfg.block("fit", {"datasets": [], "synthetic": None, "init": "heuristic", "max_iter": 200})
    sets, truth = _fit_datasets(cfg, p, out, seed)
    if p["init"] == "heuristic":
        x0 = fitting.initial_guess(sets, cfg.device)
    elif p["init"] == "device":
        x0 = fitting.params_from_device(cfg.device, [cfg.device.filter_freq] * len(sets))
    else:
        raise ConfigError("fit.init must be 'heuristic' or 'device'")
    res = fitting.fit_lm(sets, x0, cfg.device, int(p["max_iter"]), threads)
    summary = res.to_dict()
    if truth is not None:
        summary["truth_hz"] = dict(zip(summary["parameter_order"], (truth / HZ).tolist()))
        summary["z_scores"] = dict(zip(summary["parameter_order"],
                                       ((res.params - truth) / res.stderr).tolist()))
    write_json(out / "fit_result.json", summary)
    if not res.converged:
        raise MaxIterations(f"fit did not converge in {res.n_iter} iterations; best point written")
    return summary


def cmd_fit_kerr(cfg: RunConfig, out: Path, seed: int = 0, threads: int = 1) -> dict:
    d = cfg.device
    p = cfg.block("fit_kerr", {"drive_amp_hz": 0.3e9, "freq_start_hz": 9.49e9, "freq_stop_hz": 10.09e9,
                               "n_points": 31, "phases_csv": None, "phase_noise_rad": 0.01,
                               "sigma_rad": 0.01, "alpha0_hz": -0.05e9, "steps": 100})
    amp = HZ * float(p["drive_amp_hz"])
    truth = None
    if p["phases_csv"]:
        cols = read_csv(cfg.resolve(p["phases_csv"]))
        freqs, phases = HZ * cols["freq_hz"], cols["phase_rad"]
    else:
        freqs = _grid(p["freq_start_hz"], p["freq_stop_hz"], p["n_points"])
        spec = meanfield.s11_nonlinear_sweep(d, amp, freqs, "g", int(p["steps"]), threads)
        rng = np.random.default_rng(seed)
        phases = np.angle(spec.s11) + float(p["phase_noise_rad"]) * rng.standard_normal(freqs.size)
        truth = d.filter_anharm
        write_csv(out / "fit_kerr_data.csv", [("freq_hz", "Hz"), ("phase_rad", "rad")],
                  zip(freqs / HZ, phases))
    r = fitting.fit_kerr(d, amp, freqs, phases, float(p["sigma_rad"]), HZ * float(p["alpha0_hz"]),
                         steps=int(p["steps"]))
    summary = {"filter_anharm_hz": r.filter_anharm / HZ, "stderr_hz": r.stderr / HZ,
               "chi2_reduced": r.chi2_reduced, "converged": r.converged, "n_iter": r.n_iter}
    if truth is not None:
        summary["truth_hz"] = truth / HZ
    write_json(out / "fit_kerr_result.json", summary)
    if not r.converged:
        raise MaxIterations(f"Kerr fit did not converge in {r.n_iter} iterations; best point written")
    return summary


COMMANDS = {
    "spectrum": cmd_spectrum,
    "sensitivity": cmd_sensitivity,
    "bifurcation": cmd_bifurcation,
    "purcell": cmd_purcell,
    "lindblad": cmd_lindblad,
    "noise-mc": cmd_noise_mc,
    "fit": cmd_fit,
    "fit-kerr": cmd_fit_kerr,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="purcellsim", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", help="JSON run configuration (default: bundled device, default blocks)")
    ap.add_argument("--out", default=".", help="output directory")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker cap (default: $PURCELLSIM_THREADS or 1)")
    ap.add_argument("--json-summary", action="store_true", help="print the summary as JSON on stdout")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def resolve_threads(arg) -> int:
    if arg is not None:
        n = arg
    else:
        env = os.environ.get("PURCELLSIM_THREADS", "1")
        try:
            n = int(env)
        except ValueError as exc:
            raise ConfigError(f"PURCELLSIM_THREADS={env!r} is not an integer") from exc
    if n < 1:
        raise ConfigError("thread count must be >= 1")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        threads = resolve_threads(args.threads)
        if not 0 <= args.seed < 2 ** 64:
            raise ConfigError("seed must fit in 64 bits")
        cfg = load_config(args.config)
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        t0 = time.perf_counter()
        with warnings.catch_warnings():
            warnings.simplefilter("default")
            summary = COMMANDS[args.command](cfg, out, args.seed, threads)
        log.info("%s finished in %.2f s", args.command, time.perf_counter() - t0)
    except PurcellSimError as exc:
        print(f"purcellsim {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (OSError, ValueError) as exc:
        print(f"purcellsim {args.command}: {exc}", file=sys.stderr)
        return ConfigError.exit_code
    if args.json_summary:
        text = dumps_json({"command": args.command, **summary})
        atomic_write_text(out / f"{args.command.replace('-', '_')}_summary.json", text)
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
