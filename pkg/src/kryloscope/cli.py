"""Command-line entry point: ``kryloscope <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import analytic, chain, counting, fluctuations, overlaps, semiclassics
from .config import ConfigError, RunConfig, resolve
from .io import csv_text, atomic_write_text, environment_versions, write_json

EXIT_OK, EXIT_FLAGGED, EXIT_CONFIG = 0, 1, 2


def _sites(value):
    return value if value == "auto" else int(value)


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kryloscope", description="Krylov-chain growth, counting statistics and fluctuations.")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file; flags override it")
    common.add_argument("--out", help="output directory (default $KRYLOSCOPE_OUT or ./kryloscope-out)")
    common.add_argument("--format", choices=["csv", "json"])
    common.add_argument("--allow-flagged", action="store_true", default=None,
                        help="exit 0 even if a numerical flag was raised")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, help_text):
        return sub.add_parser(name, parents=[common], help=help_text)

    p = add("evolve", "evolve the chain amplitudes")
    p.add_argument("--profile")
    p.add_argument("--tmax", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--sites", type=_sites)
    p.add_argument("--distribution", action="store_true", default=None, help="also write P(n,t)")

    p = add("fcs", "counting statistics of the Krylov position")
    p.add_argument("--profile")
    p.add_argument("--tmax", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--tol", type=float)
    p.add_argument("--sites", type=_sites)
    p.add_argument("--chi-points", dest="chi_points", type=int)
    p.add_argument("--cumulants", type=int)

    p = add("semiclassics", "integrate the phase-space flow")
    p.add_argument("--profile")
    p.add_argument("--n0", type=float)
    p.add_argument("--p0", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--steps", type=int)

    p = add("classify", "classify large-n growth of a profile")
    p.add_argument("--profile")
    p.add_argument("--nmin", type=float)
    p.add_argument("--nmax", type=float)
    p.add_argument("--num", type=int)

    p = add("fluct", "linearized covariance along the growing saddle")
    p.add_argument("--profile")
    p.add_argument("--n0", type=float)
    p.add_argument("--p0", type=float)
    p.add_argument("--tmax", type=float)
    p.add_argument("--steps", type=int)
    p.add_argument("--noise", help="identity, zero, or a file holding a 2x2 matrix")
    p.add_argument("--mc-samples", dest="mc_samples", type=int)
    p.add_argument("--seed", type=int)

    p = add("sweep", "crossover sweep over h")
    p.add_argument("--family")
    p.add_argument("--h-grid", dest="h_grid", type=_float_list)
    p.add_argument("--alpha", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--c", type=float)
    p.add_argument("--t-ref", dest="t_ref", type=float)
    p.add_argument("--quantum-sites", dest="quantum_sites", type=int)
    p.add_argument("--out-dir", dest="out", help="alias of --out")

    p = add("overlap", "generating-state overlaps and moments")
    p.add_argument("--profile")
    p.add_argument("--w", type=_float_list)
    p.add_argument("--moments", type=int)
    p.add_argument("--tol", type=float)

    p = add("validate", "closed-form vs simulation error table")
    p.add_argument("--quick", action="store_true", default=None)
    return parser


# ---------------------------------------------------------------------------

def _time_grid(p):
    return np.linspace(0.0, p["tmax"], p["steps"] + 1)


def _emit(cfg: RunConfig, stem: str, header, rows) -> Path:
    rows = [list(r) for r in rows]
    if cfg.fmt == "csv":
        return atomic_write_text(cfg.out / f"{stem}.csv", csv_text(header, rows))
    return write_json(cfg.out / f"{stem}.json", {"columns": list(header), "rows": rows})


def run_evolve(cfg: RunConfig):
    p = cfg.params
    traj = chain.evolve_chain(cfg.profile_obj, _time_grid(p), N=p["sites"], tol=p["tol"], norm_tol=p["norm_tol"])
    header, rows = chain.trajectory_table(traj)
    files = [_emit(cfg, "evolve", header, rows)]
    if p["distribution"]:
        P = traj.probabilities
        files.append(_emit(cfg, "distribution", ["t"] + [f"P{n}" for n in range(P.shape[1])],
                           [[t, *row] for t, row in zip(traj.times, P)]))
    summary = {"truncation_N": traj.truncation_N, "max_boundary_leakage": traj.boundary_leakage.max(),
               "max_norm_drift": traj.norm_drift.max()}
    return files, list(traj.flags), summary


def run_fcs(cfg: RunConfig):
    p = cfg.params
    traj = chain.evolve_chain(cfg.profile_obj, _time_grid(p), N=p["sites"], tol=p["tol"], norm_tol=p["norm_tol"])
    chi = counting.default_chi_grid(p["chi_points"])
    rep = counting.counting_function(traj, chi, M=p["cumulants"])
    header = ["t"] + [f"ReZ_{i}" for i in range(len(chi))] + [f"ImZ_{i}" for i in range(len(chi))]
    header += [f"kappa_{m}" for m in range(1, p["cumulants"] + 1)]
    rows = [[t, *Z.real, *Z.imag, *k] for t, Z, k in zip(rep.times, rep.Z_values, rep.cumulants)]
    files = [_emit(cfg, "fcs", header, rows)]
    s = np.linspace(p["s_min"], p["s_max"], p["s_points"])
    rf = counting.rate_function(traj, traj.times[-1], s) if traj.times[-1] > 0 else None
    summary = {"chi_grid": chi, "t": traj.times[-1]}
    if rf is not None:
        summary["rate_function"] = {"s": rf.s_grid, "scgf": rf.scgf, "v": rf.v_grid, "phi": rf.phi,
                                    "unbounded": rf.unbounded, "minimizer": rf.minimizer}
    files.append(write_json(cfg.out / "fcs_summary.json", summary))
    return files, list(traj.flags), {"truncation_N": traj.truncation_N}


def run_semiclassics(cfg: RunConfig):
    p = cfg.params
    traj = semiclassics.integrate_hamilton(cfg.profile_obj, p["n0"], p["p0"], _time_grid(p))
    rows = zip(traj.times, traj.n_path, traj.p_path, traj.conserved_H)
    files = [_emit(cfg, "semiclassics", ["t", "n", "p", "H"], rows)]
    summary = {"energy_error": traj.energy_error}
    if traj.lyapunov_fit is not None:
        summary["lyapunov_rate"], summary["lyapunov_stderr"] = traj.lyapunov_fit
    files.append(write_json(cfg.out / "semiclassics_summary.json", summary))
    return files, list(traj.flags), summary


def run_classify(cfg: RunConfig):
    p = cfg.params
    gc = semiclassics.classify_growth(cfg.profile_obj, p["nmin"], p["nmax"], p["num"])
    report = {"growth_class": gc.growth_class, "parameters": gc.parameters, "predicted_law": gc.predicted_law,
              "residuals": gc.residuals, "candidates": gc.candidates}
    b = cfg.profile_obj.b(gc.n_probe)
    files = [_emit(cfg, "classify_samples", ["n", "b", "lambda_eff"], zip(gc.n_probe, b, gc.lambda_eff)),
             write_json(cfg.out / "classify.json", report)]
    return files, [], report


def _noise(spec):
    if spec in ("identity", "zero"):
        return spec
    if isinstance(spec, list):
        return spec
    path = Path(str(spec))
    if not path.exists():
        raise ConfigError(f"noise must be identity, zero, or a matrix file; {spec!r} not found")
    try:
        M = np.loadtxt(path, delimiter="," if "," in path.read_text() else None, ndmin=2)
    except ValueError as exc:
        raise ConfigError(f"cannot parse noise matrix: {exc}", source=str(path)) from exc
    return M


def run_fluct(cfg: RunConfig):
    p = cfg.params
    try:
        D = fluctuations.noise_kernel(_noise(p["noise"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    saddle = semiclassics.integrate_hamilton(cfg.profile_obj, p["n0"], p["p0"], _time_grid(p))
    flags = list(saddle.flags)
    if not saddle.valid:
        return [], flags, {}
    rep = fluctuations.covariance_evolution(cfg.profile_obj, saddle, D)
    flags += rep.flags
    C = rep.covariance
    header = ["t", "cov_nn", "cov_np", "cov_pp"]
    rows = [[t, c[0, 0], c[0, 1], c[1, 1]] for t, c in zip(rep.times, C)]
    summary = {"noise_kernel": D, "projections": rep.projections, "variance_n_final": rep.variance_n[-1]}
    if p["mc_samples"]:
        A = fluctuations.saddle_stability(cfg.profile_obj, saddle)
        mc = fluctuations.monte_carlo_covariance(A, D, rep.times, samples=p["mc_samples"], seed=p["seed"],
                                                 dt=p["mc_dt"], check_halving=False)
        header += ["mc_nn", "mc_nn_stderr"]
        rows = [r + [m[0, 0], s[0, 0]] for r, m, s in zip(rows, mc["covariance"], mc["stderr"])]
        z = abs(mc["covariance"][-1, 0, 0] - C[-1, 0, 0]) / max(mc["stderr"][-1, 0, 0], 1e-300)
        summary["mc_check"] = {"samples": p["mc_samples"], "seed": p["seed"], "dt": mc["dt"], "z_score_final": z}
    if cfg.profile_obj.kind == "crossover":
        summary["escape_time"] = fluctuations.escape_time(cfg.profile_obj)
        summary["escape_time_empirical"] = fluctuations.empirical_escape_time(saddle, cfg.profile_obj.params["n_star"])
    files = [_emit(cfg, "fluct", header, rows), write_json(cfg.out / "fluct_summary.json", summary)]
    return files, flags, summary


def run_sweep(cfg: RunConfig):
    p = cfg.params
    try:
        D = fluctuations.noise_kernel(_noise(p["noise"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    res = fluctuations.susceptibility_sweep(p["h_grid"], alpha=p["alpha"], gamma=p["gamma"], c=p["c"], D=D,
                                            t_ref=p["t_ref"], quantum_sites=p["quantum_sites"],
                                            quantum_tmax=p["quantum_tmax"])
    header = ["h", "n_star", "t_star", "t_star_empirical", "chi_hat", "relative_fluctuation", "mean_rate",
              "kappa2_ref", "n_ref"]
    rows = [[getattr(pt, k) if getattr(pt, k) is not None else float("nan") for k in header] for pt in res.points]
    files = [_emit(cfg, "sweep", header, rows)]
    flags = [f"h={pt.h}: {f}" for pt in res.points for f in pt.flags]
    summary = {"trend": res.trend, "t_ref": res.t_ref, "t_star": [pt.t_star for pt in res.points],
               "t_star_empirical": [pt.t_star_empirical for pt in res.points], "metadata": res.metadata,
               "quantum": [pt.quantum for pt in res.points]}
    files.append(write_json(cfg.out / "sweep_summary.json", summary))
    return files, flags, summary


def run_overlap(cfg: RunConfig):
    p = cfg.params
    M = p["moments"]
    rows = []
    for w in p["w"]:
        val = overlaps.log_overlap(cfg.profile_obj, w, p["tol"])
        rows.append([w, math.exp(val) if val < 709 else float("inf"), val,
                     *[overlaps.overlap_moment(cfg.profile_obj, w, m, p["tol"]) for m in range(1, M + 1)]])
    header = ["w", "overlap", "log_overlap"] + [f"moment_{m}" for m in range(1, M + 1)]
    return [_emit(cfg, "overlap", header, rows)], [], {}


VALIDATION_THRESHOLDS = {
    "poisson_K": 1e-6,
    "poisson_P": 1e-8,
    "su11_K": 1e-5,
    "su11_Z": 1e-6,
    "fcs_identity": 1e-12,
    "overlap_exp": 1e-10,
}


def validation_table(quick: bool = False):
    """Rows of (check, error, threshold, ok) comparing simulations to closed forms."""
    rows = []
    t = np.linspace(0.0, 3.0, 61)
    model = analytic.ClosedFormModel.poisson(1.0)
    traj = chain.evolve_chain(model.profile(), t)
    K = chain.complexity(traj)
    exact = analytic.exact_K(model, t)
    rel = np.abs(K[1:] - exact[1:]) / exact[1:]
    rows.append(("poisson_K", float(rel.max())))
    P_err = max(np.abs(traj.probabilities[i] - analytic.exact_P(model, traj.sites, ti)).max() for i, ti in enumerate(t))
    rows.append(("poisson_P", float(P_err)))
    chi = counting.default_chi_grid(64)
    Zsum = counting.counting_function(traj, chi, M=2).Z_values
    rows.append(("fcs_identity", float(np.abs(Zsum - counting.two_branch_counting(traj, chi)).max())))
    ks = [0.5] if quick else [0.25, 0.5, 1.0]
    su_K, su_Z = 0.0, 0.0
    for k in ks:
        m = analytic.ClosedFormModel.su11(1.0, k)
        tr = chain.evolve_chain(m.profile(), t)
        Kc = chain.complexity(tr)
        ex = analytic.exact_K(m, t)
        su_K = max(su_K, float((np.abs(Kc[1:] - ex[1:]) / ex[1:]).max()))
        Z = counting.counting_function(tr, chi, M=2).Z_values
        for i, ti in enumerate(t):
            su_Z = max(su_Z, float(np.abs(Z[i] - analytic.exact_Z(m, chi, ti)).max()))
    rows.append(("su11_K", su_K))
    rows.append(("su11_Z", su_Z))
    from .profiles import LanczosProfile

    prof = LanczosProfile.sqrt_hopping(1.0)
    ov = max(abs(overlaps.overlap(prof, w) / math.exp(w) - 1) for w in np.linspace(0, 20, 41))
    rows.append(("overlap_exp", float(ov)))
    return [(name, err, VALIDATION_THRESHOLDS[name], err < VALIDATION_THRESHOLDS[name]) for name, err in rows]


def run_validate(cfg: RunConfig):
    table = validation_table(bool(cfg.params["quick"]))
    width = max(len(r[0]) for r in table)
    for name, err, thr, ok in table:
        print(f"{name:<{width}}  error={err:.3e}  threshold={thr:.0e}  {'ok' if ok else 'FAIL'}")
    files = [_emit(cfg, "validate", ["check", "error", "threshold", "ok"], table)]
    flags = [f"{name} error {err:.3e} above {thr:.0e}" for name, err, thr, ok in table if not ok]
    return files, flags, {}


HANDLERS = {
    "evolve": run_evolve,
    "fcs": run_fcs,
    "semiclassics": run_semiclassics,
    "classify": run_classify,
    "fluct": run_fluct,
    "sweep": run_sweep,
    "overlap": run_overlap,
    "validate": run_validate,
}


def _error(report: dict) -> int:
    sys.stderr.write(json.dumps(report, sort_keys=True) + "\n")
    return EXIT_CONFIG


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    flags = {k: v for k, v in vars(args).items() if k not in ("subcommand", "config")}
    try:
        cfg = resolve(args.subcommand, flags, args.config)
        files, raised, summary = HANDLERS[args.subcommand](cfg)
    except ConfigError as exc:
        return _error(exc.report())
    manifest = {
        "subcommand": cfg.subcommand,
        "config": cfg.echo(),
        "versions": environment_versions(),
        "flags": raised,
        "outputs": [str(f) for f in files],
        "summary": summary,
    }
    write_json(cfg.out / f"{cfg.subcommand}_manifest.json", manifest)
    if raised and not cfg.allow_flagged:
        sys.stderr.write(json.dumps({"error": "numerical_flag", "flags": raised}) + "\n")
        return EXIT_FLAGGED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
