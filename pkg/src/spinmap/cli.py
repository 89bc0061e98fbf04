"""Command line runner: discretize | simulate | analyze | tcl2 | bound-check.

Exit codes: 0 ok, 2 configuration, 3 resources, 4 analysis input,
5 dynamical regime (overdamped weak-coupling solution).
"""
from __future__ import annotations

import argparse
import json
import sys
import time
import warnings
from pathlib import Path
from typing import Any

import numpy as np

from . import __version__, config as cfgmod, csvio
from .bloch import SIGMA_Z, Observable, density_to_bloch, random_density, spin_initial_state
from .dynmap import (Asymptotics, asymptotic_projection, bound_check, classify_asymptotics,
                     delta_observable, predict, prediction_error, reconstruct_map, svd_series,
                     tensor_to_affine)
from .errors import (MemoryBudgetError, NotApplicableError,
                     OverdampedError, ReconstructionError, InvalidMapError, WindowError)
from .propagator import BASIS_ANGLES, Trajectory, build_hamiltonian, run_trajectories, simulate_spin_state
from .spectral import continuum_moment, sum_rule_error
from .tcl2 import (analytic_affine, analytic_singular_values, rates_from_spectral_density, renormalized_frequency,
                   solve_tcl2_ode, sorted_singular_values)

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCES, EXIT_ANALYSIS, EXIT_REGIME = 0, 2, 3, 4, 5

class CliError(Exception):
    def __init__(self, code: int, message: str):
        self.code = code
        super().__init__(message)


def _write_json(path: Path, payload: Any) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"not JSON serializable: {type(obj)}")


def _warn(manifest: dict, message: str) -> None:
    manifest.setdefault("warnings", []).append(message)
    print(f"warning: {message}", file=sys.stderr)


def _manifest(cfg: dict, command: str) -> dict:
    return {
        "schema_version": 1,
        "tool_version": __version__,
        "command": command,
        "config_hash": cfgmod.config_hash(cfg),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "warnings": [],
    }


def _build_bath(cfg: dict, manifest: dict):
    """build_bath with library warnings routed to stderr and the manifest."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        result = cfgmod.build_bath(cfg)
    for w in caught:
        _warn(manifest, str(w.message))
    return result


def _finish(manifest: dict, out: Path, name: str) -> None:
    manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
    _write_json(out / name, manifest)


def _load_config(args) -> dict:
    try:
        cfg = cfgmod.load(args.config) if args.config else cfgmod.validate({
            k: cfgmod.DEFAULT_CONFIG[k] for k in ("model", "delta", "bath", "hilbert", "time")
        })
    except cfgmod.ConfigError as exc:
        raise CliError(EXIT_CONFIG, str(exc)) from None
    if args.seed is not None:
        cfg["seed"] = args.seed
    return cfg


def _out_dir(args, cfg: dict) -> Path:
    out = Path(args.out) if args.out else Path(cfg["output"])
    out.mkdir(parents=True, exist_ok=True)
    return out


# ---------------------------------------------------------------------------
# discretize

def cmd_discretize(cfg: dict, out: Path) -> dict:
    manifest = _manifest(cfg, "discretize")
    density, bath, rng = _build_bath(cfg, manifest)
    bath.to_csv(out / "bath.csv")
    err_j = sum_rule_error(bath, density, rng)
    err_jw = sum_rule_error(bath, density, rng, f=lambda w: 1.0 / np.asarray(w))
    manifest.update({
        "n_modes": bath.n_modes,
        "range": list(rng),
        "sum_rule_error": err_j,
        "sum_rule_error_inverse_moment": err_jw,
        "continuum_integral": continuum_moment(density, *rng),
    })
    if max(err_j, err_jw) > 1e-3:
        _warn(manifest, f"sum-rule error {max(err_j, err_jw):.2e} exceeds 1e-3; increase n_modes")
    print(f"discretized {bath.n_modes} modes on [{rng[0]:.6g}, {rng[1]:.6g}], "
          f"sum-rule error {err_j:.3e}")
    _finish(manifest, out, "discretize_manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# simulate

def trajectory_filename(label: str) -> str:
    return f"traj_{label}.csv"


def _extra_angles(cfg: dict) -> list[tuple[str, float, float]]:
    return [(f"extra_{k:03d}", float(th), float(ph))
            for k, (th, ph) in enumerate(cfg["states"]["extra"])]


def cmd_simulate(cfg: dict, out: Path, workers: int = 1) -> dict:
    manifest = _manifest(cfg, "simulate")
    density, bath, rng = _build_bath(cfg, manifest)
    try:
        spec = cfgmod.build_spec(cfg, bath)
    except MemoryBudgetError as exc:
        raise CliError(EXIT_RESOURCES, f"{exc} (required {exc.required}, allowed {exc.allowed})") from None
    bath.to_csv(out / "bath.csv")
    manifest["sum_rule_error"] = sum_rule_error(bath, density, rng)
    manifest["hilbert_dim"] = spec.dim
    h = build_hamiltonian(bath, cfg["delta"], spec)
    tm, prop = cfg["time"], cfg["propagation"]
    angles = list(BASIS_ANGLES) + _extra_angles(cfg)
    ckpt = prop["checkpoint_every"]
    if ckpt:
        ck_dir = out / "checkpoints"
        ck_dir.mkdir(exist_ok=True)
        trajs = []
        from .bloch import spin_state_vector
        for label, th, ph in angles:
            trajs.append(simulate_spin_state(
                h, spec, spin_state_vector(th, ph), tm["dt"], tm["steps"], tm["stride"],
                prop["krylov_dim"], prop["tol"], label, th, ph,
                checkpoint=ck_dir / f"{label}.npz", checkpoint_every=ckpt,
                config_hash=manifest["config_hash"]))
    else:
        trajs = run_trajectories(bath, cfg["delta"], spec, angles, tm["dt"], tm["steps"],
                                 tm["stride"], prop["krylov_dim"], prop["tol"], workers, h)
    threshold = cfg["analysis"]["cutoff_threshold"]
    manifest["trajectories"] = {}
    for tr in trajs:
        csvio.write_trajectory(out / trajectory_filename(tr.label), tr)
        manifest["trajectories"][tr.label] = {"theta": tr.theta, "phi": tr.phi, **tr.diagnostics}
        if tr.diagnostics["max_cutoff_population"] > threshold:
            _warn(manifest, f"{tr.label}: top Fock level population "
                            f"{tr.diagnostics['max_cutoff_population']:.2e} > {threshold:.1e}; "
                            "cutoff may be unconverged")
    manifest["converged_cutoff"] = all(
        tr.diagnostics["max_cutoff_population"] <= threshold for tr in trajs)
    print(f"simulated {len(trajs)} trajectories, D={spec.dim}, "
          f"{tm['steps']} steps of dt={tm['dt']}")
    _finish(manifest, out, "simulate_manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# analyze

def load_trajectories(traj_dir: Path) -> tuple[list[Trajectory], list[Trajectory]]:
    basis = []
    for label, _, _ in BASIS_ANGLES:
        path = traj_dir / trajectory_filename(label)
        if not path.exists():
            raise CliError(EXIT_ANALYSIS, f"missing basis trajectory {path}")
        try:
            basis.append(csvio.read_trajectory(path, label))
        except (ValueError, KeyError) as exc:
            raise CliError(EXIT_ANALYSIS, f"unreadable trajectory {path}: {exc}") from None
    extras = [csvio.read_trajectory(p, p.stem[len("traj_"):])
              for p in sorted(traj_dir.glob("traj_extra_*.csv"))]
    return basis, extras


def _reconstruct(basis: list[Trajectory]):
    try:
        phi = reconstruct_map(basis)
        abm = tensor_to_affine(phi)
    except (ReconstructionError, InvalidMapError) as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from None
    return phi, abm


def cmd_analyze(cfg: dict, traj_dir: Path, out: Path) -> dict:
    manifest = _manifest(cfg, "analyze")
    basis, extras = load_trajectories(traj_dir)
    phi, abm = _reconstruct(basis)
    svd = svd_series(abm)
    csvio.write_svd(out / "svd.csv", svd.times, svd.S, abm.b)
    csvio.write_map(out / "map.csv", abm.times, abm.M)
    manifest["identity_error_t0"] = abm.identity_error()
    manifest["trace_error"] = phi.trace_error()

    up, down = basis[0], basis[1]
    sz = Observable(SIGMA_Z)
    delta = delta_observable(up, down, sz)
    report = bound_check(svd, density_to_bloch(up.initial), density_to_bloch(down.initial),
                         sz, delta, raise_on_violation=False)
    csvio.write_bound(out / "bound.csv", report)
    manifest["bound_violations"] = report.violations
    if report.violations:
        _warn(manifest, f"bound violated at {report.violations} samples")

    rows = []
    for tr in extras:
        err = prediction_error(phi, tr)
        rows.append((tr.label, err))
    csvio.write_rows(out / "prediction.csv", ["label", "max_bloch_error"], rows)
    manifest["prediction_max_error"] = max((e for _, e in rows), default=None)

    an = cfg["analysis"]
    try:
        rep = classify_asymptotics(abm, svd, an["window"], an["tol_stationary"], an["tol_zero"])
    except WindowError as exc:
        raise CliError(EXIT_ANALYSIS, str(exc)) from None
    summary = {
        "classification": rep.classification.value,
        "window": list(rep.window),
        "fluctuation": rep.fluctuation,
        "s_window_max": rep.s_window_max,
        "M_inf": rep.M_inf,
        "b_inf": rep.b_inf,
        "s_inf": rep.s_inf,
    }
    if rep.classification is Asymptotics.INITIAL_STATE_DEPENDENT:
        try:
            s, v, w = asymptotic_projection(rep)
            summary.update({"s_inf_1": s, "v_inf_1": v, "w_inf_1": w})
        except NotApplicableError:
            pass
    _write_json(out / "classification.json", summary)
    manifest["classification"] = rep.classification.value
    print(f"classification: {rep.classification.value} "
          f"(window {rep.window[0]:.6g}..{rep.window[1]:.6g}, fluctuation {rep.fluctuation:.3e}, "
          f"S_max at end {svd.s_max[-1]:.6g})")
    _finish(manifest, out, "analyze_manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# tcl2

def cmd_tcl2(cfg: dict, out: Path, compare: Path | None = None) -> dict:
    manifest = _manifest(cfg, "tcl2")
    delta = cfg["delta"]
    rates = cfgmod.explicit_rates(cfg)
    if rates is None:
        rates = rates_from_spectral_density(cfgmod.build_density(cfg), delta)
    manifest["rates"] = dict(zip(("gamma_xx", "gamma_x", "gamma_yy", "gamma_yz"), rates))
    try:
        dtilde = renormalized_frequency(delta, rates)
    except OverdampedError as exc:
        raise CliError(EXIT_REGIME, str(exc)) from None
    manifest["renormalized_frequency"] = dtilde
    tm = cfg["time"]
    t = tm["dt"] * np.arange(0, tm["steps"] + 1, tm["stride"])
    if t[-1] != tm["dt"] * tm["steps"]:
        t = np.append(t, tm["dt"] * tm["steps"])
    M, b = analytic_affine(delta, rates, t)
    S = sorted_singular_values(delta, rates, t)
    csvio.write_tcl2(out / "tcl2_analytic.csv", t, *analytic_singular_values(delta, rates, t), b)
    csvio.write_svd(out / "tcl2_svd.csv", t, S, b)
    csvio.write_map(out / "tcl2_map.csv", t, M)

    # the same map from integrating the equations of motion for the four basis states
    tc = cfg["tcl2"]
    odes = []
    for label, th, ph in BASIS_ANGLES:
        a0 = density_to_bloch(spin_initial_state(th, ph))
        tr = solve_tcl2_ode(delta, rates, a0, t, tc["rtol"], tc["atol"], label)
        odes.append(tr)
        csvio.write_trajectory(out / f"tcl2_{trajectory_filename(label)}", tr)
    _, abm = _reconstruct(odes)
    svd = svd_series(abm)
    csvio.write_svd(out / "tcl2_svd_ode.csv", t, svd.S, abm.b)
    manifest["max_dev_analytic_vs_ode"] = float(max(np.max(np.abs(svd.S - S)),
                                                    np.max(np.abs(abm.b - b)),
                                                    np.max(np.abs(abm.M - M))))
    if compare is not None:
        path = compare / "svd.csv" if compare.is_dir() else compare
        if not path.exists():
            raise CliError(EXIT_ANALYSIS, f"no analyze output at {path}")
        cols = csvio.read_columns(path)
        ref_t = cols["t"]
        S_ref = np.stack([cols[f"S{k}"] for k in (1, 2, 3)], axis=1)
        S_an = sorted_singular_values(delta, rates, ref_t)
        dev = np.max(np.abs(S_an - S_ref), axis=0)
        manifest["max_dev_vs_compare"] = {"S1": dev[0], "S2": dev[1], "S3": dev[2]}
        csvio.write_rows(out / "tcl2_vs_compare.csv", ["t", "dS1", "dS2", "dS3"],
                         ((tt, *(S_an[k] - S_ref[k])) for k, tt in enumerate(ref_t)))
    print(f"TCL2: Delta~={dtilde:.6g}, max analytic/ODE deviation "
          f"{manifest['max_dev_analytic_vs_ode']:.3e}")
    _finish(manifest, out, "tcl2_manifest.json")
    return manifest


# ---------------------------------------------------------------------------
# bound-check

def random_observable(rng: np.random.Generator, n: int = 2) -> Observable:
    g = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return Observable(0.5 * (g + g.conj().T))


def cmd_bound_check(cfg: dict, traj_dir: Path, out: Path) -> dict:
    manifest = _manifest(cfg, "bound-check")
    basis, _ = load_trajectories(traj_dir)
    phi, abm = _reconstruct(basis)
    svd = svd_series(abm)
    rng = np.random.default_rng(cfg["seed"])
    rows = []
    total = 0
    for k in range(cfg["analysis"]["bound_draws"]):
        r1, r2 = random_density(2, rng), random_density(2, rng)
        obs = random_observable(rng)
        t1, t2 = predict(phi, r1), predict(phi, r2)
        delta = delta_observable(t1, t2, obs)
        rep = bound_check(svd, density_to_bloch(r1), density_to_bloch(r2), obs, delta,
                          raise_on_violation=False)
        total += rep.violations
        rows.append((k, rep.max_ratio, rep.violations))
    csvio.write_rows(out / "bound_draws.csv", ["draw", "max_ratio", "violations"], rows)
    manifest["draws"] = len(rows)
    manifest["violations"] = total
    print(f"bound check: {len(rows)} draws, {total} violating samples")
    _finish(manifest, out, "bound_check_manifest.json")
    if total:
        raise CliError(EXIT_ANALYSIS, f"bound violated at {total} samples")
    return manifest


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinmap",
        description="Initial-state influence in the spin-boson model via dynamical-map singular values.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--emit-default-config", action="store_true",
                        help="print the default configuration as JSON and exit")
    sub = parser.add_subparsers(dest="command")

    def common(p, traj=False):
        p.add_argument("--config", metavar="PATH", default=None)
        p.add_argument("--out", metavar="DIR", default=None)
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--seed", type=int, default=None)
        if traj:
            p.add_argument("--trajectories", metavar="DIR", default=None,
                           help="directory written by 'simulate' (default: --out)")
        return p

    common(sub.add_parser("discretize", help="discretize the spectral density into bath modes"))
    common(sub.add_parser("simulate", help="propagate the basis (and extra) initial states"))
    common(sub.add_parser("analyze", help="reconstruct the map, SVD, bound and classification"),
           traj=True)
    tp = common(sub.add_parser("tcl2", help="weak-coupling closed form and ODE"))
    tp.add_argument("--compare", metavar="PATH", default=None,
                    help="analyze output directory or svd.csv to diff against")
    common(sub.add_parser("bound-check", help="random-draw check of the expectation-value bound"),
           traj=True)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.emit_default_config:
        print(json.dumps(cfgmod.DEFAULT_CONFIG, indent=2, sort_keys=True))
        return EXIT_OK
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = _load_config(args)
        out = _out_dir(args, cfg)
        if args.command == "discretize":
            cmd_discretize(cfg, out)
        elif args.command == "simulate":
            cmd_simulate(cfg, out, max(1, args.workers))
        elif args.command == "analyze":
            cmd_analyze(cfg, Path(args.trajectories) if args.trajectories else out, out)
        elif args.command == "tcl2":
            cmd_tcl2(cfg, out, Path(args.compare) if args.compare else None)
        elif args.command == "bound-check":
            cmd_bound_check(cfg, Path(args.trajectories) if args.trajectories else out, out)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
