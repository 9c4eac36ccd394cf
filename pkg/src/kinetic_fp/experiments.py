"""Scenario configs, initial-data recipes and batch drivers.

Configs are INI-style files with the sections [run], [grid], [solver],
[initial], [fast_diffusion], [diagnostics], [sweep] and [oracle]. See the
README for the key list. Every artifact written by a run carries the hash of
the normalized config.
"""

from __future__ import annotations

import configparser
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any

import numpy as np

from .entropy import entropy_report, fit_decay_rate, lambda_envelope
from .fast_diffusion import FdConfig, fd_simulate, fd_step, write_density_csv, write_fd_csv
from .grid import (
    DensityField,
    PhaseField,
    build_torus_grid,
    build_velocity_grid,
    gaussian,
    lp_norm_dm,
    save_binary,
)
from .oracle import oracle_solve
from .positivity import (
    BarrierParams,
    barrier_ordering_check,
    barrier_subsolution_check,
    gaussian_tail_fit,
    minorant_holds,
    write_report,
)
from .solver import SolverConfig, simulate, write_diagnostics_csv

__all__ = [
    "ConfigError",
    "Scenario",
    "DEFAULTS",
    "load_config",
    "parse_config",
    "config_hash",
    "build_initial",
    "run_scenario",
    "epsilon_sweep",
    "oracle_check",
    "summarize_run",
]


class ConfigError(ValueError):
    """Invalid or incomplete configuration; ``key`` names the offending entry."""

    def __init__(self, key: str, message: str):
        super().__init__(f"config error at '{key}': {message}")
        self.key = key


# Section -> key -> default. ``REQUIRED`` marks keys without a default.
REQUIRED = object()
DEFAULTS: dict[str, dict[str, Any]] = {
    "run": {"name": "run", "seed": 0, "mode": "kinetic", "output_dir": "output"},
    "grid": {"n_x": REQUIRED, "n_v": 129, "v_max": 8.0},
    "solver": {
        "epsilon": REQUIRED, "beta": REQUIRED, "t_final": REQUIRED, "dt": None,
        "collision_mode": "fokker_planck", "collision_scheme": "exponential",
        "coefficient_update": "frozen", "picard_iterations": 2, "picard_tol": 1e-10,
        "linear_tol": 1e-12, "transport_scheme": "cubic", "clamp_transport": False,
        "snapshot_stride": 10, "diagnostics_stride": 1, "bounds_tol": 1e-8,
    },
    "initial": {
        "recipe": REQUIRED, "mean": 1.0, "amplitude": 0.5, "mode": 1, "order": 1,
        "lower": 0.5, "upper": 2.0, "n_modes": 3,
        "delta": 0.5, "radius": 0.5, "tau": 1.0, "x0": 0.5, "v0": 0.0,
    },
    "fast_diffusion": {"dt": 1e-4, "floor": 1e-8},
    "diagnostics": {"entropy": True, "delta": 0.1, "positivity": False, "c0": 0.01, "write_snapshots": True},
    "sweep": {"epsilons": [0.5, 0.25, 0.125, 0.0625], "dt_factor": 0.125, "workers": 1},
    "oracle": {"t": 0.25, "dts": [0.004, 0.002, 0.001]},
}

RECIPES = ("equilibrium", "well_prepared", "smooth", "bump", "hermite", "random")
MODES = ("kinetic", "fast_diffusion", "both")


def _coerce(key: str, raw: str, default: Any) -> Any:
    text = raw.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, list):
            return [float(_fraction(s)) for s in text.replace(";", ",").split(",") if s.strip()]
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float) or default is None or default is REQUIRED:
            if default is not REQUIRED or key not in ("recipe",):
                if text.lower() in ("none", ""):
                    return None
                try:
                    return float(_fraction(text))
                except ValueError:
                    if default is None or default is REQUIRED:
                        return text
                    raise
        return text
    except ValueError as exc:
        raise ConfigError(key, str(exc)) from None


def _fraction(text: str) -> float:
    text = text.strip()
    if "/" in text:
        num, den = text.split("/", 1)
        return float(num) / float(den)
    return float(text)


_INT_KEYS = {"grid.n_x", "grid.n_v", "run.seed", "solver.picard_iterations", "solver.snapshot_stride",
             "solver.diagnostics_stride", "initial.mode", "initial.order", "initial.n_modes", "sweep.workers"}
_STR_KEYS = {"run.name", "run.mode", "run.output_dir", "solver.collision_mode", "solver.collision_scheme",
             "solver.coefficient_update", "solver.transport_scheme", "initial.recipe"}


def parse_config(text: str) -> dict:
    """Parse INI text into a normalized nested dict with defaults filled in."""
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError("<file>", str(exc).splitlines()[0]) from None
    out: dict[str, dict[str, Any]] = {}
    for section in cp.sections():
        if section not in DEFAULTS:
            raise ConfigError(section, "unknown section")
    for section, defaults in DEFAULTS.items():
        values = {}
        given = cp[section] if cp.has_section(section) else {}
        for key in given:
            if key not in defaults:
                raise ConfigError(f"{section}.{key}", "unknown key")
        for key, default in defaults.items():
            name = f"{section}.{key}"
            if key in given:
                raw = given[key]
                if name in _STR_KEYS:
                    val = raw.strip()
                elif name in _INT_KEYS:
                    val = _coerce(name, raw, 0)
                else:
                    val = _coerce(name, raw, default)
                values[key] = val
            elif default is REQUIRED:
                raise ConfigError(name, "required key is missing")
            else:
                values[key] = default
        out[section] = values
    _validate(out)
    return out


def _validate(cfg: dict) -> None:
    if cfg["run"]["mode"] not in MODES:
        raise ConfigError("run.mode", f"must be one of {MODES}")
    if cfg["initial"]["recipe"] not in RECIPES:
        raise ConfigError("initial.recipe", f"must be one of {RECIPES}")
    try:
        solver_config(cfg)
    except (ValueError, TypeError) as exc:
        key = next((f"solver.{k}" for k in DEFAULTS["solver"] if k in str(exc)), "solver")
        raise ConfigError(key, str(exc)) from None
    try:
        build_velocity_grid(cfg["grid"]["v_max"], cfg["grid"]["n_v"])
        build_torus_grid(cfg["grid"]["n_x"])
    except ValueError as exc:
        raise ConfigError("grid", str(exc)) from None


def load_config(path: str | Path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError("<file>", f"cannot read {path}")
    return parse_config(p.read_text())


def config_hash(cfg: dict) -> str:
    blob = json.dumps(cfg, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def solver_config(cfg: dict, **overrides) -> SolverConfig:
    s = dict(cfg["solver"])
    s.update(n_x=cfg["grid"]["n_x"], n_v=cfg["grid"]["n_v"], v_max=cfg["grid"]["v_max"])
    s.update(overrides)
    return SolverConfig(**s)


def fd_config(cfg: dict, **overrides) -> FdConfig:
    c = dict(
        beta=cfg["solver"]["beta"], dt=cfg["fast_diffusion"]["dt"], n_x=cfg["grid"]["n_x"],
        t_final=cfg["solver"]["t_final"], floor=cfg["fast_diffusion"]["floor"],
        snapshot_stride=cfg["solver"]["snapshot_stride"],
    )
    c.update(overrides)
    return FdConfig(**c)


# --------------------------------------------------------------------------
# Initial data


@dataclass
class Scenario:
    name: str
    h_in: PhaseField
    rho_in: DensityField | None
    bounds: tuple[float, float]
    config: dict = field(default_factory=dict)


def build_initial(cfg: dict) -> Scenario:
    """Construct h_in (and the matching macroscopic rho_in) from [initial]."""
    ini = cfg["initial"]
    xg = build_torus_grid(cfg["grid"]["n_x"])
    vg = build_velocity_grid(cfg["grid"]["v_max"], cfg["grid"]["n_v"])
    X, V = np.meshgrid(xg.nodes, vg.nodes, indexing="ij")
    recipe = ini["recipe"]
    mean, amp, k = ini["mean"], ini["amplitude"], ini["mode"]
    if recipe == "equilibrium":
        vals = np.full(X.shape, mean)
    elif recipe == "well_prepared":
        vals = mean + amp * np.cos(2 * np.pi * k * X)
    elif recipe == "smooth":
        vals = mean + amp * np.cos(2 * np.pi * k * X) * np.exp(-V**2 / 8) + 0.6 * amp * np.tanh(V) * (
            1 + 0.5 * np.sin(2 * np.pi * k * X)
        )
    elif recipe == "hermite":
        from numpy.polynomial.hermite_e import hermeval

        coeffs = np.zeros(ini["order"] + 1)
        coeffs[-1] = 1.0
        vals = mean + amp * hermeval(V, coeffs) / math.sqrt(math.factorial(ini["order"]))
    elif recipe == "bump":
        inside = (np.abs(X - ini["x0"]) < ini["radius"]) & (np.abs(V - ini["v0"]) < ini["radius"] / ini["tau"])
        vals = ini["delta"] * inside.astype(float)
    elif recipe == "random":
        rng = np.random.default_rng(cfg["run"]["seed"])
        s = np.zeros(X.shape)
        for m in range(1, ini["n_modes"] + 1):
            a, ph, b = rng.normal(size=3)
            s += a * np.cos(2 * np.pi * m * X + ph) * np.exp(-((V - b) ** 2) / 4) / m
        s += rng.normal() * np.tanh(V)
        s = s / max(np.max(np.abs(s)), 1e-300)
        lo, hi = ini["lower"], ini["upper"]
        vals = 0.5 * (lo + hi) + 0.5 * (hi - lo) * s
    else:  # pragma: no cover - rejected by validation
        raise ConfigError("initial.recipe", f"unknown recipe {recipe!r}")
    h = PhaseField(vals, "h", xg, vg)
    lo, hi = float(vals.min()), float(vals.max())
    if recipe == "random" and (lo < ini["lower"] - 1e-12 or hi > ini["upper"] + 1e-12):
        raise ConfigError("initial", "random recipe violated its declared bounds")
    if lo < 0:
        raise ConfigError("initial", f"recipe {recipe} produced negative values")
    rho = DensityField(h.values @ vg.weights, xg) if lo > 0 or recipe != "bump" else None
    return Scenario(cfg["run"]["name"], h, rho, (lo, hi), cfg)


# --------------------------------------------------------------------------
# Runs


def _write_json(data: dict, path: Path) -> None:
    write_report(data, path)


def run_scenario(cfg: dict, output_dir: str | Path | None = None) -> dict:
    """Run the configured simulations and write artifacts. Returns the summary."""
    out = Path(output_dir if output_dir is not None else cfg["run"]["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    (out / "config.json").write_text(json.dumps({"config_hash": chash, "config": cfg}, indent=2, sort_keys=True, default=str) + "\n")
    scen = build_initial(cfg)
    summary: dict[str, Any] = {"config_hash": chash, "name": scen.name, "recipe": cfg["initial"]["recipe"]}
    mode = cfg["run"]["mode"]
    diag = cfg["diagnostics"]

    if mode in ("kinetic", "both"):
        sc = solver_config(cfg)
        h_in = scen.h_in if sc.collision_mode == "fokker_planck" else scen.h_in.to_f()
        traj = simulate(sc, h_in)
        write_diagnostics_csv(traj.diagnostics, out / "diagnostics.csv", chash)
        if diag["write_snapshots"]:
            snapdir = out / "snapshots"
            snapdir.mkdir(exist_ok=True)
            for i, s in enumerate(traj.snapshots):
                save_binary(s, snapdir / f"snap_{i:05d}.kfp", chash)
        mass = traj.series("mass")
        summary["kinetic"] = {
            "steps": sc.n_steps,
            "dt": sc.t_final / sc.n_steps,
            "mass_initial": mass[0],
            "mass_relative_drift": float(np.max(np.abs(mass - mass[0])) / max(abs(mass[0]), 1e-300)),
            "min_h": float(traj.series("min_h").min()),
            "max_h": float(traj.series("max_h").max()),
            "bound_violation": traj.worst_bound_violation,
            "final_l2_dm_dist_to_M0": traj.diagnostics[-1]["l2_dm_dist_to_M0"],
        }
        if diag["entropy"] and sc.collision_mode == "fokker_planck":
            H = traj.series("entropy_Hbeta_vs_1")
            summary["kinetic"]["entropy_max_increase"] = float(np.max(np.diff(H))) if H.size > 1 else 0.0
            _write_entropy_csv(traj, sc, diag["delta"], out / "entropy.csv", chash)
        if diag["positivity"] or cfg["initial"]["recipe"] == "bump":
            summary["positivity"] = _positivity_report(cfg, traj, out / "positivity.json", chash)

    if mode in ("fast_diffusion", "both"):
        if scen.rho_in is None or np.any(scen.rho_in.values <= 0):
            raise ConfigError("initial.recipe", "fast-diffusion runs need a positive macroscopic density")
        fc = fd_config(cfg)
        ftraj = fd_simulate(fc, scen.rho_in)
        write_fd_csv(ftraj, out / "fd_diagnostics.csv", chash)
        write_density_csv(ftraj.snapshots[-1], out / "fd_density_final.csv", ftraj.times[-1], chash)
        m = ftraj.series("mass")
        summary["fast_diffusion"] = {
            "steps": fc.n_steps,
            "mass_relative_drift": float(np.max(np.abs(m - m[0])) / m[0]),
            "min_rho": float(ftraj.series("min_rho").min()),
            "max_rho": float(ftraj.series("max_rho").max()),
        }
    _write_json(summary, out / "summary.json")
    return summary


def _write_entropy_csv(traj, sc: SolverConfig, delta: float, path: Path, chash: str) -> None:
    import csv

    times = traj.series("time")
    lam, _ = lambda_envelope(times, traj.series("min_x_mean_h"), sc.beta)
    cols = ["time", "H_beta_vs_rho", "H_beta_vs_1", "dissipation", "E_eps", "cross_term", "l2_dm", "lambda_t"]
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        w = csv.writer(fh)
        w.writerow(cols)
        for s in traj.snapshots:
            lt = float(lam[np.argmin(np.abs(times - s.time))])
            rho = DensityField(s.values @ s.vgrid.weights, s.xgrid)
            rep = entropy_report(s, sc.epsilon, sc.beta, rho if rho.values.min() > 0 else None, delta, lt)
            w.writerow([repr(float(getattr(rep, c))) for c in cols])


def _positivity_report(cfg: dict, traj, path: Path, chash: str) -> dict:
    ini = cfg["initial"]
    p = BarrierParams(
        delta=ini["delta"], tau=ini["tau"], r=ini["radius"], x0=ini["x0"], v0=ini["v0"],
        c0=cfg["diagnostics"]["c0"], T=cfg["solver"]["t_final"],
    )
    sub = barrier_subsolution_check(p, traj.snapshots)
    order = barrier_ordering_check(p, traj.snapshots)
    final = traj.final
    try:
        eta1, eta2 = gaussian_tail_fit(final)
        tail = {"eta1": eta1, "eta2": eta2, "minorant_holds": minorant_holds(final, eta1, eta2), "time": final.time}
    except ValueError as exc:
        tail = {"error": str(exc), "time": final.time}
    report = {
        "config_hash": chash,
        "constants": p.derived(),
        "subsolution": sub.to_dict(),
        "ordering": order.to_dict(),
        "tail_fit": tail,
    }
    write_report(report, path)
    return {"subsolution_passed": sub.passed, "ordering_passed": order.passed, **{k: v for k, v in tail.items() if k != "time"}}


# --------------------------------------------------------------------------
# Sweeps and oracle checks


def _sweep_member(args: tuple) -> dict:
    cfg, eps = args
    sc = solver_config(cfg, epsilon=eps, dt=cfg["sweep"]["dt_factor"] * eps**2, snapshot_stride=0, diagnostics_stride=10**9)
    scen = build_initial(cfg)
    if scen.rho_in is None:
        raise ConfigError("initial.recipe", "the sweep needs a positive macroscopic density")
    dt = sc.t_final / sc.n_steps
    sub = max(1, math.ceil(dt / cfg["fast_diffusion"]["dt"]))
    state = {"rho": DensityField(scen.rho_in.values.copy(), scen.rho_in.xgrid), "err": 0.0, "t_err": 0.0}

    def compare(s):
        for _ in range(sub):
            state["rho"] = fd_step(state["rho"], dt / sub, sc.beta, cfg["fast_diffusion"]["floor"])
        e = lp_norm_dm(s.h, state["rho"], 2)
        if e > state["err"]:
            state["err"], state["t_err"] = e, s.time

    traj = simulate(sc, scen.h_in, callback=compare)
    return {
        "epsilon": eps, "dt": dt, "steps": sc.n_steps, "fd_substeps": sub,
        "sup_error": state["err"], "time_of_sup": state["t_err"],
        "mass_relative_drift": float(abs(traj.diagnostics[-1]["mass"] / traj.diagnostics[0]["mass"] - 1.0)),
    }


def epsilon_sweep(cfg: dict, epsilons: list[float] | None = None, workers: int | None = None) -> dict:
    """Sup-in-time L2(dm) distance between the kinetic solution at each eps and
    the fast-diffusion solution from the same macroscopic data, plus a
    power-law fit error ~ eps^m.

    The comparison is made after every kinetic step; the fast-diffusion
    solver takes an integer number of substeps per kinetic step.
    """
    eps_list = list(epsilons if epsilons is not None else cfg["sweep"]["epsilons"])
    workers = workers if workers is not None else cfg["sweep"]["workers"]
    jobs = [(cfg, float(e)) for e in eps_list]
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_sweep_member, jobs))
    else:
        rows = [_sweep_member(j) for j in jobs]
    errs = [r["sup_error"] for r in rows]
    result: dict[str, Any] = {"beta": cfg["solver"]["beta"], "T": cfg["solver"]["t_final"], "rows": rows}
    if len(rows) >= 3 and all(e > 0 for e in errs):
        fit = fit_decay_rate(eps_list, errs, mode="power")
        result["fit"] = asdict(fit)
    ordered = sorted(rows, key=lambda r: -r["epsilon"])
    result["strictly_decreasing"] = all(a["sup_error"] > b["sup_error"] for a, b in zip(ordered, ordered[1:]))
    return result


def oracle_check(cfg: dict, dts: list[float] | None = None) -> dict:
    """Kolmogorov-mode solver against the exact Green-function propagation."""
    t = cfg["oracle"]["t"]
    dts = sorted(dts if dts is not None else cfg["oracle"]["dts"], reverse=True)
    scen = build_initial(cfg)
    f_in = scen.h_in.to_f()
    exact = oracle_solve(f_in, t)
    scale = float(np.max(np.abs(exact.values)))
    exact_h = exact.to_h()
    rows, sols = [], []
    for dt in dts:
        sc = solver_config(cfg, collision_mode="kolmogorov", t_final=t, dt=dt, epsilon=1.0, snapshot_stride=0)
        traj = simulate(sc, f_in, diagnostics=False)
        f = traj.final
        sols.append(f.values)
        err_inf = float(np.max(np.abs(f.values - exact.values)))
        l2 = lp_norm_dm(f.to_h(), exact_h, 2)
        l2_ref = lp_norm_dm(exact_h, 0.0, 2)
        rows.append({
            "dt": dt,
            "rel_linf": err_inf / scale if scale > 0 else err_inf,
            "rel_l2_dm": l2 / l2_ref if l2_ref > 0 else l2,
        })
    orders = []
    for a, b, c in zip(sols, sols[1:], sols[2:]):
        d1, d2 = np.max(np.abs(a - b)), np.max(np.abs(b - c))
        orders.append(float(np.log2(d1 / d2)) if d2 > 0 and d1 > 0 else float("nan"))
    return {"t": t, "rows": rows, "richardson_orders": orders}


def summarize_run(run_dir: str | Path) -> dict:
    """Collect the summary and a few derived numbers from a finished run."""
    d = Path(run_dir)
    if not (d / "summary.json").is_file():
        raise ConfigError("<run-dir>", f"{run_dir} has no summary.json")
    summary = json.loads((d / "summary.json").read_text())
    diag_path = d / "diagnostics.csv"
    if diag_path.is_file():
        data = np.genfromtxt(diag_path, delimiter=",", names=True, skip_header=1)
        data = np.atleast_1d(data)
        t, dist = data["time"], data["l2_dm_dist_to_M0"]
        ok = dist > 0
        if ok.sum() >= 3 and t[ok].max() > 1.0:
            try:
                summary["decay_fit_t_ge_1"] = asdict(fit_decay_rate(t[ok], dist[ok], (1.0, float(t.max()))))
            except ValueError:
                pass
        summary["n_diagnostic_rows"] = int(data.size)
    return summary
