"""Scenario runner: presets, INI configs, solves, sweeps and the rough-data study.

    surfstefan list-presets
    surfstefan run --preset one_phase_sphere --out runs/one
    surfstefan run --config my.ini --out runs/mine
    surfstefan sweep --preset one_phase_sphere --axis tau --values 8,16,32,64 --out runs/tau
    surfstefan rough-data --preset rough_sphere --out runs/rough
"""

import argparse
import configparser
from concurrent.futures import ProcessPoolExecutor
import csv
from dataclasses import dataclass, field, replace
import hashlib
import io
import logging
from pathlib import Path
import sys

import numpy as np

from . import geometry, solver, verify
from .enthalpy import EnthalpyRegularization, enthalpy_from_temperature
from .expressions import Expression, ExpressionError
from .spaces import SpaceTimeField, lpx_norm, operators, write_stfield

logger = logging.getLogger("surfstefan")

CHECKS = ("conservation", "linfty", "manufactured", "energy", "eps_convergence",
          "contraction", "shifted_contraction", "dual", "time_translate", "interface",
          "stefan", "weak_residual")


class ConfigError(ValueError):
    pass


@dataclass
class DataPreset:
    """Initial data as an enthalpy or a temperature expression, and a source expression."""
    e0: str = None
    u0: str = None
    f: str = "0"

    def initial_enthalpy(self, points):
        if self.e0 is not None:
            return Expression(self.e0)(0.0, points)
        # e0 = u0 for u0 <= 0, u0 + 1 for u0 > 0
        return enthalpy_from_temperature(Expression(self.u0)(0.0, points))


@dataclass
class ScenarioConfig:
    name: str = "custom"
    mesh: str = "icosphere"
    level: int = 3
    radius: float = 1.0
    velocity: str = "zero"
    velocity_params: dict = field(default_factory=dict)
    T: float = 0.5
    steps: int = 32
    epsilon: float = 0.05
    eps_list: list = field(default_factory=list)
    data: DataPreset = field(default_factory=DataPreset)
    pair: DataPreset = None
    exact: str = None
    exact_tolerance: float = 5e-3
    checks: list = field(default_factory=lambda: ["conservation", "linfty"])
    inner_scheme: str = "newton"
    newton_tol: float = 1e-10
    max_inner: int = 100
    linear_tol: float = 1e-11
    linear_method: str = "direct"
    clamp_levels: list = field(default_factory=lambda: [1, 2, 4, 8])
    seed: int = 0
    source_text: str = ""

    def options(self):
        return solver.SolverOptions(self.inner_scheme, self.newton_tol, self.max_inner,
                                    self.linear_tol, self.linear_method)


# --- presets -------------------------------------------------------------------

PRESETS = {
    "one_phase_sphere": """
        [scenario]
        description = liquid everywhere; exact solution 2 + exp(-2t) z on the unit sphere
        [mesh]
        level = 4
        [time]
        T = 0.5
        steps = 64
        [regularization]
        epsilon = 0.05
        sweep = 0.05, 0.025, 0.0125, 0.00625
        [data]
        u0 = 2 + z
        f = 0
        [exact]
        u = 2 + exp(-2*t)*z
        tolerance = 5e-3
        [checks]
        run = conservation, linfty, manufactured, energy, eps_convergence, time_translate, interface, weak_residual
        """,
    "freezing_sphere": """
        [scenario]
        description = two-phase start u0 = z - 0.5 on the unit sphere, solid front advancing
        [mesh]
        level = 3
        [time]
        T = 0.5
        steps = 32
        [regularization]
        epsilon = 0.05
        sweep = 0.2, 0.1, 0.05, 0.025
        [data]
        u0 = -0.5 + z
        f = 0
        [checks]
        run = conservation, linfty, energy, eps_convergence, time_translate, interface, stefan, dual
        """,
    "contraction_pair": """
        [scenario]
        description = freezing data against perturbed enthalpy and source
        [mesh]
        level = 3
        [time]
        T = 0.5
        steps = 32
        [regularization]
        epsilon = 0.05
        [data]
        u0 = -0.5 + z
        f = 0
        [pair]
        e0 = (z > 0.5)*(z + 0.5) + (z <= 0.5)*(z - 0.5) + 0.2*y
        f = 0.5*cos(pi*t)*x
        [checks]
        run = conservation, linfty, contraction, dual
        """,
    "shifted_pair": """
        [scenario]
        description = freezing data against the same data shifted by 0.1 in enthalpy
        [mesh]
        level = 3
        [time]
        T = 0.5
        steps = 32
        [regularization]
        epsilon = 0.05
        [data]
        u0 = -0.5 + z
        [pair]
        e0 = (z > 0.5)*(z + 0.5) + (z <= 0.5)*(z - 0.5) + 0.1
        [checks]
        run = conservation, linfty, shifted_contraction
        """,
    "expanding_sphere": """
        [scenario]
        description = freezing data on a sphere expanding with w = x
        [mesh]
        level = 3
        [velocity]
        preset = radial
        rate = 1.0
        [time]
        T = 0.5
        steps = 32
        [regularization]
        epsilon = 0.05
        [data]
        u0 = -0.5 + z
        f = 1
        [checks]
        run = conservation, linfty, interface
        """,
    "rotating_torus": """
        [scenario]
        description = melting band on a torus rotating about its axis
        [mesh]
        preset = torus
        level = 24
        [velocity]
        preset = rotation
        omega = 1.0
        [time]
        T = 0.5
        steps = 32
        [regularization]
        epsilon = 0.05
        [data]
        u0 = x - 0.6
        f = 0.5
        [checks]
        run = conservation, linfty, interface
        """,
    "rough_sphere": """
        [scenario]
        description = enthalpy with a jump and a singular tail above a latitude, spiky source
        [mesh]
        level = 3
        [time]
        T = 0.25
        steps = 16
        [regularization]
        epsilon = 0.05
        [data]
        e0 = (z > 0.3)*(0.5 + 0.5/sqrt(abs(z - 0.3) + 0.002)) - (z <= 0.3)*0.5
        f = 0.3/((x - 1)^2 + y^2 + z^2 + 0.005)
        [rough]
        clamp_levels = 1, 2, 4, 8
        [checks]
        run = conservation, linfty
        """,
}


def _floats(text):
    return [float(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _ints(text):
    return [int(x) for x in text.replace(";", ",").split(",") if x.strip()]


def _data_section(parser, section):
    if not parser.has_section(section):
        return None
    s = parser[section]
    e0, u0 = s.get("e0"), s.get("u0")
    if (e0 is None) == (u0 is None):
        raise ConfigError(f"[{section}] needs exactly one of e0 or u0")
    data = DataPreset(e0=e0, u0=u0, f=s.get("f", "0"))
    for key, text in (("e0", e0), ("u0", u0), ("f", data.f)):
        if text is not None:
            try:
                Expression(text)
            except ExpressionError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
    return data


def _field(section, key, conv, default):
    try:
        return conv(section[key]) if key in section else default
    except ValueError as exc:
        raise ConfigError(f"[{section.name}] {key} = {section[key]!r}: {exc}") from None


def parse_config(text, name="custom"):
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from None
    cfg = ScenarioConfig(name=name, source_text=text)
    if parser.has_section("mesh"):
        mesh = parser["mesh"]
        cfg.mesh = mesh.get("preset", cfg.mesh)
        cfg.level = _field(mesh, "level", int, cfg.level)
        cfg.radius = _field(mesh, "radius", float, cfg.radius)
    if parser.has_section("velocity"):
        vel = parser["velocity"]
        cfg.velocity = vel.get("preset", "zero")
        cfg.velocity_params = {k: (v if k in ("wx", "wy", "wz") else float(v))
                               for k, v in vel.items() if k != "preset"}
    if parser.has_section("time"):
        cfg.T = _field(parser["time"], "T", float, cfg.T)
        cfg.steps = _field(parser["time"], "steps", int, cfg.steps)
    if parser.has_section("regularization"):
        reg = parser["regularization"]
        cfg.epsilon = _field(reg, "epsilon", float, cfg.epsilon)
        cfg.eps_list = _field(reg, "sweep", _floats, cfg.eps_list)
    cfg.data = _data_section(parser, "data") or DataPreset(e0="0")
    cfg.pair = _data_section(parser, "pair")
    if parser.has_section("exact"):
        cfg.exact = parser["exact"].get("u")
        cfg.exact_tolerance = _field(parser["exact"], "tolerance", float, cfg.exact_tolerance)
    if parser.has_section("checks"):
        cfg.checks = [c.strip() for c in parser["checks"].get("run", "").split(",") if c.strip()]
    if parser.has_section("solver"):
        s = parser["solver"]
        cfg.inner_scheme = s.get("inner_scheme", cfg.inner_scheme)
        cfg.newton_tol = _field(s, "newton_tol", float, cfg.newton_tol)
        cfg.max_inner = _field(s, "max_inner", int, cfg.max_inner)
        cfg.linear_tol = _field(s, "linear_tol", float, cfg.linear_tol)
        cfg.linear_method = s.get("linear_method", cfg.linear_method)
    if parser.has_section("rough"):
        cfg.clamp_levels = _field(parser["rough"], "clamp_levels", _ints, cfg.clamp_levels)
    validate_config(cfg)
    return cfg


def validate_config(cfg):
    if not cfg.T > 0:
        raise ConfigError("[time] T must be positive")
    if cfg.steps < 1:
        raise ConfigError("[time] steps must be at least 1")
    if not cfg.epsilon > 0 or any(e <= 0 for e in cfg.eps_list):
        raise ConfigError("[regularization] epsilon values must be positive")
    unknown = [c for c in cfg.checks if c not in CHECKS]
    if unknown:
        raise ConfigError(f"[checks] unknown checks {unknown}; available: {list(CHECKS)}")
    if cfg.mesh not in ("icosphere", "torus") and not cfg.mesh.endswith(".off"):
        raise ConfigError(f"[mesh] preset {cfg.mesh!r}: use icosphere, torus or a .off path")
    if cfg.velocity not in geometry.VELOCITY_PRESETS:
        raise ConfigError(f"[velocity] preset {cfg.velocity!r}; choose from "
                          f"{sorted(geometry.VELOCITY_PRESETS)}")
    try:
        cfg.options()
    except ValueError as exc:
        raise ConfigError(f"[solver] {exc}") from None


def load_preset(name):
    try:
        text = PRESETS[name]
    except KeyError:
        raise ConfigError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return parse_config("\n".join(line.strip() for line in text.splitlines()), name)


def load_config(path):
    path = Path(path)
    return parse_config(path.read_text(), path.stem)


# --- building problems ----------------------------------------------------------

def build_mesh(cfg):
    if cfg.mesh == "icosphere":
        return geometry.icosphere(cfg.level, cfg.radius)
    if cfg.mesh == "torus":
        return geometry.torus(cfg.level, max(3, cfg.level // 2))
    return geometry.read_off(cfg.mesh)


def build_trajectory(cfg):
    mesh = build_mesh(cfg)
    grid = geometry.uniform_time_grid(cfg.T, cfg.steps)
    if cfg.velocity == "zero":
        return geometry.FlowTrajectory.stationary(mesh, grid)
    w = geometry.make_velocity(cfg.velocity, **cfg.velocity_params)
    return geometry.advect_mesh(mesh, w, grid)


def build_spec(cfg, traj, data=None, epsilon=None):
    data = data or cfg.data
    f = SpaceTimeField.from_function(traj, Expression(data.f))
    e0 = data.initial_enthalpy(traj.reference.vertices)
    return solver.StefanProblemSpec(traj, f, e0, EnthalpyRegularization(epsilon or cfg.epsilon))


def _test_fields(traj, rng, count=4):
    """Smooth random test fields built from low spherical harmonics, vanishing at T."""
    fields = []
    t = traj.time_grid
    for _ in range(count):
        c = rng.normal(size=4)
        vals = np.array([(c[0] + c[1] * m.vertices[:, 0] + c[2] * m.vertices[:, 1]
                          + c[3] * m.vertices[:, 2]) for m in traj.meshes])
        fields.append(vals * (1.0 - t / t[-1])[:, None])
    return fields


# --- run -------------------------------------------------------------------------

@dataclass
class RunResult:
    config: ScenarioConfig
    solution: solver.SolutionTrajectory
    reports: list
    pair_solution: solver.SolutionTrajectory = None

    @property
    def failed(self):
        return verify.any_asserted_failure(self.reports)


def _dual_from_pair(sol1, sol2, eps, rng, samples=20):
    coef = solver.contraction_coefficient(sol1, sol2)
    a_eps, dist = solver.mollify_coefficient(coef, eps)
    traj = sol1.trajectory
    reports = []
    for _ in range(samples):
        xi = rng.uniform(-1.0, 1.0, traj.n_vertices)
        out = solver.solve_dual_backward(
            solver.DualProblemSpec(traj, traj.n_nodes - 1, xi, a_eps, eps))
        reports.append(verify.check_dual_estimates(out))
    worst = min(reports, key=lambda r: (r.passed, r.slack))
    worst.details["mollifier_distance"] = dist
    return worst


def run_checks(cfg, traj, spec, sol, rng, pair_sol=None):
    reports = []
    wanted = set(cfg.checks)
    if "conservation" in wanted:
        reports.append(verify.check_conservation(sol))
    if "linfty" in wanted:
        reports.append(verify.check_linfty_bound(sol, spec))
    if "manufactured" in wanted:
        if cfg.exact is None:
            raise ConfigError("[checks] manufactured needs an [exact] section")
        exact = SpaceTimeField.from_function(traj, Expression(cfg.exact))
        reports.append(verify.check_manufactured_error(sol, exact, cfg.exact_tolerance))
    if "energy" in wanted or "eps_convergence" in wanted:
        eps_list = cfg.eps_list or [cfg.epsilon * 2.0**-j for j in range(4)]
        rep = verify.check_eps_convergence(lambda e: build_spec(cfg, traj, epsilon=e),
                                           eps_list, cfg.options())
        sols = rep.details.pop("solutions")
        if "eps_convergence" in wanted:
            reports.append(rep)
        if "energy" in wanted:
            reports.append(verify.check_energy_bound(sols))
    if pair_sol is not None:
        if "contraction" in wanted:
            reports.append(verify.check_l1_contraction(sol, pair_sol))
        if "shifted_contraction" in wanted:
            reports.append(verify.check_shifted_contraction(sol, pair_sol))
    if "dual" in wanted:
        other = pair_sol
        if other is None:
            # compare against the solution with the enthalpy lowered by 0.1
            shifted = replace(spec, e0=spec.e0 - 0.1)
            other = solver.solve_stefan(shifted, cfg.options())
        reports.append(_dual_from_pair(sol, other, cfg.epsilon, rng))
    if "time_translate" in wanted:
        # keep at least half of the interval inside the translate window
        shifts = [s for s in (8, 4, 2, 1) if 2 * s <= traj.n_nodes - 1]
        reports.append(verify.check_time_translate(sol, shifts))
    if "stefan" in wanted:
        k = traj.n_nodes // 2
        reports.append(verify.check_stefan_condition(sol, min(k, traj.n_nodes - 2)))
    if "weak_residual" in wanted:
        tests = _test_fields(traj, rng)
        res = solver.weak_residual(sol, spec, tests)
        scale = max(np.abs(sol.e.values).max(), 1.0) * traj.reference.total_area()
        reports.append(verify.EstimateReport("weak_residual", res, 1e-8 * scale))
    return reports


def _manifest(cfg, sol, reports, extra):
    buf = io.StringIO()
    digest = hashlib.sha256(cfg.source_text.encode()).hexdigest()
    buf.write(f"scenario = {cfg.name}\nconfig_sha256 = {digest}\n")
    buf.write(f"options = {cfg.options()}\n")
    if cfg.data.u0 is not None:
        buf.write("initial_enthalpy = u0 for u0 <= 0, u0 + 1 for u0 > 0\n")
    for k, v in extra.items():
        buf.write(f"{k} = {v}\n")
    buf.write("\n[config]\n" + cfg.source_text.strip() + "\n\n[steps]\n")
    buf.write("step,time,inner_iters,residual\n")
    for d in sol.diagnostics:
        buf.write(f"{d.step},{d.time!r},{d.inner_iters},{d.residual!r}\n")
    buf.write("\n[reports]\n")
    for r in reports:
        buf.write(r.summary() + "\n")
    return buf.getvalue()


def run(cfg, out=None, seed=None):
    """Solve one scenario, run its checks and write artifacts to ``out``."""
    rng = np.random.default_rng(cfg.seed if seed is None else seed)
    traj = build_trajectory(cfg)
    spec = build_spec(cfg, traj)
    sol = solver.solve_stefan(spec, cfg.options())
    pair_sol = None
    if cfg.pair is not None:
        pair_sol = solver.solve_stefan(build_spec(cfg, traj, cfg.pair), cfg.options())
    reports = run_checks(cfg, traj, spec, sol, rng, pair_sol)
    if pair_sol is not None:
        # the companion solve has to satisfy the same balance and bound
        for check, fn in (("conservation", lambda s: verify.check_conservation(s)),
                          ("linfty", lambda s: verify.check_linfty_bound(s, s.spec))):
            if check in cfg.checks:
                rep = fn(pair_sol)
                rep.name += "_pair"
                reports.append(rep)
    curves = [verify.extract_interface(sol, k) for k in range(traj.n_nodes)] \
        if "interface" in cfg.checks else []
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        sol.write_ledger(out / "ledger.csv")
        verify.write_reports(reports, out / "reports.csv")
        write_stfield(sol.u, out / "u.stfield")
        write_stfield(sol.e, out / "e.stfield")
        if curves:
            verify.write_interface(curves, out / "interface.csv")
        extra = {"vertices": traj.n_vertices, "mesh_size": traj.reference.mesh_size(),
                 "max_divergence": traj.max_divergence()}
        (out / "manifest.txt").write_text(_manifest(cfg, sol, reports, extra))
    return RunResult(cfg, sol, reports, pair_sol)


# --- sweep -----------------------------------------------------------------------

def _sweep_member(args):
    cfg, axis, value, steps = args
    if axis == "h":
        cfg = replace(cfg, level=int(value), steps=steps)
    elif axis == "tau":
        cfg = replace(cfg, steps=int(value))
    else:
        cfg = replace(cfg, epsilon=float(value))
    traj = build_trajectory(cfg)
    sol = solver.solve_stefan(build_spec(cfg, traj), cfg.options())
    err = None
    if cfg.exact is not None:
        exact = SpaceTimeField.from_function(traj, Expression(cfg.exact))
        err = lpx_norm(sol.u.like(sol.u.values - exact.values), 2, 2)
    size = {"h": traj.reference.mesh_size(), "tau": cfg.T / cfg.steps, "eps": cfg.epsilon}[axis]
    return size, err, sol.u.values


def _scaled_steps(cfg, level):
    """Step count keeping tau / h^2 fixed relative to the configured level (each level halves h)."""
    return max(1, int(round(cfg.steps * 4.0 ** (level - cfg.level))))


def sweep(cfg, axis, values, out=None, threads=1, tau_scaling="h2"):
    """Convergence table over one discretization axis.

    For ``axis="h"`` the configured step count applies at the configured
    level and is multiplied by 4 per refinement (tau proportional to h^2)
    unless ``tau_scaling="fixed"``.  Errors are L2L2 distances to the exact solution
    when one is configured.  Without one only the eps axis is allowed, and
    the table holds L1L1 Cauchy distances between consecutive values.
    """
    if len(values) < 3:
        raise ValueError("a sweep needs at least three values")
    if axis not in ("h", "tau", "eps"):
        raise ValueError(f"unknown sweep axis {axis!r}")
    steps = [_scaled_steps(cfg, int(v)) if axis == "h" and tau_scaling == "h2" else cfg.steps
             for v in values]
    jobs = [(cfg, axis, v, s) for v, s in zip(values, steps)]
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_sweep_member, jobs))
    else:
        results = [_sweep_member(j) for j in jobs]
    sizes = np.array([r[0] for r in results])
    if cfg.exact is not None:
        errors = np.array([r[1] for r in results])
    else:
        if axis != "eps":
            raise ConfigError("sweeps over h or tau need an [exact] solution")
        traj = build_trajectory(cfg)
        errors = np.array([lpx_norm(SpaceTimeField(a[2] - b[2], traj), 1, 1)
                           for a, b in zip(results, results[1:])])
        sizes = sizes[:-1]
    rates = [np.nan] + [float(np.log(errors[i] / errors[i + 1]) / np.log(sizes[i] / sizes[i + 1]))
                        for i in range(len(errors) - 1)]
    rows = [(values[i], float(errors[i]), rates[i]) for i in range(len(errors))]
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / f"sweep_{axis}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["value", "error_or_distance", "rate"])
            for v, e, r in rows:
                w.writerow([v, repr(e), "" if np.isnan(r) else repr(r)])
    return rows


# --- rough data --------------------------------------------------------------------

@dataclass
class RoughDataResult:
    levels: list
    distances: list
    bounds: list
    report: verify.EstimateReport


def rough_data_study(cfg, out=None, rel=0.05, c_h=1.0):
    """Clamp rough data at increasing levels and compare consecutive solutions.

    For clamp levels n < m the enthalpy distance in L1L1 must stay below
    T (||f_n - f_m||_{L1L1} + ||e0_n - e0_m||_{L1}) up to the relative
    factor and an O(h) allowance.
    """
    levels = sorted(cfg.clamp_levels)
    if len(levels) < 2:
        raise ValueError("need at least two clamp levels")
    traj = build_trajectory(cfg)
    base = build_spec(cfg, traj)
    ml0 = operators(traj).lumped(0)
    sols, data = [], []
    for n in levels:
        f = base.f.like(np.clip(base.f.values, -n, n))
        e0 = np.clip(base.e0, -n, n)
        spec = solver.StefanProblemSpec(traj, f, e0, base.reg)
        sols.append(solver.solve_stefan(spec, cfg.options()))
        data.append((f, e0))
    h = traj.reference.mesh_size()
    dist, bound = [], []
    for (s1, (f1, e1)), (s2, (f2, e2)) in zip(zip(sols, data), zip(sols[1:], data[1:])):
        dist.append(lpx_norm(s1.e.like(s1.e.values - s2.e.values), 1, 1))
        bound.append(traj.final_time * (lpx_norm(f1.like(f1.values - f2.values), 1, 1)
                                        + float(ml0 @ np.abs(e1 - e2))))
    dist, bound = np.array(dist), np.array(bound)
    margin = bound * (1.0 + rel) + c_h * h - dist
    k = int(np.argmin(margin))
    report = verify.EstimateReport(
        "rough_data_cauchy", float(dist[k]), float(bound[k] * (1.0 + rel) + c_h * h),
        conditions={"cauchy_monotone": verify._decreasing(dist)},
        history=list(zip(dist.tolist(), bound.tolist())))
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "rough_data.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["level_low", "level_high", "distance", "bound"])
            for (a, b), d, bd in zip(zip(levels, levels[1:]), dist, bound):
                w.writerow([a, b, repr(float(d)), repr(float(bd))])
        verify.write_reports([report], out / "reports.csv")
    return RoughDataResult(levels, dist.tolist(), bound.tolist(), report)


# --- entry point -----------------------------------------------------------------

def _config_from_args(args):
    if args.config and args.preset:
        raise ConfigError("give either --config or --preset, not both")
    if args.config:
        return load_config(args.config)
    return load_preset(args.preset or "one_phase_sphere")


def build_parser():
    p = argparse.ArgumentParser(prog="surfstefan", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="verb", required=True)
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI scenario file")
    common.add_argument("--preset", help="built-in scenario name")
    common.add_argument("--out", help="output directory")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--seed", type=int, default=None, help="seed for random test fields")
    sub.add_parser("list-presets")
    sub.add_parser("run", parents=[common])
    sw = sub.add_parser("sweep", parents=[common])
    sw.add_argument("--axis", choices=("h", "tau", "eps"), required=True)
    sw.add_argument("--values", required=True, help="comma separated levels, step counts or eps")
    sw.add_argument("--tau-scaling", choices=("h2", "fixed"), default="h2")
    sub.add_parser("rough-data", parents=[common])
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.verb == "list-presets":
            for name in sorted(PRESETS):
                cfg = load_preset(name)
                desc = configparser.ConfigParser()
                desc.read_string(cfg.source_text)
                print(f"{name:20s} {desc.get('scenario', 'description', fallback='')}")
            return 0
        cfg = _config_from_args(args)
        if args.verb == "run":
            result = run(cfg, args.out, args.seed)
            for r in result.reports:
                print(r.summary())
            return 1 if result.failed else 0
        if args.verb == "sweep":
            values = _floats(args.values) if args.axis == "eps" else _ints(args.values)
            rows = sweep(cfg, args.axis, values, args.out, args.threads, args.tau_scaling)
            print("value,error_or_distance,rate")
            for v, e, r in rows:
                print(f"{v},{e:.6e},{'' if np.isnan(r) else f'{r:.3f}'}")
            return 0
        if args.verb == "rough-data":
            res = rough_data_study(cfg, args.out)
            print(res.report.summary())
            return 1 if not res.report.passed else 0
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0
