"""Experiment configuration, the end-to-end run, reports and plot data.

A run builds the systems and certificates, tests the small-gain
condition, simulates, checks every requested property and optionally
writes CSV time series and a JSON report to ``output_dir``. Everything in
the report is a deterministic function of the configuration; wall-clock
time is only logged.
"""

from __future__ import annotations

import copy
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import comparison as cf
from . import examples as ex
from .certify import (
    LyapunovFunctional,
    V_series,
    check_dissipation,
    default_tol,
    monotonicity_violations,
)
from .comparison import ComparisonClassError
from .errors import BlowUpError
from .expr import field_function, parse_number
from .field import BC, NormSpec, norm_array, random_bandlimited, sine_modes
from .oracles import run_suite
from .pde import SystemSpec, simulate, simulate_interconnection

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

log = logging.getLogger(__name__)

EXAMPLES = {"example1": 1, "example2": 2}
EXAMPLE_CHECKS = (
    "small_gain",
    "alpsig",
    "dissipation_x1",
    "dissipation_x2",
    "composite_monotone",
    "composite_closed_form",
    "decay",
)
CUSTOM_CHECKS = ("oracles", "monotone_V", "monotone_L2", "decay", "growth")
CLOSED_FORM_RTOL = 1e-7
COMPOSITE_MONOTONE_RTOL = 1e-7
PASS, FAIL, BLOWUP = "pass", "fail", "blowup"
EXIT_OK, EXIT_USAGE, EXIT_FAILED, EXIT_BLOWUP = 0, 1, 2, 3


class ConfigError(ValueError):
    """The experiment configuration is malformed."""


# ---------------------------------------------------------------------------
# Configuration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs.

    ``params`` holds ``a``, ``b``, ``omega``, ``c_sg`` for the two examples
    and ``c_diff``, ``reaction``, ``bc`` plus any named constants for a
    custom single system.
    """

    experiment: str
    params: dict = field(default_factory=dict)
    N: int = 256
    L: float = math.pi
    dt: float = 1e-3
    T: float = 1.0
    record_stride: int = 1
    initial: dict = field(default_factory=dict)
    checks: tuple = ()
    output_dir: str | None = None
    snapshots: int = 0

    def __post_init__(self):
        if self.experiment not in EXAMPLES and self.experiment != "custom":
            raise ConfigError(f"unknown experiment {self.experiment!r}")
        if self.N < 8:
            raise ConfigError("grid.N must be at least 8")
        if not (self.dt > 0 and self.T > 0):
            raise ConfigError("time.dt and time.T must be positive")
        if self.record_stride < 1:
            raise ConfigError("time.record_stride must be a positive integer")
        if abs(round(self.T / self.dt) * self.dt - self.T) > 1e-9 * self.T:
            raise ConfigError("time.T must be a whole number of steps")
        if self.is_example and abs(self.L - math.pi) > 1e-12:
            raise ConfigError("the examples live on (0, pi); grid.L cannot be changed")
        allowed = EXAMPLE_CHECKS if self.is_example else CUSTOM_CHECKS
        unknown = [c for c in self.checks if c not in allowed]
        if unknown:
            raise ConfigError(f"unknown checks for {self.experiment}: {unknown}; "
                              f"known: {list(allowed)}")
        if len(set(self.checks)) != len(self.checks):
            raise ConfigError("checks must not repeat")
        if self.is_example:
            for key in ("a", "b"):
                if key not in self.params:
                    raise ConfigError(f"params.{key} is required for {self.experiment}")

    @property
    def is_example(self):
        return self.experiment in EXAMPLES

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    @classmethod
    def from_dict(cls, raw, base_dir=None):
        raw = copy.deepcopy(raw)
        try:
            experiment = raw.pop("experiment")
        except KeyError:
            raise ConfigError("missing key 'experiment'") from None
        grid = raw.pop("grid", {})
        tm = raw.pop("time", {})
        params = {k: _param_value(k, v) for k, v in raw.pop("params", {}).items()}
        initial = raw.pop("initial", {})
        default_checks = EXAMPLE_CHECKS if experiment in EXAMPLES else ("monotone_V", "monotone_L2")
        checks = tuple(raw.pop("checks", default_checks))
        out = raw.pop("output_dir", None)
        if out is not None and base_dir is not None and not Path(out).is_absolute():
            out = str(Path(base_dir) / out)
        snapshots = int(raw.pop("snapshots", 0))
        if raw:
            raise ConfigError(f"unknown top-level keys: {sorted(raw)}")
        try:
            return cls(
                experiment=experiment,
                params=params,
                N=int(grid.get("N", 256)),
                L=parse_number(grid.get("L", math.pi)),
                dt=parse_number(tm.get("dt", 1e-3)),
                T=parse_number(tm.get("T", 1.0)),
                record_stride=int(tm.get("record_stride", 1)),
                initial=dict(initial),
                checks=checks,
                output_dir=out,
                snapshots=snapshots,
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, path):
        path = Path(path)
        try:
            raw = tomllib.loads(path.read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from exc
        return cls.from_dict(raw, base_dir=path.parent)

    def replace(self, **changes):
        merged = {f: getattr(self, f) for f in self.__dataclass_fields__}
        merged.update(changes)
        return ExperimentConfig(**merged)

    def with_value(self, name, value):
        """Copy with one parameter (``params`` key, ``N``, ``dt``, ``T``) changed."""
        if name in ("N", "record_stride"):
            return self.replace(**{name: int(round(value))})
        if name in ("dt", "T"):
            return self.replace(**{name: float(value)})
        params = dict(self.params)
        params[name] = float(value)
        return self.replace(params=params)


def _param_value(key, value):
    if key in ("reaction", "bc"):
        return str(value)
    try:
        return parse_number(value)
    except ValueError as exc:
        raise ConfigError(f"params.{key}: {exc}") from exc


# ---------------------------------------------------------------------------
# Report
# ---------------------------------------------------------------------------

@dataclass
class Report:
    experiment: str
    params: dict
    checks: list
    small_gain: dict | None = None
    composite_violations: int | None = None
    norm_ratio: float | None = None
    blowup_time: float | None = None
    runtime: dict = field(default_factory=dict)

    @property
    def status(self):
        if self.blowup_time is not None:
            return BLOWUP
        return PASS if all(c["status"] == PASS for c in self.checks) else FAIL

    @property
    def exit_code(self):
        return {PASS: EXIT_OK, FAIL: EXIT_FAILED, BLOWUP: EXIT_BLOWUP}[self.status]

    def check(self, name):
        for c in self.checks:
            if c["check"] == name:
                return c
        raise KeyError(name)

    def to_dict(self):
        return {
            "experiment": self.experiment,
            "status": self.status,
            "params": self.params,
            "checks": self.checks,
            "small_gain": self.small_gain,
            "composite_violations": self.composite_violations,
            "norm_ratio": self.norm_ratio,
            "blowup_time": self.blowup_time,
            "runtime": self.runtime,
        }

    def to_json(self):
        return json.dumps(jsonable(self.to_dict()), indent=2, sort_keys=True)


def jsonable(obj):
    if isinstance(obj, dict):
        return {k: jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else repr(v)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _status(ok):
    return PASS if ok else FAIL


# ---------------------------------------------------------------------------
# Plot data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Functionals:
    """What to tabulate per recorded time: one norm and one functional per state."""

    norms: tuple
    lyapunov: tuple
    weights: cf.LambdaWeights | None = None


def _fmt(v):
    return f"{float(v):.17g}"


def _write_rows(path, header, rows):
    lines = [",".join(header)] + [",".join(_fmt(v) for v in row) for row in rows]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc
    return path


def timeseries(traj, functionals, stride=1):
    """Columns of the plot table as ``(header, 2-D array)``."""
    idx = np.arange(0, len(traj), stride)
    cols = [traj.times[idx]]
    header = ["t"]
    n = traj.n_systems
    for i in range(n):
        cols.append(norm_array(traj.states[i][idx], traj.h, functionals.norms[i], traj.bcs[i]))
        header.append(f"norm_x{i + 1}")
    vs = []
    for i in range(n):
        vs.append(functionals.lyapunov[i].values_array(traj.states[i][idx], traj.h, traj.bcs[i]))
        header.append(f"V{i + 1}")
    cols += vs
    if n == 2 and functionals.weights is not None:
        cols.append(cf.composite_V_series(functionals.weights, vs[0], vs[1]))
        header.append("V_composite")
    return header, np.column_stack(cols)


def emit_plotdata(traj, functionals, path, stride=1, violations=None, snapshots=0):
    """Write ``timeseries.csv``, one violation file per check and optional snapshots.

    Returns the list of written paths.
    """
    out = Path(path)
    header, table = timeseries(traj, functionals, stride)
    written = [_write_rows(out / "timeseries.csv", header, table)]
    for name, rows in sorted((violations or {}).items()):
        written.append(_write_rows(out / f"violations_{name}.csv", ["t", "lhs", "rhs"], rows))
    if snapshots > 0:
        idx = np.unique(np.linspace(0, len(traj) - 1, snapshots).round().astype(int))
        for k in idx:
            for i in range(traj.n_systems):
                p = out / "snapshots" / f"x{i + 1}_{k:07d}.csv"
                try:
                    p.parent.mkdir(parents=True, exist_ok=True)
                except OSError as exc:
                    raise OSError(f"cannot create {p.parent}: {exc}") from exc
                traj.state(k, i).to_csv(p)
                written.append(p)
    return written


# ---------------------------------------------------------------------------
# Runs
# ---------------------------------------------------------------------------

def _initial_states(config, n_states):
    spec = config.initial
    family = spec.get("family", "sine_modes")
    keys = ("x1", "x2") if n_states == 2 else ("x1",)
    if family == "sine_modes":
        defaults = {"x1": [[1, 1.0]], "x2": [[2, 0.5]]}
        bc = _custom_bc(config) if not config.is_example else None
        states = []
        for key in keys:
            fallback = spec.get("x", defaults[key]) if key == "x1" else defaults[key]
            modes = spec.get(key, fallback)
            modes = [(int(n), parse_number(amp)) for n, amp in modes]
            if config.is_example:
                states.append(ex.initial_state("sine_modes", config.N, modes=modes))
            else:
                states.append(sine_modes(config.L, config.N, modes, bc))
        return states
    if family == "random_bandlimited":
        rng = np.random.default_rng(int(spec.get("seed", 0)))
        cutoff = int(spec.get("cutoff", 4))
        defaults = {"x1": 1.0, "x2": 0.2}
        states = []
        for key in keys:
            amp = parse_number(spec.get(f"amplitude_{key}", spec.get("amplitude", defaults[key])))
            bc = BC.parse("DirichletZero") if config.is_example else _custom_bc(config)
            states.append(random_bandlimited(config.L, config.N, cutoff, amp, rng, bc))
        return states
    raise ConfigError(f"unknown initial-condition family {family!r}")


def _custom_bc(config):
    try:
        return BC.parse(config.params.get("bc", "DirichletZero"))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def run(config):
    """Execute one experiment and return its :class:`Report`."""
    if config.is_example:
        report, traj, functionals, violations = _run_example(config)
    else:
        report, traj, functionals, violations = _run_custom(config)
    if config.output_dir is not None:
        out = Path(config.output_dir)
        if traj is not None:
            emit_plotdata(traj, functionals, out, config.record_stride, violations,
                          config.snapshots)
        try:
            out.mkdir(parents=True, exist_ok=True)
            (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write {out / 'report.json'}: {exc}") from exc
    return report


def _runtime(config, traj):
    return {
        "N": config.N,
        "dt": config.dt,
        "T": config.T,
        "n_steps": config.n_steps,
        "substeps": traj.substeps if traj is not None else None,
        "record_stride": config.record_stride,
        "records": int(math.ceil(len(traj) / config.record_stride)) if traj is not None else 0,
    }


def _run_example(config):
    example = EXAMPLES[config.experiment]
    p = config.params
    a, b = float(p["a"]), float(p["b"])
    if not a < 1:
        log.warning("a = %g is outside the region a < 1 where the certificates apply", a)
    if b < 0:
        log.warning("b = %g is negative; the certificates assume b >= 0", b)
    omega = float(p["omega"]) if "omega" in p else ex.default_omega(a, b)
    c_sg = float(p["c_sg"]) if "c_sg" in p else ex.default_c_sg(b, omega)
    resolved = {"a": a, "b": b, "omega": omega, "c_sg": c_sg}

    checks = {}
    try:
        setup = ex.setup(example, a, b, omega, c_sg)
        invalid = None
    except (ComparisonClassError, ValueError) as exc:
        setup, invalid = None, str(exc)
        log.warning("certificates unavailable: %s", exc)

    small_gain = None
    weights = None
    if setup is not None:
        sg = cf.check_small_gain(setup.chain, cf.log_grid())
        small_gain = dict(sg.to_dict(), exists_c=ex.small_gain_exists(example, a, b, omega),
                          closed_form=ex.closed_form_criterion(a, b, omega))
        if sg.holds:
            psi = cf.select_psi(c_sg)
            resolved["psi"] = psi
            weights = cf.build_lambda(setup.cert1, setup.cert2, psi)
        checks["small_gain"] = {"status": _status(sg.holds), "worst_ratio": sg.worst_ratio,
                                "worst_s": sg.worst_s}
        checks["alpsig"] = {"status": _status(cf.check_alpsig(setup.cert1, setup.cert2))}
    else:
        small_gain = {"holds": False, "reason": invalid,
                      "closed_form": ex.closed_form_criterion(a, b, omega)}
        for name in ("small_gain", "alpsig"):
            checks[name] = {"status": FAIL, "reason": invalid}

    x10, x20 = _initial_states(config, 2)
    ic = setup.ic if setup is not None else ex.interconnection(example, a, b)
    blowup = None
    try:
        traj = simulate_interconnection(ic, x10, x20, config.T, config.dt)
    except BlowUpError as exc:
        traj, blowup = exc.trajectory, exc.time

    x1_norm = ex.x1_system(example).state_norm
    x2_norm = NormSpec.h10()
    norms_x1 = norm_array(traj.states[0], traj.h, x1_norm, traj.bcs[0])
    norms_x2 = norm_array(traj.states[1], traj.h, x2_norm, traj.bcs[1])
    prod = norms_x1 + norms_x2
    ratio = float(prod[-1] / prod[0]) if prod[0] > 0 else 0.0

    violations = {}
    composite_violations = None
    if setup is not None:
        for i, cert in ((0, setup.cert1), (1, setup.cert2)):
            rep = check_dissipation(cert, traj, inputs=traj.states[1 - i], component=i,
                                    input_bc=traj.bcs[1 - i])
            checks[f"dissipation_x{i + 1}"] = rep.to_dict()
            violations[f"dissipation_x{i + 1}"] = rep.violations
    no_weights = invalid or "small-gain condition fails; no composite function"
    if weights is not None:
        idx = np.arange(0, len(traj), config.record_stride)
        v1 = V_series(setup.cert1.V, traj, 0)[idx]
        v2 = V_series(setup.cert2.V, traj, 1)[idx]
        vc = cf.composite_V_series(weights, v1, v2)
        tol = COMPOSITE_MONOTONE_RTOL * vc[:-1]
        inc = np.diff(vc)
        bad = [(float(traj.times[idx][j]), float(inc[j]), float(tol[j]))
               for j in np.nonzero(inc > tol)[0]]
        composite_violations = len(bad)
        violations["composite_monotone"] = bad
        checks["composite_monotone"] = {"status": _status(not bad), "n_violations": len(bad)}
        if psi == 0.0:
            closed = np.array([ex.composite_closed_form(example, omega, s, t)
                               for s, t in zip(v1, v2)])
            rel = np.abs(vc - closed) / np.maximum(np.abs(closed), 1e-300)
            rel = np.where((vc == 0) & (closed == 0), 0.0, rel)
            worst = float(np.max(rel))
            checks["composite_closed_form"] = {"status": _status(worst <= CLOSED_FORM_RTOL),
                                               "worst_rel_error": worst}
        else:
            checks["composite_closed_form"] = {"status": FAIL,
                                               "reason": "closed form needs psi = 0 (c_sg > 2)"}
    else:
        for name in ("composite_monotone", "composite_closed_form"):
            checks[name] = {"status": FAIL, "reason": no_weights}
    if setup is None:
        for name in ("dissipation_x1", "dissipation_x2"):
            checks[name] = {"status": FAIL, "reason": invalid}

    threshold = float(p.get("decay_ratio", 0.01))
    checks["decay"] = {"status": _status(blowup is None and ratio < threshold),
                       "norm_ratio": ratio, "threshold": threshold}

    report = Report(
        experiment=config.experiment,
        params=resolved,
        checks=[dict(checks[name], check=name) for name in config.checks],
        small_gain=small_gain,
        composite_violations=composite_violations,
        norm_ratio=ratio,
        blowup_time=blowup,
        runtime=_runtime(config, traj),
    )
    lyap = (ex.x1_certificate(example).V, LyapunovFunctional.power_sobolev(1, ex.L))
    functionals = Functionals((x1_norm, x2_norm), lyap, weights)
    return report, traj, functionals, violations


def _run_custom(config):
    p = dict(config.params)
    c_diff = float(p.pop("c_diff", 1.0))
    expr = p.pop("reaction", "u")
    bc = _custom_bc(config)
    p.pop("bc", None)
    names = {k: float(v) for k, v in p.items()}
    try:
        reaction = field_function(expr, names)
        spec = SystemSpec(c_diff, reaction, bc, config.L, name="custom")
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    (x0,) = _initial_states(config, 1)
    blowup = None
    try:
        traj = simulate(spec, x0, None, config.T, config.dt)
    except BlowUpError as exc:
        traj, blowup = exc.trajectory, exc.time

    h, dt = traj.h, traj.dt
    checks = {}
    energy = LyapunovFunctional.power_sobolev(1, config.L)
    l2 = norm_array(traj.states[0], h, NormSpec.lp(2), bc)
    ratio = float(l2[-1] / l2[0]) if l2[0] > 0 else 0.0
    violations = {}
    for name, series in (("monotone_V", V_series(energy, traj)), ("monotone_L2", l2)):
        if name in config.checks:
            bad = monotonicity_violations(traj.times, series, default_tol(dt, h) * dt)
            violations[name] = [(t, inc, 0.0) for t, inc in bad]
            checks[name] = {"status": _status(not bad), "n_violations": len(bad)}
    if "oracles" in config.checks:
        rows, _ = run_suite(seed=int(config.initial.get("seed", 0)), N=config.N, L=config.L)
        checks["oracles"] = {"status": _status(all(r.passed for r in rows)),
                             "rows": [r.to_dict() for r in rows]}
    threshold = float(names.get("decay_ratio", 0.01))
    checks["decay"] = {"status": _status(blowup is None and ratio < threshold),
                       "norm_ratio": ratio, "threshold": threshold}
    rate = float(names.get("growth_rate", 0.4))
    grown = blowup is not None or ratio >= math.exp(rate * config.T)
    checks["growth"] = {"status": _status(grown), "norm_ratio": ratio,
                        "threshold": math.exp(rate * config.T)}
    report = Report(
        experiment="custom",
        params=dict(config.params, c_diff=c_diff, reaction=expr, bc=bc.tag),
        checks=[dict(checks[name], check=name) for name in config.checks],
        norm_ratio=ratio,
        blowup_time=blowup,
        runtime=_runtime(config, traj),
    )
    functionals = Functionals((NormSpec.lp(2),), (energy,))
    return report, traj, functionals, violations


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def parse_sweep(text):
    """``"a=0.0:0.9:10"`` -> ``("a", array of 10 values)``."""
    try:
        name, rng = text.split("=", 1)
        lo, hi, n = rng.split(":")
        values = np.linspace(parse_number(lo), parse_number(hi), int(n))
    except ValueError as exc:
        raise ConfigError(f"bad sweep spec {text!r}; expected name=lo:hi:count") from exc
    if int(n) < 1:
        raise ConfigError("sweep count must be positive")
    return name.strip(), values


def run_sweep(config, name, values, workers=1):
    """Run ``config`` once per value, each run in its own output directory."""
    jobs = []
    for i, v in enumerate(values):
        c = config.with_value(name, v)
        if config.output_dir is not None:
            c = c.replace(output_dir=str(Path(config.output_dir) / f"{name}_{i:03d}"))
        jobs.append((c, name, v))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            reports = list(pool.map(run, [c for c, _, _ in jobs]))
        results = [(float(v), rep) for (_, _, v), rep in zip(jobs, reports)]
    else:
        results = [(float(v), run(c)) for c, _, v in jobs]
    if config.output_dir is not None:
        rows = [(v, {PASS: 0, FAIL: 1, BLOWUP: 2}[r.status],
                 float(bool(r.small_gain and r.small_gain.get("holds"))),
                 r.norm_ratio if r.norm_ratio is not None else math.nan) for v, r in results]
        _write_rows(Path(config.output_dir) / "sweep.csv",
                    [name, "status(0=pass,1=fail,2=blowup)", "small_gain", "norm_ratio"], rows)
    return results
