"""
Spectral Flow Toolkit - Experiments

Named experiments behind the CLI subcommands. Each runner takes a resolved
ExperimentConfig, writes its tables under <out>/<experiment>/ and returns
an ExperimentReport. Failed checks are collected into the report;
certificate and configuration failures propagate as exceptions.
"""

import logging
import math
import time
from itertools import combinations, product
from typing import Any, Callable, Optional

import numpy as np
from pydantic import ValidationError

from .cache import get_eigen_cache
from .dirac import (
    CliffordRep,
    check_cutoff_stability,
    r_of_A,
    solve,
    weitzenbock_residual,
)
from .errors import ConfigError, HeatError
from .flow import (
    PathSpec,
    choose_params,
    error_functional,
    estimator_flow,
    eta_difference,
    exact_flow,
    path_rmax,
    phi,
)
from .forms import (
    Connection,
    CurvatureInput,
    TrigPolyForm,
    ahat_form,
    chs,
    contact_connection,
    contact_form,
    exp_form,
    ext_d,
    integrate_top,
    leading_order,
    prediction,
    wedge,
)
from .heat import (
    HeatProbe,
    count_bound,
    count_eigs,
    diag_kernel,
    form_mass,
    heat_trace,
    kernel_growth_constant,
    log_slope,
    min_admissible_t,
    p_lambda,
    pointwise_scaling,
    residual_bound_constant,
    residual_envelope,
    separable_heat_trace,
    weyl_ratio,
)
from .models import EstimatorParams, ExperimentConfig, ExperimentName, ExperimentReport, HeatSettings
from .output import ExperimentWriter

logger = logging.getLogger(__name__)

DEFAULT_OUT_DIR = "results"
DEFAULT_THETA_1 = (0.5,)
DEFAULT_THETA_3 = (0.3, 0.7, 0.5)
# zero transverse holonomy: the |p| = 2 pi ring of blocks crosses by r = 16
CONTACT_THETA = (0.0, 0.0, 0.25)

# Tolerances of the check suites
EXACT_TOL = 1e-9
ALGEBRA_TOL = 1e-10
AHAT_TOL = 1e-12
ENVELOPE_SLACK = 1e-12
ORACLE_TOL = 1e-6
KERNEL_TOL = 1e-8
WEITZENBOCK_TOL = 1e-8
NEGATIVE_CONTROL_MIN = 1e-3
SLOPE_RANGE = (1.8, 2.2)
RESIDUAL_FLOOR = 1e-12

_DEFAULTS: dict[ExperimentName, dict[str, Any]] = {
    ExperimentName.WINDING: {"n": 1, "K": 8, "s_grid": 129, "hol": list(DEFAULT_THETA_1)},
    ExperimentName.CONTACT_SWEEP: {"n": 3, "K": 8, "s_grid": 33, "hol": list(CONTACT_THETA)},
    ExperimentName.ESTIMATOR_CHECK: {
        "n": 3,
        "K": 8,
        "s_grid": 65,
        "hol": list(DEFAULT_THETA_3),
        "windings": [-2, 1, 3],
        "r_sweep": [4.0, 8.0],
    },
    ExperimentName.HEAT_CHECK: {"n": 3, "K": 8, "hol": list(DEFAULT_THETA_3)},
    ExperimentName.CHS_CHECK: {"n": 3, "K": 4, "windings": [-3, -1, 2], "r_sweep": [1.0, 4.0, 16.0]},
}


# Configuration


def default_config(name) -> ExperimentConfig:
    """Built-in configuration of a named experiment."""
    try:
        name = ExperimentName(name)
    except ValueError:
        raise ConfigError(f"unknown experiment {name!r}")
    return ExperimentConfig(experiment=name, **_DEFAULTS[name])


def _deep_merge(base: dict, overrides: dict) -> dict:
    merged = dict(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def resolve_config(
    name,
    overrides: Optional[dict] = None,
    out_dir: Optional[str] = None,
    seed: Optional[int] = None,
) -> ExperimentConfig:
    """
    Default config of ``name`` overridden field by field, then validated.

    CLI flags (out_dir, seed) win over the file.
    """
    base = default_config(name).model_dump(mode="json")
    overrides = dict(overrides or {})
    requested = overrides.pop("experiment", base["experiment"])
    if requested != base["experiment"]:
        raise ConfigError(f"config is for experiment {requested!r}, not {base['experiment']!r}")
    merged = _deep_merge(base, overrides)
    if out_dir is not None:
        merged["out_dir"] = out_dir
    if seed is not None:
        merged["seed"] = seed
    try:
        return ExperimentConfig.model_validate(merged)
    except ValidationError as e:
        raise ConfigError(f"invalid {base['experiment']} config: {e}")


def _theta(config: ExperimentConfig, fallback: tuple) -> tuple:
    return tuple(config.hol) if config.hol is not None else fallback


def _osc(config: ExperimentConfig) -> Optional[TrigPolyForm]:
    return TrigPolyForm.from_document(config.osc) if config.osc is not None else None


def _writer(config: ExperimentConfig, writer: Optional[ExperimentWriter]) -> ExperimentWriter:
    writer = writer or ExperimentWriter(config.out_dir or DEFAULT_OUT_DIR, config.experiment.value)
    writer.write_config(config)
    return writer


def _finish(
    config: ExperimentConfig,
    writer: ExperimentWriter,
    failures: list[str],
    summary: dict,
    started: float,
) -> ExperimentReport:
    report = ExperimentReport(
        experiment=config.experiment,
        passed=not failures,
        failures=failures,
        summary=summary,
        elapsed_seconds=round(time.perf_counter() - started, 3),
    )
    writer.write_summary(report)
    for failure in failures:
        logger.warning("%s: %s", config.experiment.value, failure)
    return report


# Paths


def winding_path(
    m: int,
    K: int = 8,
    samples: int = 129,
    theta: float = DEFAULT_THETA_1[0],
    gap: float = 1e-6,
    osc: Optional[TrigPolyForm] = None,
) -> PathSpec:
    """A0 = flat (or A0 + osc) with holonomy theta, A1 = g.A0 for g = exp(-2 pi i m x)."""
    A0 = Connection(1, (theta,), osc) if osc is not None else Connection.flat(1, (theta,))
    return PathSpec.linear(A0, A0.gauge((-m,)), samples, K, gap)


def contact_cutoff(r: float, minimum: int = 1) -> int:
    """Cutoff raised with r so the trusted window keeps pace with the field."""
    return max(minimum, math.ceil(1.25 * r) + 6)


def contact_path(
    r: float,
    K: int,
    samples: int = 33,
    theta: tuple = DEFAULT_THETA_3,
    gap: float = 1e-6,
) -> PathSpec:
    """Flat A0 with holonomy theta to the contact connection with A moved by r * a."""
    A0 = Connection.flat(3, theta)
    return PathSpec.linear(A0, contact_connection(r, theta), samples, K, gap)


def _params(config: ExperimentConfig, path: PathSpec, rmax: Optional[float] = None) -> EstimatorParams:
    rmax = path_rmax(path) if rmax is None else rmax
    overrides = config.estimator
    return choose_params(
        rmax, path.n, window=path.tracking_window, q=overrides.q, t=overrides.t, R=overrides.R
    )


# Random forms for the algebra suite


def random_form(
    rng: np.random.Generator,
    n: int,
    degree: int,
    fiber: int = 1,
    radius: int = 1,
    count: int = 4,
) -> TrigPolyForm:
    """Form with ``count`` random complex terms of momentum |k_j| <= radius."""
    indices = list(combinations(range(n), degree))
    count = min(count, len(indices) * (2 * radius + 1) ** n)
    terms = {}
    while len(terms) < count:
        k = tuple(int(x) for x in rng.integers(-radius, radius + 1, size=n))
        index = indices[int(rng.integers(len(indices)))]
        terms[(k, index)] = rng.standard_normal((fiber, fiber)) + 1j * rng.standard_normal((fiber, fiber))
    return TrigPolyForm(n, degree, terms, fiber=fiber)


def random_connection(
    rng: np.random.Generator,
    n: int,
    fiber: int = 1,
    radius: int = 1,
    count: int = 2,
    amplitude: float = 0.3,
) -> Connection:
    """Random holonomy plus ``count`` anti-hermitian oscillatory modes."""
    terms = {}
    for _ in range(count):
        k = (0,) * n
        while not any(k):
            k = tuple(int(x) for x in rng.integers(-radius, radius + 1, size=n))
        j = int(rng.integers(n))
        c = amplitude * (rng.standard_normal((fiber, fiber)) + 1j * rng.standard_normal((fiber, fiber)))
        terms[(k, (j,))] = c
        terms[(tuple(-x for x in k), (j,))] = -c.conj().T
    osc = TrigPolyForm(n, 1, terms, fiber=fiber, anti_hermitian=True)
    return Connection(n, tuple(rng.uniform(-1.0, 1.0, n)), osc)


def random_curvature(rng: np.random.Generator, n: int, d: int, radius: int = 1, count: int = 3) -> CurvatureInput:
    """Real 2-form with antisymmetric d x d values."""

    def antisym() -> np.ndarray:
        x = rng.standard_normal((d, d))
        return x - x.T

    indices = list(combinations(range(n), 2))
    terms = {}
    for _ in range(count):
        k = tuple(int(x) for x in rng.integers(-radius, radius + 1, size=n))
        index = indices[int(rng.integers(len(indices)))]
        if not any(k):
            terms[(k, index)] = antisym().astype(complex)
            continue
        c = antisym() + 1j * antisym()
        terms[(k, index)] = c
        terms[(tuple(-x for x in k), index)] = c.conj()
    return CurvatureInput(TrigPolyForm(n, 2, terms, fiber=d, real=True))


def _deviation(form: TrigPolyForm) -> float:
    """Largest coefficient magnitude (0 for the zero or overflowed form)."""
    if form.overflow or form.is_zero:
        return 0.0
    return float(max(np.max(np.abs(c)) for _, c in form.items()))


def _relative(value, reference) -> float:
    return float(np.max(np.abs(np.asarray(value) - np.asarray(reference))) / max(1.0, np.max(np.abs(reference))))


# Winding


def run_winding(config: ExperimentConfig, writer: Optional[ExperimentWriter] = None) -> ExperimentReport:
    """
    n = 1 gauge paths A0 -> g.A0: exact flow, prediction and estimator all
    equal the winding number m (estimator within n).
    """
    started = time.perf_counter()
    writer = _writer(config, writer)
    theta = _theta(config, DEFAULT_THETA_1)[0]
    osc = _osc(config)
    failures, rows = [], []

    for m in config.windings:
        path = winding_path(m, config.K, config.s_grid, theta, config.gap, osc)
        flow = exact_flow(path)
        predicted = prediction(path.A0, path.A1)
        estimate = estimator_flow(path, _params(config, path), with_density=True)
        eta = eta_difference(path, flow, predicted)

        if flow.f != m:
            failures.append(f"m={m}: exact flow {flow.f}")
        if abs(predicted - m) > EXACT_TOL:
            failures.append(f"m={m}: prediction {predicted:.12f}")
        if abs(estimate.value - flow.f) > estimate.n_bound:
            failures.append(f"m={m}: |estimate - f| = {abs(estimate.value - flow.f):.4f} > n = {estimate.n_bound}")
        logger.info(
            "m=%+d: f=%+d prediction=%+.9f estimate=%+.4f n=%d", m, flow.f, predicted, estimate.value, estimate.n_bound
        )
        rows.append(
            (m, flow.f, predicted, estimate.value, estimate.n_bound, estimate.density_integral, eta, len(flow.crossings))
        )
        writer.write_csv(
            f"wp_m{m}",
            ["s", "lambda_min_abs", "wp", "n_s", "density"],
            zip(estimate.s, estimate.lambda_min_abs, estimate.wp, estimate.n_s, estimate.density),
            units="s in [0,1]; lambda in torus units",
            params=estimate.params.model_dump(),
        )

    writer.write_csv(
        "winding",
        ["m", "f", "prediction", "estimate", "n", "density_integral", "eta_difference", "crossings"],
        rows,
        params={"K": config.K, "s_grid": config.s_grid, "theta": theta},
    )
    summary = {"windings": config.windings, "flows": [row[1] for row in rows]}
    return _finish(config, writer, failures, summary, started)


# Contact sweep


def run_contact_sweep(config: ExperimentConfig, writer: Optional[ExperimentWriter] = None) -> ExperimentReport:
    """
    n = 3 paths from a flat connection to the contact connection at each r:
    exact flow, prediction, leading term, r(A), estimator and the r^p error
    functional, plus log-log slopes over the sweep.
    """
    started = time.perf_counter()
    writer = _writer(config, writer)
    theta = _theta(config, CONTACT_THETA)
    a = contact_form(3, 1.0)
    p = (config.n - 2) / 2
    failures, rows = [], []
    cache = get_eigen_cache()

    for r in sorted(config.r_sweep):
        cache.clear()
        K = contact_cutoff(r, config.K) if config.auto_cutoff else config.K
        path = contact_path(r, K, config.s_grid, theta, config.gap)
        drift = check_cutoff_stability(path.A1, K, path.mask)

        flow = exact_flow(path)
        predicted = prediction(path.A0, path.A1)
        lead = leading_order(a, r)
        rmax = path_rmax(path)
        estimate = estimator_flow(path, _params(config, path, rmax))
        error, _ = error_functional(path, p)
        eta = eta_difference(path, flow, predicted)

        if abs(estimate.value - flow.f) > estimate.n_bound:
            failures.append(f"r={r:g}: |estimate - f| = {abs(estimate.value - flow.f):.4f} > n = {estimate.n_bound}")
        if abs(predicted - lead) > EXACT_TOL * max(1.0, abs(lead)):
            failures.append(f"r={r:g}: prediction {predicted:.9f} != leading term {lead:.9f}")
        logger.info(
            "r=%g K=%d: f=%+d prediction=%+.4f leading=%+.4f r(A)=%.2f estimate=%+.3f n=%d",
            r, K, flow.f, predicted, lead, rmax, estimate.value, estimate.n_bound,
        )
        rows.append(
            (r, K, flow.f, predicted, lead, rmax, estimate.value, estimate.n_bound, eta, error, drift,
             len(flow.crossings), flow.refinements)
        )

    writer.write_csv(
        "contact_sweep",
        ["r", "K", "f", "prediction", "leading_order", "r_of_A", "estimate", "n", "eta_difference",
         "error_functional", "cutoff_drift", "crossings", "refinements"],
        rows,
        units="r = amplitude of A along the contact form",
        params={"theta": list(theta), "s_grid": config.s_grid, "p": p, "auto_cutoff": config.auto_cutoff},
    )

    summary: dict[str, Any] = {"r": [row[0] for row in rows], "f": [row[2] for row in rows]}
    nonzero = [row for row in rows if row[2] != 0]
    if len(nonzero) >= 2:
        top = nonzero[-3:]
        slope = log_slope([row[0] for row in top], [row[2] for row in top])
        summary["f_slope"] = slope
        if not SLOPE_RANGE[0] <= slope <= SLOPE_RANGE[1]:
            failures.append(f"log|f| slope {slope:.3f} outside {list(SLOPE_RANGE)}")
        first, last = nonzero[0], nonzero[-1]
        trend = (abs(first[2] / first[3] - 1), abs(last[2] / last[3] - 1))
        summary["relative_error"] = {"smallest_r": trend[0], "largest_r": trend[1]}
        if not trend[1] < trend[0]:
            failures.append(f"|f/prediction - 1| did not shrink: {trend[0]:.4f} -> {trend[1]:.4f}")
    else:
        failures.append(f"only {len(nonzero)} sweep points with nonzero flow; slope undefined")
    for key, column in (("eta_slope", 8), ("leading_slope", 4)):
        try:
            summary[key] = log_slope([row[0] for row in rows], [row[column] for row in rows])
        except HeatError:
            summary[key] = None
    return _finish(config, writer, failures, summary, started)


# Estimator checks


def run_estimator_check(config: ExperimentConfig, writer: Optional[ExperimentWriter] = None) -> ExperimentReport:
    """Flow invariants and the <= n certificate on every configured path."""
    started = time.perf_counter()
    writer = _writer(config, writer)
    failures, rows = [], []

    def record(check: str, case: str, value: float, bound: float, ok: bool) -> None:
        rows.append((check, case, value, bound, ok))
        if not ok:
            failures.append(f"{check} [{case}]: {value:.6g} vs {bound:.6g}")

    # Mollifier envelope |t^{1/2} phi(R t^{-1/2}) - sqrt(pi/4)| <= exp(-R^2) / (2R)
    for R, t in product((1.0, 2.0, 3.0), (1e-2, 1e-4)):
        gap = abs(math.sqrt(t) * phi(R / math.sqrt(t), t) - math.sqrt(math.pi / 4))
        bound = math.exp(-(R**2)) / (2 * R)
        record("phi_envelope", f"R={R:g},t={t:g}", gap, bound, gap <= bound + ENVELOPE_SLACK)

    # Default parameters keep r t <= 1 and R >= 1
    for rmax in np.logspace(0.0, 4.0, 41):
        params = choose_params(float(rmax), config.n)
        record("params_rt", f"rmax={rmax:.4g}", rmax * params.t, 1.0, rmax * params.t <= 1 + 1e-12 and params.R >= 1)

    paths: list[tuple[str, PathSpec, Optional[int]]] = []
    theta1 = DEFAULT_THETA_1[0] if config.n != 1 or config.hol is None else config.hol[0]
    for m in config.windings:
        paths.append((f"winding m={m}", winding_path(m, 8, 129, theta1, config.gap), m))
    theta3 = _theta(config, DEFAULT_THETA_3) if config.n == 3 else DEFAULT_THETA_3
    for r in config.r_sweep:
        K = contact_cutoff(r, config.K) if config.auto_cutoff else config.K
        paths.append((f"contact r={r:g}", contact_path(r, K, config.s_grid, theta3, config.gap), None))

    for name, path, expected in paths:
        flow = exact_flow(path)
        estimate = estimator_flow(path, _params(config, path))
        record("certificate", name, abs(estimate.value - flow.f), estimate.n_bound,
               abs(estimate.value - flow.f) <= estimate.n_bound)
        if expected is not None:
            record("winding_oracle", name, flow.f, expected, flow.f == expected)
        logger.info("%s: f=%+d estimate=%+.4f n=%d", name, flow.f, estimate.value, estimate.n_bound)
        get_eigen_cache().clear()

    # Structural properties on the first winding path
    if config.windings:
        m = config.windings[0]
        path = winding_path(m, 8, 65, theta1, config.gap)
        f = exact_flow(path).f
        backwards = exact_flow(path.reversed()).f
        record("antisymmetry", f"m={m}", backwards, -f, backwards == -f)
        first, second = path.split(0.37)
        total = exact_flow(first).f + exact_flow(second).f
        record("additivity", f"m={m}, split at 0.37", total, f, total == f)
        fine = exact_flow(path.refined(2)).f
        record("grid_refinement", f"m={m}", fine, f, fine == f)

    # A constant path, and a holonomy path sweeping theta_1 through 0 where the +-|v| branches cancel
    constant = PathSpec.linear(Connection.flat(3, theta3), Connection.flat(3, theta3), 9, 4)
    f0 = exact_flow(constant).f
    record("constant_path", "n=3", f0, 0, f0 == 0)
    start = Connection.flat(3, (0.3, 0.0, 0.0))
    swept = PathSpec.linear(start, start.gauge((1, 0, 0)), 33, 4)
    f_shift = exact_flow(swept).f
    record("holonomy_path", "theta_1 -> theta_1 - 2 pi", f_shift, 0, f_shift == 0)

    writer.write_csv("estimator_check", ["check", "case", "value", "bound", "passed"], rows)
    summary = {"checks": len(rows), "failed": len(failures)}
    return _finish(config, writer, failures, summary, started)


# Heat checks


def _poisson_trace(n: int, t: float, spin: int) -> float:
    """spin * ((4 pi t)^{-1/2} sum_m exp(-m^2 / 4t))^n for the free operator."""
    m = np.arange(-50, 51)
    one = float(np.sum(np.exp(-(m**2) / (4 * t)))) / math.sqrt(4 * math.pi * t)
    return spin * one**n


def _admissible(t_grid, window: float, r: Optional[float] = None) -> list[float]:
    t_min = min_admissible_t(window)
    keep = sorted(t for t in t_grid if t >= t_min and (r is None or r * t <= 1))
    skipped = sorted(set(t_grid) - set(keep))
    if skipped:
        logger.info("Skipping t in %s (t_min=%.4g, r=%s)", skipped, t_min, r)
    return keep


def _required(t_grid, window: float, label: str, fail: Callable[[str], None]) -> list[float]:
    """Oracle t values; one the window cannot certify is a failure, not a skip."""
    t_min = min_admissible_t(window)
    for t in sorted(t for t in t_grid if t < t_min):
        fail(f"{label}: oracle t={t:g} below the certified minimum {t_min:.4g} for window {window:.4f}")
    return sorted(t for t in t_grid if t >= t_min)


def run_heat_checks(config: ExperimentConfig, writer: Optional[ExperimentWriter] = None) -> ExperimentReport:
    """
    Heat-trace oracles on free tori, counting bounds and Weyl ratios, the
    kernel growth constant, and p(lambda) against the index density.
    """
    started = time.perf_counter()
    writer = _writer(config, writer)
    settings: HeatSettings = config.heat
    theta = _theta(config, DEFAULT_THETA_3) if config.n == 3 else DEFAULT_THETA_3
    failures: list[str] = []
    traces, counts, densities, certificates = [], [], [], []
    summary: dict[str, Any] = {}

    def fail(message: str) -> None:
        failures.append(message)

    # Free T^1, theta = 0: eigenvalues 2 pi k
    free1 = Connection.flat(1)
    eig1 = solve(free1, settings.K_free_1)
    free1_t = set(_required(settings.oracle_t_grid, eig1.window, "free T^1", fail))
    for t in sorted(free1_t | set(_admissible(settings.t_grid, eig1.window))):
        value, oracle = heat_trace(eig1, t), _poisson_trace(1, t, 1)
        traces.append(("free-1", t, value, oracle, value / oracle - 1))
        if abs(value / oracle - 1) > ORACLE_TOL:
            fail(f"free T^1 heat trace at t={t:g}: relative error {value / oracle - 1:.3e}")
    ts = [row[1] for row in traces]
    logs = [math.log(row[2]) for row in traces]
    if any(b >= a for a, b in zip(logs, logs[1:])):
        fail("free T^1 heat trace is not decreasing in t")
    slopes = [(logs[i + 1] - logs[i]) / (ts[i + 1] - ts[i]) for i in range(len(ts) - 1)]
    if any(b < a - 1e-9 * max(1.0, abs(a)) for a, b in zip(slopes, slopes[1:])):
        fail("free T^1 log heat trace is not convex in t")

    for lam in settings.lambda_grid:
        if lam > eig1.window or (lam / (2 * math.pi)).is_integer():
            continue
        count, closed = count_eigs(eig1, lam), 2 * math.floor(lam / (2 * math.pi)) + 1
        counts.append(("free-1", lam, count, closed, weyl_ratio(eig1, lam, 1.0)))
        if count != closed:
            fail(f"free T^1 count at lambda={lam:g}: {count} != {closed}")

    x1 = np.array([0.0, 0.25, 0.6])[:, None]
    for t in _admissible(settings.t_grid, eig1.window):
        kernel = diag_kernel(free1, eig1, t, x1)
        expected = heat_trace(eig1, t)
        if _relative(kernel[:, 0, 0].real, expected) > KERNEL_TOL:
            fail(f"free T^1 diagonal kernel at t={t:g} is not constant")

    # p(lambda) for a = i dx: closed form on the free circle
    a1 = TrigPolyForm.dx(1, 0, coefficient=1j)
    residuals, free1_results = [], []
    for t in sorted(_admissible(settings.t_grid, eig1.window, 1.0), reverse=True):
        result = p_lambda(free1, eig1, a1, t, eig1.window, r=1.0)
        envelope = residual_envelope(1, t, result.lam, 1.0, 1.0)
        densities.append(("free-1", t, result.lam, result.p, result.density, result.residual, envelope, result.count))
        residuals.append((t, abs(result.residual)))
        free1_results.append(result)
    summary["free-1"] = {"residual_constant": residual_bound_constant(free1_results, 1, 1.0, 1.0)}
    shrinking = [res for _, res in residuals if res > RESIDUAL_FLOOR]
    if any(b >= a for a, b in zip(shrinking, shrinking[1:])):
        fail("free T^1 p(lambda) residual does not decrease as t decreases")

    # Free T^3, theta = 0: the direct solve where its window allows, every
    # oracle t from the product of circle traces; then the holonomy-shifted operator
    free3 = Connection.flat(3)
    eig3 = solve(free3, settings.K_free_3)
    for t in _admissible(set(settings.oracle_t_grid) | set(settings.t_grid), eig3.window):
        value, oracle = heat_trace(eig3, t), _poisson_trace(3, t, 2)
        traces.append(("free-3", t, value, oracle, value / oracle - 1))
        if abs(value / oracle - 1) > ORACLE_TOL:
            fail(f"free T^3 heat trace at t={t:g}: relative error {value / oracle - 1:.3e}")
    ratios = []
    free3_t = set(_required(settings.oracle_t_grid, eig1.window, "free T^3", fail))
    for t in sorted(free3_t | set(_admissible(settings.t_grid, eig1.window))):
        value, oracle = separable_heat_trace(free3, settings.K_free_1, t), _poisson_trace(3, t, 2)
        traces.append(("free-3-separable", t, value, oracle, value / oracle - 1))
        ratios.append(value * (4 * math.pi * t) ** 1.5 / 2)
        if abs(value / oracle - 1) > ORACLE_TOL:
            fail(f"free T^3 product heat trace at t={t:g}: relative error {value / oracle - 1:.3e}")
    if any(abs(b - 1) > abs(a - 1) + 1e-12 for a, b in zip(ratios[1:], ratios)):
        fail("free T^3 normalized trace does not approach 1 as t decreases")

    x3 = np.array([[0.1, 0.2, 0.3], [0.5, 0.5, 0.5]])
    t_kernel = _admissible(settings.t_grid, eig3.window)[-1]
    kernel = diag_kernel(free3, eig3, t_kernel, x3)
    expected = heat_trace(eig3, t_kernel) / 2 * np.eye(2)
    if _relative(kernel, np.broadcast_to(expected, kernel.shape)) > KERNEL_TOL:
        fail(f"free T^3 diagonal kernel at t={t_kernel:g} differs from trace/2 * I")

    shifted = Connection.flat(3, theta)
    eig_shift = solve(shifted, settings.K_free_3)
    values = np.sort(eig_shift.values)
    if _relative(values, -values[::-1]) > KERNEL_TOL:
        fail("holonomy-shifted T^3 spectrum is not symmetric")
    below = float(np.min(np.abs(eig_shift.values)))
    if count_eigs(eig_shift, 0.5 * below) != 0:
        fail("holonomy-shifted T^3 has eigenvalues below its gap")

    # Contact connection
    conn = contact_connection(settings.contact_r, theta)
    K = settings.K_contact
    drift = check_cutoff_stability(conn, K)
    eig_c = solve(conn, K)
    r = r_of_A(conn)
    certificates.append(("contact", "cutoff_drift", drift, 1e-8))
    certificates.append(("contact", "max_residual", eig_c.max_residual(), 1e-9))

    residual = weitzenbock_residual(conn, 8)
    control = weitzenbock_residual(conn, 8, curvature_rep=CliffordRep.standard(3).flipped(0))
    certificates.append(("contact", "weitzenbock", residual, WEITZENBOCK_TOL))
    certificates.append(("contact", "weitzenbock_flipped", control, NEGATIVE_CONTROL_MIN))
    if residual > WEITZENBOCK_TOL:
        fail(f"Weitzenbock residual {residual:.3e} above {WEITZENBOCK_TOL:g}")
    if control < NEGATIVE_CONTROL_MIN:
        fail(f"Weitzenbock negative control passed ({control:.3e}); the check is blind")

    contact_t = _admissible(settings.t_grid, eig_c.window, r)
    summary["contact"] = {"r_of_A": r, "K": K, "admissible_t": contact_t}
    if not contact_t:
        fail(f"no t in {settings.t_grid} satisfies t >= t_min and r t <= 1 for r={r:.3f}")
    else:
        t_mid = contact_t[len(contact_t) // 2]
        # the mean of tr E(t; x, x) over an exact quadrature grid is the heat trace
        side = 2 * K + 2
        grid = np.zeros((side, 3))
        grid[:, 2] = np.arange(side) / side
        mean = float(np.mean(np.trace(diag_kernel(conn, eig_c, t_mid, grid), axis1=1, axis2=2).real))
        if _relative(mean, heat_trace(eig_c, t_mid)) > ORACLE_TOL:
            fail(f"contact kernel mean {mean:.6g} differs from heat trace at t={t_mid:g}")

        probe = HeatProbe.uniform(3, contact_t, eig_c.window, settings.points_per_axis)
        c, worst = kernel_growth_constant(conn, eig_c, probe, r)
        summary["contact"].update(growth_constant=c, kernel_ratio=worst)

        velocity = contact_form(3, 0.5)
        mass = form_mass(velocity)
        contact_results = []
        for t in contact_t:
            for lam in [x for x in settings.lambda_grid if x <= eig_c.window] + [eig_c.window]:
                result = p_lambda(conn, eig_c, velocity, t, lam, r=r)
                envelope = residual_envelope(3, t, lam, r, mass)
                densities.append(("contact", t, lam, result.p, result.density, result.residual, envelope, result.count))
                contact_results.append(result)
        constant = residual_bound_constant(contact_results, 3, r, mass)
        summary["contact"].update(
            residual_constant=constant,
            residual_sqrt_t=max(abs(res.residual) / math.sqrt(res.t) for res in contact_results),
        )
        if not math.isfinite(constant):
            fail("p(lambda) residual constant is not finite")
        scaling = pointwise_scaling(conn, eig_c, velocity, contact_t, x3[0])
        summary["contact"].update(pointwise_slope=scaling["slope"], closer_to=scaling["closer_to"])
        writer.write_csv(
            "pointwise",
            ["t", "left", "right", "residual"],
            zip(scaling["t"], scaling["left"], scaling["right"], scaling["residual"]),
            params={"x": x3[0].tolist(), "r": r},
        )

    # Counts: heat-trace bound and Weyl ratios for all three operators
    for label, system, radius in (("free-3", eig3, 1.0), ("shifted-3", eig_shift, 1.0), ("contact", eig_c, r)):
        usable = _admissible(settings.t_grid, system.window)
        kappa = 0.0
        for lam in settings.lambda_grid:
            if lam > system.window:
                continue
            count = count_eigs(system, lam)
            ratio = weyl_ratio(system, lam, radius)
            kappa = max(kappa, ratio)
            bound = min(count_bound(system, lam, t) for t in usable) if usable else math.inf
            counts.append((label, lam, count, bound, ratio))
            if count > bound:
                fail(f"{label}: count {count} above heat-trace bound {bound:.4g} at lambda={lam:g}")
        summary.setdefault("weyl_constant", {})[label] = kappa

    writer.write_csv("heat_trace", ["connection", "t", "trace", "oracle", "relative_error"], traces)
    writer.write_csv(
        "counts", ["connection", "lambda", "count", "bound", "weyl_ratio"], counts,
        params={"K_free_1": settings.K_free_1, "K_free_3": settings.K_free_3, "K_contact": K},
    )
    writer.write_csv(
        "p_lambda", ["connection", "t", "lambda", "p", "density", "residual", "envelope", "count"], densities,
        params={"contact_r": settings.contact_r},
    )
    writer.write_csv("certificates", ["connection", "certificate", "value", "threshold"], certificates)
    return _finish(config, writer, failures, summary, started)


# Forms property suite


def run_chs_checks(config: ExperimentConfig, writer: Optional[ExperimentWriter] = None) -> ExperimentReport:
    """Algebra, Chern-Simons and prediction properties on random forms."""
    started = time.perf_counter()
    writer = _writer(config, writer)
    rng = np.random.default_rng(config.seed)
    failures, rows = [], []

    def record(check: str, case: str, deviation: float, tol: float) -> None:
        ok = deviation <= tol
        rows.append((check, case, deviation, tol, ok))
        if not ok:
            failures.append(f"{check} [{case}]: deviation {deviation:.3e} > {tol:g}")

    for n in (3, 5):
        for p in range(n - 1):
            record("d_squared", f"n={n},p={p}", _deviation(ext_d(ext_d(random_form(rng, n, p)))), ALGEBRA_TOL)
        b = random_form(rng, n, n - 1)
        record("stokes", f"n={n}", abs(integrate_top(ext_d(b))), 0.0)
        for p, q in ((0, 1), (1, 1), (1, 2), (2, 2)):
            if p + q + 1 > n:
                continue
            a, c = random_form(rng, n, p), random_form(rng, n, q)
            lhs = ext_d(wedge(a, c))
            rhs = wedge(ext_d(a), c) + wedge(a, ext_d(c)).scale((-1) ** p)
            record("leibniz", f"n={n},p={p},q={q}", _deviation(lhs - rhs) / max(1.0, _deviation(lhs)), ALGEBRA_TOL)
            swapped = wedge(c, a).scale((-1) ** (p * q))
            record("graded_commutativity", f"n={n},p={p},q={q}", _deviation(wedge(a, c) - swapped), ALGEBRA_TOL)

        F = random_form(rng, n, 2)
        series = exp_form(F)
        expected = {2: F, 4: wedge(F, F).scale(0.5)}
        record("exp_constant", f"n={n}", _deviation(series.component(0) - TrigPolyForm.identity(n)), 0.0)
        for degree in range(1, n + 1):
            target = expected.get(degree, TrigPolyForm.zero(n, degree))
            if target.overflow:
                target = TrigPolyForm.zero(n, degree)
            record("exp_nilpotent", f"n={n},degree={degree}", _deviation(series.component(degree) - target), ALGEBRA_TOL)

    # A-hat series on T^5 with a 4 x 4 curvature
    curvature = random_curvature(rng, 5, 4)
    omega = ahat_form(curvature)
    record("ahat_constant", "n=5", _deviation(omega.component(0) - TrigPolyForm.identity(5)), 0.0)
    record("ahat_degree_2", "n=5", _deviation(omega.component(2)), 0.0)
    oracle = wedge(curvature.R2, curvature.R2).trace().scale(-1.0 / 48)
    record("ahat_degree_4", "n=5", _relative_form(omega.component(4), oracle), AHAT_TOL)
    record("ahat_flat", "n=3", _deviation(ahat_form(CurvatureInput.flat(3)).component(0) - TrigPolyForm.identity(3)), 0.0)

    # Path independence of chs paired with closed forms
    for fiber in (1, 2):
        A0, A_mid, A1 = (random_connection(rng, 3, fiber) for _ in range(3))
        direct = chs(A0, A1)
        routed = chs(A0, A_mid) + chs(A_mid, A1)
        mu = TrigPolyForm.dx(3, 0, 1, coefficient=rng.standard_normal()) + ext_d(random_form(rng, 3, 1))
        pair_direct = integrate_top(wedge(mu, direct.component(1)))
        pair_routed = integrate_top(wedge(mu, routed.component(1)))
        record("chs_path_independence", f"fiber={fiber},degree=1", _relative(pair_routed, pair_direct), ALGEBRA_TOL)
        top_direct = integrate_top(direct.component(3))
        top_routed = integrate_top(routed.component(3))
        record("chs_path_independence", f"fiber={fiber},degree=3", _relative(top_routed, top_direct), ALGEBRA_TOL)

    A0, A1 = random_connection(rng, 3), random_connection(rng, 3)
    forward, backward = prediction(A0, A1), prediction(A1, A0)
    record("prediction_antisymmetry", "n=3", abs(forward + backward) / max(1.0, abs(forward)), ALGEBRA_TOL)
    m = tuple(int(x) for x in rng.integers(-2, 3, size=3))
    gauged = prediction(A0.gauge(m), A1.gauge(m))
    record("prediction_gauge", f"m={list(m)}", abs(gauged - forward) / max(1.0, abs(forward)), ALGEBRA_TOL)

    base = Connection.flat(1, DEFAULT_THETA_1)
    for m in config.windings:
        record("winding_prediction", f"m={m}", abs(prediction(base, base.gauge((-m,))) - m), EXACT_TOL)

    flat = Connection.flat(3, DEFAULT_THETA_3)
    a = contact_form(3, 1.0)
    for r in config.r_sweep:
        value = prediction(flat, contact_connection(r, DEFAULT_THETA_3))
        record("contact_leading_order", f"r={r:g}", abs(value - leading_order(a, r)) / max(1.0, abs(value)), EXACT_TOL)
        record("contact_closed_form", f"r={r:g}", abs(value + r**2 / (16 * math.pi)) / max(1.0, abs(value)), EXACT_TOL)

    writer.write_csv("chs_checks", ["check", "case", "deviation", "tolerance", "passed"], rows, params={"seed": config.seed})
    summary = {"checks": len(rows), "failed": len(failures), "seed": config.seed}
    return _finish(config, writer, failures, summary, started)


def _relative_form(form: TrigPolyForm, reference: TrigPolyForm) -> float:
    return _deviation(form - reference) / max(1.0, _deviation(reference))


# Registry


EXPERIMENTS: dict[ExperimentName, Callable[..., ExperimentReport]] = {
    ExperimentName.WINDING: run_winding,
    ExperimentName.CONTACT_SWEEP: run_contact_sweep,
    ExperimentName.ESTIMATOR_CHECK: run_estimator_check,
    ExperimentName.HEAT_CHECK: run_heat_checks,
    ExperimentName.CHS_CHECK: run_chs_checks,
}


def run_experiment(config: ExperimentConfig, writer: Optional[ExperimentWriter] = None) -> ExperimentReport:
    return EXPERIMENTS[config.experiment](config, writer)


def run_all(
    out_dir: Optional[str] = None,
    seed: Optional[int] = None,
    overrides: Optional[dict] = None,
) -> list[ExperimentReport]:
    """Every experiment with its default config; ``overrides`` maps experiment name to config overrides."""
    reports = []
    for name in EXPERIMENTS:
        config = resolve_config(name, (overrides or {}).get(name.value), out_dir=out_dir, seed=seed)
        reports.append(run_experiment(config))
        get_eigen_cache().clear()
    return reports
