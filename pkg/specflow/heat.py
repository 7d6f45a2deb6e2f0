"""
Spectral Flow Toolkit - Heat Diagnostics

Heat-trace quantities computed from certified eigensums:

- heat trace sum exp(-lambda^2 t) and the diagonal kernel E(t; x, x)
- eigenvalue counts against the heat-trace bound and Weyl scaling
- the truncated weighted sum p(lambda) against the index density, both
  integrated and pointwise

Bound checks report fitted constants; the constants in the underlying
estimates are existential, so pass/fail is boundedness over a sweep.
"""

import logging
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .dirac import (
    CliffordRep,
    EigenSystem,
    assemble,
    cl_pairings,
    r_of_A,
    solve,
)
from .errors import HeatError
from .forms import Connection, CurvatureInput, TrigPolyForm, index_density, integrate_top
from .models import PLambdaResult

logger = logging.getLogger(__name__)

# Largest admissible weight of the first excluded eigenvalue
TRUNCATION_TOL = 1e-16
PSD_TOL = 1e-10
# points per eigenfunction evaluation batch
KERNEL_CHUNK = 256


def min_admissible_t(window: float) -> float:
    """Smallest t with exp(-window^2 t) <= TRUNCATION_TOL."""
    return -math.log(TRUNCATION_TOL) / window**2


def _check_t(eig: EigenSystem, t: float) -> None:
    if t <= 0:
        raise HeatError(f"t must be positive, got {t}")
    t_min = min_admissible_t(eig.window)
    if t < t_min * (1 - 1e-12):
        raise HeatError(f"t={t:g} too small for window {eig.window:.4f}; minimum admissible t is {t_min:.6g}")


@dataclass(frozen=True)
class HeatProbe:
    """t-grid and spatial sample points for pointwise heat checks."""

    t_grid: tuple[float, ...]
    points: np.ndarray
    window: float

    @classmethod
    def uniform(cls, n: int, t_grid: Sequence[float], window: float, per_axis: int = 16) -> "HeatProbe":
        t_grid = tuple(sorted(float(t) for t in t_grid))
        if not t_grid:
            raise HeatError("empty t-grid")
        if t_grid[0] < min_admissible_t(window):
            raise HeatError(
                f"t={t_grid[0]:g} below the certified range for window {window:.4f} "
                f"(minimum {min_admissible_t(window):.6g})"
            )
        axes = np.meshgrid(*([np.arange(per_axis) / per_axis] * n), indexing="ij")
        return cls(t_grid, np.stack([a.ravel() for a in axes], axis=1), window)


def heat_trace(eig: EigenSystem, t: float) -> float:
    """sum over the trusted window of exp(-lambda^2 t), ascending |lambda|."""
    _check_t(eig, t)
    lam = np.sort(np.abs(eig.values))
    return float(np.sum(np.exp(-(lam**2) * t)))


def separable_heat_trace(conn: Connection, K: int, t: float) -> float:
    """
    Heat trace of a flat connection on T^n from circle spectra: D^2 is the
    holonomy-shifted Laplacian on every spinor and fiber component, so the
    trace is rank * prod_j (trace on the circle with holonomy theta_j).

    Each circle is solved at cutoff K, so t is certified against the
    circle window 2 pi K / 4 instead of a full n-dimensional solve.
    """
    if not conn.osc.is_zero:
        raise HeatError("separable heat trace needs a flat connection")
    total = float(CliffordRep.standard(conn.n).rank * conn.fiber)
    for theta in conn.hol:
        total *= heat_trace(solve(Connection.flat(1, (theta,)), K, vectors=False), t)
    return total


def eigenfunctions(eig: EigenSystem, points: np.ndarray, idx: Optional[np.ndarray] = None) -> np.ndarray:
    """Values zeta(x) of the selected eigenvectors: (P, L, spin)."""
    if eig.vectors is None:
        raise HeatError("pointwise evaluation needs eigenvectors")
    idx = np.arange(len(eig.values)) if idx is None else idx
    points = np.atleast_2d(np.asarray(points, dtype=float))
    cons, free = list(eig.conserved_dims), list(eig.free_dims)
    M = len(eig.free_momenta)
    labels = eig.labels[eig.block[idx]]  # (L, #conserved)
    outer = np.exp(2j * np.pi * points[:, cons] @ labels.T)  # (P, L)
    inner = np.exp(2j * np.pi * points[:, free] @ eig.free_momenta.T)  # (P, M)
    coeffs = eig.vectors[idx].reshape(len(idx), M, eig.spin)
    return outer[:, :, None] * np.einsum("pm,lms->pls", inner, coeffs)


def diag_kernel(conn: Connection, eig: EigenSystem, t: float, x) -> np.ndarray:
    """
    E(t; x, x) = sum zeta(x) zeta(x)^H exp(-lambda^2 t); (spin, spin) for a
    single point, (P, spin, spin) for an array of points.
    """
    if eig.fingerprint != conn.fingerprint():
        raise HeatError("eigensystem was not computed for this connection")
    _check_t(eig, t)
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    points = np.atleast_2d(x)
    weights = np.exp(-(eig.values**2) * t)
    kernel = np.empty((len(points), eig.spin, eig.spin), dtype=complex)
    for start in range(0, len(points), KERNEL_CHUNK):
        zeta = eigenfunctions(eig, points[start : start + KERNEL_CHUNK])
        kernel[start : start + KERNEL_CHUNK] = np.einsum("pla,l,plb->pab", zeta, weights, np.conj(zeta))
    return kernel[0] if single else kernel


def count_eigs(eig: EigenSystem, lam: float) -> int:
    """Number of eigenvalues with |lambda| < lam (strict)."""
    if lam > eig.window:
        raise HeatError(f"lambda={lam:g} outside the trusted window {eig.window:.4f}")
    return int(np.count_nonzero(np.abs(eig.values) < lam))


def count_bound(eig: EigenSystem, lam: float, t: float) -> float:
    """exp(lambda^2 t) * heat_trace(t), an upper bound on count_eigs(lambda)."""
    return math.exp(lam**2 * t) * heat_trace(eig, t)


def weyl_ratio(eig: EigenSystem, lam: float, r: float) -> float:
    return count_eigs(eig, lam) / (lam + math.sqrt(r)) ** eig.n


def density_prefactor(n: int, t: float) -> complex:
    return math.sqrt(math.pi) * (1.0 / (2j * math.pi)) ** ((n + 1) // 2) / math.sqrt(t)


def p_lambda(
    conn: Connection,
    eig: EigenSystem,
    a_hat: TrigPolyForm,
    t: float,
    lam: float,
    r: Optional[float] = None,
    curvature: Optional[CurvatureInput] = None,
) -> PLambdaResult:
    """
    Truncated weighted sum p(lambda) = sum_{|lambda_z| <= lambda} <z, cl(a) z> exp(-lambda_z^2 t)
    next to sqrt(pi) (1/2 pi i)^{(n+1)/2} t^{-1/2} int_M Omega ^ tr(a ^ ch F).
    """
    r = r_of_A(conn) if r is None else r
    if r * t > 1 + 1e-12:
        raise HeatError(f"r t = {r * t:.4f} > 1 (r={r:.4f}, t={t:g})")
    if lam > eig.window:
        raise HeatError(f"lambda={lam:g} outside the trusted window {eig.window:.4f}")
    if eig.vectors is None:
        raise HeatError("p_lambda needs eigenvectors")

    idx = eig.select(lam)
    values = eig.values[idx]
    blocks = assemble(conn, eig.K, eig.mask)
    weights = cl_pairings(eig.vectors[idx], a_hat, blocks) * np.exp(-(values**2) * t)
    order = np.argsort(np.abs(values), kind="stable")
    p = float(np.sum(weights[order]))

    density = density_prefactor(conn.n, t) * integrate_top(index_density(conn, a_hat, curvature))
    density = float(complex(density).real)
    return PLambdaResult(t=t, lam=lam, p=p, density=density, residual=p - density, count=len(idx))


def form_mass(form: TrigPolyForm, grid: int = 16) -> float:
    """int_M |a| as the mean of the pointwise Frobenius norm over a uniform grid."""
    n = form.n
    axes = np.meshgrid(*([np.arange(grid) / grid] * n), indexing="ij")
    points = np.stack([a.ravel() for a in axes], axis=1)
    total = np.zeros(len(points))
    for values in form.evaluate(points).values():
        total += np.sum(np.abs(values) ** 2, axis=(1, 2))
    return float(np.mean(np.sqrt(total)))


def residual_envelope(n: int, t: float, lam: float, r: float, mass: float) -> float:
    """(t^{1/2} r^{(n+1)/2} + t^{-n/2} exp(-lambda^2 t)) int_M |a|."""
    return (math.sqrt(t) * r ** ((n + 1) / 2) + t ** (-n / 2) * math.exp(-(lam**2) * t)) * mass


def residual_bound_constant(results: Sequence[PLambdaResult], n: int, r: float, mass: float) -> float:
    """Smallest C with |p - density| <= C * residual_envelope over the sweep."""
    if mass <= 0:
        return 0.0
    return max(
        (abs(res.residual) / residual_envelope(n, res.t, res.lam, r, mass) for res in results),
        default=0.0,
    )


def pointwise_density_check(
    conn: Connection,
    eig: EigenSystem,
    a_hat: TrigPolyForm,
    t: float,
    x,
    curvature: Optional[CurvatureInput] = None,
) -> tuple[float, float]:
    """
    (tr_S(cl(a)|_x E(t; x, x)), sqrt(pi) t^{-1/2} (1/2 pi i)^{(n+1)/2} * density at x).
    """
    x = np.asarray(x, dtype=float)
    n = conn.n
    kernel = diag_kernel(conn, eig, t, x)
    gamma = assemble(conn, eig.K, eig.mask).clifford.stack()
    cl_a = np.zeros((eig.spin, eig.spin), dtype=complex)
    for (j,), values in a_hat.evaluate(x[None, :]).items():
        cl_a += values[0, 0, 0] * gamma[j]
    left = float(np.trace(cl_a @ kernel).real)

    top = index_density(conn, a_hat, curvature)
    coefficient = top.evaluate(x[None, :]).get(tuple(range(n)))
    right = 0.0 if coefficient is None else float((density_prefactor(n, t) * coefficient[0, 0, 0]).real)
    return left, right


def log_slope(x: Sequence[float], y: Sequence[float]) -> float:
    """Least-squares slope of log|y| against log x."""
    x, y = np.asarray(x, dtype=float), np.abs(np.asarray(y, dtype=float))
    keep = (x > 0) & (y > 0)
    if np.count_nonzero(keep) < 2:
        raise HeatError("need at least two positive points to fit a slope")
    return float(np.polyfit(np.log(x[keep]), np.log(y[keep]), 1)[0])


def kernel_growth_constant(conn: Connection, eig: EigenSystem, probe: HeatProbe, r: float) -> tuple[float, float]:
    """
    Fit c in |E(t; x, x)| <= C (4 pi t)^{-n/2} exp(c r t) over the probe.

    Returns (c, max ratio with c = 0).
    """
    n = conn.n
    worst_c, worst_ratio = 0.0, 0.0
    for t in probe.t_grid:
        kernel = diag_kernel(conn, eig, t, probe.points)
        norms = np.linalg.eigvalsh(kernel)
        if norms.min() < -PSD_TOL * max(1.0, norms.max()):
            raise HeatError(f"diagonal kernel not positive semidefinite at t={t:g} (min eigenvalue {norms.min():.3e})")
        ratio = float(norms.max() * (4 * math.pi * t) ** (n / 2))
        worst_ratio = max(worst_ratio, ratio)
        if ratio > 1 and r * t > 0:
            worst_c = max(worst_c, math.log(ratio) / (r * t))
    return worst_c, worst_ratio


def pointwise_scaling(
    conn: Connection,
    eig: EigenSystem,
    a_hat: TrigPolyForm,
    t_grid: Sequence[float],
    x,
) -> dict:
    """
    Residual left - right of the pointwise check over t; the observed log-log
    slope is compared with the two candidate error exponents t^{1/2} and t^{3/2}.
    """
    pairs = [pointwise_density_check(conn, eig, a_hat, t, x) for t in t_grid]
    residuals = [left - right for left, right in pairs]
    report = {"t": list(t_grid), "left": [p[0] for p in pairs], "right": [p[1] for p in pairs], "residual": residuals}
    try:
        slope = log_slope(t_grid, residuals)
    except HeatError:
        report.update(slope=None, closer_to=None)
        return report
    closer = "t^1/2" if abs(slope - 0.5) <= abs(slope - 1.5) else "t^3/2"
    logger.info("Pointwise residual slope %.3f (closer to %s)", slope, closer)
    report.update(slope=slope, closer_to=closer)
    return report
