"""
Spectral Flow Toolkit - Spectral Flow

Exact spectral flow of A_s = A0 + s * a along a sampled path, counted as
signed zero crossings of eigenvalue branches, and the heat-kernel
mollified estimator: the s-integral of

    wp(s) = (1 / 2T) sum_{|lambda| <= Lambda} <zeta, cl(a) zeta> exp(-lambda^2 t)

with T = phi(Lambda, t), which differs from the exact flow by at most the
largest number n_s of eigenvalues admitted to the sum.

Crossings are certified per block: the signed branch crossings found by
eigenvector-overlap matching over each interval must reproduce the change
of the block's negative-eigenvalue count, otherwise the interval is refined.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import integrate, special

from .dirac import (
    DiracBlocks,
    EigenSystem,
    assemble,
    cl_pairing,
    cl_pairings,
    conserved_mask,
    r_of_A,
    solve,
    trusted_window,
)
from .errors import CertificateError, FlowError
from .forms import (
    Connection,
    CurvatureInput,
    TrigPolyForm,
    index_density,
    integrate_top,
    prediction,
)
from .heat import form_mass
from .models import CrossingRecord, EstimatorParams, EstimatorResult, SpectralFlowResult

logger = logging.getLogger(__name__)

DEFAULT_GAP = 1e-6
# Overlap needed to call two eigenvectors the same branch
MATCH_OVERLAP = 0.5
AMBIGUITY_MARGIN = 0.1
REFINE_FACTOR = 4
REFINE_CAP = 6
# Signs are read outside this band; inside it a sample is nudged
EXCLUSION_BAND = 1e-6
ZERO_TOL = 1e-8
S_TOL = 1e-10
MERGE_TOL = 1e-8
TOUCH_BAND = 1e-4


@dataclass(frozen=True)
class PathSpec:
    """
    Straight path A_s = A0 + s * velocity sampled on ``grid``.

    ``d_hol`` and ``d_osc`` are the harmonic and oscillatory parts of the
    velocity at the level of A_F.
    """

    A0: Connection
    d_hol: tuple[float, ...]
    d_osc: TrigPolyForm
    grid: tuple[float, ...]
    K: int
    gap: float = DEFAULT_GAP
    window: Optional[float] = None

    def __post_init__(self):
        n = self.A0.n
        object.__setattr__(self, "d_hol", tuple(float(x) for x in self.d_hol))
        object.__setattr__(self, "grid", tuple(float(s) for s in self.grid))
        if len(self.d_hol) != n:
            raise FlowError(f"holonomy velocity has length {len(self.d_hol)}, expected {n}")
        if self.d_osc.n != n or self.d_osc.degree != 1 or self.d_osc.fiber != self.A0.fiber:
            raise FlowError("oscillatory velocity must be a 1-form matching the connection")
        if not self.d_osc.is_anti_hermitian():
            raise FlowError("oscillatory velocity is not anti-hermitian")
        grid = np.asarray(self.grid)
        if len(grid) < 2 or grid[0] != 0.0 or grid[-1] != 1.0 or np.any(np.diff(grid) <= 0):
            raise FlowError("sample grid must increase strictly from 0 to 1")
        if self.K < 1:
            raise FlowError(f"cutoff K must be >= 1, got {self.K}")
        if self.gap <= 0:
            raise FlowError(f"gap must be positive, got {self.gap}")
        if self.window is not None and not 0 < self.window <= trusted_window(self.K) + 1e-12:
            raise FlowError(f"window {self.window} outside the trusted window {trusted_window(self.K):.4f}")

    @classmethod
    def linear(
        cls,
        A0: Connection,
        A1: Connection,
        samples: int = 33,
        K: int = 8,
        gap: float = DEFAULT_GAP,
        window: Optional[float] = None,
    ) -> "PathSpec":
        if A0.n != A1.n or A0.fiber != A1.fiber:
            raise FlowError("path endpoints live on different bundles")
        d_hol = tuple(b - a for a, b in zip(A0.hol, A1.hol))
        return cls(A0, d_hol, A1.osc - A0.osc, tuple(np.linspace(0.0, 1.0, samples)), K, gap, window)

    @property
    def n(self) -> int:
        return self.A0.n

    @property
    def A1(self) -> Connection:
        return self.connection_at(1.0)

    @property
    def mask(self) -> tuple[bool, ...]:
        return conserved_mask(self.n, self.A0.osc, self.d_osc)

    @property
    def tracking_window(self) -> float:
        return self.window if self.window is not None else trusted_window(self.K)

    def connection_at(self, s: float) -> Connection:
        if s == 0.0:
            return self.A0
        return self.A0.shifted(tuple(s * x for x in self.d_hol), self.d_osc.scale(s))

    def velocity(self) -> TrigPolyForm:
        """The 1-form a = d/ds A_{s,F}."""
        eye = np.eye(self.A0.fiber)
        harmonic = TrigPolyForm(
            self.n, 1, {((0,) * self.n, (j,)): 1j * x * eye for j, x in enumerate(self.d_hol)}, fiber=self.A0.fiber
        )
        return harmonic + self.d_osc

    def velocity_bound(self) -> float:
        """Upper bound on |d lambda / ds| for every eigenvalue branch."""
        return float(sum(np.abs(c).sum() for _, c in self.velocity().items()))

    def reversed(self) -> "PathSpec":
        grid = tuple(sorted(1.0 - s for s in self.grid))
        return PathSpec(
            self.A1, tuple(-x for x in self.d_hol), -self.d_osc, grid, self.K, self.gap, self.window
        )

    def split(self, s_mid: float) -> tuple["PathSpec", "PathSpec"]:
        """The two straight sub-paths through A_{s_mid}, each on a uniform grid of the same size."""
        if not 0.0 < s_mid < 1.0:
            raise FlowError(f"split point {s_mid} outside (0, 1)")
        samples = len(self.grid)
        grid = tuple(np.linspace(0.0, 1.0, samples))
        middle = self.connection_at(s_mid)
        first = PathSpec(
            self.A0, tuple(s_mid * x for x in self.d_hol), self.d_osc.scale(s_mid), grid, self.K, self.gap, self.window
        )
        rest = 1.0 - s_mid
        second = PathSpec(
            middle, tuple(rest * x for x in self.d_hol), self.d_osc.scale(rest), grid, self.K, self.gap, self.window
        )
        return first, second

    def refined(self, factor: int = 2) -> "PathSpec":
        grid = np.asarray(self.grid)
        fine = [grid[0]]
        for a, b in zip(grid[:-1], grid[1:]):
            fine.extend(np.linspace(a, b, factor + 1)[1:])
        return PathSpec(self.A0, self.d_hol, self.d_osc, tuple(fine), self.K, self.gap, self.window)


# Exact flow


@dataclass
class _BlockSample:
    s: float
    values: np.ndarray
    vectors: np.ndarray
    negatives: int


@dataclass
class _Tracker:
    path: PathSpec
    blocks: DiracBlocks
    velocity: TrigPolyForm
    lipschitz: float
    window: float
    refinements: int = 0
    touches: int = 0
    records: list = field(default_factory=list)


def _system(path: PathSpec, s: float, window: Optional[float] = None) -> EigenSystem:
    return solve(path.connection_at(s), path.K, path.mask, window=window or path.tracking_window)


def _block_sample(system: EigenSystem, b: int, s: float) -> _BlockSample:
    idx = system.in_block(b)
    return _BlockSample(s, system.values[idx], system.vectors[idx], system.negative_count(b))


def _solve_block(track: _Tracker, s: float, b: int) -> _BlockSample:
    system = solve(
        track.path.connection_at(s), track.path.K, track.path.mask,
        window=track.window, block_indices=[b], use_cache=False,
    )
    return _block_sample(system, b, s)


def _nudged(track: _Tracker, sample: _BlockSample, b: int, lo: float, hi: float) -> _BlockSample:
    """Move an interior sample off an eigenvalue sitting inside the exclusion band."""
    if not len(sample.values) or np.min(np.abs(sample.values)) >= EXCLUSION_BAND:
        return sample
    delta = 1e-3 * (hi - lo)
    for s in (sample.s + delta, sample.s - delta):
        moved = _solve_block(track, s, b)
        if not len(moved.values) or np.min(np.abs(moved.values)) >= EXCLUSION_BAND:
            logger.info("Block %d: sample s=%.6f nudged to %.6f off a zero eigenvalue", b, sample.s, s)
            return moved
    raise CertificateError(f"block {b}: eigenvalue stays within {EXCLUSION_BAND:g} of zero near s={sample.s:.6f}")


def _check_gap(system: EigenSystem, s: float, gap: float) -> None:
    if len(system.values) and system.min_abs() < gap:
        i = int(np.argmin(np.abs(system.values)))
        raise FlowError(
            f"endpoint s={s:g} has eigenvalue {system.values[i]:.3e} in (-{gap:g}, {gap:g}) "
            f"(block {int(system.block[i])}); the flow is undefined"
        )


def _match(left: _BlockSample, right: _BlockSample, reach: float):
    """
    Greedy overlap matching. Returns (pairs, ambiguous, stray), where stray
    means a branch that could reach zero found no partner.
    """
    if not len(left.values) or not len(right.values):
        stray = bool(np.any(np.abs(left.values) <= reach) or np.any(np.abs(right.values) <= reach))
        return [], False, stray
    overlap = np.abs(np.conj(left.vectors) @ right.vectors.T)
    pairs: list[tuple[int, int]] = []
    used_l, used_r = set(), set()
    for flat in np.argsort(-overlap, axis=None, kind="stable"):
        i, j = np.unravel_index(flat, overlap.shape)
        if overlap[i, j] < MATCH_OVERLAP:
            break
        if i in used_l or j in used_r:
            continue
        pairs.append((int(i), int(j)))
        used_l.add(i)
        used_r.add(j)

    ambiguous = False
    for i in np.nonzero(np.abs(left.values) <= reach)[0]:
        row = overlap[i]
        if len(row) < 2:
            continue
        top = np.argsort(-row, kind="stable")[:2]
        if row[top[0]] - row[top[1]] < AMBIGUITY_MARGIN and row[top[0]] >= MATCH_OVERLAP:
            ambiguous = True
    stray = any(
        i not in used_l for i in np.nonzero(np.abs(left.values) <= reach)[0]
    ) or any(j not in used_r for j in np.nonzero(np.abs(right.values) <= reach)[0])
    return pairs, ambiguous, stray


def _locate(track: _Tracker, b: int, left: _BlockSample, right: _BlockSample, i: int, j: int) -> CrossingRecord:
    """Bisect the crossing of branch i (left) / j (right) down to S_TOL."""
    lo, hi = left.s, right.s
    vector, lam_lo = left.vectors[i], left.values[i]
    direction = 1 if right.values[j] > left.values[i] else -1
    s_star = 0.5 * (lo + hi)
    while hi - lo > S_TOL:
        mid = 0.5 * (lo + hi)
        sample = _solve_block(track, mid, b)
        if not len(sample.values):
            raise CertificateError(f"block {b}: branch left the window while bisecting near s={mid:.6f}")
        k = int(np.argmax(np.abs(np.conj(sample.vectors) @ vector)))
        lam, vector = sample.values[k], sample.vectors[k]
        s_star = mid
        if abs(lam) < ZERO_TOL:
            break
        if np.sign(lam) == np.sign(lam_lo):
            lo, lam_lo = mid, lam
        else:
            hi = mid
    slope = cl_pairing(vector, track.velocity, track.blocks)
    if abs(slope) > ZERO_TOL and np.sign(slope) != direction:
        logger.warning(
            "Block %d crossing at s=%.10f: slope %.3e disagrees with the observed direction %+d",
            b, s_star, slope, direction,
        )
    return CrossingRecord(s=s_star, sign=direction, block=b, branch=i, slope=slope)


def _resolve(track: _Tracker, b: int, left: _BlockSample, right: _BlockSample, depth: int) -> None:
    reach = track.lipschitz * (right.s - left.s) * (1 + 1e-9)
    expected = left.negatives - right.negatives
    quiet_left = not np.any(np.abs(left.values) <= reach)
    quiet_right = not np.any(np.abs(right.values) <= reach)
    if expected == 0 and (quiet_left or quiet_right):
        return

    pairs, ambiguous, stray = _match(left, right, reach)
    crossing = [(i, j) for i, j in pairs if np.sign(left.values[i]) != np.sign(right.values[j])]
    net = sum(1 if right.values[j] > 0 else -1 for _, j in crossing)
    if not ambiguous and not stray and net == expected:
        for i, j in pairs:
            if (i, j) not in crossing and min(abs(left.values[i]), abs(right.values[j])) < TOUCH_BAND:
                track.touches += 1
                logger.info("Block %d: tangential touch on [%.6f, %.6f], no contribution", b, left.s, right.s)
        for i, j in crossing:
            record = _locate(track, b, left, right, i, j)
            logger.info("Block %d: crossing at s=%.10f sign %+d slope %.4e", b, record.s, record.sign, record.slope)
            track.records.append(record)
        return

    if depth >= REFINE_CAP:
        raise CertificateError(
            f"block {b} (label {track.blocks.labels[b].tolist()}) on [{left.s:.8f}, {right.s:.8f}]: "
            f"matched net {net} vs negative-count change {expected}, ambiguous={ambiguous}, "
            f"unmatched={stray} after {REFINE_CAP} refinements"
        )
    track.refinements += 1
    logger.info("Block %d: refining [%.8f, %.8f] (level %d)", b, left.s, right.s, depth + 1)
    nodes = np.linspace(left.s, right.s, REFINE_FACTOR + 1)
    samples = [left]
    for s in nodes[1:-1]:
        samples.append(_nudged(track, _solve_block(track, s, b), b, left.s, right.s))
    samples.append(right)
    for a, c in zip(samples[:-1], samples[1:]):
        _resolve(track, b, a, c, depth + 1)


def _merge_records(records: list[CrossingRecord]) -> list[CrossingRecord]:
    """Branches crossing together in the same direction, in any block, become one record."""
    merged: list[CrossingRecord] = []
    for record in sorted(records, key=lambda r: (r.sign, r.s, r.block)):
        last = merged[-1] if merged else None
        if last and last.sign == record.sign and abs(last.s - record.s) <= MERGE_TOL:
            merged[-1] = last.model_copy(
                update={
                    "multiplicity": last.multiplicity + record.multiplicity,
                    "blocks": sorted(set(last.blocks) | set(record.blocks)),
                }
            )
        else:
            merged.append(record)
    return sorted(merged, key=lambda r: (r.s, r.block))


def exact_flow(path: PathSpec) -> SpectralFlowResult:
    """
    Signed count of zero crossings along the path (negative to positive
    counts +1), certified block by block against negative-count changes.
    """
    window = path.tracking_window
    track = _Tracker(
        path=path,
        blocks=assemble(path.A0, path.K, path.mask),
        velocity=path.velocity(),
        lipschitz=path.velocity_bound(),
        window=window,
    )
    h_max = float(np.max(np.diff(path.grid)))
    if 2 * track.lipschitz * h_max > window:
        raise FlowError(
            f"grid too coarse: eigenvalues may move {track.lipschitz * h_max:.3f} per step, "
            f"tracking window is {window:.3f}"
        )

    grid = path.grid
    left_system = _system(path, grid[0])
    _check_gap(left_system, grid[0], path.gap)
    num_blocks = track.blocks.num_blocks
    left = [_block_sample(left_system, b, grid[0]) for b in range(num_blocks)]
    start_negatives = sum(x.negatives for x in left)

    for step, s in enumerate(grid[1:], start=1):
        right_system = _system(path, s)
        last = step == len(grid) - 1
        if last:
            _check_gap(right_system, s, path.gap)
        right = []
        for b in range(num_blocks):
            sample = _block_sample(right_system, b, s)
            if not last:
                sample = _nudged(track, sample, b, grid[step - 1], grid[step + 1])
            _resolve(track, b, left[b], sample, 0)
            right.append(sample)
        left = right

    records = _merge_records(track.records)
    f = sum(r.sign * r.multiplicity for r in records)
    end_negatives = sum(x.negatives for x in left)
    if f != start_negatives - end_negatives:
        raise CertificateError(
            f"crossing count {f} disagrees with the negative-count change {start_negatives - end_negatives}"
        )
    logger.info("Exact flow f=%d from %d crossing records (%d refinements)", f, len(records), track.refinements)
    return SpectralFlowResult(
        f=f,
        crossings=records,
        K=path.K,
        window=window,
        samples=len(grid),
        refinements=track.refinements,
        touches=track.touches,
    )


# Estimator


def phi(lam, t: float):
    """int_0^lam exp(-p^2 t) dp = (1/2) sqrt(pi/t) erf(lam sqrt(t))."""
    if t <= 0:
        raise FlowError(f"phi needs t > 0, got {t}")
    value = 0.5 * np.sqrt(np.pi / t) * special.erf(np.asarray(lam, dtype=float) * np.sqrt(t))
    return float(value) if np.ndim(value) == 0 else value


def choose_params(
    rmax: float,
    n: int,
    window: Optional[float] = None,
    q: Optional[float] = None,
    t: Optional[float] = None,
    R: Optional[float] = None,
) -> EstimatorParams:
    """
    t = rmax^{-(1+q)}, R = ln rmax with q = 1/(2(n+1)) by default.

    Below rmax = e the rule gives R < 1; (t, R) = (1/(2 rmax), 1) is used
    instead. A truncation R t^{-1/2} beyond ``window`` is clamped to it and
    T is taken at the clamped value.
    """
    if rmax <= 0:
        raise FlowError(f"rmax must be positive, got {rmax}")
    q = 1.0 / (2 * (n + 1)) if q is None else q
    if not 0 < q < 1.0 / (n + 1):
        raise FlowError(f"q must lie in (0, {1.0 / (n + 1):.4f}), got {q}")

    fallback = rmax < math.e
    if fallback:
        logger.warning("rmax=%.4f < e: using t = 1/(2 rmax), R = 1", rmax)
        t_rule, R_rule = 1.0 / (2 * rmax), 1.0
    else:
        t_rule, R_rule = rmax ** -(1 + q), math.log(rmax)
    t = t_rule if t is None else t
    R = R_rule if R is None else R
    if t <= 0 or R < 1:
        raise FlowError(f"estimator needs t > 0 and R >= 1, got t={t}, R={R}")
    if rmax * t > 1 + 1e-12:
        logger.warning("r t = %.4f exceeds 1; the heat-kernel density statement does not apply", rmax * t)

    cut = R / math.sqrt(t)
    clamped = window is not None and cut > window
    if clamped:
        logger.warning("Truncation R t^-1/2 = %.4f clamped to the trusted window %.4f", cut, window)
        cut = window
    return EstimatorParams(t=t, R=R, q=q, T=phi(cut, t), window=cut, clamped=clamped, fallback=fallback)


def wp(s: float, path: PathSpec, params: EstimatorParams, eig: EigenSystem, blocks: Optional[DiracBlocks] = None) -> float:
    """Mollified flow density at sample s, summed in ascending |lambda|."""
    if params.window > trusted_window(path.K) + 1e-12:
        raise FlowError(f"truncation {params.window:.4f} exceeds the trusted window {trusted_window(path.K):.4f}")
    if eig.vectors is None:
        raise FlowError("wp needs eigenvectors")
    if params.window > eig.window + 1e-12:
        raise FlowError(f"eigensystem at s={s:g} only covers |lambda| <= {eig.window:.4f}")
    idx = eig.select(params.window)
    if not len(idx):
        return 0.0
    blocks = blocks or assemble(path.A0, path.K, path.mask)
    lam = eig.values[idx]
    weights = cl_pairings(eig.vectors[idx], path.velocity(), blocks) * np.exp(-(lam**2) * params.t)
    order = np.argsort(np.abs(lam), kind="stable")
    return float(np.sum(weights[order])) / (2 * params.T)


def wp_density(path: PathSpec, s: float, curvature: Optional[CurvatureInput] = None) -> float:
    """(1/2 pi i)^{(n+1)/2} int_M Omega ^ tr(a ^ ch F_{A_s}); its s-integral is the prediction."""
    conn = path.connection_at(s)
    value = (1.0 / (2j * math.pi)) ** ((path.n + 1) // 2) * integrate_top(
        index_density(conn, path.velocity(), curvature)
    )
    return float(complex(value).real)


def path_rmax(path: PathSpec, grid: Optional[int] = None) -> float:
    return max(r_of_A(path.connection_at(s), grid) for s in path.grid)


def estimator_flow(
    path: PathSpec,
    params: Optional[EstimatorParams] = None,
    rmax: Optional[float] = None,
    with_density: bool = False,
) -> EstimatorResult:
    """Simpson integral of wp over the sample grid, with n = max_s n_s."""
    if params is None:
        params = choose_params(path_rmax(path) if rmax is None else rmax, path.n, window=path.tracking_window)
    window = max(params.window, path.tracking_window)
    blocks = assemble(path.A0, path.K, path.mask)

    values, counts, closest = [], [], []
    for s in path.grid:
        system = _system(path, s, window)
        values.append(wp(s, path, params, system, blocks))
        counts.append(int(len(system.select(params.window))))
        closest.append(system.min_abs())

    s_grid = np.asarray(path.grid)
    value = float(integrate.simpson(np.asarray(values), x=s_grid))
    n_bound = max(counts)
    density = density_integral = deviation = None
    if with_density:
        density = [wp_density(path, s) for s in path.grid]
        density_integral = float(integrate.simpson(np.asarray(density), x=s_grid))
        deviation = [w - d for w, d in zip(values, density)]
    weyl = n_bound / (params.R**path.n * params.t ** (-path.n / 2))
    logger.info("Estimator: int wp = %.6f, n = %d (t=%.4g, R=%.4g)", value, n_bound, params.t, params.R)
    return EstimatorResult(
        value=value,
        n_bound=n_bound,
        params=params,
        s=list(path.grid),
        wp=values,
        n_s=counts,
        lambda_min_abs=closest,
        density=density,
        density_integral=density_integral,
        deviation=deviation,
        weyl_ratio=weyl,
    )


def eta_difference(
    path: PathSpec,
    flow: Optional[SpectralFlowResult] = None,
    predicted: Optional[float] = None,
) -> float:
    """eta(A1) - eta(A0) = 2 (prediction - f)."""
    flow = exact_flow(path) if flow is None else flow
    predicted = prediction(path.A0, path.A1) if predicted is None else predicted
    return 2.0 * (predicted - flow.f)


def error_functional(path: PathSpec, p: float, grid: int = 16) -> tuple[float, float]:
    """
    (int_0^1 r(A_s)^p (int_M |d/ds A_s|) ds, max_s r(A_s)); the size of the
    error term allowed between the flow and its prediction.

    d/ds A_s is the velocity of A, twice the stored spinor-level velocity
    on a line bundle.
    """
    if path.A0.fiber != 1:
        raise FlowError("error functional is defined for line bundles")
    mass = 2.0 * form_mass(path.velocity(), grid)
    radii = np.array([r_of_A(path.connection_at(s)) for s in path.grid])
    value = float(integrate.simpson(radii**p * mass, x=np.asarray(path.grid)))
    return value, float(radii.max())
