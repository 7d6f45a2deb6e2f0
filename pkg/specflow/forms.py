"""
Spectral Flow Toolkit - Differential Forms

Exact exterior algebra of matrix-valued trigonometric-polynomial forms on
the unit torus T^n (side 1, volume 1, orientation dx_1 ^ ... ^ dx_n).
A term c * exp(2 pi i k.x) dx_I is keyed by (k, I) with I a strictly
increasing tuple of 0-based direction indices; all 2 pi factors live in the
Fourier phase, so integration over T^n is a single coefficient lookup.

Houses the relative Chern-Simons form, the Chern character, the A-hat form,
the index prediction and its leading-order law.
"""

import hashlib
import logging
import math
from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Union

import numpy as np

from .errors import CertificateError, FormError
from .models import FormDocument, FormTerm

logger = logging.getLogger(__name__)

# Coefficients whose largest entry falls below this are dropped after every operation
PRUNE_TOL = 1e-14
# Tolerance for the reality / anti-hermitian flags
FLAG_TOL = 1e-12
# Allowed relative imaginary residue of numerically real integrals
RESIDUE_TOL = 1e-9

Key = tuple[tuple[int, ...], tuple[int, ...]]


@lru_cache(maxsize=4096)
def _merge(left: tuple[int, ...], right: tuple[int, ...]) -> tuple[int, tuple[int, ...]]:
    """Sign and sorted union of two disjoint increasing index tuples."""
    inversions = sum(1 for a in left for b in right if a > b)
    return (-1 if inversions % 2 else 1), tuple(sorted(left + right))


def _as_matrix(value) -> np.ndarray:
    arr = np.asarray(value, dtype=complex)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise FormError(f"fiber coefficient must be a square matrix, got shape {arr.shape}")
    return arr


def _fiber_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.shape[0] == 1:
        return a[0, 0] * b
    if b.shape[0] == 1:
        return a * b[0, 0]
    return a @ b


class TrigPolyForm:
    """
    A degree-p form on T^n with finite Fourier support and m x m fiber
    coefficients. Immutable once built.

    A form produced by a product whose degree would exceed n is the zero
    form of degree n with ``overflow`` set ("vanishes above top degree").
    """

    __slots__ = ("n", "degree", "fiber", "overflow", "_terms")

    def __init__(
        self,
        n: int,
        degree: int,
        terms: Union[Mapping[Key, object], Iterable[tuple[Key, object]]] = (),
        fiber: Optional[int] = None,
        *,
        real: bool = False,
        anti_hermitian: bool = False,
        overflow: bool = False,
    ):
        if n < 1:
            raise FormError(f"ambient dimension must be >= 1, got {n}")
        if not 0 <= degree <= n:
            raise FormError(f"degree {degree} outside [0, {n}]")

        items = terms.items() if isinstance(terms, Mapping) else terms
        acc: dict[Key, np.ndarray] = {}
        for key, value in items:
            k, index = key
            k = tuple(int(x) for x in k)
            index = tuple(int(x) for x in index)
            if len(k) != n:
                raise FormError(f"momentum {k} has length {len(k)}, expected {n}")
            if len(index) != degree or any(not 0 <= i < n for i in index):
                raise FormError(f"index tuple {index} invalid for a degree-{degree} form on T^{n}")
            if any(a >= b for a, b in zip(index, index[1:])):
                raise FormError(f"index tuple {index} is not strictly increasing")
            coeff = _as_matrix(value)
            if fiber is None:
                fiber = coeff.shape[0]
            elif coeff.shape[0] != fiber:
                raise FormError(f"coefficient at {(k, index)} has fiber {coeff.shape[0]}, expected {fiber}")
            if (k, index) in acc:
                raise FormError(f"duplicate term key {(k, index)}")
            acc[(k, index)] = coeff

        self.n = n
        self.degree = degree
        self.fiber = fiber if fiber is not None else 1
        self.overflow = overflow
        self._terms = _canonical(acc)

        if real and not self.is_real():
            raise FormError("form flagged real violates coefficient(-k, I) = conj(coefficient(k, I))")
        if anti_hermitian and not self.is_anti_hermitian():
            raise FormError("form flagged anti-hermitian violates coefficient(-k, I) = -coefficient(k, I)^H")

    @classmethod
    def _build(cls, n: int, degree: int, fiber: int, acc: dict, overflow: bool = False) -> "TrigPolyForm":
        """Trusted constructor for already-canonical keys."""
        form = cls.__new__(cls)
        form.n = n
        form.degree = degree
        form.fiber = fiber
        form.overflow = overflow
        form._terms = _canonical(acc)
        return form

    # Constructors

    @classmethod
    def zero(cls, n: int, degree: int, fiber: int = 1, overflow: bool = False) -> "TrigPolyForm":
        return cls._build(n, min(degree, n), fiber, {}, overflow=overflow)

    @classmethod
    def constant(cls, n: int, value=1.0) -> "TrigPolyForm":
        """Constant 0-form; ``value`` is a scalar or a fiber matrix."""
        coeff = _as_matrix(value)
        return cls._build(n, 0, coeff.shape[0], {((0,) * n, ()): coeff})

    @classmethod
    def identity(cls, n: int, fiber: int = 1) -> "TrigPolyForm":
        return cls.constant(n, np.eye(fiber))

    @classmethod
    def dx(cls, n: int, *directions: int, coefficient=1.0) -> "TrigPolyForm":
        """Constant coordinate form coefficient * dx_{j1} ^ ... (0-based, any order)."""
        if len(set(directions)) != len(directions):
            return cls.zero(n, min(len(directions), n), _as_matrix(coefficient).shape[0])
        inversions = sum(
            1
            for i in range(len(directions))
            for j in range(i + 1, len(directions))
            if directions[i] > directions[j]
        )
        sign = -1 if inversions % 2 else 1
        index = tuple(sorted(directions))
        return cls(n, len(directions), {((0,) * n, index): sign * _as_matrix(coefficient)})

    @classmethod
    def plane_wave(cls, n: int, k: Iterable[int], index: Iterable[int], coefficient=1.0) -> "TrigPolyForm":
        index = tuple(index)
        return cls(n, len(index), {(tuple(k), index): coefficient})

    @classmethod
    def from_document(cls, doc: Union[FormDocument, dict]) -> "TrigPolyForm":
        if isinstance(doc, dict):
            doc = FormDocument.model_validate(doc)
        terms = []
        for term in doc.terms:
            coeff = np.asarray(term.re, dtype=float) + 1j * np.asarray(term.im, dtype=float)
            terms.append(((tuple(term.k), tuple(i - 1 for i in term.I)), coeff))
        return cls(doc.n, doc.degree, terms, fiber=doc.fiber)

    def to_document(self) -> FormDocument:
        return FormDocument(
            n=self.n,
            degree=self.degree,
            fiber=self.fiber,
            terms=[
                FormTerm(
                    k=list(k),
                    I=[i + 1 for i in index],
                    re=coeff.real.tolist(),
                    im=coeff.imag.tolist(),
                )
                for (k, index), coeff in self._terms.items()
            ],
        )

    # Inspection

    @property
    def terms(self) -> Mapping[Key, np.ndarray]:
        return MappingProxyType(self._terms)

    def items(self):
        return self._terms.items()

    def __len__(self) -> int:
        return len(self._terms)

    @property
    def is_zero(self) -> bool:
        return not self._terms

    def coefficient(self, k: Iterable[int], index: Iterable[int]) -> np.ndarray:
        value = self._terms.get((tuple(k), tuple(index)))
        return value.copy() if value is not None else np.zeros((self.fiber, self.fiber), dtype=complex)

    def support_radius(self) -> int:
        """Largest |k_j| over all terms (0 for the zero form)."""
        return max((max((abs(x) for x in k), default=0) for k, _ in self._terms), default=0)

    def is_real(self, tol: float = FLAG_TOL) -> bool:
        for (k, index), coeff in self._terms.items():
            partner = self._terms.get((tuple(-x for x in k), index))
            partner = partner if partner is not None else np.zeros_like(coeff)
            if np.max(np.abs(partner - coeff.conj())) > tol * max(1.0, np.max(np.abs(coeff))):
                return False
        return True

    def is_anti_hermitian(self, tol: float = FLAG_TOL) -> bool:
        for (k, index), coeff in self._terms.items():
            partner = self._terms.get((tuple(-x for x in k), index))
            partner = partner if partner is not None else np.zeros_like(coeff)
            if np.max(np.abs(partner + coeff.conj().T)) > tol * max(1.0, np.max(np.abs(coeff))):
                return False
        return True

    def fingerprint(self) -> str:
        digest = hashlib.sha1(f"{self.n}:{self.degree}:{self.fiber}".encode())
        for (k, index), coeff in self._terms.items():
            digest.update(repr((k, index)).encode())
            digest.update(np.ascontiguousarray(coeff).tobytes())
        return digest.hexdigest()

    def __repr__(self) -> str:
        flag = ", overflow" if self.overflow else ""
        return f"TrigPolyForm(n={self.n}, degree={self.degree}, fiber={self.fiber}, terms={len(self)}{flag})"

    # Linear structure

    def _check_same_space(self, other: "TrigPolyForm") -> None:
        if self.n != other.n or self.degree != other.degree:
            raise FormError(
                f"cannot combine degree-{self.degree} form on T^{self.n} with degree-{other.degree} form on T^{other.n}"
            )
        if self.fiber != other.fiber and not (self.is_zero or other.is_zero):
            raise FormError(f"fiber mismatch: {self.fiber} vs {other.fiber}")

    def __add__(self, other: "TrigPolyForm") -> "TrigPolyForm":
        self._check_same_space(other)
        fiber = self.fiber if not self.is_zero else other.fiber
        acc = {key: value.copy() for key, value in self._terms.items()}
        for key, value in other._terms.items():
            acc[key] = acc[key] + value if key in acc else value.copy()
        return TrigPolyForm._build(self.n, self.degree, fiber, acc)

    def __neg__(self) -> "TrigPolyForm":
        return self.scale(-1.0)

    def __sub__(self, other: "TrigPolyForm") -> "TrigPolyForm":
        return self + (-other)

    def scale(self, factor: complex) -> "TrigPolyForm":
        acc = {key: factor * value for key, value in self._terms.items()}
        return TrigPolyForm._build(self.n, self.degree, self.fiber, acc, overflow=self.overflow)

    def trace(self) -> "TrigPolyForm":
        """Fiber trace; the result has fiber size 1."""
        acc = {key: np.array([[np.trace(value)]]) for key, value in self._terms.items()}
        return TrigPolyForm._build(self.n, self.degree, 1, acc)

    def component(self, index: Iterable[int]) -> "TrigPolyForm":
        """The coefficient function of dx_I as a 0-form."""
        index = tuple(index)
        acc = {(k, ()): value.copy() for (k, i), value in self._terms.items() if i == index}
        return TrigPolyForm._build(self.n, 0, self.fiber, acc)

    def evaluate(self, points) -> dict[tuple[int, ...], np.ndarray]:
        """
        Pointwise values. ``points`` has shape (P, n) in torus coordinates.

        Returns:
            dict index tuple -> array (P, m, m) of coefficient values
        """
        points = np.atleast_2d(np.asarray(points, dtype=float))
        grouped: dict[tuple[int, ...], list] = {}
        for (k, index), coeff in self._terms.items():
            grouped.setdefault(index, []).append((k, coeff))
        values = {}
        for index, entries in grouped.items():
            momenta = np.array([k for k, _ in entries], dtype=float)
            coeffs = np.stack([c for _, c in entries])
            phases = np.exp(2j * np.pi * points @ momenta.T)
            values[index] = np.einsum("pt,tab->pab", phases, coeffs)
        return values


def _canonical(acc: dict) -> dict:
    return {
        key: value
        for key, value in sorted(acc.items())
        if value.size and np.max(np.abs(value)) >= PRUNE_TOL
    }


def wedge(a: TrigPolyForm, b: TrigPolyForm) -> TrigPolyForm:
    """Exterior product; fiber coefficients multiply as matrices (a's on the left)."""
    if a.n != b.n:
        raise FormError(f"cannot wedge forms on T^{a.n} and T^{b.n}")
    if a.fiber != b.fiber and a.fiber != 1 and b.fiber != 1:
        raise FormError(f"fiber sizes {a.fiber} and {b.fiber} are not compatible")
    fiber = max(a.fiber, b.fiber)
    degree = a.degree + b.degree
    if a.overflow or b.overflow or degree > a.n:
        return TrigPolyForm.zero(a.n, a.n, fiber, overflow=True)

    acc: dict[Key, np.ndarray] = {}
    for (ka, ia), ca in a._terms.items():
        for (kb, ib), cb in b._terms.items():
            if set(ia) & set(ib):
                continue
            sign, index = _merge(ia, ib)
            key = (tuple(x + y for x, y in zip(ka, kb)), index)
            contribution = sign * _fiber_product(ca, cb)
            acc[key] = acc[key] + contribution if key in acc else contribution
    return TrigPolyForm._build(a.n, degree, fiber, acc)


def ext_d(a: TrigPolyForm) -> TrigPolyForm:
    """Exterior derivative d(c e^{2 pi i k.x} dx_I) = sum_j 2 pi i k_j c e^{...} dx_j ^ dx_I."""
    if a.overflow or a.degree >= a.n:
        return TrigPolyForm.zero(a.n, a.n, a.fiber, overflow=True)
    acc: dict[Key, np.ndarray] = {}
    for (k, index), coeff in a._terms.items():
        for j in range(a.n):
            if k[j] == 0 or j in index:
                continue
            sign, merged = _merge((j,), index)
            key = (k, merged)
            contribution = (sign * 2j * math.pi * k[j]) * coeff
            acc[key] = acc[key] + contribution if key in acc else contribution
    return TrigPolyForm._build(a.n, a.degree + 1, a.fiber, acc)


def integrate_top(a: TrigPolyForm) -> Union[complex, np.ndarray]:
    """Integral over the unit torus: the zero-momentum coefficient of dx_1 ^ ... ^ dx_n."""
    if a.degree != a.n:
        raise FormError(f"integrate_top needs a degree-{a.n} form, got degree {a.degree}")
    coeff = a.coefficient((0,) * a.n, tuple(range(a.n)))
    return complex(coeff[0, 0]) if a.fiber == 1 else coeff


class MixedForm:
    """Inhomogeneous form: one TrigPolyForm per degree 0..n; absent degrees are zero."""

    __slots__ = ("n", "fiber", "_components")

    def __init__(self, n: int, fiber: int = 1, components: Optional[Mapping[int, TrigPolyForm]] = None):
        self.n = n
        self.fiber = fiber
        self._components: dict[int, TrigPolyForm] = {}
        for degree, form in sorted((components or {}).items()):
            if form.n != n or form.degree != degree:
                raise FormError(f"component of degree {form.degree} on T^{form.n} stored under degree {degree}")
            if form.overflow or form.is_zero:
                continue
            if form.fiber != fiber:
                raise FormError(f"component fiber {form.fiber} does not match mixed form fiber {fiber}")
            self._components[degree] = form

    @classmethod
    def identity(cls, n: int, fiber: int = 1) -> "MixedForm":
        return cls(n, fiber, {0: TrigPolyForm.identity(n, fiber)})

    @classmethod
    def from_form(cls, form: TrigPolyForm) -> "MixedForm":
        return cls(form.n, form.fiber, {form.degree: form})

    def component(self, degree: int) -> TrigPolyForm:
        form = self._components.get(degree)
        return form if form is not None else TrigPolyForm.zero(self.n, min(degree, self.n), self.fiber)

    def degrees(self) -> list[int]:
        return list(self._components)

    @property
    def is_zero(self) -> bool:
        return not self._components

    def __add__(self, other: "MixedForm") -> "MixedForm":
        if self.n != other.n:
            raise FormError(f"cannot add mixed forms on T^{self.n} and T^{other.n}")
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        components = dict(self._components)
        for degree, form in other._components.items():
            components[degree] = components[degree] + form if degree in components else form
        return MixedForm(self.n, self.fiber, components)

    def __neg__(self) -> "MixedForm":
        return self.scale(-1.0)

    def __sub__(self, other: "MixedForm") -> "MixedForm":
        return self + (-other)

    def scale(self, factor: complex) -> "MixedForm":
        return MixedForm(self.n, self.fiber, {d: f.scale(factor) for d, f in self._components.items()})

    def trace(self) -> "MixedForm":
        return MixedForm(self.n, 1, {d: f.trace() for d, f in self._components.items()})

    def __repr__(self) -> str:
        return f"MixedForm(n={self.n}, fiber={self.fiber}, degrees={self.degrees()})"


def wedge_mixed(a: Union[MixedForm, TrigPolyForm], b: Union[MixedForm, TrigPolyForm]) -> MixedForm:
    a = a if isinstance(a, MixedForm) else MixedForm.from_form(a)
    b = b if isinstance(b, MixedForm) else MixedForm.from_form(b)
    fiber = max(a.fiber, b.fiber)
    result = MixedForm(a.n, fiber)
    for p, fa in a._components.items():
        for q, fb in b._components.items():
            if p + q > a.n:
                continue
            result = result + MixedForm(a.n, fiber, {p + q: wedge(fa, fb)})
    return result


def exp_mixed(m: MixedForm) -> MixedForm:
    """Exponential series of a nilpotent mixed form with even components of degree >= 2."""
    if any(d == 0 or d % 2 for d in m.degrees()):
        raise FormError(f"exp needs even components of degree >= 2, got degrees {m.degrees()}")
    result = MixedForm.identity(m.n, m.fiber)
    power = MixedForm.identity(m.n, m.fiber)
    j = 0
    while True:
        j += 1
        power = wedge_mixed(power, m).scale(1.0 / j)
        if power.is_zero:
            return result
        result = result + power


def exp_form(F: TrigPolyForm) -> MixedForm:
    """sum_j F^j / j!, finite by nilpotency; the 0-form component is the fiber identity."""
    if F.overflow or F.is_zero:
        return MixedForm.identity(F.n, F.fiber)
    if F.degree < 2 or F.degree % 2:
        raise FormError(f"exp_form needs an even form of degree >= 2, got degree {F.degree}")
    return exp_mixed(MixedForm.from_form(F))


def curvature_of(a: TrigPolyForm) -> TrigPolyForm:
    """F = dA + A ^ A for a connection 1-form A."""
    if a.degree != 1:
        raise FormError(f"connection forms have degree 1, got {a.degree}")
    if a.n < 2:
        return TrigPolyForm.zero(a.n, a.n, a.fiber, overflow=True)
    return ext_d(a) + wedge(a, a)


@dataclass(frozen=True)
class Connection:
    """
    Unitary connection A_F on the trivial bundle over T^n, stored as a
    harmonic part i*theta_j dx_j (times the fiber identity) plus a zero-mean
    oscillatory anti-hermitian 1-form.

    This is the spinor-level connection seen by the Dirac operator; its
    curvature is the curvature of A with the central part halved.
    """

    n: int
    hol: tuple[float, ...]
    osc: TrigPolyForm

    def __post_init__(self):
        if self.n < 1 or self.n % 2 == 0:
            raise FormError(f"connections live on odd-dimensional tori, got n={self.n}")
        if len(self.hol) != self.n:
            raise FormError(f"holonomy vector has length {len(self.hol)}, expected {self.n}")
        object.__setattr__(self, "hol", tuple(float(x) for x in self.hol))
        if self.osc.n != self.n or self.osc.degree != 1:
            raise FormError("oscillatory part must be a 1-form on the same torus")
        if any(all(x == 0 for x in k) for k, _ in self.osc.terms):
            raise FormError("oscillatory part has a zero-momentum term; put it in the holonomy")
        if not self.osc.is_anti_hermitian():
            raise FormError("oscillatory part is not anti-hermitian (u(k)-valued)")

    @classmethod
    def flat(cls, n: int, hol: Optional[Iterable[float]] = None, fiber: int = 1) -> "Connection":
        hol = tuple(hol) if hol is not None else (0.0,) * n
        return cls(n, hol, TrigPolyForm.zero(n, 1, fiber))

    @property
    def fiber(self) -> int:
        return self.osc.fiber

    def harmonic_form(self) -> TrigPolyForm:
        eye = np.eye(self.fiber)
        terms = {((0,) * self.n, (j,)): 1j * theta * eye for j, theta in enumerate(self.hol)}
        return TrigPolyForm._build(self.n, 1, self.fiber, terms)

    def form(self) -> TrigPolyForm:
        """A_F as a single anti-hermitian 1-form."""
        return self.harmonic_form() + self.osc if not self.osc.is_zero else self.harmonic_form()

    def curvature(self) -> TrigPolyForm:
        """F_{A_F}."""
        return curvature_of(self.form())

    def shifted(self, delta_hol: Iterable[float], delta_osc: Optional[TrigPolyForm] = None) -> "Connection":
        hol = tuple(a + float(b) for a, b in zip(self.hol, delta_hol))
        osc = self.osc if delta_osc is None or delta_osc.is_zero else self.osc + delta_osc
        return Connection(self.n, hol, osc)

    def gauge(self, m: Iterable[int]) -> "Connection":
        """g . A for g = exp(2 pi i m.x): A - g^{-1} dg shifts the holonomy by -2 pi m."""
        m = tuple(int(x) for x in m)
        return Connection(self.n, tuple(t - 2 * math.pi * x for t, x in zip(self.hol, m)), self.osc)

    def fingerprint(self) -> str:
        digest = hashlib.sha1(np.asarray(self.hol, dtype=float).tobytes())
        digest.update(self.osc.fingerprint().encode())
        return digest.hexdigest()


def contact_form(n: int = 3, amplitude: float = 1.0) -> TrigPolyForm:
    """i * amplitude * (cos(2 pi x_3) dx_1 + sin(2 pi x_3) dx_2) on T^3."""
    if n != 3:
        raise FormError("the contact-like form is defined on T^3")
    up, down = (0, 0, 1), (0, 0, -1)
    half = 0.5 * amplitude
    return TrigPolyForm(
        3,
        1,
        {
            (up, (0,)): 1j * half,
            (down, (0,)): 1j * half,
            (up, (1,)): half,
            (down, (1,)): -half,
        },
        anti_hermitian=True,
    )


def contact_connection(r: float, hol: Iterable[float] = (0.0, 0.0, 0.0)) -> Connection:
    """Connection whose A moves by r * a_contact from flat; A_F moves by half of that."""
    return Connection(3, tuple(hol), contact_form(3, 0.5 * r))


@dataclass(frozen=True)
class CurvatureInput:
    """Riemann curvature as a 2-form with real antisymmetric d x d fiber values."""

    R2: TrigPolyForm

    def __post_init__(self):
        if self.R2.degree != 2 and not self.R2.is_zero:
            raise FormError(f"curvature must be a 2-form, got degree {self.R2.degree}")
        for key, coeff in self.R2.items():
            if np.max(np.abs(coeff.T + coeff)) > FLAG_TOL * max(1.0, np.max(np.abs(coeff))):
                raise FormError(f"curvature coefficient at {key} is not antisymmetric in the fiber")
        if not self.R2.is_real():
            raise FormError("curvature 2-form must be real-valued")

    @classmethod
    def flat(cls, n: int, d: Optional[int] = None) -> "CurvatureInput":
        return cls(TrigPolyForm.zero(n, min(2, n), d if d is not None else n))


def chs(A0: Connection, A1: Connection) -> MixedForm:
    """
    Relative Chern-Simons form int_0^1 tr(a ^ exp(F_{A_F(s)})) ds along the
    straight path A_F(s) = A0_F + s a, a = A1_F - A0_F.

    The integrand is polynomial in s, so Gauss-Legendre with enough nodes is
    exact up to rounding.
    """
    if A0.n != A1.n:
        raise FormError(f"connections live on T^{A0.n} and T^{A1.n}")
    if A0.fiber != A1.fiber:
        raise FormError(f"fiber sizes {A0.fiber} and {A1.fiber} differ")
    n = A0.n
    base = A0.form()
    a_hat = A1.form() - base
    if a_hat.is_zero:
        return MixedForm(n, 1)

    max_degree = n - 1 if A0.fiber == 1 else n + 1
    nodes, weights = np.polynomial.legendre.leggauss(math.ceil((max_degree + 2) / 2))
    total = MixedForm(n, 1)
    for x, w in zip(nodes, weights):
        s = 0.5 * (x + 1.0)
        F = curvature_of(base + a_hat.scale(s))
        integrand = wedge_mixed(a_hat, exp_form(F)).trace()
        total = total + integrand.scale(0.5 * w)
    return total


def ahat_form(curvature: Optional[CurvatureInput], n: Optional[int] = None) -> MixedForm:
    """
    Omega_Ahat = det(sinh(R/2) / (R/2))^{-1/2}, computed as
    exp(-1/2 tr log(I + N)) with N = sum_{j>=1} (R/2)^{2j} / (2j+1)! nilpotent.
    """
    if curvature is None:
        if n is None:
            raise FormError("ahat_form needs a curvature input or the ambient dimension")
        return MixedForm.identity(n, 1)
    X = curvature.R2.scale(0.5)
    n = X.n
    if X.is_zero or X.degree != 2:
        return MixedForm.identity(n, 1)

    square = wedge(X, X)
    N = MixedForm(n, X.fiber)
    power, j = square, 1
    while not power.overflow and not power.is_zero:
        N = N + MixedForm.from_form(power.scale(1.0 / math.factorial(2 * j + 1)))
        power, j = wedge(power, square), j + 1
    if N.is_zero:
        return MixedForm.identity(n, 1)

    log_trace = MixedForm(n, 1)
    power, j = N, 1
    while not power.is_zero:
        log_trace = log_trace + power.trace().scale((-1) ** (j + 1) / j)
        power, j = wedge_mixed(power, N), j + 1
    if log_trace.is_zero:
        return MixedForm.identity(n, 1)
    return exp_mixed(log_trace.scale(-0.5))


def _real_part(value: complex, what: str) -> float:
    residue = abs(value.imag)
    logger.debug("%s imaginary residue %.3e", what, residue)
    if residue > RESIDUE_TOL * max(1.0, abs(value)):
        raise CertificateError(f"{what} has imaginary residue {residue:.3e} (value {value})")
    return float(value.real)


def index_density(
    conn: Connection, a_hat: TrigPolyForm, curvature: Optional[CurvatureInput] = None
) -> TrigPolyForm:
    """Top-degree part of Omega_Ahat ^ tr(a ^ ch(F_{A_F})) (no 2 pi i normalization)."""
    if a_hat.n != conn.n or a_hat.degree != 1:
        raise FormError("velocity must be a 1-form on the connection's torus")
    omega = ahat_form(curvature, conn.n)
    chern = exp_form(conn.curvature())
    return wedge_mixed(omega, wedge_mixed(a_hat, chern).trace()).component(conn.n)


def prediction(A0: Connection, A1: Connection, curvature: Optional[CurvatureInput] = None) -> float:
    """(1/2 pi i)^{(n+1)/2} int_M Omega_Ahat ^ chs(A0, A1)."""
    n = A0.n
    omega = ahat_form(curvature, n)
    top = wedge_mixed(omega, chs(A0, A1)).component(n)
    value = (1.0 / (2j * math.pi)) ** ((n + 1) // 2) * integrate_top(top)
    return _real_part(complex(value), "prediction")


def leading_order(a: TrigPolyForm, r: float) -> float:
    """r^{(n+1)/2} (1/4 pi i)^{(n+1)/2} / ((n+1)/2)! int_M a ^ (da)^{(n-1)/2}."""
    if a.degree != 1 or a.fiber != 1 or not a.is_anti_hermitian():
        raise FormError("leading_order needs an imaginary-valued (u(1)) 1-form")
    n = a.n
    half = (n + 1) // 2
    da = ext_d(a)
    form = a
    for _ in range(half - 1):
        form = wedge(form, da)
    integral = 0.0 if form.overflow or form.degree != n else integrate_top(form)
    value = r**half * (1.0 / (4j * math.pi)) ** half / math.factorial(half) * integral
    return _real_part(complex(value), "leading order")
