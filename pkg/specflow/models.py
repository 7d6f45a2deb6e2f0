"""
Spectral Flow Toolkit - Data Models

Pydantic models for experiment configuration, the forms JSON document,
and the result records emitted by the flow, heat and experiment layers.
"""

from enum import Enum
from typing import Any, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class ExperimentName(str, Enum):
    """Named experiments runnable from the CLI."""

    WINDING = "winding"
    CONTACT_SWEEP = "contact-sweep"
    ESTIMATOR_CHECK = "estimator-check"
    HEAT_CHECK = "heat-check"
    CHS_CHECK = "chs-check"


# Forms JSON document


class FormTerm(BaseModel):
    """One term c * exp(2 pi i k.x) dx_I; I uses 1-based direction indices."""

    k: list[int]
    I: list[int] = Field(default_factory=list)  # noqa: E741
    re: list[list[float]]
    im: list[list[float]]

    @field_validator("I")
    @classmethod
    def _increasing(cls, v: list[int]) -> list[int]:
        if any(i < 1 for i in v) or any(a >= b for a, b in zip(v, v[1:])):
            raise ValueError(f"index list {v} must be strictly increasing and 1-based")
        return v

    @model_validator(mode="after")
    def _square(self) -> "FormTerm":
        rows = len(self.re)
        if rows == 0 or any(len(row) != rows for row in self.re):
            raise ValueError("re must be a non-empty square matrix")
        if len(self.im) != rows or any(len(row) != rows for row in self.im):
            raise ValueError("im must have the same square shape as re")
        return self


class FormDocument(BaseModel):
    """Serialized TrigPolyForm."""

    n: int = Field(ge=1)
    degree: int = Field(ge=0)
    fiber: int = Field(1, ge=1)
    terms: list[FormTerm] = Field(default_factory=list)

    @model_validator(mode="after")
    def _consistent(self) -> "FormDocument":
        if self.degree > self.n:
            raise ValueError(f"degree {self.degree} exceeds dimension {self.n}")
        for term in self.terms:
            if len(term.k) != self.n:
                raise ValueError(f"momentum {term.k} has wrong length for n={self.n}")
            if len(term.I) != self.degree or any(i > self.n for i in term.I):
                raise ValueError(f"index list {term.I} invalid for degree {self.degree} on T^{self.n}")
            if len(term.re) != self.fiber:
                raise ValueError(f"coefficient of size {len(term.re)} does not match fiber {self.fiber}")
        return self


# Experiment configuration


class EstimatorOverrides(BaseModel):
    """Optional manual (t, R, q); anything left unset follows the r-based rule."""

    model_config = ConfigDict(extra="forbid")

    t: Optional[float] = Field(None, gt=0)
    R: Optional[float] = Field(None, ge=1)
    q: Optional[float] = Field(None, gt=0)


class HeatSettings(BaseModel):
    """Sweeps driven by the heat-check experiment."""

    model_config = ConfigDict(extra="forbid")

    t_grid: list[float] = Field(default_factory=lambda: [0.2, 0.1, 0.05, 0.03, 0.02, 0.01])
    # Free-torus Poisson oracle; each t must be admissible for its cutoff
    oracle_t_grid: list[float] = Field(default_factory=lambda: [1e-2, 1e-3])
    lambda_grid: list[float] = Field(default_factory=lambda: [1.0, 5.0, 10.0, 20.0, 30.0])
    points_per_axis: int = Field(16, ge=2)
    # Cutoffs for the free n=1, free n=3 and contact (n=3) operators
    K_free_1: int = Field(128, ge=1)
    K_free_3: int = Field(40, ge=1)
    K_contact: int = Field(24, ge=1)
    contact_r: float = Field(1.0, gt=0)

    @field_validator("t_grid", "oracle_t_grid", "lambda_grid")
    @classmethod
    def _positive(cls, v: list[float]) -> list[float]:
        if not v or any(x <= 0 for x in v):
            raise ValueError("grids must be non-empty and positive")
        return v


class ExperimentConfig(BaseModel):
    """
    Fully resolved configuration of one experiment run.

    Validated before any computation; every run writes it back out as
    resolved-config.json.
    """

    model_config = ConfigDict(extra="forbid")

    experiment: ExperimentName
    n: int = 1
    K: int = Field(8, ge=1)
    s_grid: int = Field(33, ge=3)  # number of samples including both endpoints
    hol: Optional[list[float]] = None
    osc: Optional[FormDocument] = None
    windings: list[int] = Field(default_factory=lambda: [-3, -2, -1, 0, 1, 2, 3])
    r_sweep: list[float] = Field(default_factory=lambda: [4.0, 6.0, 8.0, 12.0, 16.0])
    estimator: EstimatorOverrides = Field(default_factory=EstimatorOverrides)
    heat: HeatSettings = Field(default_factory=HeatSettings)
    gap: float = Field(1e-6, gt=0)
    auto_cutoff: bool = True
    out_dir: Optional[str] = None
    seed: int = Field(0, ge=0, lt=2**64)

    @field_validator("n")
    @classmethod
    def _odd(cls, v: int) -> int:
        if v not in (1, 3):
            raise ValueError(f"operator experiments run on T^1 or T^3, got n={v}")
        return v

    @field_validator("r_sweep")
    @classmethod
    def _positive_r(cls, v: list[float]) -> list[float]:
        if any(r <= 0 for r in v):
            raise ValueError("r-sweep values must be positive")
        return v

    @model_validator(mode="after")
    def _shapes(self) -> "ExperimentConfig":
        if self.hol is not None and len(self.hol) != self.n:
            raise ValueError(f"hol has length {len(self.hol)}, expected {self.n}")
        if self.osc is not None and (self.osc.n != self.n or self.osc.degree != 1):
            raise ValueError("osc must be a 1-form document on the experiment's torus")
        if self.experiment == ExperimentName.WINDING and self.n != 1:
            raise ValueError("the winding experiment runs on T^1")
        if self.experiment == ExperimentName.CONTACT_SWEEP and self.n != 3:
            raise ValueError("the contact sweep runs on T^3")
        return self


# Results


class CrossingRecord(BaseModel):
    """One signed zero crossing of an eigenvalue branch."""

    s: float
    sign: int
    multiplicity: int = Field(1, ge=1)
    block: int
    branch: int
    slope: float
    # every block taking part in a simultaneous crossing
    blocks: list[int] = Field(default_factory=list)

    @field_validator("sign")
    @classmethod
    def _unit(cls, v: int) -> int:
        if v not in (-1, 1):
            raise ValueError(f"crossing sign must be +1 or -1, got {v}")
        return v

    @model_validator(mode="after")
    def _own_block(self) -> "CrossingRecord":
        if not self.blocks:
            self.blocks = [self.block]
        return self


class SpectralFlowResult(BaseModel):
    """Signed crossing count f with its crossing records and diagnostics."""

    f: int
    crossings: list[CrossingRecord] = Field(default_factory=list)
    K: int
    window: float
    samples: int
    refinements: int = 0
    touches: int = 0

    @model_validator(mode="after")
    def _count(self) -> "SpectralFlowResult":
        total = sum(c.sign * c.multiplicity for c in self.crossings)
        if total != self.f:
            raise ValueError(f"f={self.f} disagrees with crossing records (sum {total})")
        return self


class EstimatorParams(BaseModel):
    """(t, R, q) with the derived T = phi(Lambda, t) and truncation Lambda."""

    t: float = Field(gt=0)
    R: float = Field(ge=1)
    q: float = Field(gt=0)
    T: float = Field(gt=0)
    window: float = Field(gt=0)
    clamped: bool = False
    fallback: bool = False


class EstimatorResult(BaseModel):
    """Integral of the mollified flow density and the n-bound certificate."""

    value: float
    n_bound: int
    params: EstimatorParams
    s: list[float]
    wp: list[float]
    n_s: list[int]
    lambda_min_abs: list[float]
    density: Optional[list[float]] = None
    density_integral: Optional[float] = None
    # wp - density per sample
    deviation: Optional[list[float]] = None
    weyl_ratio: Optional[float] = None


class PLambdaResult(BaseModel):
    """Truncated weighted eigensum next to the heat-kernel density prediction."""

    t: float
    lam: float
    p: float
    density: float
    residual: float
    count: int


class ExperimentReport(BaseModel):
    """Summary written to summary.json for one experiment."""

    experiment: ExperimentName
    passed: bool
    failures: list[str] = Field(default_factory=list)
    summary: dict[str, Any] = Field(default_factory=dict)
    files: list[str] = Field(default_factory=list)
    elapsed_seconds: float = 0.0
