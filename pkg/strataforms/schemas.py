from pydantic import BaseModel, Field
from typing import List, Optional, Dict, Any, Union, Literal

Rational = Union[int, str]
PolynomialSpec = Union[str, int, List[List[Any]]]

# Project file schemas
class RunConfig(BaseModel):
    tol: Optional[float] = Field(default=None, gt=0.0)
    quad_order: Optional[int] = Field(default=None, ge=1, le=60)
    samples: Optional[int] = Field(default=None, ge=1)
    seed: Optional[int] = Field(default=None, ge=0)
    jobs: Optional[int] = Field(default=None, ge=1)

class ComplexSpec(BaseModel):
    id: str
    vertices: List[List[Rational]]
    simplices: List[List[int]]  # maximal simplices, closed under faces on load

class FaceSpec(BaseModel):
    id: str
    sign: int = Field(default=1)

class CellSpec(BaseModel):
    id: str
    kind: Literal["point", "simplex", "box", "polynomial"]
    points: Optional[List[List[Rational]]] = None  # point: 1 point, simplex: k+1 vertices
    origin: Optional[List[Rational]] = None  # box: origin + sum u_j * edges[j]
    edges: Optional[List[List[Rational]]] = None
    ref_domain: Optional[Literal["simplex", "box"]] = None
    dim: Optional[int] = Field(default=None, ge=0)
    maps: Optional[List[PolynomialSpec]] = None  # polynomial: one entry per ambient coordinate in u1..uk
    orientation: int = 1
    faces: List[FaceSpec] = []

class StratumSpec(BaseModel):
    id: str
    dim: int = Field(ge=0)
    pieces: List[str]
    adjacency: List[str] = []

class StratificationSpec(BaseModel):
    id: str
    ambient_dim: Optional[int] = Field(default=None, ge=1)
    complex: Optional[str] = None  # every open simplex of the complex becomes a stratum
    strata: List[StratumSpec] = []

class TermSpec(BaseModel):
    index: List[int] = []  # strictly increasing, 1-based; empty for 0-forms
    coeff: PolynomialSpec

class FormSpec(BaseModel):
    id: str
    ambient_dim: int = Field(ge=1)
    degree: int = Field(ge=0)
    stratification: Optional[str] = None
    terms: Optional[List[TermSpec]] = None  # the same polynomial form on every stratum
    components: Dict[str, List[TermSpec]] = {}
    declared_bound: Optional[Rational] = None

class ChainSpec(BaseModel):
    id: str
    degree: int = Field(ge=0)
    terms: Dict[str, Rational]
    splits: Dict[str, Dict[str, Rational]] = {}

class CochainSpec(BaseModel):
    id: str
    complex: str
    degree: int = Field(ge=0)
    values: Dict[str, Rational]

class DelimiterSpec(BaseModel):
    pieces: List[PolynomialSpec]  # polynomials in the base coordinates
    breaks: List[Rational] = []  # along x1; piece i applies up to breaks[i]

class RetractionSpec(BaseModel):
    id: str
    kind: Literal["cone", "lifted", "polynomial"]
    ambient_dim: int = Field(ge=1)
    domain: Optional[str] = None
    center: Optional[List[Rational]] = None
    components: Optional[List[PolynomialSpec]] = None  # polynomial kind: in x1..xn and t = x(n+1)
    target: List[str] = []
    base: Optional[str] = None
    lower: Optional[DelimiterSpec] = None
    upper: Optional[DelimiterSpec] = None
    cellkind: Literal["band", "graph"] = "band"
    base_box: Optional[List[List[Rational]]] = None

class GridSpec(BaseModel):
    id: str
    form: str
    box: List[List[float]]
    resolution: List[int]
    eps: List[float] = [0.2, 0.1, 0.05]

class ProjectFile(BaseModel):
    version: str = "1"
    cells: List[CellSpec] = []
    complexes: List[ComplexSpec] = []
    stratifications: List[StratificationSpec] = []
    forms: List[FormSpec] = []
    chains: List[ChainSpec] = []
    cochains: List[CochainSpec] = []
    retractions: List[RetractionSpec] = []
    grids: List[GridSpec] = []
    run: RunConfig = RunConfig()

    class Config:
        extra = "forbid"

# Report schemas
class FrontierCheck(BaseModel):
    stratum: str
    checked: int
    skipped: int
    max_distance: float

class FrontierFailure(BaseModel):
    stratum: str
    point: List[float]
    nearest: Optional[str] = None
    distance: float

class OverlapFailure(BaseModel):
    stratum: str
    other: str
    point: List[float]

class ValidationReport(BaseModel):
    passed: bool
    samples: int
    tol: float
    strata: List[FrontierCheck] = []
    failures: List[FrontierFailure] = []
    overlaps: List[OverlapFailure] = []

class ContinuityPair(BaseModel):
    lower: str
    upper: str
    checked: int
    max_gap: float
    max_finest: float

class ContinuityFailure(BaseModel):
    lower: str
    upper: str
    point: List[float]
    limit: float
    value: float
    gap: float

class ContinuityReport(BaseModel):
    passed: bool
    tol: float
    pairs: List[ContinuityPair] = []
    failures: List[ContinuityFailure] = []

class ResidualReport(BaseModel):
    passed: bool
    tol: float
    form: Optional[str] = None
    chain: Optional[str] = None
    eps: List[float] = []
    residuals: List[float] = []
    monotone: bool = True
    lhs: float
    rhs: float
    limit_residual: float
    per_cell: Dict[str, float] = {}
    witness: Optional[Dict[str, Any]] = None

class BettiTable(BaseModel):
    numbers: List[int]
    counts: List[int]
    ranks: List[int]  # rank of the boundary map from degree k+1 to k
    euler: int

class DerhamDegree(BaseModel):
    degree: int
    betti: int
    pairing_rank: int
    cocycles: int
    cycles: int
    chain_map_residual: float

class DerhamReport(BaseModel):
    passed: bool
    complex: Optional[str] = None
    degrees: List[DerhamDegree] = []
    duality_residual: Optional[float] = None
    periods: Dict[str, float] = {}

class RetractionAuditReport(BaseModel):
    passed: bool
    kind: str
    samples: int
    identity_error: float
    target_misses: int
    preservation_violations: int
    target_strata: Dict[str, List[str]] = {}
    tau_error: Optional[float] = None
    tau_exact: Optional[bool] = None
    failures: List[Dict[str, Any]] = []

class PoincareReport(BaseModel):
    passed: bool
    form: Optional[str] = None
    retraction: Optional[str] = None
    degree: int
    symbolic_residual: str
    weak_residual: Optional[float] = None
    audit: Optional[RetractionAuditReport] = None
    primitive: Dict[str, Dict[str, str]] = {}

class SemiDifferentiabilityReport(BaseModel):
    passed: bool
    t: List[float]
    residuals: List[float]
    monotone: bool
    limit: float
    tol: float
    step: float
    preservation_violations: int = 0
    witness: Optional[Dict[str, Any]] = None

class LipschitzEstimate(BaseModel):
    estimate: float
    samples: int
    pair_ratio: float
    differential_sup: float

class ConvolutionReport(BaseModel):
    passed: bool
    h: float
    bound: float
    commute_residual: float
    derivative_residual: float

class WeakDerivativeReport(BaseModel):
    passed: bool
    tol: float
    testforms: int
    residuals: List[float]
    residual: float
    witness: Optional[Dict[str, Any]] = None

class SmoothingRun(BaseModel):
    eps: float
    error: float
    mass_error: float
    inset: List[List[float]]

class SmoothingReport(BaseModel):
    passed: bool
    form: Optional[str] = None
    monotone: bool
    runs: List[SmoothingRun] = []

class CheckResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""

class CommandReport(BaseModel):
    command: str
    passed: bool
    version: str
    seed: int
    settings: Dict[str, Any] = {}
    checks: List[CheckResult] = []
    reports: Dict[str, Any] = {}
