"""
Data models for scenario validation and report records
"""
import math
from typing import Annotated, Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

# A complex number in JSON: a real number or a [re, im] pair
ComplexValue = Union[float, Tuple[float, float]]
PointValue = List[ComplexValue]


def as_complex(value: ComplexValue) -> complex:
    if isinstance(value, (int, float)):
        return complex(value)
    re, im = value
    return complex(re, im)


def as_point(values: Sequence[ComplexValue]) -> np.ndarray:
    return np.array([as_complex(v) for v in values], dtype=complex)


def complex_pairs(values) -> List[List[float]]:
    """Encode complex numbers as [re, im] pairs"""
    return [[float(np.real(v)), float(np.imag(v))] for v in np.asarray(values, dtype=complex).reshape(-1)]


def to_jsonable(obj: Any) -> Any:
    """Convert numpy scalars and arrays to plain JSON values; non-finite floats become None"""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        if np.iscomplexobj(obj):
            return complex_pairs(obj)
        return to_jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    if isinstance(obj, (complex, np.complexfloating)):
        return complex_pairs([obj])[0]
    if hasattr(obj, "as_dict"):
        return to_jsonable(obj.as_dict())
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


class StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


# --- declarations ------------------------------------------------------------

class Ambient(StrictModel):
    """Ambient dimension, either plain N or the graph split n + k + p"""
    N: Optional[int] = Field(None, ge=1)
    n: Optional[int] = Field(None, ge=1)
    k: int = Field(0, ge=0)
    p: int = Field(0, ge=0)

    @model_validator(mode="after")
    def _check(self):
        if self.N is None and self.n is None:
            raise ValueError("give N or n")
        if self.N is not None and self.n is not None and self.N != self.n + self.k + self.p:
            raise ValueError("N must equal n + k + p")
        return self

    @property
    def dim(self) -> int:
        return self.N if self.N is not None else self.n + self.k + self.p


class ExampleRef(StrictModel):
    """Catalog object built with keyword parameters"""
    example: str
    params: Dict[str, Any] = Field(default_factory=dict)


class DomainSpec(StrictModel):
    """Sublevel domain {rho < 0}: inline DSL or a catalog example"""
    rho: Optional[str] = None
    dim: Optional[int] = Field(None, ge=1)
    box: float = Field(2.0, gt=0)
    center: Optional[PointValue] = None
    example: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)
    complement: bool = False

    @model_validator(mode="after")
    def _check(self):
        if (self.rho is None) == (self.example is None):
            raise ValueError("give exactly one of rho or example")
        return self


class GraphSpec(StrictModel):
    """Graph mapping: inline components or a catalog example"""
    n: Optional[int] = Field(None, ge=1)
    k: int = Field(0, ge=0)
    p: int = Field(0, ge=0)
    f_v: List[str] = Field(default_factory=list)
    f_zeta: List[str] = Field(default_factory=list)
    box: float = Field(1.0, gt=0)
    example: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        if self.example is None and self.n is None:
            raise ValueError("give n (with f_v / f_zeta) or example")
        return self


class FamilySpec(StrictModel):
    """Analytic family: inline components in s1..sm and t, or a catalog example"""
    dim: Optional[int] = Field(None, ge=1)
    m: int = Field(1, ge=0)
    components: List[str] = Field(default_factory=list)
    radius: float = Field(1.0, gt=0)
    shape: Literal["polydisc", "ball"] = "polydisc"
    coordinate_change: Optional[List[str]] = None
    example: Optional[str] = None
    params: Dict[str, Any] = Field(default_factory=dict)

    @model_validator(mode="after")
    def _check(self):
        if self.example is None and not self.components:
            raise ValueError("give components or example")
        return self


class NormModel(StrictModel):
    kind: Literal["euclidean", "sup", "weighted"] = "euclidean"
    weights: Optional[List[float]] = None


class SamplingSpec(StrictModel):
    """
    Where points come from.

    points: explicit list; box: uniform in the polydisc of radius `max_norm`;
    interior / boundary: domain samples; shell: {min_norm <= |w|_inf <= max_norm};
    graph: uniform (z, u) in the graph's domain box.
    """
    kind: Literal["points", "box", "interior", "boundary", "shell", "graph"] = "points"
    points: List[PointValue] = Field(default_factory=list)
    count: int = Field(20, ge=1)
    seed: Optional[int] = None
    min_norm: float = Field(0.0, ge=0)
    max_norm: Optional[float] = Field(None, gt=0)
    margin: float = Field(1e-3, ge=0)
    scale: float = Field(0.9, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if self.kind == "points" and not self.points:
            raise ValueError("points sampling needs a non-empty points list")
        return self


class Tolerances(StrictModel):
    tol: Optional[float] = Field(None, gt=0, lt=1)
    fd_tol: Optional[float] = Field(None, gt=0, lt=1)
    boundary_tol: Optional[float] = Field(None, gt=0)
    contact_tol: Optional[float] = Field(None, gt=0)


class OutputSpec(StrictModel):
    dir: Optional[str] = None
    csv: bool = True


# --- tasks -------------------------------------------------------------------

class TaskBase(StrictModel):
    id: Optional[str] = None


class ClassifyTask(TaskBase):
    kind: Literal["classify_qpsh"]
    expr: str
    q: int = Field(ge=0)
    strict: bool = False
    samples: SamplingSpec


class JetCheckTask(TaskBase):
    kind: Literal["jet_check"]
    expr: str
    samples: SamplingSpec
    h: Optional[float] = Field(None, ge=1e-8, le=1e-3)


class LeviPcvTask(TaskBase):
    kind: Literal["levi_pcv"]
    domain: str
    q: int = Field(ge=0)
    strict: bool = False
    samples: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="boundary", count=50))


class HartogsProbeTask(TaskBase):
    kind: Literal["hartogs_probe"]
    domain: str
    q: int = Field(ge=0)
    grid: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="interior", count=200))
    norm: NormModel = Field(default_factory=NormModel)
    n_rays: int = Field(64, ge=1)


class DistanceTask(TaskBase):
    kind: Literal["distance"]
    domain: str
    samples: SamplingSpec
    norm: NormModel = Field(default_factory=NormModel)
    n_rays: int = Field(64, ge=1)


class CrossCheckTask(TaskBase):
    kind: Literal["cross_check"]
    domain: str
    q: int = Field(ge=0)
    boundary: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="boundary", count=50))
    grid: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="interior", count=200))
    norm: NormModel = Field(default_factory=NormModel)


class RelativePcvTask(TaskBase):
    kind: Literal["relative_pcv"]
    domain: str
    ambient_domain: str
    q: int = Field(ge=0)
    n_boundary: int = Field(10, ge=1)
    radius: float = Field(0.2, gt=0)


class LocalMaxTask(TaskBase):
    kind: Literal["local_max"]
    expr: str
    center: PointValue
    frame: Optional[List[PointValue]] = None
    q: int = Field(0, ge=0)
    radius: float = Field(0.5, gt=0)
    n_boundary: int = Field(1000, ge=1)


class ExhaustionTask(TaskBase):
    kind: Literal["exhaustion"]
    expr: str
    q: int = Field(ge=0)
    samples: SamplingSpec
    approach: List[List[PointValue]] = Field(default_factory=list)
    blowup: float = 10.0


class FamilyRef(StrictModel):
    """A declared family, or one derived from a graph's refutation witness"""
    name: Optional[str] = None
    witness_of: Optional[str] = None
    totally_real_at: Optional[PointValue] = None
    q: int = Field(1, ge=1)
    samples: Optional[SamplingSpec] = None
    mu: float = Field(1.0, gt=0)
    radius: float = Field(0.1, gt=0)
    eps: float = Field(0.05, gt=0)
    scale: float = Field(0.1, gt=0)

    @model_validator(mode="after")
    def _check(self):
        if (self.name is None) == (self.witness_of is None):
            raise ValueError("give exactly one of name or witness_of")
        return self


class SweepTask(TaskBase):
    kind: Literal["sweep", "witness_sweep"]
    domain: Optional[str] = None
    graph_complement: Optional[str] = None
    family: FamilyRef
    n_t: int = Field(32, ge=2)
    resolution: int = Field(8, ge=2)
    refine: bool = True

    @model_validator(mode="after")
    def _check(self):
        if (self.domain is None) == (self.graph_complement is None):
            raise ValueError("give exactly one of domain or graph_complement")
        return self


class HartogsFigureTask(TaskBase):
    kind: Literal["hartogs_figure"]
    domain: str
    q: int = Field(ge=1)
    r: float = Field(gt=0, lt=1)
    R: float = Field(gt=0, lt=1)
    map: Optional[List[str]] = None
    n_samples: int = Field(4000, ge=1)


class CrScanTask(TaskBase):
    kind: Literal["cr_scan"]
    graph: str
    samples: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="graph", count=50))


class CertificateTask(TaskBase):
    kind: Literal["certificate"]
    graph: str
    q: int = Field(ge=1)
    samples: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="graph", count=50))


class TraceTask(TaskBase):
    kind: Literal["trace"]
    graph: str
    start: PointValue
    steps: int = Field(200, ge=4)
    step_size: float = Field(1e-2, gt=0)
    certificate_samples: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="graph", count=20))
    csv: Optional[str] = None


class SliceTask(TaskBase):
    kind: Literal["slice"]
    graph: str
    matrix: List[List[ComplexValue]]
    offset: PointValue
    zeta_subset: Optional[List[int]] = None
    samples: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="graph", count=20))


class BasenerTask(TaskBase):
    kind: Literal["basener"]
    graph: str
    samples: SamplingSpec = Field(default_factory=lambda: SamplingSpec(kind="graph", count=100))


class HomogeneityTask(TaskBase):
    kind: Literal["homogeneity"]
    graph: str
    degree: int
    count: int = Field(500, ge=1)


class UkStudyTask(TaskBase):
    kind: Literal["uk_study"]
    q: int = Field(2, ge=1)
    ks: List[int] = Field(default_factory=lambda: [2, 4, 8, 16, 32])
    n_samples: int = Field(500, ge=1)
    n_verdict_samples: int = Field(100, ge=1)


class StrictifyTask(TaskBase):
    kind: Literal["strictify"]
    expr: str
    z0: PointValue
    eps: float = Field(gt=0)
    q: int = Field(ge=0)
    samples: SamplingSpec
    eps_max: Optional[float] = Field(None, gt=0)


class IdentityTask(TaskBase):
    kind: Literal["identity_check", "merge_identity"]
    graph: str
    mus: List[float] = Field(default_factory=lambda: [0.5, 2.0, 5.0])
    count: int = Field(100, ge=1)


Task = Annotated[
    Union[
        ClassifyTask, JetCheckTask, LeviPcvTask, HartogsProbeTask, DistanceTask, CrossCheckTask,
        RelativePcvTask, LocalMaxTask, ExhaustionTask, SweepTask, HartogsFigureTask, CrScanTask,
        CertificateTask, TraceTask, SliceTask, BasenerTask, HomogeneityTask, UkStudyTask,
        StrictifyTask, IdentityTask,
    ],
    Field(discriminator="kind"),
]

DOMAIN_FIELDS = ("domain", "ambient_domain")
GRAPH_FIELDS = ("graph", "graph_complement")


class Scenario(StrictModel):
    """A scenario file"""
    name: str
    description: str = ""
    ambient: Ambient
    seed: int = 0
    threads: Optional[int] = Field(None, ge=1)
    fail_fast: bool = False
    tolerances: Tolerances = Field(default_factory=Tolerances)
    definitions: Dict[str, str] = Field(default_factory=dict)
    exprs: Dict[str, str] = Field(default_factory=dict)
    domains: Dict[str, DomainSpec] = Field(default_factory=dict)
    graphs: Dict[str, GraphSpec] = Field(default_factory=dict)
    families: Dict[str, FamilySpec] = Field(default_factory=dict)
    tasks: List[Task] = Field(min_length=1)
    output: OutputSpec = Field(default_factory=OutputSpec)

    @model_validator(mode="after")
    def _references(self):
        for i, task in enumerate(self.tasks):
            for name in DOMAIN_FIELDS:
                ref = getattr(task, name, None)
                if ref is not None and ref not in self.domains:
                    raise ValueError(f"tasks[{i}].{name}: unknown domain '{ref}'")
            for name in GRAPH_FIELDS:
                ref = getattr(task, name, None)
                if ref is not None and ref not in self.graphs:
                    raise ValueError(f"tasks[{i}].{name}: unknown graph '{ref}'")
            family = getattr(task, "family", None)
            if family is not None:
                if family.name is not None and family.name not in self.families:
                    raise ValueError(f"tasks[{i}].family: unknown family '{family.name}'")
                if family.witness_of is not None and family.witness_of not in self.graphs:
                    raise ValueError(f"tasks[{i}].family.witness_of: unknown graph '{family.witness_of}'")
        ids = [t.id for t in self.tasks if t.id is not None]
        if len(ids) != len(set(ids)):
            raise ValueError("task ids must be unique")
        return self

    model_config = ConfigDict(
        extra="forbid",
        json_schema_extra={
            "example": {
                "name": "ball_psh",
                "ambient": {"N": 2},
                "seed": 0,
                "domains": {"ball": {"example": "ball", "params": {"n": 2}}},
                "tasks": [{"kind": "hartogs_probe", "domain": "ball", "q": 1}],
            }
        },
    )


# --- report ------------------------------------------------------------------

class TaskError(BaseModel):
    type: str
    message: str


class TaskRecord(BaseModel):
    """Outcome of one task"""
    id: str
    kind: str
    status: Literal["ok", "error", "skipped"]
    result: Optional[Dict[str, Any]] = None
    error: Optional[TaskError] = None


class Report(BaseModel):
    """Machine-readable scenario report (no timestamps)"""
    scenario: str
    version: str
    seed: int
    status: Literal["ok", "task_errors"]
    tasks: List[TaskRecord]
