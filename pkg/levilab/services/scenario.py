"""
Scenario service: resolve declared objects and run tasks into report records
"""
import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

import numpy as np

from levilab.config import settings
from levilab.exceptions import CertificateError, DimensionMismatchError, LeviLabError, ScenarioValidationError, SingularPointError
from levilab.models import (
    DomainSpec,
    FamilySpec,
    GraphSpec,
    NormModel,
    Report,
    SamplingSpec,
    Scenario,
    TaskError,
    TaskRecord,
    as_point,
    complex_pairs,
    to_jsonable,
)
from levilab.services import library
from levilab.services.calculus import gradient, validate_jet_fd
from levilab.services.domains import (
    BallSlice,
    NormSpec,
    ProbeRecord,
    ProbeReport,
    SublevelDomain,
    boundary_distance,
    boundary_samples,
    exhaustion_probe,
    find_exponent,
    hartogs_pcv_via_distance,
    index_cross_check,
    interior_grid,
    levi_boundary_report,
    local_max_test,
    record_from_verdict,
    relative_pcv_probe,
)
from levilab.services.expr import Expr, parse, to_text
from levilab.services.graphs import (
    AffineSlice,
    GraphComplement,
    GraphMapping,
    basener_residual,
    cr_dimension_scan,
    foliation_certificate,
    graph_point,
    homogeneity_defect,
    leaf_holomorphy_residual,
    sample_domain,
    slice_graph,
    totally_real_family,
    trace_leaf,
    witness_family,
)
from levilab.services.hartogs import (
    AnalyticFamily,
    HartogsFigure,
    hartogs_figure_test,
    kontinuitaetssatz_sweep,
    max_strictify_eps,
    shell_samples,
    strictify,
    uk_study,
    verify_levi_identity,
)
from levilab.services.levi import Verdict, classify_qpsh, holomorphic_tangent
from levilab.services.parallel import parallel_map
from levilab.utils.logging import logger


@dataclass
class ScenarioContext:
    """Resolved objects and run options shared by the task runners"""
    scenario: Scenario
    seed: int
    threads: Optional[int]
    out_dir: Optional[Path]
    dim: int
    exprs: Dict[str, Expr] = field(default_factory=dict)
    domains: Dict[str, SublevelDomain] = field(default_factory=dict)
    graphs: Dict[str, GraphMapping] = field(default_factory=dict)
    families: Dict[str, AnalyticFamily] = field(default_factory=dict)
    files: List[str] = field(default_factory=list)
    task_id: str = ""

    @property
    def tol(self) -> Optional[float]:
        return self.scenario.tolerances.tol

    @property
    def fd_tol(self) -> Optional[float]:
        return self.scenario.tolerances.fd_tol

    @property
    def contact_tol(self) -> Optional[float]:
        return self.scenario.tolerances.contact_tol

    def expr(self, source: str) -> Expr:
        """A declared expression by name, else inline DSL over the ambient dimension"""
        if source not in self.exprs:
            self.exprs[source] = parse(source, self.dim, self.scenario.definitions)
        return self.exprs[source]


# --- object resolution -------------------------------------------------------

def _catalog(name: str, kind: str, params: dict, where: str):
    try:
        found = library.example_kind(name)
    except LeviLabError as e:
        raise ScenarioValidationError(str(e), where)
    if found != kind:
        raise ScenarioValidationError(f"example '{name}' is a {found}, not a {kind}", where)
    try:
        return library.get_example(name, **params)
    except TypeError as e:
        raise ScenarioValidationError(f"bad parameters for '{name}': {e}", where)


def _build_domain(ctx: ScenarioContext, name: str, spec: DomainSpec) -> SublevelDomain:
    where = f"domains.{name}"
    if spec.example is not None:
        D = _catalog(spec.example, "domain", spec.params, where)
    else:
        dim = spec.dim or ctx.dim
        rho = parse(spec.rho, dim, ctx.scenario.definitions)
        center = as_point(spec.center) if spec.center is not None else None
        boundary_tol = ctx.scenario.tolerances.boundary_tol or settings.BOUNDARY_TOL
        D = SublevelDomain(rho, dim, spec.box, center, boundary_tol, name)
    return D.complement() if spec.complement else D


def _build_graph(ctx: ScenarioContext, name: str, spec: GraphSpec) -> GraphMapping:
    if spec.example is not None:
        return _catalog(spec.example, "graph", spec.params, f"graphs.{name}")
    width = spec.n + spec.k
    f_v = tuple(parse(s, width, ctx.scenario.definitions) for s in spec.f_v)
    f_zeta = tuple(parse(s, width, ctx.scenario.definitions) for s in spec.f_zeta)
    return GraphMapping(spec.n, spec.k, spec.p, f_v, f_zeta, spec.box, name)


def _build_family(ctx: ScenarioContext, name: str, spec: FamilySpec) -> AnalyticFamily:
    if spec.example is not None:
        params = dict(spec.params)
        if spec.coordinate_change is not None:
            dim = spec.dim or ctx.dim
            params["coordinate_change"] = [parse(s, dim, ctx.scenario.definitions) for s in spec.coordinate_change]
        return _catalog(spec.example, "family", params, f"families.{name}")
    dim = spec.dim or ctx.dim
    aliases = {f"s{j}": j for j in range(1, spec.m + 1)}
    if spec.m == 1:
        aliases["s"] = 1
    aliases["t"] = spec.m + 1
    comps = tuple(parse(s, spec.m + 1, ctx.scenario.definitions, aliases) for s in spec.components)
    fam = AnalyticFamily(dim, spec.m, comps, spec.radius, spec.shape, name)
    if spec.coordinate_change is not None:
        fam = fam.compose([parse(s, dim, ctx.scenario.definitions) for s in spec.coordinate_change], name)
    return fam


def build_context(
    scenario: Scenario,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out_dir: Optional[Path] = None,
) -> ScenarioContext:
    """
    Parse and build every declared object of a scenario.

    Args:
        scenario (Scenario): Validated scenario
        seed (int, optional): Overrides the scenario seed
        threads (int, optional): Overrides the scenario thread count
        out_dir (Path, optional): Directory for CSV exports

    Returns:
        ScenarioContext: Resolved objects

    Raises:
        ScenarioValidationError: If a declaration does not parse or does not build
    """
    ctx = ScenarioContext(
        scenario,
        scenario.seed if seed is None else seed,
        scenario.threads if threads is None else threads,
        out_dir,
        scenario.ambient.dim,
    )
    steps = [
        ("exprs", scenario.exprs, lambda name, src: parse(src, ctx.dim, scenario.definitions), ctx.exprs),
        ("domains", scenario.domains, lambda name, spec: _build_domain(ctx, name, spec), ctx.domains),
        ("graphs", scenario.graphs, lambda name, spec: _build_graph(ctx, name, spec), ctx.graphs),
        ("families", scenario.families, lambda name, spec: _build_family(ctx, name, spec), ctx.families),
    ]
    for section, declared, build, target in steps:
        for name, spec in declared.items():
            try:
                target[name] = build(name, spec)
            except ScenarioValidationError:
                raise
            except (LeviLabError, ValueError) as e:
                raise ScenarioValidationError(str(e), f"{section}.{name}")
    for i, task in enumerate(scenario.tasks):
        source = getattr(task, "expr", None)
        if source is not None:
            try:
                ctx.expr(source)
            except LeviLabError as e:
                raise ScenarioValidationError(str(e), f"tasks[{i}].expr")
    logger.info(
        "Built scenario context",
        scenario=scenario.name,
        exprs=len(ctx.exprs),
        domains=len(ctx.domains),
        graphs=len(ctx.graphs),
        families=len(ctx.families),
    )
    return ctx


# --- sampling ----------------------------------------------------------------

def _norm(model: NormModel) -> NormSpec:
    return NormSpec(model.kind, tuple(model.weights) if model.weights else None)


def sample_points(
    ctx: ScenarioContext,
    spec: SamplingSpec,
    dim: int,
    domain: Optional[SublevelDomain] = None,
    graph: Optional[GraphMapping] = None,
) -> np.ndarray:
    """
    Points for a sampling block.

    Raises:
        DimensionMismatchError: If explicit points have the wrong dimension
        ScenarioValidationError: If the sampling kind needs a domain or graph the task lacks
    """
    seed = ctx.seed if spec.seed is None else spec.seed
    if spec.kind == "points":
        P = np.array([as_point(p) for p in spec.points])
        if P.shape[1] != dim:
            raise DimensionMismatchError(f"sample points have {P.shape[1]} coordinates, expected {dim}")
        return P
    if spec.kind == "box":
        rng = np.random.default_rng(seed)
        radius = (spec.max_norm or 1.0) * np.sqrt(rng.uniform(size=(spec.count, dim)))
        return radius * np.exp(2j * np.pi * rng.uniform(size=(spec.count, dim)))
    if spec.kind == "shell":
        return shell_samples(dim, spec.count, seed, spec.min_norm or 0.2, spec.max_norm or 0.9)
    if spec.kind in ("interior", "boundary"):
        if domain is None:
            raise ScenarioValidationError(f"'{spec.kind}' sampling needs a domain")
        if spec.kind == "boundary":
            return boundary_samples(domain, spec.count, seed)
        max_norm = math.inf if spec.max_norm is None else spec.max_norm
        return interior_grid(domain, spec.count, seed, spec.min_norm, max_norm, spec.margin)
    if graph is None:
        raise ScenarioValidationError("'graph' sampling needs a graph")
    return sample_domain(graph, spec.count, seed, spec.scale)


def _probe(kind: str, points: np.ndarray, fn: Callable, ctx: ScenarioContext, summary: dict) -> ProbeReport:
    """Pointwise verdicts; a point whose evaluation fails is recorded as inconclusive"""

    def work(z, _):
        try:
            return record_from_verdict(z, fn(z))
        except LeviLabError as e:
            return ProbeRecord(np.asarray(z), Verdict.INCONCLUSIVE, notes=[str(e)])

    return ProbeReport(kind, parallel_map(work, list(points), ctx.seed, ctx.threads), summary)


# --- task runners ------------------------------------------------------------

def run_classify(ctx: ScenarioContext, task) -> dict:
    e = ctx.expr(task.expr)
    points = sample_points(ctx, task.samples, ctx.dim)
    report = _probe("classify_qpsh", points, lambda z: classify_qpsh(e, z, task.q, task.strict, ctx.tol), ctx,
                    {"expr": to_text(e), "q": task.q, "strict": task.strict})
    return report.as_dict()


def run_jet_check(ctx: ScenarioContext, task) -> dict:
    e = ctx.expr(task.expr)
    fd_tol = ctx.fd_tol or settings.FD_TOL
    points = sample_points(ctx, task.samples, ctx.dim)
    rows = parallel_map(lambda z, _: validate_jet_fd(e, z, task.h), list(points), ctx.seed, ctx.threads)
    records = [{"point": complex_pairs(z), **dataclasses.asdict(r)} for z, r in zip(points, rows)]
    checked = [r for r in rows if not r.failed]
    worst = max((r.max_error for r in checked), default=0.0)
    return {"max_error": worst, "passed": bool(checked) and worst <= fd_tol, "failed_points": len(rows) - len(checked),
            "records": records}


def run_levi_pcv(ctx: ScenarioContext, task) -> dict:
    D = ctx.domains[task.domain]
    points = sample_points(ctx, task.samples, D.dim, domain=D)
    return levi_boundary_report(D, task.q, points, task.strict, ctx.tol, ctx.threads, ctx.seed).as_dict()


def run_hartogs_probe(ctx: ScenarioContext, task) -> dict:
    D = ctx.domains[task.domain]
    grid = sample_points(ctx, task.grid, D.dim, domain=D)
    report = hartogs_pcv_via_distance(D, task.q, grid, _norm(task.norm), ctx.fd_tol, task.n_rays, ctx.seed, ctx.threads)
    return report.as_dict()


def run_distance(ctx: ScenarioContext, task) -> dict:
    D = ctx.domains[task.domain]
    norm = _norm(task.norm)
    points = sample_points(ctx, task.samples, D.dim, domain=D)
    estimates = parallel_map(lambda z, s: boundary_distance(D, z, norm, task.n_rays, s), list(points), ctx.seed, ctx.threads)
    return {"norm": norm.kind, "records": [{"point": complex_pairs(z), **d.as_dict()} for z, d in zip(points, estimates)]}


def run_cross_check(ctx: ScenarioContext, task) -> dict:
    D = ctx.domains[task.domain]
    boundary = sample_points(ctx, task.boundary, D.dim, domain=D)
    grid = sample_points(ctx, task.grid, D.dim, domain=D)
    result = index_cross_check(D, task.q, boundary, grid, _norm(task.norm), ctx.seed, ctx.threads)
    exponent = find_exponent(D, task.q, boundary[: min(len(boundary), 10)], tol=ctx.tol)
    result["strict_exponent"] = exponent[0] if exponent is not None else None
    return result


def run_relative_pcv(ctx: ScenarioContext, task) -> dict:
    U, V = ctx.domains[task.domain], ctx.domains[task.ambient_domain]
    return relative_pcv_probe(U, V, task.q, task.n_boundary, task.radius, seed=ctx.seed, threads=ctx.threads).as_dict()


def run_local_max(ctx: ScenarioContext, task) -> dict:
    e = ctx.expr(task.expr)
    center = as_point(task.center)
    if len(center) != ctx.dim:
        raise DimensionMismatchError(f"center has {len(center)} coordinates, expected {ctx.dim}")
    if task.frame is not None:
        frame = np.array([as_point(v) for v in task.frame]).T
    else:
        if task.q + 1 > ctx.dim:
            raise DimensionMismatchError(f"a {task.q + 1}-dimensional slice does not fit in C^{ctx.dim}")
        frame = np.eye(ctx.dim, task.q + 1, dtype=complex)
    region = BallSlice(center, frame, task.radius)
    return local_max_test(e, region, task.n_boundary, ctx.seed).as_dict()


def run_exhaustion(ctx: ScenarioContext, task) -> dict:
    e = ctx.expr(task.expr)
    points = sample_points(ctx, task.samples, ctx.dim)
    approach = [np.array([as_point(p) for p in seq]) for seq in task.approach]
    return exhaustion_probe(e, task.q, points, approach, task.blowup, ctx.threads, ctx.seed).as_dict()


def _sweep_family(ctx: ScenarioContext, ref) -> AnalyticFamily:
    if ref.name is not None:
        return ctx.families[ref.name]
    g = ctx.graphs[ref.witness_of]
    if ref.totally_real_at is not None:
        return totally_real_family(g, as_point(ref.totally_real_at), ref.scale)
    samples = sample_points(ctx, ref.samples or SamplingSpec(kind="graph", count=20), g.n + g.k, graph=g)
    certificate = foliation_certificate(g, ref.q, samples, ctx.tol, ctx.threads, ctx.seed)
    witness = certificate.witness
    if witness is None:
        raise CertificateError(f"graph '{ref.witness_of}' has no refutation witness ({certificate.overall})")
    return witness_family(g, witness, ref.mu, ref.radius, ref.eps)


def run_sweep(ctx: ScenarioContext, task) -> dict:
    if task.domain is not None:
        domain = ctx.domains[task.domain]
    else:
        domain = GraphComplement(ctx.graphs[task.graph_complement])
    fam = _sweep_family(ctx, task.family)
    report = kontinuitaetssatz_sweep(domain, fam, task.n_t, task.resolution, ctx.seed, task.refine, ctx.contact_tol,
                                     ctx.threads)
    return report.as_dict()


def run_hartogs_figure(ctx: ScenarioContext, task) -> dict:
    D = ctx.domains[task.domain]
    figure = HartogsFigure(D.dim, task.q, task.r, task.R)
    F = [parse(s, D.dim, ctx.scenario.definitions) for s in task.map] if task.map is not None else None
    return hartogs_figure_test(D, figure, F, task.n_samples, ctx.seed, ctx.contact_tol).as_dict()


def run_cr_scan(ctx: ScenarioContext, task) -> dict:
    g = ctx.graphs[task.graph]
    samples = sample_points(ctx, task.samples, g.n + g.k, graph=g)
    return cr_dimension_scan(g, samples, ctx.tol, ctx.threads, ctx.seed).as_dict()


def run_certificate(ctx: ScenarioContext, task) -> dict:
    g = ctx.graphs[task.graph]
    samples = sample_points(ctx, task.samples, g.n + g.k, graph=g)
    certificate = foliation_certificate(g, task.q, samples, ctx.tol, ctx.threads, ctx.seed)
    result = certificate.as_dict()
    regular = [r for r in certificate.records if not r.flags]
    result["certified_off_flagged"] = bool(regular) and all(r.verdict == "certified" for r in regular)
    return result


def run_trace(ctx: ScenarioContext, task) -> dict:
    g = ctx.graphs[task.graph]
    samples = sample_points(ctx, task.certificate_samples, g.n + g.k, graph=g)
    certificate = foliation_certificate(g, 1, samples, ctx.tol, ctx.threads, ctx.seed)
    start = as_point(task.start)
    if len(start) == g.n + g.k:
        start = graph_point(g, start)
    leaf = trace_leaf(g, start, task.steps, task.step_size, certificate)
    result = leaf.as_dict()
    result["holomorphy_residual"] = leaf_holomorphy_residual(g, leaf)
    result["end"] = complex_pairs(leaf.points[-1])
    if ctx.out_dir is not None and ctx.scenario.output.csv:
        name = task.csv or f"{ctx.task_id}_leaf.csv"
        leaf.export_csv(ctx.out_dir / name)
        ctx.files.append(name)
        result["csv"] = name
    return result


def run_slice(ctx: ScenarioContext, task) -> dict:
    g = ctx.graphs[task.graph]
    Pi = AffineSlice(np.array([[complex(*v) if isinstance(v, (list, tuple)) else complex(v) for v in row]
                               for row in task.matrix]), as_point(task.offset))
    sliced = slice_graph(g, Pi, task.zeta_subset)
    samples = sample_points(ctx, task.samples, sliced.n + sliced.k, graph=sliced)
    return {
        "n": sliced.n,
        "k": sliced.k,
        "p": sliced.p,
        "components": [to_text(e) for e in sliced.components],
        "cr_scan": cr_dimension_scan(sliced, samples, ctx.tol, ctx.threads, ctx.seed).as_dict(),
    }


def run_basener(ctx: ScenarioContext, task) -> dict:
    g = ctx.graphs[task.graph]
    if g.n != 2 or g.k != 0 or g.p != 1:
        raise DimensionMismatchError("the 1-holomorphy residual needs a graph zeta = h(z1, z2)")
    h = g.f_zeta[0]
    samples = sample_points(ctx, task.samples, 2, graph=g)
    worst, relative, skipped = 0.0, 0.0, 0
    for z in samples:
        try:
            r = basener_residual(h, z)
        except SingularPointError:
            skipped += 1
            continue
        worst, relative = max(worst, r["residual"]), max(relative, r["relative"])
    return {"residual": worst, "relative": relative, "samples": len(samples) - skipped, "skipped": skipped}


def run_homogeneity(ctx: ScenarioContext, task) -> dict:
    return homogeneity_defect(ctx.graphs[task.graph], task.degree, task.count, ctx.seed)


def run_uk_study(ctx: ScenarioContext, task) -> dict:
    result = uk_study(task.q, task.ks, task.n_samples, task.n_verdict_samples, ctx.seed, ctx.threads)
    result["within_3_over_k"] = all(r["sup_distance"] <= 3.0 / r["k"] for r in result["rows"])
    return result


def run_strictify(ctx: ScenarioContext, task) -> dict:
    e = ctx.expr(task.expr)
    z0 = as_point(task.z0)
    points = sample_points(ctx, task.samples, ctx.dim)
    psi = strictify(e, z0, task.eps)
    report = _probe("strictify", points, lambda z: classify_qpsh(psi, z, task.q, True, ctx.tol), ctx,
                    {"q": task.q, "eps": task.eps})
    result = report.as_dict()
    if task.eps_max is not None:
        result["max_eps"] = max_strictify_eps(e, z0, task.q, points, task.eps_max)
    return result


def run_identity(ctx: ScenarioContext, task) -> dict:
    g = ctx.graphs[task.graph]
    phis = g.defining_functions
    rng = np.random.default_rng(ctx.seed)
    worst, checked, skipped = 0.0, 0, 0
    for i, zu in enumerate(sample_domain(g, task.count, ctx.seed)):
        try:
            p = graph_point(g, zu)
            H = holomorphic_tangent([gradient(phi, p)[0] for phi in phis], ctx.tol, g.N)
        except LeviLabError:
            skipped += 1
            continue
        if H.dim == 0:
            skipped += 1
            continue
        c = rng.standard_normal(H.dim) + 1j * rng.standard_normal(H.dim)
        X = H.basis @ c
        X /= np.linalg.norm(X)
        mu = task.mus[i % len(task.mus)]
        residual = verify_levi_identity(phis[0], phis, mu, p, X, H)
        worst = max(worst, residual.residual)
        checked += 1
    return {"max_residual": worst, "checked": checked, "skipped": skipped, "mus": list(task.mus)}


RUNNERS: Dict[str, Callable[[ScenarioContext, object], dict]] = {
    "classify_qpsh": run_classify,
    "jet_check": run_jet_check,
    "levi_pcv": run_levi_pcv,
    "hartogs_probe": run_hartogs_probe,
    "distance": run_distance,
    "cross_check": run_cross_check,
    "relative_pcv": run_relative_pcv,
    "local_max": run_local_max,
    "exhaustion": run_exhaustion,
    "sweep": run_sweep,
    "witness_sweep": run_sweep,
    "hartogs_figure": run_hartogs_figure,
    "cr_scan": run_cr_scan,
    "certificate": run_certificate,
    "trace": run_trace,
    "slice": run_slice,
    "basener": run_basener,
    "homogeneity": run_homogeneity,
    "uk_study": run_uk_study,
    "strictify": run_strictify,
    "identity_check": run_identity,
    "merge_identity": run_identity,
}

# Errors recorded per task instead of aborting the run
TASK_ERRORS = (LeviLabError, ValueError, ArithmeticError, np.linalg.LinAlgError)


def run_scenario(
    scenario: Scenario,
    seed: Optional[int] = None,
    threads: Optional[int] = None,
    out_dir: Optional[Path] = None,
) -> Report:
    """
    Run every task of a scenario in order.

    A failing task is recorded with its error type and message and the run
    continues, unless the scenario sets fail_fast, in which case the remaining
    tasks are recorded as skipped.

    Args:
        scenario (Scenario): Validated scenario
        seed (int, optional): Overrides the scenario seed
        threads (int, optional): Overrides the scenario thread count
        out_dir (Path, optional): Directory for CSV exports

    Returns:
        Report: Deterministic report (no timestamps)

    Raises:
        ScenarioValidationError: If declared objects do not build
    """
    ctx = build_context(scenario, seed, threads, out_dir)
    records: List[TaskRecord] = []
    failed = False
    for i, task in enumerate(scenario.tasks):
        task_id = task.id or f"{i:02d}_{task.kind}"
        if failed and scenario.fail_fast:
            records.append(TaskRecord(id=task_id, kind=task.kind, status="skipped"))
            continue
        ctx.task_id = task_id
        logger.info("Running task", task=task_id, kind=task.kind)
        try:
            result = RUNNERS[task.kind](ctx, task)
            records.append(TaskRecord(id=task_id, kind=task.kind, status="ok", result=to_jsonable(result)))
        except TASK_ERRORS as e:
            logger.error("Task failed", task=task_id, kind=task.kind, error=str(e))
            failed = True
            records.append(TaskRecord(
                id=task_id,
                kind=task.kind,
                status="error",
                error=TaskError(type=type(e).__name__, message=str(e)),
            ))
    return Report(
        scenario=scenario.name,
        version=settings.APP_VERSION,
        seed=ctx.seed,
        status="task_errors" if failed else "ok",
        tasks=records,
    )
