"""
Graphs service: graph mappings over C^n x R^k, CR dimension scans, foliation
certificates, slicing and Levi-flat leaf tracing
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from scipy import linalg

from levilab.config import settings
from levilab.exceptions import (
    CertificateError,
    DimensionMismatchError,
    FamilyNotAdmissibleError,
    InvariantViolation,
    NotOnGraphError,
    ReprojectionError,
    SingularPointError,
    TangentDegeneracyError,
    VanishingGradientError,
)
from levilab.services.calculus import check_off_guard, derivative_table, gradient, holomorphic_hessian, jet2
from levilab.services.expr import (
    Expr,
    PointLike,
    _coords,
    abs_,
    add,
    const,
    evaluate_all,
    evaluate_many,
    im_,
    log,
    mul,
    neg,
    re_,
    sub,
    substitute,
    total,
    var,
)
from levilab.services.hartogs import AnalyticFamily, merge_defining, touching_family
from levilab.services.levi import (
    HermitianInertia,
    Subspace,
    holomorphic_tangent,
    inertia,
    levi_null_space,
    restrict_form,
)
from levilab.services.parallel import parallel_map
from levilab.utils.logging import logger

DEGENERACY_RATIO = 1e-4
SLICE_CHECK_POINTS = 50
NEWTON_ITERATIONS = 20
HOMOGENEITY_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class GraphMapping:
    """
    Graph of f = (f_v, f_zeta) over G in C^n_z x R^k_u.

    f_v and f_zeta are expressions over C^{n+k}: z1..zn are z and
    z_{n+1}..z_{n+k} are the real u coordinates. The ambient space is
    C^N = C^n_z x C^k_w x C^p_zeta with w = u + iv. G is the sup-norm box of
    radius `box` around the origin.
    """
    n: int
    k: int
    p: int
    f_v: Tuple[Expr, ...] = ()
    f_zeta: Tuple[Expr, ...] = ()
    box: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.n < 1 or self.k < 0 or self.p < 0 or self.N < 2:
            raise DimensionMismatchError(f"invalid split n={self.n}, k={self.k}, p={self.p}")
        object.__setattr__(self, "f_v", tuple(self.f_v))
        object.__setattr__(self, "f_zeta", tuple(self.f_zeta))
        if len(self.f_v) != self.k or len(self.f_zeta) != self.p:
            raise DimensionMismatchError(f"expected {self.k} f_v and {self.p} f_zeta components")
        for e in self.f_v + self.f_zeta:
            if e.max_index > self.n + self.k:
                raise DimensionMismatchError(f"component uses z{e.max_index} beyond C^{self.n} x R^{self.k}")

    @property
    def N(self) -> int:
        return self.n + self.k + self.p

    @property
    def r(self) -> int:
        return self.k + 2 * self.p

    @property
    def components(self) -> Tuple[Expr, ...]:
        return self.f_v + self.f_zeta

    def _lifted(self) -> Tuple[Expr, ...]:
        """f with u_j replaced by Re(w_j), as expressions over C^N"""
        mapping = {self.n + j: re_(var(self.n + j)) for j in range(1, self.k + 1)}
        return tuple(substitute(e, mapping) for e in self.components)

    @property
    def defining_functions(self) -> Tuple[Expr, ...]:
        """phi_j = v_j - f_v,j and the real and imaginary parts of zeta_i - f_zeta,i"""
        cached = self.__dict__.get("_phis")
        if cached is not None:
            return cached
        lifted = self._lifted()
        phis = [sub(im_(var(self.n + j + 1)), lifted[j]) for j in range(self.k)]
        for i in range(self.p):
            diff = sub(var(self.n + self.k + i + 1), lifted[self.k + i])
            phis += [re_(diff), im_(diff)]
        phis = tuple(phis)
        object.__setattr__(self, "_phis", phis)
        return phis

    def in_domain(self, zu: np.ndarray) -> np.ndarray:
        zu = np.atleast_2d(zu)
        return np.abs(zu).max(axis=1) < self.box

    def project(self, X: np.ndarray) -> np.ndarray:
        """pi_{z,u}: (z, w, zeta) -> (z, Re w)"""
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        return np.hstack([X[:, : self.n], X[:, self.n: self.n + self.k].real.astype(complex)])

    def graph_points(self, ZU: np.ndarray) -> np.ndarray:
        ZU = np.atleast_2d(np.asarray(ZU, dtype=complex))
        parts = [ZU[:, : self.n]]
        if self.k:
            V = np.stack([evaluate_many(e, ZU).real for e in self.f_v], axis=1)
            parts.append(ZU[:, self.n:].real + 1j * V)
        if self.p:
            parts.append(np.stack([evaluate_many(e, ZU) for e in self.f_zeta], axis=1))
        return np.hstack(parts)

    def phi_values(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        return np.stack([evaluate_many(phi, X).real for phi in self.defining_functions], axis=1)

    def residual(self, x: PointLike) -> float:
        """Max |phi_j(x)|"""
        return float(np.max(np.abs(self.phi_values(_coords(x)[None, :]))))


def graph_point(f: GraphMapping, zu: PointLike) -> np.ndarray:
    """
    Assemble (z, u + i f_v(z, u), f_zeta(z, u)).

    Raises:
        DimensionMismatchError: If zu does not have n + k coordinates
        NotOnGraphError: If zu is outside G or a u coordinate is not real
        ExprDomainError: If f cannot be evaluated at zu
    """
    zu = _coords(zu)
    if len(zu) != f.n + f.k:
        raise DimensionMismatchError(f"expected {f.n + f.k} coordinates, got {len(zu)}")
    if f.k and np.max(np.abs(zu[f.n:].imag)) > 1e-14:
        raise NotOnGraphError("u coordinates must be real")
    if not f.in_domain(zu)[0]:
        raise NotOnGraphError("point lies outside G")
    values = evaluate_all(f.components, zu)
    out = list(zu[: f.n])
    out += [complex(zu[f.n + j].real, values[j].real) for j in range(f.k)]
    out += values[f.k:]
    return np.array(out, dtype=complex)


# --- CR dimension and foliation certificates ---------------------------------

@dataclass
class TangentData:
    point: np.ndarray
    grads: List[np.ndarray]
    H: Subspace
    singular_values: np.ndarray

    @property
    def degeneracy(self) -> float:
        """Smallest retained singular value of the gradient rows relative to the largest"""
        s = self.singular_values
        rank = self.H.ambient_dim - self.H.dim
        if rank == 0 or s[0] == 0:
            return 1.0
        return float(s[rank - 1] / s[0])


def tangent_data(f: GraphMapping, x: np.ndarray, tol: Optional[float] = None) -> TangentData:
    grads = [gradient(phi, x)[0] for phi in f.defining_functions]
    H = holomorphic_tangent(grads, tol, f.N)
    s = linalg.svdvals(np.vstack(grads))
    return TangentData(x, grads, H, s)


@dataclass
class CrRecord:
    point: np.ndarray
    dim_h: Optional[int]
    degeneracy: Optional[float]
    flags: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        from levilab.models import complex_pairs

        return {"point": complex_pairs(self.point), "dim_h": self.dim_h, "degeneracy": self.degeneracy, "flags": list(self.flags)}


@dataclass
class CrScanReport:
    records: List[CrRecord]

    @property
    def dims(self) -> List[int]:
        return sorted({r.dim_h for r in self.records if r.dim_h is not None})

    @property
    def constant(self) -> bool:
        return len(self.dims) == 1 and all(r.dim_h is not None for r in self.records)

    @property
    def flagged(self) -> int:
        return sum(1 for r in self.records if r.flags)

    def as_dict(self) -> dict:
        return {
            "dims": self.dims,
            "constant": self.constant,
            "flagged": self.flagged,
            "records": [r.as_dict() for r in self.records],
        }


def _graph_samples(f: GraphMapping, samples: np.ndarray) -> np.ndarray:
    samples = np.atleast_2d(np.asarray(samples, dtype=complex))
    if samples.shape[1] == f.n + f.k:
        return np.vstack([graph_point(f, zu) for zu in samples])
    if samples.shape[1] == f.N:
        return samples
    raise DimensionMismatchError(f"samples of width {samples.shape[1]} for a graph in C^{f.N}")


def sample_domain(f: GraphMapping, count: int, seed: int = 0, scale: float = 0.9) -> np.ndarray:
    """Seeded uniform points (z, u) of the box scale * G"""
    rng = np.random.default_rng(seed)
    Z = f.box * scale * (rng.uniform(-1, 1, (count, f.n)) + 1j * rng.uniform(-1, 1, (count, f.n))) / math.sqrt(2)
    U = f.box * scale * rng.uniform(-1, 1, (count, f.k))
    return np.hstack([Z, U.astype(complex)])


def cr_dimension_scan(
    f: GraphMapping,
    samples: np.ndarray,
    tol: Optional[float] = None,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> CrScanReport:
    """
    dim H_p of the graph at each sample from the Wirtinger gradients of the phi_j.

    Samples may be given in (z, u) coordinates or as points of C^N on the graph.
    Points on a guard set are flagged `singular_point`; samples whose smallest
    retained gradient singular value is below DEGENERACY_RATIO times the
    largest are flagged `gradient_degenerate`.
    """
    points = _graph_samples(f, samples)

    def work(x, _):
        try:
            data = tangent_data(f, x, tol)
        except SingularPointError:
            return CrRecord(x, None, None, ["singular_point"])
        except VanishingGradientError:
            return CrRecord(x, None, 0.0, ["vanishing_gradient"])
        flags = ["gradient_degenerate"] if data.degeneracy < DEGENERACY_RATIO else []
        return CrRecord(x, data.H.dim, data.degeneracy, flags)

    report = CrScanReport(parallel_map(work, list(points), seed, threads))
    logger.info("CR dimension scan", samples=len(points), dims=report.dims, flagged=report.flagged)
    return report


@dataclass
class Witness:
    """Vector X0 in H_p with L_{phi_j0}(p)(X0, X0) != 0"""
    point: np.ndarray
    j0: int
    X0: np.ndarray
    value: float
    nu: Optional[complex] = None

    @property
    def sign(self) -> int:
        return 1 if self.value > 0 else -1

    def as_dict(self) -> dict:
        from levilab.models import complex_pairs

        return {
            "point": complex_pairs(self.point),
            "j0": self.j0,
            "X0": complex_pairs(self.X0),
            "value": self.value,
            "nu": complex_pairs([self.nu])[0] if self.nu is not None else None,
        }


@dataclass
class CertificateRecord:
    point: np.ndarray
    dim_h: Optional[int]
    dim_n: Optional[int]
    verdict: str
    stage: str = ""
    witness: Optional[Witness] = None
    restricted_inertia: List[HermitianInertia] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        from levilab.models import complex_pairs

        return {
            "point": complex_pairs(self.point),
            "dim_h": self.dim_h,
            "dim_n": self.dim_n,
            "verdict": self.verdict,
            "stage": self.stage,
            "witness": self.witness.as_dict() if self.witness else None,
            "restricted_inertia": [i.as_dict() for i in self.restricted_inertia],
            "flags": list(self.flags),
        }


@dataclass
class FoliationCertificate:
    q: int
    records: List[CertificateRecord]
    overall: str

    @property
    def certified(self) -> bool:
        return self.overall == "certified"

    @property
    def witness(self) -> Optional[Witness]:
        return next((r.witness for r in self.records if r.witness is not None), None)

    @property
    def counts(self) -> Dict[str, int]:
        out = {"certified": 0, "refuted": 0, "inconclusive": 0}
        for r in self.records:
            out[r.verdict] += 1
        return out

    def as_dict(self) -> dict:
        return {
            "q": self.q,
            "overall": self.overall,
            "counts": self.counts,
            "flagged": sum(1 for r in self.records if r.flags),
            "records": [r.as_dict() for r in self.records],
        }


def find_witness(restricted: Sequence[np.ndarray], H: Subspace, point: np.ndarray, tol: float) -> Optional[Witness]:
    """
    A vector of H on which some restricted Levi form does not vanish.

    Diagonal entries are tried first; when all vanish, X' + nu Y' with
    nu = L(X', Y') / |L(X', Y')| gives L = 2 |L(X', Y')|.
    """
    scale = max(1.0, max((float(np.max(np.abs(R), initial=0.0)) for R in restricted), default=0.0))
    best = None
    for j, R in enumerate(restricted):
        d = np.real(np.diag(R))
        if len(d) and np.max(np.abs(d)) > tol * scale:
            a = int(np.argmax(np.abs(d)))
            if best is None or abs(d[a]) > abs(best.value):
                best = Witness(point, j + 1, H.basis[:, a].copy(), float(d[a]))
    if best is not None:
        return best
    for j, R in enumerate(restricted):
        off = np.abs(R - np.diag(np.diag(R)))
        if off.size and np.max(off) > tol * scale:
            a, b = np.unravel_index(int(np.argmax(off)), off.shape)
            nu = R[a, b] / abs(R[a, b])
            X0 = H.basis[:, a] + nu * H.basis[:, b]
            return Witness(point, j + 1, X0, 2 * abs(R[a, b]), complex(nu))
    return None


def foliation_certificate(
    f: GraphMapping,
    q: int,
    samples: np.ndarray,
    tol: Optional[float] = None,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> FoliationCertificate:
    """
    Check the foliation criterion dim H_p = dim N_p = q at every sample.

    Args:
        f (GraphMapping): Graph
        q (int): Declared complex dimension of the leaves
        samples (np.ndarray): (z, u) samples or graph points
        tol (float, optional): Rank tolerance. Defaults to settings.DEFAULT_TOL.

    Returns:
        FoliationCertificate: certified when every sample passes; refuted when
            some sample has dim H_p != q or N_p strictly inside H_p (with a
            witness vector); inconclusive when samples are singular
    """
    tol = settings.DEFAULT_TOL if tol is None else tol
    points = _graph_samples(f, samples)

    def work(x, _):
        try:
            data = tangent_data(f, x, tol)
        except SingularPointError:
            return CertificateRecord(x, None, None, "inconclusive", "singular", flags=["singular_point"])
        except VanishingGradientError:
            return CertificateRecord(x, None, None, "inconclusive", "gradient", flags=["vanishing_gradient"])
        flags = ["gradient_degenerate"] if data.degeneracy < DEGENERACY_RATIO else []
        H = data.H
        if H.dim != q:
            return CertificateRecord(x, H.dim, None, "refuted", "cr_dimension", flags=flags)
        levis = [jet2(phi, x).levi for phi in f.defining_functions]
        N = levi_null_space(data.grads, levis, H, tol)
        restricted = [restrict_form(L, H) for L in levis]
        inertias = [inertia(R, tol) for R in restricted]
        if N.dim < H.dim:
            witness = find_witness(restricted, H, x, tol)
            return CertificateRecord(x, H.dim, N.dim, "refuted", "levi_null_space", witness, inertias, flags)
        return CertificateRecord(x, H.dim, N.dim, "certified", "", None, inertias, flags)

    records = parallel_map(work, list(points), seed, threads)
    verdicts = {r.verdict for r in records}
    dims = {r.dim_h for r in records if r.dim_h is not None}
    if "refuted" in verdicts or len(dims) > 1:
        overall = "refuted"
    elif verdicts == {"certified"}:
        overall = "certified"
    else:
        overall = "inconclusive"
    logger.info("Foliation certificate", q=q, overall=overall, samples=len(records))
    return FoliationCertificate(q, records, overall)


# --- slicing -----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AffineSlice:
    """Affine subspace {A y + b : y in C^m} of C^n"""
    matrix: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        A = np.atleast_2d(np.asarray(self.matrix, dtype=complex))
        b = np.asarray(self.offset, dtype=complex).reshape(-1)
        if A.shape[0] != len(b):
            raise DimensionMismatchError(f"slice matrix has {A.shape[0]} rows but offset has {len(b)}")
        object.__setattr__(self, "matrix", A)
        object.__setattr__(self, "offset", b)

    @property
    def dim(self) -> int:
        return self.matrix.shape[1]

    def embed(self, Y: np.ndarray) -> np.ndarray:
        return np.atleast_2d(Y) @ self.matrix.T + self.offset


def slice_graph(f: GraphMapping, Pi: AffineSlice, zeta_subset: Optional[Sequence[int]] = None) -> GraphMapping:
    """
    Restrict f to Pi x R^k and keep the zeta components listed (1-based, increasing).

    Raises:
        DimensionMismatchError: If Pi does not live in C^n or an index is out of range
        InvariantViolation: If the sliced graph disagrees with f at the check points
    """
    if Pi.matrix.shape[0] != f.n:
        raise DimensionMismatchError(f"slice lives in C^{Pi.matrix.shape[0]} but the graph has n={f.n}")
    subset = list(range(1, f.p + 1)) if zeta_subset is None else list(zeta_subset)
    if subset != sorted(set(subset)) or any(not 1 <= i <= f.p for i in subset):
        raise DimensionMismatchError(f"zeta subset {subset} is not increasing within 1..{f.p}")
    m = Pi.dim
    mapping = {}
    for j in range(f.n):
        terms = [mul(const(complex(Pi.matrix[j, l])), var(l + 1)) for l in range(m) if Pi.matrix[j, l] != 0]
        mapping[j + 1] = add(const(complex(Pi.offset[j])), total(terms))
    for i in range(1, f.k + 1):
        mapping[f.n + i] = var(m + i)
    f_v = tuple(substitute(e, mapping) for e in f.f_v)
    f_zeta = tuple(substitute(f.f_zeta[i - 1], mapping) for i in subset)
    sliced = GraphMapping(m, f.k, len(subset), f_v, f_zeta, f.box, f"{f.name}|slice")

    rng = np.random.default_rng(0)
    Y = 0.5 * f.box * (rng.uniform(-1, 1, (SLICE_CHECK_POINTS, m)) + 1j * rng.uniform(-1, 1, (SLICE_CHECK_POINTS, m))) / math.sqrt(2) / max(1.0, float(np.abs(Pi.matrix).sum(axis=1).max()))
    U = 0.5 * f.box * rng.uniform(-1, 1, (SLICE_CHECK_POINTS, f.k))
    small = np.hstack([Y, U.astype(complex)])
    full = np.hstack([Pi.embed(Y), U.astype(complex)])
    keep = list(range(f.k)) + [f.k + i - 1 for i in subset]
    for a, b in zip(sliced.components, [f.components[j] for j in keep]):
        va, vb = evaluate_many(a, small), evaluate_many(b, full)
        if not np.array_equal(np.isnan(va), np.isnan(vb)):
            raise InvariantViolation("sliced graph is undefined where the original is not")
        ok = ~np.isnan(vb)
        if ok.any() and np.abs(va[ok] - vb[ok]).max() > 1e-10 * (1 + np.abs(vb[ok]).max()):
            raise InvariantViolation("sliced graph disagrees with the original at check points")
    return sliced


# --- graph complements, witness families, residuals --------------------------

@dataclass(frozen=True, eq=False)
class GraphComplement:
    """(G x R^k_v x C^p) minus the graph, with depth = min(|phi(x)|, distance to the edge of G)"""
    graph: GraphMapping

    @property
    def dim(self) -> int:
        return self.graph.N

    def depth(self, points: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(points, dtype=complex))
        phi = np.linalg.norm(self.graph.phi_values(X), axis=1)
        edge = self.graph.box - np.abs(self.graph.project(X)).max(axis=1)
        d = np.minimum(phi, edge)
        return np.where(np.isfinite(d), d, -np.inf)


def witness_family(
    f: GraphMapping,
    witness: Witness,
    mu: float = 1.0,
    radius: float = 0.1,
    eps: float = 0.05,
) -> AnalyticFamily:
    """
    Discs approaching the graph from the side where the merged defining function is positive.

    With psi = sign * phi_j0 + mu * sum phi_j^2 and X0 the witness vector, the
    disc s -> p + s X0 + s^2 Q + (1 - t) eps nu has psi ~ |s|^2 L_psi(X0, X0)
    along it, where Q cancels the holomorphic Hessian term and nu is the unit
    normal along which psi increases. It touches the graph at p for t = 1.
    """
    p = np.asarray(witness.point, dtype=complex)
    phis = f.defining_functions
    psi = merge_defining(mul(const(witness.sign), phis[witness.j0 - 1]), phis, mu)
    dpsi = gradient(psi, p)[0]
    norm = np.linalg.norm(dpsi)
    if norm == 0:
        raise FamilyNotAdmissibleError("merged defining function has vanishing gradient at the witness")
    normal = dpsi.conj() / norm
    X0 = witness.X0 / np.linalg.norm(witness.X0)
    quad = 0.5 * X0 @ holomorphic_hessian(psi, p) @ X0
    Q = -quad * normal / (dpsi @ normal)
    s, t = var(1), var(2)
    shift = mul(const(eps), sub(const(1), t))
    comps = []
    for a in range(f.N):
        c = add(const(complex(p[a])), add(mul(const(complex(X0[a])), s), mul(const(complex(Q[a])), mul(s, s))))
        comps.append(add(c, mul(const(complex(normal[a])), shift)))
    return AnalyticFamily(f.N, 1, tuple(comps), radius, "polydisc", f"witness({f.name or 'graph'},j0={witness.j0})")


def totally_real_family(f: GraphMapping, zu: PointLike, scale: float = 0.1) -> AnalyticFamily:
    """
    The R^2-touching disc family moved to a point of a totally real graph in C^2.

    The complex-linear map sending R^2 onto the real tangent plane of the graph
    at the point carries the family along.
    """
    if f.N != 2 or f.r != 2:
        raise DimensionMismatchError("totally real transport needs a real surface in C^2")
    p = graph_point(f, zu)
    rows = []
    for phi in f.defining_functions:
        g = gradient(phi, p)[0]
        rows.append(np.concatenate([2 * g.real, -2 * g.imag]))
    T = linalg.null_space(np.array(rows))
    if T.shape[1] != 2:
        raise FamilyNotAdmissibleError("graph is not a smooth real surface at the point")
    L = T[:2, :] + 1j * T[2:, :]
    if abs(np.linalg.det(L)) <= 1e-8:
        raise FamilyNotAdmissibleError("tangent plane is not totally real")
    return touching_family(scale, linear_map=L, offset=p)


def basener_residual(h: Expr, p: PointLike) -> Dict[str, float]:
    """
    Coefficients of dbar(h) wedge ddbar(h) in C^2.

    The 3-form has the coefficients c_j = h_{zbar1} h_{zj zbar2} - h_{zbar2} h_{zj zbar1}
    on dz_j ^ dzbar_1 ^ dzbar_2; h is 1-holomorphic where both vanish.

    Returns:
        dict: {"residual": max |c_j|, "relative": residual / max(1, |dbar h| * |ddbar h|)}
    """
    z = _coords(p)
    if len(z) != 2:
        raise DimensionMismatchError("the residual is defined in C^2")
    check_off_guard(h, z)
    _, grad_zbar, levi, _ = derivative_table(h, 2)
    values = evaluate_all([*grad_zbar, *(x for row in levi for x in row)], z)
    gb = np.array(values[:2])
    M = np.array(values[2:]).reshape(2, 2)
    c = gb[0] * M[:, 1] - gb[1] * M[:, 0]
    residual = float(np.max(np.abs(c)))
    scale = max(1.0, float(np.max(np.abs(gb)) * np.max(np.abs(M))))
    return {"residual": residual, "relative": residual / scale}


# --- leaf tracing ------------------------------------------------------------

@dataclass
class LeafTrace:
    points: np.ndarray
    residuals: np.ndarray
    step_size: float

    @property
    def max_residual(self) -> float:
        return float(np.max(self.residuals))

    def to_frame(self) -> pd.DataFrame:
        data = {"t": self.step_size * np.arange(len(self.points))}
        for j in range(self.points.shape[1]):
            data[f"re_z{j + 1}"] = self.points[:, j].real
            data[f"im_z{j + 1}"] = self.points[:, j].imag
        data["residual"] = self.residuals
        return pd.DataFrame(data)

    def export_csv(self, path) -> str:
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        return str(path)

    def as_dict(self) -> dict:
        return {"steps": len(self.points) - 1, "step_size": self.step_size, "max_residual": self.max_residual}


def _real_jacobian(f: GraphMapping, x: np.ndarray) -> np.ndarray:
    rows = []
    for phi in f.defining_functions:
        g = gradient(phi, x)[0]
        rows.append(np.concatenate([2 * g.real, -2 * g.imag]))
    return np.array(rows)


def reproject(f: GraphMapping, x: np.ndarray, tol: float = 1e-14) -> np.ndarray:
    """
    Minimal-norm Gauss-Newton correction onto {phi_j = 0}.

    Raises:
        ReprojectionError: If the residual does not fall below settings.ON_GRAPH_TOL
    """
    n = f.N
    for _ in range(NEWTON_ITERATIONS):
        phi = f.phi_values(x[None, :])[0]
        if not np.all(np.isfinite(phi)):
            raise ReprojectionError("defining functions are not finite during reprojection")
        if np.max(np.abs(phi)) <= tol:
            return x
        step = np.linalg.lstsq(_real_jacobian(f, x), -phi, rcond=None)[0]
        x = x + step[:n] + 1j * step[n:]
    if f.residual(x) > settings.ON_GRAPH_TOL:
        raise ReprojectionError(f"reprojection did not converge (residual {f.residual(x):.3e})")
    return x


def _unit_tangent(f: GraphMapping, x: np.ndarray, reference: np.ndarray) -> np.ndarray:
    try:
        H = holomorphic_tangent([gradient(phi, x)[0] for phi in f.defining_functions], None, f.N)
    except (SingularPointError, VanishingGradientError) as e:
        raise TangentDegeneracyError(str(e))
    if H.dim != 1:
        raise TangentDegeneracyError(f"holomorphic tangent has dimension {H.dim}")
    v = H.basis[:, 0]
    overlap = np.vdot(reference, v)
    if abs(overlap) < 1e-12:
        raise TangentDegeneracyError("tangent line turned orthogonal to the previous direction")
    return v * (abs(overlap) / overlap)


def trace_leaf(
    f: GraphMapping,
    start: PointLike,
    steps: int,
    step_size: float,
    certificate: Optional[FoliationCertificate] = None,
) -> LeafTrace:
    """
    Trace a complex one-dimensional leaf with a fourth-order one-step scheme.

    The unit holomorphic tangent is phase-aligned with the previous direction
    (initially with the z1 axis) and every step is reprojected onto the graph.

    Args:
        f (GraphMapping): Graph with n = 1
        start (PointLike): Point of the graph (within settings.ON_GRAPH_TOL)
        steps (int): Number of steps
        step_size (float): Step length
        certificate (FoliationCertificate): Certified foliation certificate with q = 1

    Returns:
        LeafTrace: Polyline and on-graph residuals

    Raises:
        CertificateError: If no certified q = 1 certificate is given or n != 1
        NotOnGraphError: If start is off the graph
        ReprojectionError, TangentDegeneracyError: During integration
    """
    if certificate is None or not certificate.certified:
        raise CertificateError("leaf tracing needs a certified foliation")
    if certificate.q != 1 or f.n != 1:
        raise CertificateError("leaf tracing is implemented for complex one-dimensional leaves")
    x = _coords(start)
    if len(x) != f.N:
        raise DimensionMismatchError(f"start has {len(x)} coordinates, graph lives in C^{f.N}")
    if not f.residual(x) <= settings.ON_GRAPH_TOL:
        raise NotOnGraphError(f"start point is off the graph (residual {f.residual(x):.3e})")
    reference = np.zeros(f.N, dtype=complex)
    reference[0] = 1.0
    direction = _unit_tangent(f, x, reference)
    points, residuals = [x], [f.residual(x)]
    h = step_size
    for _ in range(steps):
        k1 = direction
        k2 = _unit_tangent(f, x + 0.5 * h * k1, direction)
        k3 = _unit_tangent(f, x + 0.5 * h * k2, direction)
        k4 = _unit_tangent(f, x + h * k3, direction)
        x = reproject(f, x + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6)
        direction = _unit_tangent(f, x, direction)
        points.append(x)
        residuals.append(f.residual(x))
    trace = LeafTrace(np.array(points), np.array(residuals), h)
    logger.info("Traced leaf", steps=steps, max_residual=trace.max_residual)
    return trace


def leaf_holomorphy_residual(f: GraphMapping, leaf: LeafTrace) -> float:
    """
    Max |(d phi_j(x_i), D_i)| / |D_i| along the leaf, D_i the fourth-order central difference.

    Small values mean the polyline runs inside the holomorphic tangent spaces.
    """
    P = leaf.points
    if len(P) < 5:
        raise ValueError("need at least five leaf points")
    worst = 0.0
    for i in range(2, len(P) - 2):
        D = (-P[i + 2] + 8 * P[i + 1] - 8 * P[i - 1] + P[i - 2]) / 12
        size = np.linalg.norm(D)
        for phi in f.defining_functions:
            worst = max(worst, abs(gradient(phi, P[i])[0] @ D) / size)
    return float(worst)


def graph_complement_potential(f: GraphMapping) -> Expr:
    """-log |zeta - h(z)| over C^N for a graph zeta = h(z) (k = 0, p = 1)"""
    if f.k != 0 or f.p != 1:
        raise DimensionMismatchError("potential defined for graphs zeta = h(z)")
    return neg(log(abs_(sub(var(f.n + 1), f.f_zeta[0]))))


def homogeneity_defect(
    f: GraphMapping,
    degree: float,
    count: int = 500,
    seed: int = 0,
    lambdas: Optional[Sequence[complex]] = None,
    tol: float = HOMOGENEITY_TOL,
) -> dict:
    """
    Check complex homogeneity f(lam v) = lam^degree f(v) for lam in C* and v in G.

    The defect at a sample is |f(lam v) - lam^degree f(v)| / (1 + |lam|^degree |f(v)|);
    the check passes when the largest defect is at most tol. Without explicit
    lambdas, lam is drawn with modulus in [0.05, 2] and uniform argument.
    Points where either side is undefined are skipped.
    """
    rng = np.random.default_rng(seed)
    V = sample_domain(f, count, seed, 1.0)
    if lambdas is None:
        lam = rng.uniform(0.05, 2.0, count) * np.exp(2j * np.pi * rng.uniform(size=count))
    else:
        lam = np.resize(np.asarray(lambdas, dtype=complex), count)
        if np.any(lam == 0):
            raise ValueError("lambda must be nonzero")
    scale = lam ** degree
    worst, used = 0.0, 0
    for e in f.components:
        a = evaluate_many(e, lam[:, None] * V)
        b = evaluate_many(e, V)
        ok = np.isfinite(a) & np.isfinite(b)
        used = max(used, int(ok.sum()))
        if ok.any():
            rel = np.abs(a[ok] - scale[ok] * b[ok]) / (1.0 + np.abs(scale[ok]) * np.abs(b[ok]))
            worst = max(worst, float(np.max(rel)))
    passed = worst <= tol
    logger.info("Homogeneity check", degree=degree, samples=used, defect=worst, passed=passed)
    return {"degree": degree, "samples": used, "defect": worst, "passed": passed}
