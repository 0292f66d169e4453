"""
Hartogs service: Hartogs figures, analytic families and continuity-principle sweeps

Also builds the explicit devices used to relate the Levi and Hartogs notions:
the flat disc family through a strictly pseudoconvex point, the u_k
approximants of -log|w|_inf, the strictifying perturbation and the merged
defining function of a CR submanifold.
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from levilab.config import settings
from levilab.exceptions import (
    DimensionMismatchError,
    FamilyNotAdmissibleError,
    NotOnBoundaryError,
    NotTangentError,
)
from levilab.services.calculus import derivative_table, gradient, jet2
from levilab.services.expr import (
    Expr,
    PointLike,
    _coords,
    abs2,
    abs_,
    add,
    const,
    evaluate_many,
    log,
    maximum,
    mul,
    neg,
    norm2,
    power,
    sub,
    substitute,
    total,
    var,
)
from levilab.services.levi import Subspace, Verdict, classify_qpsh, holomorphic_tangent
from levilab.services.parallel import parallel_map
from levilab.utils.logging import logger

CR_TOL = 1e-8
CR_STEP = 1e-5
JACOBIAN_TOL = 1e-10


class Membership(str, Enum):
    IN_H = "in_H"
    IN_P_ONLY = "in_P_only"
    OUTSIDE = "outside"


class SweepVerdict(str, Enum):
    VIOLATION = "violation"
    NO_VIOLATION = "no_violation"
    NOT_ADMISSIBLE = "not_admissible"


class MembershipDomain(Protocol):
    """Anything with a dimension and a membership depth (> 0 inside)"""
    dim: int

    def depth(self, points: np.ndarray) -> np.ndarray:
        ...


# --- Hartogs figures ---------------------------------------------------------

@dataclass(frozen=True)
class HartogsFigure:
    """
    Euclidean (n-q, q) Hartogs figure inside the unit polydisc.

    H = (D^{n-q}_1 x D^q_r) union (A^{n-q}_{R,1} x D^q_1), with A the sup-norm annulus R < |z'| < 1.
    """
    n: int
    q: int
    r: float
    R: float

    def __post_init__(self):
        if not 1 <= self.q <= self.n - 1:
            raise ValueError(f"q must lie in 1..{self.n - 1}, got {self.q}")
        if not (0 < self.r < 1 and 0 < self.R < 1):
            raise ValueError("r and R must lie in (0, 1)")

    def _split(self, Z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        Z = np.atleast_2d(np.asarray(Z, dtype=complex))
        if Z.shape[1] != self.n:
            raise DimensionMismatchError(f"point of dimension {Z.shape[1]} for a figure in C^{self.n}")
        A = np.abs(Z)
        return A[:, : self.n - self.q].max(axis=1), A[:, self.n - self.q:].max(axis=1)

    def classify(self, Z: np.ndarray) -> np.ndarray:
        """Membership labels for many points"""
        head, tail = self._split(Z)
        in_p = (head < 1) & (tail < 1)
        in_h = ((head < 1) & (tail < self.r)) | ((head > self.R) & (head < 1) & (tail < 1))
        return np.where(in_h, Membership.IN_H.value, np.where(in_p, Membership.IN_P_ONLY.value, Membership.OUTSIDE.value))

    def sample_polydisc(self, count: int, seed: int = 0) -> np.ndarray:
        rng = np.random.default_rng(seed)
        radius = np.sqrt(rng.uniform(size=(count, self.n)))
        return radius * np.exp(2j * np.pi * rng.uniform(size=(count, self.n)))


def hartogs_membership(F: HartogsFigure, z: PointLike) -> Membership:
    """
    Exact sup-norm membership of a point in a Hartogs figure.

    Returns:
        Membership: in_H, in_P_only (inside the unit polydisc but not H) or outside
    """
    return Membership(F.classify(_coords(z)[None, :])[0])


# --- analytic families -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class AnalyticFamily:
    """
    Continuous family of analytic sets t -> A_t = map(t, S), S a closed polydisc or ball.

    Components are expressions over C^{m+1}: z1..zm are the parameters s and
    z_{m+1} is the real family parameter t.
    """
    dim: int
    m: int
    components: Tuple[Expr, ...]
    radius: float = 1.0
    shape: str = "polydisc"  # polydisc | ball
    name: str = ""

    def __post_init__(self):
        if len(self.components) != self.dim:
            raise DimensionMismatchError(f"{len(self.components)} components for a family in C^{self.dim}")
        if self.shape not in ("polydisc", "ball"):
            raise ValueError(f"unknown parameter domain '{self.shape}'")
        for c in self.components:
            if c.max_index > self.m + 1:
                raise DimensionMismatchError(f"component uses z{c.max_index} but the family has {self.m} parameters")
        object.__setattr__(self, "components", tuple(self.components))

    @property
    def t_index(self) -> int:
        return self.m + 1

    def points(self, t: float, S: np.ndarray) -> np.ndarray:
        """Points A_t(s) for parameters S of shape (K, m)"""
        S = np.asarray(S, dtype=complex)
        S = S.reshape(len(S), self.m)
        P = np.hstack([S, np.full((len(S), 1), complex(t))])
        return np.stack([evaluate_many(c, P) for c in self.components], axis=1)

    def parameter_grid(self, resolution: int, seed: int = 0) -> Tuple[np.ndarray, np.ndarray]:
        """
        Interior and boundary parameter samples; the interior always holds the centre.

        One-parameter families use polar rings (doubling `resolution` halves the
        grid step); higher-dimensional parameter domains use seeded random samples.
        """
        if self.m == 0:
            return np.zeros((1, 0), dtype=complex), np.zeros((0, 0), dtype=complex)
        if self.m == 1:
            angles = np.exp(2j * np.pi * np.arange(4 * resolution) / (4 * resolution))
            rings = self.radius * np.arange(1, resolution) / resolution
            interior = np.concatenate([[0j], (rings[:, None] * angles[None, :]).ravel()])
            return interior[:, None], (self.radius * angles)[:, None]
        rng = np.random.default_rng(seed)
        count = 4 * resolution * resolution
        interior = np.vstack([np.zeros((1, self.m), dtype=complex), self._uniform(rng, count)])
        boundary = self._uniform(rng, count)
        if self.shape == "ball":
            boundary = self.radius * boundary / np.linalg.norm(boundary, axis=1)[:, None]
        else:
            pick = rng.integers(self.m, size=count)
            rows = np.arange(count)
            boundary[rows, pick] = self.radius * boundary[rows, pick] / np.abs(boundary[rows, pick])
        return interior, boundary

    def _uniform(self, rng, count: int) -> np.ndarray:
        if self.shape == "ball":
            G = rng.standard_normal((count, 2 * self.m))
            G /= np.linalg.norm(G, axis=1)[:, None]
            G *= self.radius * rng.uniform(size=(count, 1)) ** (1.0 / (2 * self.m))
            return G[:, : self.m] + 1j * G[:, self.m:]
        radius = self.radius * np.sqrt(rng.uniform(size=(count, self.m)))
        return radius * np.exp(2j * np.pi * rng.uniform(size=(count, self.m)))

    def cr_residual(self, n_samples: int = 20, seed: int = 0, h: float = CR_STEP) -> float:
        """Max relative finite-difference d/dsbar of the components over sampled (t, s)"""
        if self.m == 0:
            return 0.0
        rng = np.random.default_rng(seed)
        S = 0.9 * self._uniform(rng, n_samples)
        ts = rng.uniform(size=n_samples)
        worst = 0.0
        for j in range(self.m):
            e = np.zeros(self.m, dtype=complex)
            e[j] = 1.0
            for t, s in zip(ts, S):
                stencil = np.array([s + h * e, s - h * e, s + 1j * h * e, s - 1j * h * e, s])
                vals = self.points(t, stencil)
                dbar = (vals[0] - vals[1] + 1j * (vals[2] - vals[3])) / (4 * h)
                scale = max(1.0, float(np.max(np.abs(vals[4]))))
                worst = max(worst, float(np.max(np.abs(dbar))) / scale)
        return worst

    def t_modulus(self, n_t: int, S: np.ndarray) -> float:
        """Largest sup-distance between A_t and A_{t+1/n_t} over the parameter samples"""
        frames = [self.points(t, S) for t in np.linspace(0.0, 1.0, n_t + 1)]
        return max(float(np.max(np.abs(b - a))) for a, b in zip(frames, frames[1:]))

    def verify(self, n_t: int = 16, seed: int = 0):
        """
        Check holomorphy in s and continuity in t on sample grids.

        Raises:
            FamilyNotAdmissibleError: If a sampled point is not finite, the
                Cauchy-Riemann residual exceeds 1e-8, or refining the t-grid
                does not shrink the sup-distance between neighbours
        """
        interior, boundary = self.parameter_grid(4, seed)
        S = np.vstack([interior, boundary]) if len(boundary) else interior
        for t in (0.0, 0.5, 1.0):
            if not np.all(np.isfinite(self.points(t, S))):
                raise FamilyNotAdmissibleError(f"family '{self.name}' is not finite at t={t}")
        residual = self.cr_residual(seed=seed)
        if residual > CR_TOL:
            raise FamilyNotAdmissibleError(f"family '{self.name}' is not holomorphic in s (residual {residual:.3e})")
        coarse, fine = self.t_modulus(n_t, S), self.t_modulus(2 * n_t, S)
        if fine > 0.75 * coarse + 1e-12:
            raise FamilyNotAdmissibleError(f"family '{self.name}' is not continuous in t ({coarse:.3e} -> {fine:.3e})")
        return residual

    def compose(self, F: Sequence[Expr], name: Optional[str] = None) -> "AnalyticFamily":
        """The family F(A_t) for a holomorphic change of coordinates F given over C^dim"""
        check_coordinate_change(F, self.dim, self._image_samples())
        mapping = {k + 1: c for k, c in enumerate(self.components)}
        comps = tuple(substitute(f, mapping) for f in F)
        return AnalyticFamily(len(comps), self.m, comps, self.radius, self.shape, name or f"F({self.name})")

    def _image_samples(self) -> np.ndarray:
        interior, _ = self.parameter_grid(3)
        return np.vstack([self.points(t, interior) for t in (0.0, 0.5, 1.0)])


def check_coordinate_change(F: Sequence[Expr], dim: int, samples: np.ndarray):
    """
    Check that F is a holomorphic map of C^dim with invertible Jacobian at the samples.

    Raises:
        FamilyNotAdmissibleError: If F is not holomorphic or its Jacobian is singular at a sample
    """
    if len(F) != dim:
        raise DimensionMismatchError(f"coordinate change has {len(F)} components for dimension {dim}")
    if not all(f.is_holomorphic for f in F):
        raise FamilyNotAdmissibleError("coordinate change is not holomorphic")
    rows = [derivative_table(f, dim)[0] for f in F]
    J = np.stack([np.stack([evaluate_many(d, samples) for d in row], axis=1) for row in rows], axis=1)
    det = np.abs(np.linalg.det(J))
    if not np.all(det > JACOBIAN_TOL):
        raise FamilyNotAdmissibleError(f"coordinate change has singular Jacobian (min |det| {np.nanmin(det):.3e})")


# --- continuity-principle sweeps ---------------------------------------------

@dataclass
class SweepReport:
    verdict: SweepVerdict
    family: str
    n_t: int
    resolution: int
    min_depth: float
    touching_point: Optional[np.ndarray] = None
    touching_t: Optional[float] = None
    margin: Optional[float] = None
    reason: str = ""
    stable: Optional[bool] = None
    refined_touching_point: Optional[np.ndarray] = None
    depth_by_t: List[float] = field(default_factory=list)

    def as_dict(self) -> dict:
        from levilab.models import complex_pairs

        return {
            "verdict": self.verdict.value,
            "family": self.family,
            "n_t": self.n_t,
            "resolution": self.resolution,
            "min_depth": _finite(self.min_depth),
            "touching_point": complex_pairs(self.touching_point) if self.touching_point is not None else None,
            "touching_t": self.touching_t,
            "margin": _finite(self.margin),
            "reason": self.reason,
            "stable": self.stable,
            "refined_touching_point": complex_pairs(self.refined_touching_point)
            if self.refined_touching_point is not None else None,
        }


def _finite(x):
    return None if x is None or not math.isfinite(x) else float(x)


def _sweep_once(domain: MembershipDomain, fam: AnalyticFamily, n_t: int, resolution: int, seed: int,
                contact_tol: float, threads: Optional[int]) -> SweepReport:
    interior, boundary = fam.parameter_grid(resolution, seed)
    ts = np.linspace(0.0, 1.0, n_t + 1)

    def frame(t, _):
        inner = fam.points(t, interior)
        d_in = domain.depth(inner)
        d_bd = domain.depth(fam.points(t, boundary)) if len(boundary) else np.array([np.inf])
        return inner, d_in, d_bd

    frames = parallel_map(frame, list(ts), seed, threads)
    depth_by_t = [float(min(np.min(d_in), np.min(d_bd))) for _, d_in, d_bd in frames]
    name = fam.name or "family"
    for t, (_, d_in, d_bd) in zip(ts[:-1], frames[:-1]):
        low = float(min(np.min(d_in), np.min(d_bd)))
        if not low > contact_tol:
            return SweepReport(SweepVerdict.NOT_ADMISSIBLE, name, n_t, resolution, low,
                               reason=f"A_t leaves the domain at t={t:.6g}", depth_by_t=depth_by_t)
    inner, d_in, d_bd = frames[-1]
    if not float(np.min(d_bd)) > contact_tol:
        return SweepReport(SweepVerdict.NOT_ADMISSIBLE, name, n_t, resolution, float(np.min(d_bd)),
                           reason="boundary of A_1 leaves the domain", depth_by_t=depth_by_t)
    low = float(np.min(d_in))
    if low <= contact_tol:
        k = int(np.argmin(d_in))
        penetration = float(-low) if math.isfinite(low) else math.inf
        return SweepReport(SweepVerdict.VIOLATION, name, n_t, resolution, low, inner[k], 1.0,
                           max(penetration, 0.0), "closure of A_1 leaves the domain", depth_by_t=depth_by_t)
    return SweepReport(SweepVerdict.NO_VIOLATION, name, n_t, resolution, low, margin=low, depth_by_t=depth_by_t)


def kontinuitaetssatz_sweep(
    domain: MembershipDomain,
    fam: AnalyticFamily,
    n_t: int = 32,
    resolution: int = 8,
    seed: int = None,
    refine: bool = True,
    contact_tol: Optional[float] = None,
    threads: Optional[int] = None,
) -> SweepReport:
    """
    Test the continuity principle for one family against a domain.

    The hypotheses (closure of A_t inside the domain for t < 1 and the
    boundary of A_1 inside) are checked on the sample grids; a violation is
    reported when they hold but a sampled point of A_1 has depth at most
    contact_tol. Violations are re-checked on grids refined 2x in t and s; the
    report is stable when the touching point moves by at most 10 grid steps.

    Args:
        domain (MembershipDomain): SublevelDomain, GraphComplement or any object with depth()
        fam (AnalyticFamily): Family, verified before sweeping
        n_t (int): Number of t intervals
        resolution (int): Parameter grid resolution
        seed (int, optional): Seed for random parameter grids
        refine (bool): Re-run a violation on refined grids
        contact_tol (float, optional): Defaults to settings.CONTACT_TOL
        threads (int, optional): Worker threads

    Returns:
        SweepReport: violation, no_violation or not_admissible

    Raises:
        FamilyNotAdmissibleError: If the family itself fails its invariants
    """
    if fam.dim != domain.dim:
        raise DimensionMismatchError(f"family in C^{fam.dim} against a domain in C^{domain.dim}")
    seed = settings.DEFAULT_SEED if seed is None else seed
    contact_tol = settings.CONTACT_TOL if contact_tol is None else contact_tol
    fam.verify(seed=seed)
    logger.info("Starting continuity sweep", family=fam.name, n_t=n_t, resolution=resolution)
    report = _sweep_once(domain, fam, n_t, resolution, seed, contact_tol, threads)
    if report.verdict is SweepVerdict.VIOLATION and refine:
        finer = _sweep_once(domain, fam, 2 * n_t, 2 * resolution, seed, contact_tol, threads)
        step = max(1.0 / n_t, fam.radius / resolution)
        report.refined_touching_point = finer.touching_point
        report.stable = (
            finer.verdict is SweepVerdict.VIOLATION
            and float(np.max(np.abs(finer.touching_point - report.touching_point))) <= 10 * step
        )
    logger.info("Continuity sweep finished", family=fam.name, verdict=report.verdict.value, stable=report.stable)
    return report


def hartogs_figure_test(
    domain: MembershipDomain,
    figure: HartogsFigure,
    F: Optional[Sequence[Expr]] = None,
    n_samples: int = 4000,
    seed: int = None,
    contact_tol: Optional[float] = None,
) -> SweepReport:
    """
    Sampled extension test for one biholomorphic image F(H) of a Hartogs figure.

    Not admissible when F(H) is not inside the domain; a violation when it is
    but some sampled point of F(P), P the unit polydisc, is not.
    """
    seed = settings.DEFAULT_SEED if seed is None else seed
    contact_tol = settings.CONTACT_TOL if contact_tol is None else contact_tol
    Z = figure.sample_polydisc(n_samples, seed)
    labels = figure.classify(Z)
    if F is not None:
        check_coordinate_change(F, figure.n, Z)
        W = np.stack([evaluate_many(f, Z) for f in F], axis=1)
    else:
        W = Z
    depth = domain.depth(W)
    name = f"hartogs({figure.n},{figure.q},{figure.r:g},{figure.R:g})"
    in_h = labels == Membership.IN_H.value
    if in_h.any() and not np.all(depth[in_h] > contact_tol):
        return SweepReport(SweepVerdict.NOT_ADMISSIBLE, name, 0, n_samples, float(np.min(depth[in_h])),
                           reason="image of the Hartogs figure leaves the domain")
    rest = ~in_h
    if np.any(depth[rest] <= contact_tol):
        k = np.flatnonzero(rest)[int(np.argmin(depth[rest]))]
        return SweepReport(SweepVerdict.VIOLATION, name, 0, n_samples, float(depth[k]), W[k], None,
                           max(float(-depth[k]), 0.0), "image of the polydisc leaves the domain")
    return SweepReport(SweepVerdict.NO_VIOLATION, name, 0, n_samples, float(np.min(depth)), margin=float(np.min(depth)))


# --- family constructions ----------------------------------------------------

def build_thm41_family(
    eps: float,
    r: float,
    n: int,
    q: int,
    coordinate_change: Optional[Sequence[Expr]] = None,
) -> AnalyticFamily:
    """
    Flat family A_t = {(1-t) eps} x B^{n-q-1}_r(0) x {0}^q.

    At t = 1 it passes through the origin; pushed through a coordinate change
    it probes a strictly q-pseudoconvex boundary point from outside.

    Args:
        eps (float): Offset of the first coordinate at t = 0
        r (float): Radius of the parameter ball
        n (int): Ambient dimension
        q (int): Index, 1 <= q <= n - 1
        coordinate_change (Sequence[Expr], optional): Holomorphic map applied to the family

    Returns:
        AnalyticFamily: Family with n - q - 1 ball parameters
    """
    if eps <= 0 or r <= 0:
        raise ValueError("eps and r must be positive")
    if not 1 <= q <= n - 1:
        raise DimensionMismatchError(f"q must lie in 1..{n - 1} for n={n}, got {q}")
    m = n - q - 1
    t = var(m + 1)
    comps = [mul(const(eps), sub(const(1), t))]
    comps += [var(j) for j in range(1, m + 1)]
    comps += [const(0)] * q
    fam = AnalyticFamily(n, m, tuple(comps), r, "ball", f"flat_disc(eps={eps:g},r={r:g},n={n},q={q})")
    if coordinate_change is not None:
        fam = fam.compose(coordinate_change)
    return fam


def touching_family(
    scale: float = 1.0,
    linear_map: Optional[np.ndarray] = None,
    offset: Optional[Sequence[complex]] = None,
) -> AnalyticFamily:
    """
    Discs A_t(s) = scale * (s, i(1-t) + i s^2) approaching R^2 and touching it at the origin for t = 1.

    Args:
        scale (float): Uniform scaling of the discs
        linear_map (np.ndarray, optional): Complex 2x2 matrix applied after scaling
        offset (Sequence[complex], optional): Translation applied last
    """
    s, t = var(1), var(2)
    w = mul(const(1j), add(sub(const(1), t), power(s, 2)))
    comps = [mul(const(scale), s), mul(const(scale), w)]
    if linear_map is not None:
        A = np.asarray(linear_map, dtype=complex)
        comps = [total(mul(const(complex(A[i, j])), comps[j]) for j in range(2) if A[i, j] != 0) for i in range(2)]
    if offset is not None:
        comps = [add(c, const(complex(o))) for c, o in zip(comps, offset)]
    return AnalyticFamily(2, 1, tuple(comps), 1.0, "polydisc", f"touching(scale={scale:g})")


# --- u_k approximants and level cuts -----------------------------------------

def build_uk(k: int, q: int) -> Expr:
    """
    u_k(w) = -(1/k) log |(w_1^k, ..., w_q^k)| + (1/k) |w|^2 over C^q.

    Smooth off the origin and strictly (q-1)-psh there; converges uniformly to
    -log|w|_inf on compact sets avoiding 0.
    """
    if k < 1 or q < 1:
        raise ValueError("k and q must be >= 1")
    inner = total(abs2(power(var(j), k)) for j in range(1, q + 1))
    return add(mul(const(Fraction(-1, 2 * k)), log(inner)), mul(const(Fraction(1, k)), norm2(range(1, q + 1))))


def sup_log_potential(q: int) -> Expr:
    """u(w) = -log |w|_inf"""
    if q == 1:
        return neg(log(abs_(var(1))))
    return neg(log(maximum(*(abs_(var(j)) for j in range(1, q + 1)))))


def shell_samples(q: int, count: int, seed: int = 0, inner: float = 0.2, outer: float = 0.9) -> np.ndarray:
    """Uniform samples of {inner <= |w|_inf <= outer} in C^q"""
    rng = np.random.default_rng(seed)
    found = []
    while len(found) < count:
        radius = outer * np.sqrt(rng.uniform(size=(4 * count, q)))
        W = radius * np.exp(2j * np.pi * rng.uniform(size=(4 * count, q)))
        keep = np.abs(W).max(axis=1) >= inner
        found.extend(W[keep])
    return np.array(found[:count])


def level_cut_threshold(u: Expr, points: np.ndarray) -> Tuple[float, np.ndarray]:
    """
    Smallest level c with every sample in the sublevel set {u <= c}.

    Returns:
        tuple: (c, sample attaining it)
    """
    vals = evaluate_many(u, np.atleast_2d(points), strict=True).real
    k = int(np.argmax(vals))
    return float(vals[k]), np.atleast_2d(points)[k]


def uk_study(
    q: int,
    ks: Sequence[int] = (2, 4, 8, 16, 32),
    n_samples: int = 500,
    n_verdict_samples: int = 100,
    seed: int = None,
    threads: Optional[int] = None,
) -> dict:
    """
    Convergence of u_k to -log|w|_inf and the strict (q-1)-psh verdicts of u_k.

    Returns:
        dict: Per-k rows {k, sup_distance, k_times_distance, level_cut, yes, no,
            inconclusive}, the fitted constant C = max k * distance and whether
            the distances decrease strictly in k
    """
    seed = settings.DEFAULT_SEED if seed is None else seed
    W = shell_samples(q, n_samples, seed)
    u = sup_log_potential(q)
    u_vals = evaluate_many(u, W, strict=True).real
    verdict_points = W[:n_verdict_samples]
    rows = []
    for k in ks:
        uk = build_uk(k, q)
        dist = float(np.max(np.abs(evaluate_many(uk, W, strict=True).real - u_vals)))
        verdicts = parallel_map(lambda w, _: classify_qpsh(uk, w, q - 1, strict=True).verdict, list(verdict_points), seed, threads)
        counts = {v.value: sum(1 for x in verdicts if x is v) for v in Verdict}
        cut, _ = level_cut_threshold(uk, W)
        rows.append({"k": k, "sup_distance": dist, "k_times_distance": k * dist, "level_cut": cut, **counts})
        logger.info("u_k sample", k=k, sup_distance=dist, **counts)
    dists = [r["sup_distance"] for r in rows]
    decreasing = all(b < a for a, b in zip(dists, dists[1:]))
    return {
        "q": q,
        "rows": rows,
        "fitted_constant": max(r["k_times_distance"] for r in rows),
        "decreasing": decreasing,
        "limit_level_cut": float(np.max(u_vals)),
    }


# --- strictification and merged defining functions ---------------------------

def strictify(psi0: Expr, z0: PointLike, eps: float) -> Expr:
    """phi = psi0 - eps |z - z0|^2"""
    if eps <= 0:
        raise ValueError("eps must be positive")
    z0 = _coords(z0)
    dim = max(psi0.max_index, len(z0))
    if len(z0) < psi0.max_index:
        raise DimensionMismatchError(f"z0 has dimension {len(z0)} but psi0 uses z{psi0.max_index}")
    shift = total(abs2(sub(var(j + 1), const(complex(z0[j])))) for j in range(dim))
    return sub(psi0, mul(const(eps), shift))


def max_strictify_eps(
    psi0: Expr,
    z0: PointLike,
    q: int,
    samples: np.ndarray,
    eps_max: float = 1.0,
    iterations: int = 40,
) -> float:
    """
    Largest eps <= eps_max (by bisection) keeping strictify(psi0, z0, eps) strictly q-psh at the samples.

    Returns 0.0 when even a vanishing perturbation fails.
    """

    def ok(eps):
        phi = strictify(psi0, z0, eps)
        return all(classify_qpsh(phi, z, q, strict=True).is_yes for z in np.atleast_2d(samples))

    if ok(eps_max):
        return eps_max
    lo, hi = 0.0, eps_max
    if not ok(eps_max * 1e-12):
        return 0.0
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo


def merge_defining(phi1: Expr, phis: Sequence[Expr], mu: float) -> Expr:
    """phi = phi1 + mu * sum_j phi_j^2"""
    squares = total(power(p, 2) for p in phis)
    return add(phi1, mul(const(mu), squares))


@dataclass(frozen=True)
class IdentityResidual:
    residual: float
    lhs: float
    rhs: float
    r_term: float

    def as_dict(self) -> dict:
        return {"residual": self.residual, "lhs": self.lhs, "rhs": self.rhs, "r_term": self.r_term}


def verify_levi_identity(
    phi1: Expr,
    phis: Sequence[Expr],
    mu: float,
    p: PointLike,
    X: Sequence[complex],
    H: Optional[Subspace] = None,
    tol: float = 1e-9,
) -> IdentityResidual:
    """
    Compare the Levi form of the merged function with L_phi1 + 2 mu R(p, X).

    R(p, X) = sum_j |(d phi_j(p), X)|^2. Both sides come from symbolic jets.

    Args:
        phi1 (Expr): First defining function (also included in phis)
        phis (Sequence[Expr]): All defining functions phi_1..phi_r
        mu (float): Weight
        p (PointLike): Point on the common zero set
        X (Sequence[complex]): Vector
        H (Subspace, optional): Holomorphic tangent space at p. Defaults to the joint
            kernel of the d phi_j(p)
        tol (float): Zero-set and tangency tolerance

    Raises:
        NotOnBoundaryError: If some phi_j(p) exceeds tol
        NotTangentError: If X is not in H
        VanishingGradientError: If H is derived and some d phi_j(p) vanishes
    """
    z = _coords(p)
    X = np.asarray(X, dtype=complex)
    values = [jet2(f, z) for f in phis]
    if any(abs(j.value) > tol for j in values):
        raise NotOnBoundaryError("point is not on the common zero set")
    if H is None:
        H = holomorphic_tangent([j.grad_z for j in values], dim=len(z))
    if not H.contains(X, tol):
        raise NotTangentError("vector is not in the holomorphic tangent space")
    merged = merge_defining(phi1, phis, mu)
    lhs = float(np.real(X @ jet2(merged, z).levi @ X.conj()))
    base = float(np.real(X @ jet2(phi1, z).levi @ X.conj()))
    r_term = float(sum(abs(gradient(f, z)[0] @ X) ** 2 for f in phis))
    rhs = base + 2 * mu * r_term
    return IdentityResidual(abs(lhs - rhs), lhs, rhs, r_term)
