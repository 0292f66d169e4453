"""
Domains service: sublevel domains, boundary distances and pseudoconvexity probes

Hartogs q-pseudoconvexity is only ever probed here: a report says how many
sampled points refute it, never that it holds.
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg, optimize

from levilab.config import settings
from levilab.exceptions import (
    DimensionMismatchError,
    DomainInclusionError,
    LeviLabError,
    NotOnBoundaryError,
    SamplingError,
    UnboundedDirectionError,
    VanishingGradientError,
)
from levilab.services.calculus import derivative_table, fd_wirtinger, jet2, real_directions
from levilab.services.expr import Expr, PointLike, _coords, const, evaluate_many, exp, mul, neg, sub
from levilab.services.levi import (
    HermitianInertia,
    PshVerdict,
    Verdict,
    classify_qpsh,
    holomorphic_tangent,
    restrict_form,
    verdict_from_matrix,
)
from levilab.services.parallel import parallel_map
from levilab.utils.logging import logger

N_MARCH = 64
BISECTION_STEPS = 60
NEWTON_STEPS = 40
FD_RELATIVE_STEP = 1e-4
FD_STABILITY = 1e-2


@dataclass(frozen=True)
class NormSpec:
    """Complex norm used for boundary distances"""
    kind: str = "euclidean"  # euclidean | sup | weighted
    weights: Optional[Tuple[float, ...]] = None

    def __post_init__(self):
        if self.kind not in ("euclidean", "sup", "weighted"):
            raise ValueError(f"unknown norm kind '{self.kind}'")
        if self.kind == "weighted":
            if not self.weights or any(w <= 0 for w in self.weights):
                raise ValueError("weighted norm needs positive weights")
            object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    def norm(self, v: np.ndarray) -> np.ndarray:
        v = np.asarray(v, dtype=complex)
        a2 = v.real ** 2 + v.imag ** 2
        if self.kind == "sup":
            return np.sqrt(a2.max(axis=-1))
        if self.kind == "weighted":
            w = np.asarray(self.weights)
            if w.shape[0] != v.shape[-1]:
                raise DimensionMismatchError(f"{w.shape[0]} weights for dimension {v.shape[-1]}")
            return np.sqrt((a2 * w).sum(axis=-1))
        return np.sqrt(a2.sum(axis=-1))

    def real_weights(self, n: int) -> np.ndarray:
        """Weights of the squared norm in real coordinates (x_1..x_N, y_1..y_N)"""
        w = np.ones(n) if self.kind != "weighted" else np.asarray(self.weights)
        return np.concatenate([w, w])


@dataclass(frozen=True, eq=False)
class SublevelDomain:
    """The open set {rho < 0} with sampling configuration"""
    rho: Expr
    dim: int
    box: float = 2.0
    center: Optional[Tuple[complex, ...]] = None
    boundary_tol: float = field(default_factory=lambda: settings.BOUNDARY_TOL)
    name: str = ""

    def __post_init__(self):
        if self.rho.max_index > self.dim:
            raise DimensionMismatchError(f"rho uses z{self.rho.max_index} in dimension {self.dim}")
        center = (0j,) * self.dim if self.center is None else tuple(complex(c) for c in self.center)
        if len(center) != self.dim:
            raise DimensionMismatchError("center has the wrong dimension")
        object.__setattr__(self, "center", center)

    @property
    def center_array(self) -> np.ndarray:
        return np.array(self.center, dtype=complex)

    def values(self, points: np.ndarray) -> np.ndarray:
        """rho at many points (NaN where evaluation fails)"""
        return evaluate_many(self.rho, np.atleast_2d(points)).real

    def rho_at(self, z: PointLike) -> float:
        return float(self.values(_coords(z)[None, :])[0])

    def contains(self, z: PointLike) -> bool:
        return self.rho_at(z) < 0

    def depth(self, points: np.ndarray) -> np.ndarray:
        """Membership depth -rho (positive inside, -inf where rho is undefined)"""
        d = -self.values(points)
        return np.where(np.isfinite(d), d, -np.inf)

    def complement(self) -> "SublevelDomain":
        return SublevelDomain(neg(self.rho), self.dim, self.box, self.center, self.boundary_tol, f"not({self.name})")


@dataclass(frozen=True, eq=False)
class DistanceEstimate:
    distance: float
    uncertainty: float
    boundary_point: np.ndarray
    polished: bool
    rays_hit: int

    def as_dict(self) -> dict:
        return {"distance": self.distance, "uncertainty": self.uncertainty, "polished": self.polished, "rays_hit": self.rays_hit}


@dataclass
class ProbeRecord:
    point: np.ndarray
    verdict: Verdict
    inertia: Optional[HermitianInertia] = None
    margin: Optional[float] = None
    notes: List[str] = field(default_factory=list)
    extra: Dict[str, object] = field(default_factory=dict)

    def as_dict(self) -> dict:
        from levilab.models import complex_pairs

        out = {
            "point": complex_pairs(self.point),
            "verdict": self.verdict.value,
            "inertia": self.inertia.as_dict() if self.inertia else None,
            "margin": None if self.margin is None or not math.isfinite(self.margin) else float(self.margin),
            "notes": list(self.notes),
        }
        out.update(self.extra)
        return out


@dataclass
class ProbeReport:
    kind: str
    records: List[ProbeRecord]
    summary: Dict[str, object] = field(default_factory=dict)

    @property
    def counts(self) -> Dict[str, int]:
        counts = {v.value: 0 for v in Verdict}
        for r in self.records:
            counts[r.verdict.value] += 1
        return counts

    def as_dict(self) -> dict:
        return {"kind": self.kind, "counts": self.counts, "summary": self.summary, "records": [r.as_dict() for r in self.records]}


def record_from_verdict(z, verdict: PshVerdict, notes=(), **extra) -> ProbeRecord:
    return ProbeRecord(np.asarray(z), verdict.verdict, verdict.inertia, verdict.margin, list(verdict.notes) + list(notes), dict(extra))


# --- sampling ----------------------------------------------------------------

def _to_real(Z: np.ndarray) -> np.ndarray:
    return np.concatenate([Z.real, Z.imag], axis=-1)


def _from_real(X: np.ndarray) -> np.ndarray:
    n = X.shape[-1] // 2
    return X[..., :n] + 1j * X[..., n:]


def _random_directions(rng: np.random.Generator, count: int, n: int) -> np.ndarray:
    G = rng.standard_normal((count, 2 * n))
    return _from_real(G)


def interior_grid(
    D: SublevelDomain,
    n: int,
    seed: int = 0,
    min_norm: float = 0.0,
    max_norm: float = math.inf,
    margin: float = 1e-3,
) -> np.ndarray:
    """
    Seeded random interior sample points.

    Args:
        D (SublevelDomain): Domain; points are drawn uniformly in its box
        n (int): Number of points
        seed (int): Random seed
        min_norm, max_norm (float): Euclidean distance band around D.center
        margin (float): Keep only points with rho < -margin

    Returns:
        np.ndarray: Complex array of shape (n, N)

    Raises:
        SamplingError: If not enough points are found
    """
    rng = np.random.default_rng(seed)
    found, c = [], D.center_array
    for _ in range(200):
        X = rng.uniform(-D.box, D.box, size=(max(4 * n, 64), 2 * D.dim))
        Z = c + _from_real(X)
        r = np.linalg.norm(Z - c, axis=1)
        Z = Z[(r >= min_norm) & (r <= max_norm)]
        if len(Z):
            Z = Z[D.values(Z) < -margin]
        found.extend(Z)
        if len(found) >= n:
            return np.array(found[:n])
    raise SamplingError(f"found only {len(found)} of {n} interior points")


def _box_limits(D: SublevelDomain, z: np.ndarray, U: np.ndarray) -> np.ndarray:
    """Largest t with z + t*U inside the sampling box, per direction"""
    x = _to_real(z - D.center_array)
    u = _to_real(U)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = np.where(u > 0, (D.box - x) / u, np.where(u < 0, (-D.box - x) / u, np.inf))
    return t.min(axis=1)


def _ray_hits(D: SublevelDomain, z: np.ndarray, U: np.ndarray) -> np.ndarray:
    """First boundary crossing along each ray z + t*U (NaN where none is found in the box)"""
    k = len(U)
    t_max = _box_limits(D, z, U)
    fractions = np.arange(1, N_MARCH + 1) / N_MARCH
    ts = t_max[:, None] * fractions[None, :]
    pts = z[None, None, :] + ts[..., None] * U[:, None, :]
    vals = D.values(pts.reshape(-1, D.dim)).reshape(k, N_MARCH)
    outside = ~(vals < 0)
    hit = outside.any(axis=1)
    idx = np.argmax(outside, axis=1)
    hi = ts[np.arange(k), idx]
    lo = np.where(idx > 0, ts[np.arange(k), np.maximum(idx - 1, 0)], 0.0)
    out = np.full(k, np.nan)
    if not hit.any():
        return out
    lo, hi, V = lo[hit], hi[hit], U[hit]
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        inside = D.values(z[None, :] + mid[:, None] * V) < 0
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    out[hit] = 0.5 * (lo + hi)
    return out


def boundary_samples(D: SublevelDomain, n: int, seed: int = 0) -> np.ndarray:
    """
    Seeded boundary points found by bisection along random rays from D.center.

    Raises:
        NotOnBoundaryError: If D.center is not inside D
        SamplingError: If fewer than n rays reach the boundary
    """
    c = D.center_array
    if not D.rho_at(c) < 0:
        raise NotOnBoundaryError("domain center is not an interior point")
    rng = np.random.default_rng(seed)
    found = []
    for _ in range(50):
        U = _random_directions(rng, 2 * n, D.dim)
        U /= np.linalg.norm(U, axis=1)[:, None]
        t = _ray_hits(D, c, U)
        ok = np.isfinite(t)
        found.extend(c + t[ok, None] * U[ok])
        if len(found) >= n:
            return np.array(found[:n])
    raise SamplingError(f"only {len(found)} of {n} rays reached the boundary")


# --- distances ---------------------------------------------------------------

def _real_jets(D: SublevelDomain, W: np.ndarray):
    """rho, real gradient and real Hessian at many points (x_1..x_N, y_1..y_N order)"""
    n = D.dim
    grad_z, _, levi, hess = derivative_table(D.rho, n)
    rho = D.values(W)
    g = np.stack([evaluate_many(e, W) for e in grad_z], axis=1)
    A = np.stack([np.stack([evaluate_many(e, W) for e in row], axis=1) for row in hess], axis=1)
    B = np.stack([np.stack([evaluate_many(e, W) for e in row], axis=1) for row in levi], axis=1)
    grad = np.concatenate([2 * g.real, -2 * g.imag], axis=1)
    xx = 2 * (A + B).real
    xy = 2 * (B - A).imag
    yy = 2 * (B - A).real
    H = np.block([[xx, xy], [np.swapaxes(xy, 1, 2), yy]])
    return rho, grad, H


def closest_points(
    D: SublevelDomain,
    Z: np.ndarray,
    W0: np.ndarray,
    norm: NormSpec,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Newton iteration on the stationarity system of min ||z - w||^2 subject to rho(w) = 0.

    Args:
        D (SublevelDomain): Domain with smooth rho
        Z (np.ndarray): Points, shape (m, N)
        W0 (np.ndarray): Warm-start boundary points, shape (m, N)
        norm (NormSpec): Euclidean or weighted norm

    Returns:
        tuple: (boundary points, distances, converged mask)
    """
    wt = norm.real_weights(D.dim)
    zr, x = _to_real(Z), _to_real(W0).copy()
    start = np.sqrt(((x - zr) ** 2 * wt).sum(axis=1))
    rho, g, H = _real_jets(D, _from_real(x))
    lam = -((wt * (x - zr)) * g).sum(axis=1) / np.maximum((g * g).sum(axis=1), 1e-300)
    m, k = x.shape
    converged = np.zeros(m, dtype=bool)
    for _ in range(NEWTON_STEPS):
        F = np.concatenate([wt * (x - zr) + lam[:, None] * g, rho[:, None]], axis=1)
        J = np.zeros((m, k + 1, k + 1))
        J[:, :k, :k] = np.diag(wt)[None] + lam[:, None, None] * H
        J[:, :k, k] = g
        J[:, k, :k] = g
        try:
            step = np.linalg.solve(J, -F[..., None])[..., 0]
        except np.linalg.LinAlgError:
            step = (np.linalg.pinv(J) @ -F[..., None])[..., 0]
        step = np.where(np.isfinite(step), step, 0.0)
        x = x + step[:, :k]
        lam = lam + step[:, k]
        rho, g, H = _real_jets(D, _from_real(x))
        small = np.abs(step[:, :k]).max(axis=1) <= 1e-15 * (1.0 + np.abs(x).max(axis=1))
        converged = small & (np.abs(rho) <= 1e-13)
        if converged.all():
            break
    dist = np.sqrt(((x - zr) ** 2 * wt).sum(axis=1))
    converged &= np.isfinite(dist) & (dist <= start + 1e-9 * (1.0 + start))
    return _from_real(x), dist, converged


def _ray_distance(D: SublevelDomain, z: np.ndarray, u: np.ndarray) -> float:
    t_max = _box_limits(D, z, u[None])[0]
    ts = t_max * np.arange(1, N_MARCH + 1) / N_MARCH
    vals = D.values(z[None, :] + ts[:, None] * u[None, :])
    outside = ~(vals < 0)
    if not outside.any():
        return math.inf
    i = int(np.argmax(outside))
    lo, hi = (ts[i - 1] if i else 0.0), ts[i]
    f = lambda t: D.values((z + t * u)[None, :])[0]
    if np.isfinite(f(hi)) and f(hi) >= 0:
        return float(optimize.brentq(f, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps))
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if f(mid) < 0 else (lo, mid)
    return 0.5 * (lo + hi)


def boundary_distance(
    D: SublevelDomain,
    z: PointLike,
    norm: Optional[NormSpec] = None,
    n_samples: int = 64,
    seed: int = 0,
    hint: Optional[np.ndarray] = None,
) -> DistanceEstimate:
    """
    Distance from an interior point to the boundary.

    Bisection along n_samples seeded random rays plus the real coordinate
    axes; the best hit is then polished by a Newton closest-point iteration
    (smooth rho, euclidean or weighted norm) or by Nelder-Mead over the ray
    direction (sup norm or non-smooth rho).

    Args:
        D (SublevelDomain): Domain
        z (PointLike): Point with rho(z) < -boundary_tol
        norm (NormSpec, optional): Norm. Defaults to euclidean.
        n_samples (int): Random rays
        seed (int): Random seed
        hint (np.ndarray, optional): Extra ray direction tried first

    Returns:
        DistanceEstimate: Distance, uncertainty bound and closest boundary point

    Raises:
        NotOnBoundaryError: If z is not strictly inside D
        UnboundedDirectionError: If no ray reaches the boundary inside the box
    """
    norm = norm or NormSpec()
    z = _coords(z)
    if len(z) != D.dim:
        raise DimensionMismatchError(f"point of dimension {len(z)} for a domain in C^{D.dim}")
    if not D.rho_at(z) < -D.boundary_tol:
        raise NotOnBoundaryError("point is not strictly inside the domain")
    rng = np.random.default_rng(seed)
    axes = real_directions(D.dim)
    dirs = [axes, -axes, _random_directions(rng, n_samples, D.dim)]
    if hint is not None:
        dirs.insert(0, np.asarray(hint, dtype=complex)[None, :])
    U = np.vstack(dirs)
    U = U / norm.norm(U)[:, None]
    t = _ray_hits(D, z, U)
    hits = int(np.isfinite(t).sum())
    if hits == 0:
        raise UnboundedDirectionError("no boundary point found along any ray inside the box")
    best = int(np.nanargmin(t))
    t_best = float(t[best])
    w = z + t_best * U[best]
    ordered = np.sort(t[np.isfinite(t)])
    spread = float(ordered[1] - ordered[0]) if len(ordered) > 1 else t_best
    if norm.kind != "sup" and D.rho.is_smooth:
        try:
            W, dist, ok = closest_points(D, z[None, :], w[None, :], norm)
            if ok[0] and dist[0] <= t_best + 1e-12:
                return DistanceEstimate(float(dist[0]), 1e-12 * (1.0 + float(dist[0])), W[0], True, hits)
        except LeviLabError as e:
            logger.debug("Closest-point polish failed", error=str(e))
        return DistanceEstimate(t_best, spread, w, False, hits)
    return _polish_direction(D, z, U[best], t_best, norm, hits)


def _polish_direction(D, z, u0, t0, norm: NormSpec, hits: int) -> DistanceEstimate:
    n = D.dim

    def objective(x):
        u = _from_real(x)
        size = float(norm.norm(u))
        if size == 0:
            return math.inf
        return _ray_distance(D, z, u / size)

    res = optimize.minimize(
        objective,
        _to_real(u0),
        method="Nelder-Mead",
        options={"xatol": 1e-10, "fatol": 1e-13, "maxiter": 300 * n},
    )
    if np.isfinite(res.fun) and res.fun < t0:
        u = _from_real(res.x)
        u = u / norm.norm(u)
        spread = float(np.ptp(res.final_simplex[1]))
        return DistanceEstimate(float(res.fun), max(1e-12, spread), z + res.fun * u, True, hits)
    return DistanceEstimate(t0, 1e-12, z + t0 * u0, True, hits)


def distances_near(
    D: SublevelDomain,
    Z: np.ndarray,
    base: DistanceEstimate,
    z0: np.ndarray,
    norm: NormSpec,
    seed: int = 0,
) -> np.ndarray:
    """Distances at points near z0, warm-started from z0's closest boundary point"""
    Z = np.atleast_2d(Z)
    out = np.full(len(Z), np.nan)
    todo = np.ones(len(Z), dtype=bool)
    if norm.kind != "sup" and D.rho.is_smooth and base.polished:
        W0 = np.repeat(base.boundary_point[None, :], len(Z), axis=0)
        _, dist, ok = closest_points(D, Z, W0, norm)
        out[ok] = dist[ok]
        todo = ~ok
    hint = base.boundary_point - z0
    for i in np.flatnonzero(todo):
        try:
            out[i] = boundary_distance(D, Z[i], norm, 16, seed, hint=hint).distance
        except LeviLabError:
            out[i] = np.nan
    return out


def fd_levi_of_potential(values_at, z: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray]:
    """Finite-difference Levi matrices of a potential with steps h and 2h"""
    _, _, L1 = fd_wirtinger(values_at, z, h)
    _, _, L2 = fd_wirtinger(values_at, z, 2 * h)
    return 0.5 * (L1 + L1.conj().T), 0.5 * (L2 + L2.conj().T)


def _classify_fd(z, values_at, h, index, tol, notes=(), **extra) -> ProbeRecord:
    L1, L2 = fd_levi_of_potential(values_at, z, h)
    if not (np.all(np.isfinite(L1)) and np.all(np.isfinite(L2))):
        return ProbeRecord(z, Verdict.INCONCLUSIVE, notes=list(notes) + ["distance undefined on the stencil"], extra=extra)
    scale = max(float(np.max(np.abs(L1))), 1e-300)
    if float(np.max(np.abs(L1 - L2))) > FD_STABILITY * scale:
        return ProbeRecord(z, Verdict.INCONCLUSIVE, notes=list(notes) + ["unstable finite-difference Hessian"], extra=extra)
    verdict = verdict_from_matrix(L1, index, strict=False, tol=tol)
    return record_from_verdict(z, verdict, notes, **extra)


def _neg_log_distance_record(D, z, index, norm, tol, n_samples, seed, ball=None) -> ProbeRecord:
    """-log d classified against index; ball = (p, r) restricts to D intersected with B_r(p)"""
    base = boundary_distance(D, z, norm, n_samples, seed)
    d0 = base.distance
    if ball is not None:
        p, r = ball
        d0 = min(d0, r - float(norm.norm(z - p)))
    if not d0 > 0:
        return ProbeRecord(z, Verdict.INCONCLUSIVE, notes=["non-positive distance"])

    def values_at(pts):
        d = distances_near(D, pts, base, z, norm, seed)
        if ball is not None:
            d = np.minimum(d, r - norm.norm(pts - p))
        with np.errstate(all="ignore"):
            return -np.log(d)

    return _classify_fd(z, values_at, FD_RELATIVE_STEP * d0, index, tol, distance=d0)


def hartogs_pcv_via_distance(
    D: SublevelDomain,
    q: int,
    points: np.ndarray,
    norm: Optional[NormSpec] = None,
    tol: Optional[float] = None,
    n_samples: int = 64,
    seed: int = None,
    threads: Optional[int] = None,
) -> ProbeReport:
    """
    Probe Hartogs q-pseudoconvexity through -log d(z, bD).

    -log d is classified at each grid point against index n - q - 1 from
    finite-difference Levi matrices (step 1e-4 * d); points where steps h and
    2h disagree are inconclusive.

    Args:
        D (SublevelDomain): Domain
        q (int): Hartogs index, 0 <= q <= n - 1
        points (np.ndarray): Interior grid, shape (m, N)
        norm (NormSpec, optional): Complex norm. Defaults to euclidean.
        tol (float, optional): Inertia tolerance. Defaults to settings.FD_TOL.
        n_samples (int): Rays per distance
        seed (int, optional): Base seed for per-point seeds
        threads (int, optional): Worker threads

    Returns:
        ProbeReport: Per-point records and counts
    """
    n = D.dim
    if not 0 <= q <= n - 1:
        raise ValueError(f"Hartogs index q must lie in 0..{n - 1}, got {q}")
    index = n - q - 1
    tol = settings.FD_TOL if tol is None else tol
    norm = norm or NormSpec()
    logger.info("Starting Hartogs distance probe", points=len(points), index=index, norm=norm.kind)

    def work(z, s):
        try:
            return _neg_log_distance_record(D, np.asarray(z, dtype=complex), index, norm, tol, n_samples, s)
        except LeviLabError as e:
            return ProbeRecord(np.asarray(z), Verdict.INCONCLUSIVE, notes=[str(e)])

    records = parallel_map(work, list(np.atleast_2d(points)), seed, threads)
    report = ProbeReport("hartogs_probe", records, {"q": q, "index": index, "norm": norm.kind})
    logger.info("Hartogs distance probe finished", **report.counts)
    return report


def levi_pcv_at_boundary(
    D: SublevelDomain,
    p: PointLike,
    q: int,
    strict: bool = False,
    tol: Optional[float] = None,
) -> PshVerdict:
    """
    Levi (strict) q-pseudoconvexity at a boundary point.

    The Levi form of rho is restricted to the holomorphic tangent space
    {X : sum_k d(rho)/dz_k X_k = 0} and judged against q.

    Raises:
        NotOnBoundaryError: If |rho(p)| > D.boundary_tol
        VanishingGradientError: If d(rho)(p) vanishes
    """
    z = _coords(p)
    value = D.rho_at(z)
    if not abs(value) <= D.boundary_tol:
        raise NotOnBoundaryError(f"|rho(p)| = {abs(value):.3e} exceeds the boundary tolerance")
    jet = jet2(D.rho, z)
    H = holomorphic_tangent([jet.grad_z], tol)
    return verdict_from_matrix(restrict_form(jet.levi, H), q, strict, tol)


def levi_boundary_report(D, q, points, strict=False, tol=None, threads=None, seed=None) -> ProbeReport:
    """levi_pcv_at_boundary over many boundary samples"""

    def work(p, _):
        try:
            return record_from_verdict(p, levi_pcv_at_boundary(D, p, q, strict, tol))
        except (VanishingGradientError, NotOnBoundaryError) as e:
            return ProbeRecord(np.asarray(p), Verdict.INCONCLUSIVE, notes=[str(e)])

    records = parallel_map(work, list(np.atleast_2d(points)), seed, threads)
    return ProbeReport("levi_pcv", records, {"q": q, "strict": strict})


def index_cross_check(
    D: SublevelDomain,
    q: int,
    boundary_points: np.ndarray,
    grid: np.ndarray,
    norm: Optional[NormSpec] = None,
    seed: int = None,
    threads: Optional[int] = None,
) -> dict:
    """
    Levi q-pseudoconvexity at boundary samples against the -log d probe.

    Levi q-pcv corresponds to Hartogs (n - q - 1)-pcv, i.e. -log d being q-psh;
    the check is consistent when Levi certification at all samples comes with
    no refuted grid point.
    """
    levi = levi_boundary_report(D, q, boundary_points, threads=threads, seed=seed)
    hartogs = hartogs_pcv_via_distance(D, D.dim - q - 1, grid, norm, seed=seed, threads=threads)
    levi_all_yes = levi.counts[Verdict.CERTIFIED_YES.value] == len(levi.records)
    consistent = (not levi_all_yes) or hartogs.counts[Verdict.CERTIFIED_NO.value] == 0
    return {"levi": levi, "hartogs": hartogs, "levi_all_yes": levi_all_yes, "consistent": consistent}


# --- local maximum property --------------------------------------------------

@dataclass(frozen=True, eq=False)
class BallSlice:
    """Ball of radius r in the complex affine subspace center + span(frame)"""
    center: np.ndarray
    frame: np.ndarray
    radius: float

    def __post_init__(self):
        center = np.asarray(self.center, dtype=complex)
        frame = np.asarray(self.frame, dtype=complex).reshape(len(center), -1)
        q, _ = np.linalg.qr(frame)
        object.__setattr__(self, "center", center)
        object.__setattr__(self, "frame", q)

    @property
    def dim(self) -> int:
        return self.frame.shape[1]

    def points(self, coords: np.ndarray) -> np.ndarray:
        return self.center[None, :] + coords @ self.frame.T


@dataclass
class LocalMaxReport:
    violation: bool
    worst_violation: float
    interior_max: float
    boundary_max: float
    argmax: Optional[np.ndarray]
    n_interior: int
    n_boundary: int

    def as_dict(self) -> dict:
        from levilab.models import complex_pairs

        return {
            "violation": self.violation,
            "worst_violation": self.worst_violation,
            "interior_max": self.interior_max,
            "boundary_max": self.boundary_max,
            "argmax": complex_pairs(self.argmax) if self.argmax is not None else None,
            "n_interior": self.n_interior,
            "n_boundary": self.n_boundary,
        }


def local_max_test(
    e: Expr,
    region: BallSlice,
    n_boundary_samples: int = 1000,
    seed: int = 0,
    n_interior_samples: Optional[int] = None,
    slack: float = 1e-9,
) -> LocalMaxReport:
    """
    Monte-Carlo maximum principle check on a (q+1)-dimensional complex ball.

    A violation (interior max above the boundary max + slack) certifies that e
    is not q-psh; passing is only consistent with q-psh.
    """
    rng = np.random.default_rng(seed)
    m = region.dim
    n_int = n_interior_samples or n_boundary_samples
    U = _random_directions(rng, n_boundary_samples, m)
    U /= np.linalg.norm(U, axis=1)[:, None]
    boundary = region.points(region.radius * U)
    V = _random_directions(rng, n_int, m)
    V /= np.linalg.norm(V, axis=1)[:, None]
    radii = region.radius * rng.uniform(size=n_int) ** (1.0 / (2 * m))
    interior = np.vstack([region.center[None, :], region.points(radii[:, None] * V)])
    bvals = evaluate_many(e, boundary).real
    ivals = evaluate_many(e, interior).real
    bmax = float(np.nanmax(bvals))
    imax = float(np.nanmax(ivals))
    worst = imax - bmax
    allowed = slack * (1.0 + abs(bmax))
    argmax = interior[int(np.nanargmax(ivals))]
    return LocalMaxReport(worst > allowed, worst, imax, bmax, argmax, len(interior), len(boundary))


# --- relative pseudoconvexity ------------------------------------------------

def relative_pcv_probe(
    U: SublevelDomain,
    V: SublevelDomain,
    q: int,
    n_boundary: int = 20,
    radius: float = 0.2,
    n_interior: int = 4,
    norm: Optional[NormSpec] = None,
    seed: int = None,
    threads: Optional[int] = None,
) -> ProbeReport:
    """
    Relative q-pseudoconvexity probe of U inside V.

    For sampled p in bU intersected with V the Levi test runs at p, and -log d
    of U intersected with B_r(p) is probed for each radius r, r/2, r/4.

    Raises:
        DomainInclusionError: If U is not a proper subset of V on samples
    """
    seed = settings.DEFAULT_SEED if seed is None else seed
    norm = norm or NormSpec()
    if U.rho == V.rho:
        raise DomainInclusionError("U and V have the same defining function")
    inside_u = interior_grid(U, 64, seed)
    if not all(V.contains(z) for z in inside_u):
        raise DomainInclusionError("sampled points of U lie outside V")
    inside_v = interior_grid(V, 64, seed + 1)
    if all(U.contains(z) for z in inside_v):
        raise DomainInclusionError("U equals V on samples")
    bpts = [p for p in boundary_samples(U, 4 * n_boundary, seed) if V.contains(p)][:n_boundary]
    index = U.dim - q - 1
    radii = (radius, radius / 2, radius / 4)

    def work(p, s):
        rng = np.random.default_rng(s)
        try:
            levi = levi_pcv_at_boundary(U, p, q, tol=None)
            levi_verdict = levi.verdict
        except (VanishingGradientError, NotOnBoundaryError):
            levi_verdict = Verdict.INCONCLUSIVE
        per_radius = {}
        for r in radii:
            counts = {v.value: 0 for v in Verdict}
            for z in _points_near(U, p, r, n_interior, rng):
                try:
                    rec = _neg_log_distance_record(U, z, index, norm, settings.FD_TOL, 32, s, ball=(p, r))
                    counts[rec.verdict.value] += 1
                except LeviLabError:
                    counts[Verdict.INCONCLUSIVE.value] += 1
            per_radius[f"{r:.6g}"] = counts
        consistent = any(c[Verdict.CERTIFIED_NO.value] == 0 for c in per_radius.values())
        return ProbeRecord(
            np.asarray(p), levi_verdict, notes=[] if consistent else ["refuted at every radius"],
            extra={"radii": per_radius, "consistent": consistent},
        )

    records = parallel_map(work, bpts, seed, threads)
    consistent = all(r.extra["consistent"] for r in records)
    return ProbeReport("relative_pcv", records, {"q": q, "index": index, "consistent": consistent})


def _points_near(D: SublevelDomain, p: np.ndarray, r: float, count: int, rng) -> List[np.ndarray]:
    out = []
    for _ in range(100):
        V = _random_directions(rng, 4 * count, D.dim)
        V /= np.linalg.norm(V, axis=1)[:, None]
        Z = p[None, :] + (0.5 * r * rng.uniform(0.2, 1.0, size=len(V)))[:, None] * V
        vals = D.values(Z)
        out.extend(Z[vals < -D.boundary_tol * 10])
        if len(out) >= count:
            break
    return out[:count]


# --- exhaustion and defining-function helpers --------------------------------

def exhaustion_probe(
    psi: Expr,
    q: int,
    points: np.ndarray,
    approach: Sequence[np.ndarray] = (),
    blowup: float = 10.0,
    threads: Optional[int] = None,
    seed: Optional[int] = None,
) -> ProbeReport:
    """
    Check a candidate potential: q-psh at sample points and +infinity along approach sequences.

    Args:
        psi (Expr): Candidate potential
        q (int): Index
        points (np.ndarray): Sample points
        approach (Sequence[np.ndarray]): Sequences of points tending to the excluded set
        blowup (float): Value the last point of each sequence must exceed

    Returns:
        ProbeReport: Verdicts per point; summary holds the blow-up checks
    """

    def work(z, _):
        try:
            return record_from_verdict(z, classify_qpsh(psi, z, q))
        except LeviLabError as e:
            return ProbeRecord(np.asarray(z), Verdict.INCONCLUSIVE, notes=[str(e)])

    records = parallel_map(work, list(np.atleast_2d(points)), seed, threads)
    sequences = []
    for seq in approach:
        vals = evaluate_many(psi, np.atleast_2d(seq)).real
        increasing = bool(np.all(np.diff(vals) > 0))
        sequences.append({"values": [float(v) for v in vals], "blows_up": increasing and float(vals[-1]) > blowup})
    no_refutation = all(r.verdict is not Verdict.CERTIFIED_NO for r in records)
    summary = {"q": q, "approach": sequences, "consistent": no_refutation and all(s["blows_up"] for s in sequences)}
    return ProbeReport("exhaustion", records, summary)


def exponent_defining(rho: Expr, c: float) -> Expr:
    """exp(c * rho) - 1, a defining function of the same sublevel set"""
    return sub(exp(mul(const(c), rho)), const(1))


def find_exponent(
    D: SublevelDomain,
    q: int,
    points: np.ndarray,
    c0: float = 1.0,
    doublings: int = 16,
    tol: Optional[float] = None,
) -> Optional[Tuple[float, Expr]]:
    """
    Smallest c in {c0, 2 c0, 4 c0, ...} with exp(c rho) - 1 strictly q-psh at all points.

    Returns:
        tuple | None: (c, expression), or None if no tried c works
    """
    c = c0
    for _ in range(doublings):
        candidate = exponent_defining(D.rho, c)
        if all(classify_qpsh(candidate, z, q, strict=True, tol=tol).is_yes for z in np.atleast_2d(points)):
            logger.info("Found defining-function exponent", c=c, q=q)
            return c, candidate
        c *= 2
    return None
