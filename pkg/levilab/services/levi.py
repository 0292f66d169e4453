"""
Levi service: Hermitian inertia, restricted Levi forms and q-psh verdicts
"""
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import linalg

from levilab.config import settings
from levilab.exceptions import (
    DimensionMismatchError,
    InvariantViolation,
    NonHermitianError,
    VanishingGradientError,
)
from levilab.services.calculus import jet2
from levilab.services.expr import Const, Expr, PointLike, Var, _coords, add, mul, substitute, total
from levilab.utils.logging import logger

HERMITIAN_TOL = 1e-10


class Verdict(str, Enum):
    CERTIFIED_YES = "certified_yes"
    CERTIFIED_NO = "certified_no"
    INCONCLUSIVE = "inconclusive"


@dataclass(frozen=True)
class HermitianInertia:
    """Counts of negative / zero / positive eigenvalues under a tolerance band"""
    n_neg: int
    n_zero: int
    n_pos: int
    tolerance: float
    scale: float = 1.0
    eigenvalues: Tuple[float, ...] = ()

    @property
    def dim(self) -> int:
        return self.n_neg + self.n_zero + self.n_pos

    def as_dict(self) -> dict:
        return {"n_neg": self.n_neg, "n_zero": self.n_zero, "n_pos": self.n_pos, "tolerance": self.tolerance}


@dataclass(frozen=True, eq=False)
class Subspace:
    """Complex subspace of C^N given by an orthonormal basis (columns)"""
    ambient_dim: int
    basis: np.ndarray

    def __post_init__(self):
        basis = np.asarray(self.basis, dtype=complex).reshape(self.ambient_dim, -1)
        object.__setattr__(self, "basis", basis)

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def full(cls, n: int) -> "Subspace":
        return cls(n, np.eye(n, dtype=complex))

    @classmethod
    def zero(cls, n: int) -> "Subspace":
        return cls(n, np.zeros((n, 0), dtype=complex))

    @classmethod
    def span(cls, vectors: Sequence[Sequence[complex]], n: Optional[int] = None) -> "Subspace":
        """Orthonormal basis of the span of the given vectors"""
        vectors = [np.asarray(v, dtype=complex) for v in vectors]
        if not vectors:
            return cls.zero(n or 0)
        M = np.column_stack(vectors)
        return cls(M.shape[0], linalg.orth(M))

    def project(self, X: Sequence[complex]) -> np.ndarray:
        X = np.asarray(X, dtype=complex)
        return self.basis @ (self.basis.conj().T @ X)

    def contains(self, X: Sequence[complex], tol: float = 1e-9) -> bool:
        X = np.asarray(X, dtype=complex)
        return float(np.linalg.norm(X - self.project(X))) <= tol * max(1.0, float(np.linalg.norm(X)))

    def orthonormality_defect(self) -> float:
        G = self.basis.conj().T @ self.basis
        return float(np.max(np.abs(G - np.eye(self.dim)), initial=0.0))


@dataclass(frozen=True)
class PshVerdict:
    """Tri-state (strict) q-psh verdict with the deciding eigenvalue and its margin"""
    verdict: Verdict
    inertia: Optional[HermitianInertia]
    margin: float
    q: int
    strict: bool
    deciding_eigenvalue: Optional[float] = None
    notes: Tuple[str, ...] = field(default_factory=tuple)

    @property
    def is_yes(self) -> bool:
        return self.verdict is Verdict.CERTIFIED_YES

    def as_dict(self) -> dict:
        return {
            "verdict": self.verdict.value,
            "inertia": self.inertia.as_dict() if self.inertia else None,
            "margin": _finite_or_none(self.margin),
            "q": self.q,
            "strict": self.strict,
            "notes": list(self.notes),
        }


def _finite_or_none(x):
    if x is None or not math.isfinite(x):
        return None
    return float(x)


def check_hermitian(H: np.ndarray, tol: float = HERMITIAN_TOL) -> np.ndarray:
    H = np.atleast_2d(np.asarray(H, dtype=complex))
    if H.shape[0] != H.shape[1]:
        raise DimensionMismatchError(f"matrix must be square, got shape {H.shape}")
    scale = 1.0 + float(np.max(np.abs(H), initial=0.0))
    defect = float(np.max(np.abs(H - H.conj().T), initial=0.0))
    if defect > tol * scale:
        raise NonHermitianError(f"matrix is not Hermitian (defect {defect:.3e})")
    return 0.5 * (H + H.conj().T)


def inertia(H: np.ndarray, tol: Optional[float] = None) -> HermitianInertia:
    """
    Inertia of a Hermitian matrix.

    An eigenvalue counts as zero when |lambda| <= tol * max(1, spectral radius).

    Args:
        H (np.ndarray): Hermitian matrix (within 1e-10)
        tol (float, optional): Relative tolerance in (0, 1). Defaults to settings.DEFAULT_TOL.

    Returns:
        HermitianInertia: The counts, band and sorted eigenvalues

    Raises:
        NonHermitianError: If H is not Hermitian within tolerance
    """
    tol = settings.DEFAULT_TOL if tol is None else tol
    if not 0 < tol < 1:
        raise ValueError(f"tolerance must lie in (0, 1), got {tol}")
    H = check_hermitian(H)
    if H.shape[0] == 0:
        return HermitianInertia(0, 0, 0, tol, 1.0, ())
    eigs = linalg.eigvalsh(H)
    scale = max(1.0, float(np.max(np.abs(eigs))))
    band = tol * scale
    n_neg = int(np.sum(eigs < -band))
    n_pos = int(np.sum(eigs > band))
    return HermitianInertia(n_neg, len(eigs) - n_neg - n_pos, n_pos, tol, scale, tuple(float(x) for x in eigs))


def holomorphic_tangent(grads: Sequence[Sequence[complex]], tol: Optional[float] = None, dim: Optional[int] = None) -> Subspace:
    """
    Joint kernel of the Wirtinger gradient rows d(phi_j)(p).

    Args:
        grads (Sequence): Rows d(phi_j)/dz at p
        tol (float, optional): Rank cutoff relative to the largest singular value
        dim (int, optional): Ambient dimension, needed when grads is empty

    Returns:
        Subspace: Orthonormal basis of {X : sum_k d(phi_j)/dz_k X_k = 0 for all j}

    Raises:
        VanishingGradientError: If some gradient has norm <= tol
    """
    tol = settings.DEFAULT_TOL if tol is None else tol
    rows = [np.asarray(g, dtype=complex) for g in grads]
    if not rows:
        if dim is None:
            raise DimensionMismatchError("ambient dimension required for an empty gradient list")
        return Subspace.full(dim)
    A = np.vstack(rows)
    for j, row in enumerate(rows):
        if np.linalg.norm(row) <= tol:
            raise VanishingGradientError(f"gradient of defining function {j + 1} vanishes")
    return Subspace(A.shape[1], linalg.null_space(A, rcond=tol))


def restrict_form(H: np.ndarray, S: Subspace) -> np.ndarray:
    """
    Restriction of the Levi form L(X, Y) = X^T H conj(Y) to a subspace.

    The result uses the same convention in the coordinates of S's basis B,
    i.e. it is B^T H conj(B).
    """
    H = np.asarray(H, dtype=complex)
    if H.shape != (S.ambient_dim, S.ambient_dim):
        raise DimensionMismatchError(f"matrix shape {H.shape} does not match subspace of C^{S.ambient_dim}")
    B = S.basis
    R = B.T @ H @ B.conj()
    return 0.5 * (R + R.conj().T)


def levi_null_space(
    grads: Sequence[Sequence[complex]],
    levis: Sequence[np.ndarray],
    H: Subspace,
    tol: Optional[float] = None,
) -> Subspace:
    """
    Levi null space N_p = {X in H : L_j(X, Y) = 0 for all Y in H and all j}.

    Computed as the joint kernel of the stacked restricted forms (one SVD).
    """
    tol = settings.DEFAULT_TOL if tol is None else tol
    if len(levis) != len(grads):
        raise DimensionMismatchError(f"{len(grads)} gradients but {len(levis)} Levi matrices")
    if H.dim == 0:
        return Subspace.zero(H.ambient_dim)
    restricted = [restrict_form(L, H) for L in levis]
    if not restricted:
        return H
    stacked = np.vstack([R.T for R in restricted])
    scale = max(1.0, max(float(np.max(np.abs(L), initial=0.0)) for L in levis))
    _, s, vh = linalg.svd(stacked)
    rank = int(np.sum(s > tol * scale))
    kernel = vh[rank:].conj().T
    return Subspace(H.ambient_dim, H.basis @ kernel)


def verdict_from_matrix(
    H: np.ndarray,
    q: int,
    strict: bool = False,
    tol: Optional[float] = None,
    guard: Optional[float] = None,
    notes: Tuple[str, ...] = (),
) -> PshVerdict:
    """
    Judge a (restricted) Levi matrix against index q.

    With tau = tol * max(1, spectral radius) and the (q+1)-th smallest
    eigenvalue lam, the non-strict verdict is yes for lam >= -tau and no for
    lam < -guard * tau; the strict verdict is yes for lam > guard * tau and no
    for lam <= tau. Values in between are inconclusive.
    """
    tol = settings.DEFAULT_TOL if tol is None else tol
    guard = settings.GUARD_FACTOR if guard is None else guard
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    inert = inertia(H, tol)
    verdict, margin, lam = _judge(inert, q, strict, guard)
    if verdict is Verdict.CERTIFIED_YES:
        upper, _, _ = _judge(inert, q + 1, strict, guard)
        if upper is not Verdict.CERTIFIED_YES:
            raise InvariantViolation(f"q-psh verdict not monotone in q at q={q}")
    return PshVerdict(verdict, inert, margin, q, strict, lam, tuple(notes))


def _judge(inert: HermitianInertia, q: int, strict: bool, guard: float):
    eigs = inert.eigenvalues
    if q >= len(eigs):
        return Verdict.CERTIFIED_YES, math.inf, None
    lam = eigs[q]
    tau = inert.tolerance * inert.scale
    if strict:
        lo, hi = tau, guard * tau
        if lam > hi:
            return Verdict.CERTIFIED_YES, lam - hi, lam
        if lam <= lo:
            return Verdict.CERTIFIED_NO, lo - lam, lam
        return Verdict.INCONCLUSIVE, -min(lam - lo, hi - lam), lam
    lo, hi = -guard * tau, -tau
    if lam >= hi:
        return Verdict.CERTIFIED_YES, lam - hi, lam
    if lam < lo:
        return Verdict.CERTIFIED_NO, lo - lam, lam
    return Verdict.INCONCLUSIVE, -min(lam - lo, hi - lam), lam


def classify_qpsh(
    e: Expr,
    p: PointLike,
    q: int,
    strict: bool = False,
    tol: Optional[float] = None,
) -> PshVerdict:
    """
    Pointwise (strict) q-plurisubharmonicity of a C^2 real-valued expression.

    Args:
        e (Expr): Real-valued expression
        p (PointLike): Point
        q (int): Index, q >= 0; q >= N is certified unconditionally
        strict (bool): Strict q-psh (at most q non-positive eigenvalues)
        tol (float, optional): Inertia tolerance. Defaults to settings.DEFAULT_TOL.

    Returns:
        PshVerdict: Verdict with inertia and margin; inconclusive for non-smooth e

    Raises:
        NonHermitianError: If e is not real-valued near p
        SingularPointError, ExprDomainError: Propagated from the jet
    """
    z = _coords(p)
    n = len(z)
    if q < 0:
        raise ValueError(f"q must be >= 0, got {q}")
    if not e.is_smooth:
        if q >= n:
            return PshVerdict(Verdict.CERTIFIED_YES, None, math.inf, q, strict, None, ("index >= dimension",))
        return PshVerdict(Verdict.INCONCLUSIVE, None, 0.0, q, strict, None, ("non-smooth expression",))
    jet = jet2(e, z)
    if not jet.real_valued:
        raise NonHermitianError("expression is not real-valued at the point")
    verdict = verdict_from_matrix(jet.levi, q, strict, tol)
    logger.debug("Classified point", q=q, strict=strict, verdict=verdict.verdict.value)
    return verdict


def affine_pullback(e: Expr, matrix: np.ndarray, offset: Sequence[complex]) -> Expr:
    """
    Pull e back by the affine holomorphic map w -> matrix @ w + offset.

    Args:
        e (Expr): Expression over C^N
        matrix (np.ndarray): N x m complex matrix
        offset (Sequence[complex]): Point of C^N

    Returns:
        Expr: Expression over C^m
    """
    A = np.asarray(matrix, dtype=complex)
    b = np.asarray(offset, dtype=complex)
    if A.shape[0] != len(b):
        raise DimensionMismatchError(f"matrix has {A.shape[0]} rows but offset has {len(b)} entries")
    mapping = {}
    for k in range(A.shape[0]):
        terms = [mul(Const(complex(A[k, j])), Var(j + 1)) for j in range(A.shape[1]) if A[k, j] != 0]
        mapping[k + 1] = add(Const(complex(b[k])), total(terms))
    return substitute(e, mapping)
