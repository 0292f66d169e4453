"""
Calculus service: symbolic Wirtinger derivatives and second-order jets
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Dict, Tuple

import numpy as np

from levilab.config import settings
from levilab.exceptions import LeviLabError, NonSmoothError, SingularPointError
from levilab.services.expr import (
    HALF,
    ONE,
    ZERO,
    Const,
    Expr,
    Guard,
    Max,
    PointLike,
    Ref,
    Unary,
    Var,
    _coords,
    add,
    conj,
    const,
    div,
    evaluate_all,
    evaluate_many,
    mul,
    neg,
    power,
    sub,
)
from levilab.utils.logging import logger

Z = "z"
ZBAR = "zbar"
_MINUS_HALF_I = Const(-0.5j)
_OTHER = {Z: ZBAR, ZBAR: Z}


@dataclass(frozen=True, eq=False)
class Jet2:
    """Value, Wirtinger gradients and Levi matrix of an expression at a point"""
    value: complex
    grad_z: np.ndarray
    grad_zbar: np.ndarray
    levi: np.ndarray  # levi[j, l] = d^2 e / dz_j dzbar_l
    real_valued: bool
    symmetry_defect: float = 0.0


@dataclass(frozen=True)
class FdReport:
    """Symbolic jet versus central finite differences"""
    step: float
    grad_error: float
    levi_error: float
    max_error: float
    failed: bool = False
    message: str = ""


class _Deriver:
    """Derivation of one tree with respect to z_j or zbar_j, memoized per node"""

    def __init__(self, index: int):
        self.index = index
        self.memo: Dict[Tuple[int, str], Expr] = {}

    def derive(self, node: Expr, which: str, path: Tuple[str, ...] = ()) -> Expr:
        key = (id(node), which)
        hit = self.memo.get(key)
        if hit is not None:
            return hit
        path = path + (node.label,)
        out = self._rule(node, which, path)
        self.memo[key] = out
        return out

    def _rule(self, node, which, path):
        if isinstance(node, Const):
            return ZERO
        if isinstance(node, Var):
            return ONE if (which == Z and node.index == self.index) else ZERO
        if isinstance(node, Ref):
            return self.derive(node.body, which, path)
        if isinstance(node, Max):
            raise NonSmoothError("cannot differentiate max", path)
        if isinstance(node, Guard):
            return Guard(node.cond, self.derive(node.body, which, path), self.derive(node.fallback, which, path))
        if isinstance(node, Unary):
            return self._unary(node, which, path)
        return self._binary(node, which, path)

    def _unary(self, node, which, path):
        f = node.arg
        op = node.op
        if op in ("conj", "re", "im", "abs2", "abs"):
            df = self.derive(f, which, path)
            # d(conj f)/dz = conj(d f / dzbar)
            dconj = conj(self.derive(f, _OTHER[which], path))
            if op == "conj":
                return dconj
            if op == "re":
                return mul(HALF, add(df, dconj))
            if op == "im":
                return mul(_MINUS_HALF_I, sub(df, dconj))
            dabs2 = add(mul(df, conj(f)), mul(f, dconj))
            if op == "abs2":
                return dabs2
            return div(dabs2, mul(const(2), node))
        df = self.derive(f, which, path)
        if op == "neg":
            return neg(df)
        if op == "log":
            return div(df, f)
        if op == "exp":
            return mul(node, df)
        if op == "sqrt":
            return div(df, mul(const(2), node))
        raise NonSmoothError(f"no derivative rule for {op}", path)

    def _binary(self, node, which, path):
        f, g = node.left, node.right
        if node.op == "pow":
            return self._power(node, which, path)
        df = self.derive(f, which, path)
        dg = self.derive(g, which, path)
        if node.op == "add":
            return add(df, dg)
        if node.op == "sub":
            return sub(df, dg)
        if node.op == "mul":
            return add(mul(df, g), mul(f, dg))
        # quotient rule
        return sub(div(df, g), div(mul(f, dg), power(g, const(2))))

    def _power(self, node, which, path):
        f, g = node.left, node.right
        df = self.derive(f, which, path)
        if isinstance(g, Const):
            lowered = const(g.value - 1)
            return mul(mul(g, power(f, lowered)), df)
        dg = self.derive(g, which, path)
        # f^g (dg log f + g df / f)
        return mul(node, add(mul(dg, Unary("log", f)), div(mul(g, df), f)))


def wirtinger_derive(e: Expr, which: str, index: int) -> Expr:
    """
    Symbolic Wirtinger derivative of an expression.

    Args:
        e (Expr): Smooth expression (no `max` node)
        which (str): "z" for d/dz_index, "zbar" for d/dzbar_index
        index (int): 1-based variable index

    Returns:
        Expr: The derivative, with constant folding and 0/1 identities applied

    Raises:
        NonSmoothError: If a `max` node is met (the error carries its path)
    """
    if which not in (Z, ZBAR):
        raise ValueError(f"which must be 'z' or 'zbar', got {which!r}")
    return _Deriver(index).derive(e, which)


@lru_cache(maxsize=512)
def derivative_table(e: Expr, dim: int):
    """Gradient rows and the Levi matrix of e as expressions, cached per (e, dim)"""
    grad_z, grad_zbar, levi, hess = [], [], [], []
    derivers = [_Deriver(j) for j in range(1, dim + 1)]
    for d in derivers:
        grad_z.append(d.derive(e, Z))
        grad_zbar.append(d.derive(e, ZBAR))
    for j, d in enumerate(derivers):
        levi.append(tuple(d.derive(grad_zbar[l], Z) for l in range(dim)))
        hess.append(tuple(d.derive(grad_z[l], Z) for l in range(dim)))
    logger.debug("Built derivative table", dim=dim)
    return tuple(grad_z), tuple(grad_zbar), tuple(levi), tuple(hess)


@lru_cache(maxsize=512)
def _guard_conditions(e: Expr) -> Tuple[Expr, ...]:
    seen, found, stack = set(), [], [e]
    while stack:
        node = stack.pop()
        if id(node) in seen:
            continue
        seen.add(id(node))
        if isinstance(node, Guard):
            found.append(node.cond)
        stack.extend(node.operands)
    return tuple(found)


def check_off_guard(e: Expr, p: PointLike):
    """Raise SingularPointError when p lies on the guard set of a piecewise expression"""
    if not e.has_guard:
        return
    z = _coords(p)
    for cond in _guard_conditions(e):
        value = evaluate_many(cond, z[None, :])[0]
        if value == 0:
            raise SingularPointError(f"point lies on the guard set {cond}")


def is_real_valued(value: complex, grad_z: np.ndarray, grad_zbar: np.ndarray) -> bool:
    scale = 1.0 + abs(value)
    if abs(value.imag) > 1e-12 * scale:
        return False
    gscale = 1.0 + float(np.max(np.abs(grad_z), initial=0.0))
    return bool(np.max(np.abs(grad_zbar - np.conj(grad_z)), initial=0.0) <= 1e-10 * gscale)


def jet2(e: Expr, p: PointLike) -> Jet2:
    """
    Second-order Wirtinger jet of e at p.

    For real-valued e the Levi matrix is Hermitian-symmetrized and the
    pre-symmetrization defect is recorded (warning above settings.SYMMETRY_WARN).

    Raises:
        NonSmoothError: If e contains a max node
        SingularPointError: If p lies on a guard set
        ExprDomainError: If evaluation fails
    """
    z = _coords(p)
    dim = len(z)
    check_off_guard(e, z)
    grad_z, grad_zbar, levi, _ = derivative_table(e, dim)
    flat = [e, *grad_z, *grad_zbar, *(x for row in levi for x in row)]
    values = evaluate_all(flat, z)
    value = values[0]
    gz = np.array(values[1:1 + dim], dtype=complex)
    gzb = np.array(values[1 + dim:1 + 2 * dim], dtype=complex)
    L = np.array(values[1 + 2 * dim:], dtype=complex).reshape(dim, dim)
    real = is_real_valued(value, gz, gzb)
    defect = 0.0
    if real:
        defect = float(np.max(np.abs(L - L.conj().T), initial=0.0))
        scale = max(1.0, float(np.max(np.abs(L), initial=0.0)))
        if defect > settings.SYMMETRY_WARN * scale:
            logger.warning("Levi matrix far from Hermitian", defect=defect, expr=str(e)[:120])
        L = 0.5 * (L + L.conj().T)
        value = complex(value.real, 0.0)
    return Jet2(value, gz, gzb, L, real, defect)


def holomorphic_hessian(e: Expr, p: PointLike) -> np.ndarray:
    """Matrix of d^2 e / dz_j dz_l at p"""
    z = _coords(p)
    check_off_guard(e, z)
    hess = derivative_table(e, len(z))[3]
    values = evaluate_all([x for row in hess for x in row], z)
    return np.array(values, dtype=complex).reshape(len(z), len(z))


def gradient(e: Expr, p: PointLike) -> Tuple[np.ndarray, np.ndarray]:
    """Wirtinger gradients (d/dz, d/dzbar) at p without the Levi matrix"""
    z = _coords(p)
    check_off_guard(e, z)
    grad_z, grad_zbar, _, _ = derivative_table(e, len(z))
    values = evaluate_all([*grad_z, *grad_zbar], z)
    n = len(z)
    return np.array(values[:n], dtype=complex), np.array(values[n:], dtype=complex)


def real_directions(dim: int) -> np.ndarray:
    """The 2N real coordinate directions (dx_1..dx_N, dy_1..dy_N) as complex vectors"""
    eye = np.eye(dim, dtype=complex)
    return np.vstack([eye, 1j * eye])


def fd_wirtinger(values_at, z: np.ndarray, h: float) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """
    Central finite-difference Wirtinger gradients and Levi matrix.

    Args:
        values_at (callable): Maps an (m, N) complex array of points to m values
        z (np.ndarray): Base point
        h (float): Step in each real coordinate

    Returns:
        tuple: (grad_z, grad_zbar, levi)
    """
    n = len(z)
    dirs = real_directions(n)
    m = 2 * n
    stencil = [z + h * dirs[a] for a in range(m)] + [z - h * dirs[a] for a in range(m)]
    for a in range(m):
        for b in range(m):
            for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
                stencil.append(z + h * (sa * dirs[a] + sb * dirs[b]))
    f = np.asarray(values_at(np.array(stencil)), dtype=complex)
    first = (f[:m] - f[m:2 * m]) / (2 * h)
    mixed = f[2 * m:].reshape(m, m, 4)
    second = (mixed[..., 0] - mixed[..., 1] - mixed[..., 2] + mixed[..., 3]) / (4 * h * h)
    fx, fy = first[:n], first[n:]
    grad_z = 0.5 * (fx - 1j * fy)
    grad_zbar = 0.5 * (fx + 1j * fy)
    xx, xy = second[:n, :n], second[:n, n:]
    yx, yy = second[n:, :n], second[n:, n:]
    levi = 0.25 * (xx + 1j * xy - 1j * yx + yy)
    return grad_z, grad_zbar, levi


def _relative(sym: np.ndarray, fd: np.ndarray) -> float:
    scale = max(1.0, float(np.max(np.abs(sym), initial=0.0)))
    return float(np.max(np.abs(sym - fd), initial=0.0)) / scale


def validate_jet_fd(e: Expr, p: PointLike, h: float = None) -> FdReport:
    """
    Compare the symbolic jet with central finite differences in 2N real coordinates.

    Args:
        e (Expr): Smooth expression
        p (PointLike): Point
        h (float, optional): Step in [1e-8, 1e-3]. Defaults to settings.FD_STEP.

    Returns:
        FdReport: Max relative errors (NaN with failed=True if evaluation failed)
    """
    h = settings.FD_STEP if h is None else h
    if not 1e-8 <= h <= 1e-3:
        raise ValueError(f"finite-difference step {h} outside [1e-8, 1e-3]")
    z = _coords(p)
    try:
        jet = jet2(e, z)
        fd_z, fd_zbar, fd_levi = fd_wirtinger(lambda pts: evaluate_many(e, pts), z, h)
    except LeviLabError as err:
        logger.warning("Jet validation failed", error=str(err))
        return FdReport(h, float("nan"), float("nan"), float("nan"), True, str(err))
    if not (np.all(np.isfinite(fd_levi)) and np.all(np.isfinite(fd_z))):
        return FdReport(h, float("nan"), float("nan"), float("nan"), True, "non-finite stencil value")
    levi = jet.levi
    grad_error = max(_relative(jet.grad_z, fd_z), _relative(jet.grad_zbar, fd_zbar))
    levi_error = _relative(levi, fd_levi)
    return FdReport(h, grad_error, levi_error, max(grad_error, levi_error))
