"""
Example library: named graphs, expressions, domains and families
"""
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Dict, List

from levilab.exceptions import UnknownExampleError
from levilab.services.domains import SublevelDomain
from levilab.services.expr import (
    Expr,
    abs2,
    add,
    conj,
    const,
    div,
    guard,
    log,
    mul,
    neg,
    norm2,
    parse,
    power,
    re_,
    sub,
    var,
)
from levilab.services.graphs import GraphMapping
from levilab.services.hartogs import build_thm41_family, build_uk, touching_family


@dataclass(frozen=True)
class CatalogEntry:
    name: str
    kind: str  # graph | expr | domain | family
    description: str
    builder: Callable


def ex58(k: int = 2) -> GraphMapping:
    """zeta = conj(z1) z2^(2+k) / conj(z2), and 0 on {z2 = 0}"""
    if k < 0:
        raise ValueError("k must be >= 0")
    z1, z2 = var(1), var(2)
    body = div(mul(conj(z1), power(z2, 2 + k)), conj(z2))
    return GraphMapping(2, 0, 1, (), (guard(z2, body, const(0)),), 1.0, f"ex58({k})")


def holo_graph(g: str = "z1^2", n: int = 1) -> GraphMapping:
    """zeta = g(z) for a holomorphic DSL expression g"""
    h = parse(g, n)
    if not h.is_holomorphic:
        raise ValueError(f"'{g}' is not holomorphic")
    return GraphMapping(n, 0, 1, (), (h,), 1.0, f"holo_graph({g})")


def leviflat_im_z2() -> GraphMapping:
    """v = Im(z^2), foliated by the complex curves w = z^2 + c"""
    return GraphMapping(1, 1, 0, (parse("im(z1^2)", 2),), (), 3.0, "leviflat_im_z2")


def flat_v() -> GraphMapping:
    """v = 0"""
    return GraphMapping(1, 1, 0, (const(0),), (), 3.0, "flat_v")


def strict_v() -> GraphMapping:
    """v = |z|^2, strictly pseudoconvex from one side"""
    return GraphMapping(1, 1, 0, (abs2(var(1)),), (), 1.0, "strict_v")


def antiholo() -> GraphMapping:
    """zeta = conj(z)^2, totally real off the origin"""
    return GraphMapping(1, 0, 1, (), (power(conj(var(1)), 2),), 1.0, "antiholo")


def real_plane() -> GraphMapping:
    """zeta = conj(z), the image of R^2 under (a, b) -> (a + ib, a - ib)"""
    return GraphMapping(1, 0, 1, (), (conj(var(1)),), 1.0, "real_plane")


def quadric_form() -> Expr:
    """-|z1|^2 + |z2|^2"""
    return add(neg(abs2(var(1))), abs2(var(2)))


def neg_log_norm(n: int = 2) -> Expr:
    """-log |z|, (n-1)-psh off the origin"""
    return mul(const(Fraction(-1, 2)), log(norm2(range(1, n + 1))))


def unit_ball(n: int = 2) -> SublevelDomain:
    return SublevelDomain(sub(norm2(range(1, n + 1)), const(1)), n, 2.0, name=f"ball({n})")


def shell(n: int = 2, inner: float = 0.3) -> SublevelDomain:
    """{inner < |z| < 1} as the sublevel set of (|z|^2 - 1)(|z|^2 - inner^2)"""
    r2 = norm2(range(1, n + 1))
    rho = mul(sub(r2, const(1)), sub(r2, const(inner * inner)))
    return SublevelDomain(rho, n, 2.0, (0.65,) + (0,) * (n - 1), name=f"shell({n},{inner:g})")


def quadric(n: int = 2) -> SublevelDomain:
    """{-|z1|^2 + |z2|^2 + ... + |zn|^2 < 1}"""
    rho = sub(add(neg(abs2(var(1))), norm2(range(2, n + 1))), const(1))
    return SublevelDomain(rho, n, 3.0, name=f"quadric({n})")


def model_strict_qpcv(n: int = 3, q: int = 1) -> SublevelDomain:
    """{Re z1 + |z1|^2 + ... + |z_{n-q}|^2 - |z_{n-q+1}|^2 - ... - |zn|^2 < 0}, strictly q-pseudoconvex at 0"""
    rho = add(re_(var(1)), abs2(var(1)))
    rho = add(rho, norm2(range(2, n - q + 1)))
    rho = sub(rho, norm2(range(n - q + 1, n + 1)))
    return SublevelDomain(rho, n, 1.0, (-0.5,) + (0,) * (n - 1), name=f"model_strict_qpcv({n},{q})")


CATALOG: Dict[str, CatalogEntry] = {
    e.name: e
    for e in [
        CatalogEntry("ex58", "graph", "C^k graph conj(z1) z2^(2+k)/conj(z2) with only a singular foliation", ex58),
        CatalogEntry("holo_graph", "graph", "graph of a holomorphic function", holo_graph),
        CatalogEntry("leviflat_im_z2", "graph", "Levi-flat hypersurface v = Im(z^2)", leviflat_im_z2),
        CatalogEntry("flat_v", "graph", "real hyperplane v = 0", flat_v),
        CatalogEntry("strict_v", "graph", "strictly pseudoconvex hypersurface v = |z|^2", strict_v),
        CatalogEntry("antiholo", "graph", "totally real graph zeta = conj(z)^2", antiholo),
        CatalogEntry("real_plane", "graph", "totally real plane zeta = conj(z)", real_plane),
        CatalogEntry("uk", "expr", "u_k approximants of -log|w|_inf", build_uk),
        CatalogEntry("quadric_form", "expr", "-|z1|^2 + |z2|^2", quadric_form),
        CatalogEntry("neg_log_norm", "expr", "-log|z|", neg_log_norm),
        CatalogEntry("ball", "domain", "unit ball", unit_ball),
        CatalogEntry("shell", "domain", "spherical shell", shell),
        CatalogEntry("quadric", "domain", "quadric {-|z1|^2 + |z2|^2 < 1}", quadric),
        CatalogEntry("model_strict_qpcv", "domain", "model strictly q-pseudoconvex domain at the origin", model_strict_qpcv),
        CatalogEntry("touching", "family", "discs touching R^2 at the origin", touching_family),
        CatalogEntry("flat_disc", "family", "flat disc family through a strictly pseudoconvex point", build_thm41_family),
    ]
}


def example_library() -> List[CatalogEntry]:
    """Catalog entries sorted by name"""
    return [CATALOG[name] for name in sorted(CATALOG)]


def get_example(name: str, **params):
    """
    Build a catalog object.

    Raises:
        UnknownExampleError: If the name is not in the catalog
    """
    entry = CATALOG.get(name)
    if entry is None:
        raise UnknownExampleError(f"unknown example '{name}'")
    return entry.builder(**params)


def example_kind(name: str) -> str:
    entry = CATALOG.get(name)
    if entry is None:
        raise UnknownExampleError(f"unknown example '{name}'")
    return entry.kind
