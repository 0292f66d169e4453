"""
Shared fixtures for the test suite
"""
from fractions import Fraction

import numpy as np
import pytest

from levilab.services.expr import (
    FUNCTIONS,
    Binary,
    Const,
    Guard,
    Max,
    Ref,
    Unary,
    Var,
    evaluate_many,
    parse,
)
from levilab.services.library import get_example

REF_NAME = "r"
REF_SOURCE = "abs2(z1) + 1"
SUBTREE_BOUND = 2.0


def _subtrees(e):
    yield e
    for c in e.operands:
        yield from _subtrees(c)


def _random_const(rng):
    kind = rng.integers(4)
    if kind == 0:
        return Const(Fraction(int(rng.integers(-5, 10))))
    if kind == 1:
        return Const(Fraction(int(rng.integers(-9, 10)), int(rng.integers(2, 8))))
    if kind == 2:
        return Const(float(rng.uniform(-10, 10)))
    return Const(complex(float(rng.uniform(-3, 3)), float(rng.uniform(-3, 3))))


def random_tree(rng, depth: int, dim: int):
    """Random raw tree over every node kind, at most `depth` levels deep"""
    if depth <= 1 or rng.uniform() < 0.2:
        return Var(int(rng.integers(1, dim + 1))) if rng.uniform() < 0.6 else _random_const(rng)
    pick = rng.uniform()
    if pick < 0.35:
        op = ("add", "sub", "mul", "div", "pow")[rng.integers(5)]
        return Binary(op, random_tree(rng, depth - 1, dim), random_tree(rng, depth - 1, dim))
    if pick < 0.7:
        op = (("neg",) + FUNCTIONS)[rng.integers(len(FUNCTIONS) + 1)]
        return Unary(op, random_tree(rng, depth - 1, dim))
    if pick < 0.8:
        return Max(tuple(random_tree(rng, depth - 1, dim) for _ in range(rng.integers(1, 4))))
    if pick < 0.9:
        return Guard(*(random_tree(rng, depth - 1, dim) for _ in range(3)))
    if depth >= 4:
        return Ref(REF_NAME, parse(REF_SOURCE, dim))
    return Var(1)


def _smooth_tree(rng, depth: int, dim: int):
    if depth <= 1 or rng.uniform() < 0.25:
        if rng.uniform() < 0.7:
            return Var(int(rng.integers(1, dim + 1)))
        return Const(complex(float(rng.uniform(-1, 1)), float(rng.uniform(-1, 1))))
    pick = rng.integers(9)

    def sub(d=depth - 1):
        return _smooth_tree(rng, d, dim)

    if pick < 3:
        return Binary(("add", "sub", "mul")[pick], sub(), sub())
    if pick < 6:
        return Unary(("neg", "conj", "abs2", "re", "im", "exp")[rng.integers(6)], sub())
    if pick == 6:
        return Binary("pow", sub(), Const(int(rng.integers(2, 4))))
    if depth < 4:
        return Unary("re", sub())
    shifted = Binary("add", Const(1), Unary("abs2", sub(depth - 3)))
    if pick == 7:
        return Unary(("log", "sqrt")[rng.integers(2)], shifted)
    return Binary("div", sub(), shifted)


def random_smooth_tree(rng, depth: int, dim: int, points: np.ndarray):
    """
    Random smooth tree without branch cuts near the given points.

    Trees whose subtrees exceed SUBTREE_BOUND in modulus at a point are redrawn.
    """
    while True:
        e = _smooth_tree(rng, depth, dim)
        values = [evaluate_many(s, points) for s in _subtrees(e)]
        if all(np.all(np.isfinite(v)) and np.max(np.abs(v)) <= SUBTREE_BOUND for v in values):
            return e


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def ball():
    return get_example("ball", n=2)


@pytest.fixture
def quadric_domain():
    return get_example("quadric", n=2)


@pytest.fixture
def strictly_psh():
    """|z1|^2 + |z2|^2"""
    return parse("abs2(z1) + abs2(z2)", 2)


@pytest.fixture
def quadric_expr():
    return parse("-abs2(z1) + abs2(z2)", 2)


@pytest.fixture
def random_points(rng):
    """Factory for seeded points in the polydisc of the given radius"""

    def make(count, dim, radius=0.8):
        return radius * (rng.uniform(-1, 1, (count, dim)) + 1j * rng.uniform(-1, 1, (count, dim))) / np.sqrt(2)

    return make


@pytest.fixture
def tree_definitions():
    """Definitions needed to reparse trees from random_trees"""
    return {REF_NAME: REF_SOURCE}


@pytest.fixture
def random_trees(rng):
    """Factory for seeded raw trees over every node kind"""

    def make(count, depth, dim):
        return [random_tree(rng, depth, dim) for _ in range(count)]

    return make


@pytest.fixture
def random_smooth_trees(rng):
    """Factory for seeded smooth trees bounded at the given points"""

    def make(count, depth, dim, points):
        return [random_smooth_tree(rng, depth, dim, points) for _ in range(count)]

    return make
