import numpy as np
import pytest

from levilab.exceptions import NonSmoothError, SingularPointError
from levilab.services.calculus import (
    gradient,
    holomorphic_hessian,
    jet2,
    validate_jet_fd,
    wirtinger_derive,
)
from levilab.services.expr import evaluate, parse, to_text
from levilab.services.library import get_example

CORPUS = [
    "abs2(z1) * abs2(z2) + re(z1^2 * conj(z2))",
    "log(1 + abs2(z1) + 2 * abs2(z2))",
    "exp(re(z1)) * im(z2) + abs2(z1 - z2)^2",
    "sqrt(2 + abs2(z1)) - abs(z2 + 3)",
    "re(z1^3) - im(conj(z1) * z2) + 1/3",
]


def test_derivatives_of_conjugate_product():
    e = parse("z1 * conj(z1)", 1)
    assert evaluate(wirtinger_derive(e, "z", 1), [2 + 1j]) == pytest.approx(2 - 1j)
    assert evaluate(wirtinger_derive(e, "zbar", 1), [2 + 1j]) == pytest.approx(2 + 1j)


def test_levi_matrix_of_quadric(quadric_expr):
    jet = jet2(quadric_expr, [0.3 + 0.1j, -0.2j])
    assert jet.real_valued
    assert np.allclose(jet.levi, np.diag([-1.0, 1.0]))


def test_levi_of_log_norm_is_projection():
    e = parse("log(abs2(z1) + abs2(z2))", 2)
    z = np.array([1.0, 1j])
    L = jet2(e, z).levi
    r2 = 2.0
    expected = (np.eye(2) * r2 - np.outer(z.conj(), z)) / r2 ** 2
    assert np.allclose(L, expected)


@pytest.mark.parametrize("source", CORPUS)
def test_symbolic_jet_matches_finite_differences(source, random_points):
    e = parse(source, 2)
    for p in random_points(5, 2, radius=0.5):
        report = validate_jet_fd(e, p, 1e-5)
        assert not report.failed
        assert report.max_error <= 1e-5


def test_random_jets_match_finite_differences(random_points, random_smooth_trees):
    points = random_points(5, 2, radius=0.5)
    for e in random_smooth_trees(200, 6, 2, points):
        for p in points:
            report = validate_jet_fd(e, p, 1e-5)
            assert not report.failed
            assert report.max_error <= 1e-5, to_text(e)


def test_gradient_of_real_function_is_conjugate_symmetric(random_points):
    e = parse(CORPUS[0], 2)
    for p in random_points(5, 2):
        gz, gzb = gradient(e, p)
        assert np.allclose(gzb, gz.conj())


def test_holomorphic_hessian():
    H = holomorphic_hessian(parse("z1^2 * z2", 2), [1, 2])
    assert np.allclose(H, [[4, 2], [2, 0]])


def test_max_is_not_differentiable():
    with pytest.raises(NonSmoothError):
        wirtinger_derive(parse("max(re(z1), 0)", 1), "z", 1)


def test_jet_refused_on_guard_set():
    f = get_example("ex58", k=2)
    h = f.f_zeta[0]
    with pytest.raises(SingularPointError):
        jet2(h, [0.5, 0])
    jet2(h, [0.5, 0.3])


def test_step_outside_range_is_rejected():
    with pytest.raises(ValueError):
        validate_jet_fd(parse("abs2(z1)", 1), [0.1], 1e-2)
