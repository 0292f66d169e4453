import numpy as np
import pytest

from levilab.exceptions import FamilyNotAdmissibleError, NotOnBoundaryError, NotTangentError
from levilab.services.domains import SublevelDomain
from levilab.services.expr import abs2, conj, evaluate, parse, var
from levilab.services.graphs import GraphComplement, graph_point
from levilab.services.hartogs import (
    AnalyticFamily,
    HartogsFigure,
    Membership,
    SweepVerdict,
    build_thm41_family,
    build_uk,
    check_coordinate_change,
    hartogs_figure_test,
    hartogs_membership,
    kontinuitaetssatz_sweep,
    level_cut_threshold,
    max_strictify_eps,
    merge_defining,
    strictify,
    touching_family,
    uk_study,
    verify_levi_identity,
)
from levilab.services.levi import holomorphic_tangent
from levilab.services.calculus import gradient
from levilab.services.library import get_example

R2_MAP = np.array([[1, 1j], [1, -1j]])


def test_hartogs_membership():
    F = HartogsFigure(2, 1, 0.3, 0.5)
    assert hartogs_membership(F, [0, 0]) is Membership.IN_H
    assert hartogs_membership(F, [0, 0.6]) is Membership.IN_P_ONLY
    assert hartogs_membership(F, [0.7, 0.9]) is Membership.IN_H
    assert hartogs_membership(F, [1.2, 0]) is Membership.OUTSIDE


def test_figure_parameters_are_checked():
    with pytest.raises(ValueError):
        HartogsFigure(2, 2, 0.3, 0.5)


def test_family_must_be_holomorphic():
    fam = AnalyticFamily(2, 1, (conj(var(1)), var(2)))
    with pytest.raises(FamilyNotAdmissibleError):
        fam.verify()


def test_parameter_grid_contains_centre():
    interior, boundary = touching_family().parameter_grid(6)
    assert interior[0, 0] == 0
    assert np.allclose(np.abs(boundary), 1.0)


def test_coordinate_change_must_be_invertible():
    samples = np.array([[0.1, 0.2], [0.3, -0.1j]])
    check_coordinate_change([parse("z1 + z2^2", 2), parse("z2", 2)], 2, samples)
    with pytest.raises(FamilyNotAdmissibleError):
        check_coordinate_change([parse("z1 + z2", 2), parse("2*z1 + 2*z2", 2)], 2, samples)


def test_touching_family_violates_real_plane_complement():
    domain = GraphComplement(get_example("real_plane"))
    fam = touching_family(0.2, linear_map=R2_MAP)
    report = kontinuitaetssatz_sweep(domain, fam, n_t=16, resolution=6, seed=0)
    assert report.verdict is SweepVerdict.VIOLATION
    assert np.max(np.abs(report.touching_point)) <= 1e-3
    assert report.stable


def test_touching_family_inside_ball_has_no_violation(ball):
    report = kontinuitaetssatz_sweep(ball, touching_family(0.4), n_t=16, resolution=6)
    assert report.verdict is SweepVerdict.NO_VIOLATION
    assert report.margin > 0


def test_flat_disc_family_fires_on_strictly_pseudoconvex_side():
    D = get_example("model_strict_qpcv", n=3, q=1).complement()
    fam = build_thm41_family(0.1, 0.2, 3, 1)
    assert fam.m == 1
    report = kontinuitaetssatz_sweep(D, fam, n_t=16, resolution=6)
    assert report.verdict is SweepVerdict.VIOLATION
    assert np.max(np.abs(report.touching_point)) <= 1e-12


def test_family_leaving_domain_is_not_admissible(ball):
    report = kontinuitaetssatz_sweep(ball, touching_family(2.0), n_t=8, resolution=4, refine=False)
    assert report.verdict is SweepVerdict.NOT_ADMISSIBLE


def test_sweep_is_thread_independent():
    domain = GraphComplement(get_example("real_plane"))
    fam = touching_family(0.2, linear_map=R2_MAP)
    one = kontinuitaetssatz_sweep(domain, fam, n_t=8, resolution=4, threads=1).as_dict()
    many = kontinuitaetssatz_sweep(domain, fam, n_t=8, resolution=4, threads=3).as_dict()
    assert one == many


def test_hartogs_figure_against_domain_with_hole():
    hole = SublevelDomain(parse("0.09 - abs2(z1) - abs2(z2 - 0.65)", 2), 2, 2.0, (0.9, 0))
    figure = HartogsFigure(2, 1, 0.3, 0.5)
    assert hartogs_figure_test(hole, figure, seed=0).verdict is SweepVerdict.VIOLATION
    big = get_example("ball", n=2)
    inside = SublevelDomain(parse("abs2(z1) + abs2(z2) - 9", 2), 2, 4.0)
    assert hartogs_figure_test(inside, figure).verdict is SweepVerdict.NO_VIOLATION
    assert hartogs_figure_test(big, figure).verdict is SweepVerdict.NOT_ADMISSIBLE


def test_uk_approximants():
    u2 = build_uk(2, 2)
    w = [0.5, 0.25]
    assert evaluate(u2, w).real == pytest.approx(-np.log(0.5 ** 4 + 0.25 ** 4) / 4 + (0.25 + 0.0625) / 2)


def test_uk_study_converges():
    result = uk_study(2, (2, 4, 8), n_samples=200, n_verdict_samples=20, seed=0)
    assert result["decreasing"]
    for row in result["rows"]:
        assert row["sup_distance"] <= 3.0 / row["k"]
        assert row["certified_yes"] == 20


def test_level_cut_threshold():
    points = np.array([[0.1], [0.5j], [-0.3]])
    value, where = level_cut_threshold(abs2(var(1)), points)
    assert value == pytest.approx(0.25)
    assert where[0] == 0.5j


def test_strictify_keeps_strict_index():
    psi0 = abs2(var(1))
    phi = strictify(psi0, [0, 0], 0.5)
    assert evaluate(phi, [1, 1]).real == pytest.approx(1 - 0.5 * 2)
    samples = np.array([[0.1, 0.2], [0.3j, -0.1]])
    assert max_strictify_eps(psi0, [0, 0], 1, samples, eps_max=2.0) == pytest.approx(1.0, abs=1e-4)
    with pytest.raises(ValueError):
        strictify(psi0, [0, 0], 0.0)


@pytest.mark.parametrize("name", ["leviflat_im_z2", "holo_graph", "antiholo"])
def test_merged_levi_identity(name, rng):
    f = get_example(name)
    phis = f.defining_functions
    for _ in range(100):
        zu = np.concatenate([0.6 * (rng.uniform(-1, 1, f.n) + 1j * rng.uniform(-1, 1, f.n)) / np.sqrt(2),
                             0.6 * rng.uniform(-1, 1, f.k)])
        p = graph_point(f, zu)
        X = rng.standard_normal(f.N) + 1j * rng.standard_normal(f.N)
        H = holomorphic_tangent([gradient(phi, p)[0] for phi in phis], dim=f.N)
        mu = rng.uniform(0.1, 5.0)
        if not H.dim:
            with pytest.raises(NotTangentError):
                verify_levi_identity(phis[0], phis, mu, p, X)
            continue
        X = H.project(X)
        result = verify_levi_identity(phis[0], phis, mu, p, X / np.linalg.norm(X))
        assert result.residual <= 1e-9


def test_identity_checks_its_inputs():
    f = get_example("leviflat_im_z2")
    phis = f.defining_functions
    p = graph_point(f, [0.2, 0.1])
    H = holomorphic_tangent([gradient(phi, p)[0] for phi in phis])
    with pytest.raises(NotOnBoundaryError):
        verify_levi_identity(phis[0], phis, 1.0, p + np.array([0, 0.1j]), [1, 0])
    with pytest.raises(NotTangentError):
        verify_levi_identity(phis[0], phis, 1.0, p, [0, 1], H)


def test_identity_derives_tangent_space_when_omitted():
    f = get_example("leviflat_im_z2")
    phis = f.defining_functions
    p = graph_point(f, [0.2, 0.1])
    with pytest.raises(NotTangentError):
        verify_levi_identity(phis[0], phis, 1.0, p, [0, 1])
    H = holomorphic_tangent([gradient(phi, p)[0] for phi in phis])
    X = H.basis[:, 0]
    assert verify_levi_identity(phis[0], phis, 1.0, p, X).residual <= 1e-9


def test_merge_defining_adds_weighted_squares():
    phi = merge_defining(var(1), [var(1), var(2)], 2.0)
    assert evaluate(phi, [1, 2]) == pytest.approx(1 + 2 * (1 + 4))


@pytest.mark.parametrize("k,q", [(1, 1), (2, 2), (4, 3)])
def test_uk_scaling_identity(k, q, rng):
    u = build_uk(k, q)
    for _ in range(50):
        w = rng.uniform(0.2, 0.9, q) * np.exp(2j * np.pi * rng.uniform(size=q))
        lam = rng.choice([-1, 1]) * rng.uniform(0.2, 3.0)
        lhs = evaluate(u, lam * w).real
        rhs = evaluate(u, w).real - np.log(abs(lam)) + (lam ** 2 - 1) * np.sum(np.abs(w) ** 2) / k
        assert lhs == pytest.approx(rhs, abs=1e-10)
