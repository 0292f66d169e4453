import numpy as np
import pytest

from levilab.exceptions import DomainInclusionError, NotOnBoundaryError, SamplingError
from levilab.services.domains import (
    BallSlice,
    NormSpec,
    SublevelDomain,
    boundary_distance,
    boundary_samples,
    exhaustion_probe,
    find_exponent,
    hartogs_pcv_via_distance,
    index_cross_check,
    interior_grid,
    levi_boundary_report,
    levi_pcv_at_boundary,
    local_max_test,
    relative_pcv_probe,
)
from levilab.services.expr import parse
from levilab.services.graphs import graph_complement_potential
from levilab.services.levi import Verdict
from levilab.services.library import get_example


def test_membership_and_complement(ball):
    assert ball.contains([0.5, 0.5j])
    assert not ball.contains([1, 1])
    assert ball.complement().contains([1, 1])
    assert ball.depth(np.array([[0, 0]]))[0] == pytest.approx(1.0)


def test_boundary_samples_lie_on_sphere(ball):
    P = boundary_samples(ball, 20, seed=1)
    assert P.shape == (20, 2)
    assert np.allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-12)


def test_interior_grid_respects_band(ball):
    Z = interior_grid(ball, 50, seed=2, min_norm=0.1, max_norm=0.9)
    r = np.linalg.norm(Z, axis=1)
    assert np.all((r >= 0.1) & (r <= 0.9))


def test_empty_domain_cannot_be_sampled():
    empty = SublevelDomain(parse("1 + abs2(z1)", 1), 1, 1.0)
    with pytest.raises(SamplingError):
        interior_grid(empty, 10)


def test_euclidean_distance_in_ball(ball):
    est = boundary_distance(ball, [0.3, 0.4j])
    assert est.polished
    assert est.distance == pytest.approx(0.5, abs=1e-9)
    assert np.linalg.norm(est.boundary_point) == pytest.approx(1.0, abs=1e-9)


def test_sup_distance_is_between_norm_bounds(ball):
    est = boundary_distance(ball, [0.3, 0], NormSpec("sup"))
    assert 0.7 / np.sqrt(2) - 1e-9 <= est.distance <= 0.7 + 1e-9


def test_distance_needs_interior_point(ball):
    with pytest.raises(NotOnBoundaryError):
        boundary_distance(ball, [1.0, 0])


def test_ball_is_levi_strictly_pseudoconvex(ball):
    report = levi_boundary_report(ball, 0, boundary_samples(ball, 50), strict=True)
    assert report.counts[Verdict.CERTIFIED_YES.value] == 50


def test_quadric_is_levi_one_pseudoconvex_only(quadric_domain):
    points = boundary_samples(quadric_domain, 20, seed=3)
    assert levi_boundary_report(quadric_domain, 1, points).counts[Verdict.CERTIFIED_YES.value] == 20
    assert levi_boundary_report(quadric_domain, 0, points).counts[Verdict.CERTIFIED_NO.value] == 20


def test_model_domain_is_strictly_one_pseudoconvex_at_origin():
    D = get_example("model_strict_qpcv", n=3, q=1)
    assert levi_pcv_at_boundary(D, [0, 0, 0], 1, strict=True).verdict is Verdict.CERTIFIED_YES
    assert levi_pcv_at_boundary(D, [0, 0, 0], 0, strict=True).verdict is Verdict.CERTIFIED_NO
    with pytest.raises(NotOnBoundaryError):
        levi_pcv_at_boundary(D, [-0.5, 0, 0], 1)


def test_neg_log_distance_of_ball_is_psh(ball):
    grid = interior_grid(ball, 30, seed=4, min_norm=0.1, max_norm=0.9)
    report = hartogs_pcv_via_distance(ball, 1, grid, seed=0, threads=2)
    assert report.summary["index"] == 0
    assert report.counts[Verdict.CERTIFIED_NO.value] == 0
    assert report.counts[Verdict.CERTIFIED_YES.value] > 0


def _shell_points(rng, count):
    U = rng.standard_normal((count, 2)) + 1j * rng.standard_normal((count, 2))
    U /= np.linalg.norm(U, axis=1)[:, None]
    return rng.uniform(0.35, 0.55, count)[:, None] * U


def test_shell_fails_probe_near_inner_sphere(rng):
    shell = get_example("shell", n=2, inner=0.3)
    points = _shell_points(rng, 10)
    weak = hartogs_pcv_via_distance(shell, 0, points, seed=0)
    strong = hartogs_pcv_via_distance(shell, 1, points, seed=0)
    assert weak.counts[Verdict.CERTIFIED_NO.value] == 0
    assert strong.counts[Verdict.CERTIFIED_NO.value] > 0


def test_probe_results_do_not_depend_on_threads(ball):
    grid = interior_grid(ball, 8, seed=5, min_norm=0.2, max_norm=0.8)
    one = hartogs_pcv_via_distance(ball, 1, grid, seed=3, threads=1).as_dict()
    four = hartogs_pcv_via_distance(ball, 1, grid, seed=3, threads=4).as_dict()
    assert one == four


def test_index_cross_check_on_ball(ball):
    result = index_cross_check(ball, 0, boundary_samples(ball, 10), interior_grid(ball, 10, 6, 0.1, 0.9))
    assert result["levi_all_yes"]
    assert result["consistent"]


def test_local_max_violation():
    centre, frame = np.zeros(2), np.array([[1], [0]])
    bad = local_max_test(parse("-abs2(z1)", 2), BallSlice(centre, frame, 0.5), 200)
    good = local_max_test(parse("abs2(z1)", 2), BallSlice(centre, frame, 0.5), 200)
    assert bad.violation
    assert not good.violation


def test_relative_probe_needs_proper_subdomain(ball):
    with pytest.raises(DomainInclusionError):
        relative_pcv_probe(ball, ball, 1)


def test_relative_probe_of_small_ball(ball):
    small = SublevelDomain(parse("abs2(z1) + abs2(z2) - 1/4", 2), 2, 1.0)
    report = relative_pcv_probe(small, ball, 1, n_boundary=3, n_interior=2)
    assert len(report.records) == 3
    assert report.summary["index"] == 0


def test_exhaustion_of_holomorphic_graph_complement():
    psi = graph_complement_potential(get_example("holo_graph", g="z1^2"))
    points = np.array([[0.1, 0.5], [0.3j, -0.2], [0.5, 0.5j]])
    approach = [np.array([[0, 10.0 ** -k] for k in range(1, 6)])]
    report = exhaustion_probe(psi, 1, points, approach)
    assert report.counts[Verdict.CERTIFIED_NO.value] == 0
    assert report.summary["consistent"]
    seeded = exhaustion_probe(psi, 1, points, approach, threads=2, seed=9)
    assert seeded.counts == report.counts


def test_exponent_search(ball):
    found = find_exponent(ball, 0, boundary_samples(ball, 5))
    assert found is not None
    assert found[0] == 1.0


@pytest.mark.parametrize("norm", [NormSpec(), NormSpec("sup"), NormSpec("weighted", (1.0, 4.0, 0.25))])
def test_norm_axioms(norm, rng):
    u = rng.standard_normal((200, 3)) + 1j * rng.standard_normal((200, 3))
    v = rng.standard_normal((200, 3)) + 1j * rng.standard_normal((200, 3))
    c = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    assert np.all(norm.norm(u + v) <= norm.norm(u) + norm.norm(v) + 1e-12)
    assert np.allclose(norm.norm(c[:, None] * u), np.abs(c) * norm.norm(u), rtol=1e-12, atol=0)
    assert np.all(norm.norm(u) > 0)
    assert norm.norm(np.zeros(3)) == 0
