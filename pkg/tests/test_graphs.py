import numpy as np
import pandas as pd
import pytest

from levilab.exceptions import CertificateError, DimensionMismatchError, NotOnGraphError
from levilab.services.expr import evaluate
from levilab.services.graphs import (
    AffineSlice,
    GraphComplement,
    basener_residual,
    cr_dimension_scan,
    foliation_certificate,
    graph_point,
    homogeneity_defect,
    leaf_holomorphy_residual,
    sample_domain,
    slice_graph,
    totally_real_family,
    trace_leaf,
    witness_family,
)
from levilab.services.hartogs import SweepVerdict, kontinuitaetssatz_sweep, touching_family
from levilab.services.library import get_example


def _ex58_samples(rng, count):
    z1 = 0.5 * (rng.uniform(-1, 1, count) + 1j * rng.uniform(-1, 1, count))
    z2 = rng.uniform(0.3, 0.6, count) * np.exp(2j * np.pi * rng.uniform(size=count))
    return np.stack([z1, z2], axis=1)


def test_graph_point_lies_on_graph():
    f = get_example("ex58", k=2)
    x = graph_point(f, [0.2 + 0.1j, 0.4j])
    assert f.residual(x) <= 1e-14
    with pytest.raises(NotOnGraphError):
        graph_point(f, [1.5, 0.1])
    with pytest.raises(DimensionMismatchError):
        graph_point(f, [0.1])


def test_leviflat_point_needs_real_u():
    f = get_example("leviflat_im_z2")
    with pytest.raises(NotOnGraphError):
        graph_point(f, [0.1, 0.2j])


@pytest.mark.parametrize("name,dim_h", [("holo_graph", 1), ("antiholo", 0), ("leviflat_im_z2", 1), ("strict_v", 1)])
def test_cr_dimension_is_constant(name, dim_h):
    f = get_example(name)
    Z = sample_domain(f, 20, seed=1)
    Z = Z[np.abs(Z[:, 0]) > 0.05]
    report = cr_dimension_scan(f, Z)
    assert report.dims == [dim_h]
    assert report.constant


def test_ex58_has_one_dimensional_tangents(rng):
    f = get_example("ex58", k=2)
    report = cr_dimension_scan(f, _ex58_samples(rng, 20))
    assert report.dims == [1]
    assert report.flagged == 0


def test_scan_flags_guard_points():
    f = get_example("ex58", k=2)
    report = cr_dimension_scan(f, np.array([[0.3, 0.0], [0.3, 0.4]]))
    assert report.records[0].flags == ["singular_point"]
    assert report.records[1].dim_h == 1
    assert not report.constant


def test_leviflat_graph_is_certified():
    f = get_example("leviflat_im_z2")
    cert = foliation_certificate(f, 1, sample_domain(f, 10, seed=2))
    assert cert.certified
    assert cert.counts["certified"] == 10


def test_holomorphic_graph_is_certified():
    f = get_example("holo_graph", g="z1^3")
    assert foliation_certificate(f, 1, sample_domain(f, 10)).certified


def test_strictly_pseudoconvex_graph_is_refuted_with_witness():
    f = get_example("strict_v")
    cert = foliation_certificate(f, 1, sample_domain(f, 5, seed=3))
    assert cert.overall == "refuted"
    w = cert.witness
    assert w is not None
    assert w.j0 == 1
    assert w.sign == -1
    assert cert.records[0].dim_n == 0


def test_wrong_leaf_dimension_is_refuted():
    f = get_example("antiholo")
    cert = foliation_certificate(f, 1, np.array([[0.4 + 0.1j], [-0.3j]]))
    assert cert.overall == "refuted"
    assert cert.records[0].stage == "cr_dimension"


def test_witness_family_touches_from_outside():
    f = get_example("strict_v")
    cert = foliation_certificate(f, 1, np.array([[0.2 + 0.1j, 0.1]]))
    fam = witness_family(f, cert.witness, mu=1.0, radius=0.1, eps=0.05)
    report = kontinuitaetssatz_sweep(GraphComplement(f), fam, n_t=16, resolution=6)
    assert report.verdict is SweepVerdict.VIOLATION
    assert np.allclose(report.touching_point, cert.witness.point, atol=1e-12)


@pytest.mark.parametrize("name", ["holo_graph", "leviflat_im_z2"])
def test_foliated_graph_complements_show_no_violation(name):
    f = get_example(name)
    assert foliation_certificate(f, 1, sample_domain(f, 5)).certified
    report = kontinuitaetssatz_sweep(GraphComplement(f), touching_family(0.2), n_t=16, resolution=6)
    assert report.verdict is not SweepVerdict.VIOLATION


def test_totally_real_family_passes_through_point():
    f = get_example("antiholo")
    fam = totally_real_family(f, [0.3 + 0.2j], scale=0.1)
    p = graph_point(f, [0.3 + 0.2j])
    fam.verify()
    assert np.allclose(fam.points(1.0, np.zeros((1, 1)))[0], p)
    with pytest.raises(DimensionMismatchError):
        totally_real_family(get_example("ex58"), [0.1, 0.2])


def test_ex58_is_one_holomorphic_off_guard(rng):
    h = get_example("ex58", k=2).f_zeta[0]
    for p in _ex58_samples(rng, 20):
        assert basener_residual(h, p)["residual"] <= 1e-8


def test_ex58_is_homogeneous():
    result = homogeneity_defect(get_example("ex58", k=2), 4, count=500)
    assert result["passed"]
    assert result["defect"] <= 1e-10
    assert result["samples"] == 500
    assert not homogeneity_defect(get_example("ex58", k=2), 3, count=200)["passed"]


@pytest.mark.parametrize("k", [0, 1, 2])
def test_ex58_homogeneous_under_imaginary_scaling(k):
    result = homogeneity_defect(get_example("ex58", k=k), 2 + k, count=50, lambdas=[2j])
    assert result["passed"]


def test_conjugate_map_is_not_complex_homogeneous():
    f = get_example("antiholo")
    assert homogeneity_defect(f, 2, count=50, lambdas=[0.5, 1.5, 2.0])["passed"]
    result = homogeneity_defect(f, 2, count=50, lambdas=[np.exp(1j * np.pi / 4)])
    assert not result["passed"]
    assert result["defect"] > 0.1
    assert not homogeneity_defect(f, 2, count=200)["passed"]


def test_homogeneity_rejects_zero_scaling():
    with pytest.raises(ValueError):
        homogeneity_defect(get_example("antiholo"), 2, count=5, lambdas=[0])


def test_slice_through_diagonal():
    f = get_example("ex58", k=2)
    sliced = slice_graph(f, AffineSlice(np.array([[1], [1]]), [0, 0]))
    assert (sliced.n, sliced.p) == (1, 1)
    y = 0.3 + 0.1j
    assert evaluate(sliced.f_zeta[0], [y]) == pytest.approx(y ** 4)


def test_slice_rejects_bad_arguments():
    f = get_example("ex58", k=2)
    with pytest.raises(DimensionMismatchError):
        slice_graph(f, AffineSlice(np.array([[1]]), [0]))
    with pytest.raises(DimensionMismatchError):
        slice_graph(f, AffineSlice(np.array([[1], [1]]), [0, 0]), zeta_subset=[2])


def _leviflat_leaf(steps=200):
    f = get_example("leviflat_im_z2")
    cert = foliation_certificate(f, 1, sample_domain(f, 10))
    return f, trace_leaf(f, graph_point(f, [0, 0]), steps, 1e-2, cert)


def test_traced_leaf_follows_parabola():
    f, leaf = _leviflat_leaf()
    z, w = leaf.points[:, 0], leaf.points[:, 1]
    assert len(leaf.points) == 201
    assert np.max(np.abs(w - z ** 2)) <= 1e-6
    assert leaf.max_residual <= 1e-8
    assert leaf_holomorphy_residual(f, leaf) <= 1e-6


def test_leaf_exports_csv(tmp_path):
    _, leaf = _leviflat_leaf(steps=10)
    path = leaf.export_csv(tmp_path / "leaf.csv")
    frame = pd.read_csv(path)
    assert list(frame.columns) == ["t", "re_z1", "im_z1", "re_z2", "im_z2", "residual"]
    assert len(frame) == 11


def test_tracing_requires_certified_start():
    f = get_example("leviflat_im_z2")
    with pytest.raises(CertificateError):
        trace_leaf(f, [0, 0], 10, 1e-2)
    cert = foliation_certificate(f, 1, sample_domain(f, 5))
    with pytest.raises(NotOnGraphError):
        trace_leaf(f, [0, 0.1j], 10, 1e-2, cert)


def test_scans_take_run_seed():
    f = get_example("leviflat_im_z2")
    Z = sample_domain(f, 6, seed=4)
    assert cr_dimension_scan(f, Z, seed=3).as_dict() == cr_dimension_scan(f, Z, threads=2, seed=11).as_dict()
    a, b = foliation_certificate(f, 1, Z, seed=3), foliation_certificate(f, 1, Z, threads=2, seed=11)
    assert (a.overall, a.counts) == (b.overall, b.counts)
