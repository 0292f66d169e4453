import numpy as np
import pytest

from levilab.exceptions import NonHermitianError, VanishingGradientError
from levilab.services.expr import evaluate, parse
from levilab.services.levi import (
    Subspace,
    Verdict,
    affine_pullback,
    classify_qpsh,
    holomorphic_tangent,
    inertia,
    levi_null_space,
    restrict_form,
    verdict_from_matrix,
)


def test_inertia_counts():
    result = inertia(np.diag([-2.0, 0.0, 3.0]))
    assert (result.n_neg, result.n_zero, result.n_pos) == (1, 1, 1)


def test_inertia_treats_tiny_eigenvalues_as_zero():
    result = inertia(np.diag([1e-12, 1.0]), tol=1e-8)
    assert result.n_zero == 1


def test_inertia_rejects_non_hermitian():
    with pytest.raises(NonHermitianError):
        inertia(np.array([[0, 1], [0, 0]]))


def test_strictly_psh_norm(strictly_psh):
    v = classify_qpsh(strictly_psh, [0.1, 0.2j], 0, strict=True)
    assert v.verdict is Verdict.CERTIFIED_YES


def test_quadric_is_one_psh_but_not_psh(quadric_expr):
    p = [0.3, 0.4]
    assert classify_qpsh(quadric_expr, p, 1).verdict is Verdict.CERTIFIED_YES
    assert classify_qpsh(quadric_expr, p, 0).verdict is Verdict.CERTIFIED_NO


def test_index_at_least_dimension_is_always_yes():
    e = parse("-abs2(z1) - abs2(z2)", 2)
    assert classify_qpsh(e, [0, 0], 2).verdict is Verdict.CERTIFIED_YES


def test_max_is_inconclusive():
    e = parse("max(abs2(z1), abs2(z2))", 2)
    assert classify_qpsh(e, [0.5, 0.1], 0).verdict is Verdict.INCONCLUSIVE


def test_non_real_expression_is_rejected():
    with pytest.raises(NonHermitianError):
        classify_qpsh(parse("z1^2", 1), [0.5], 0)


def test_guard_band_is_inconclusive():
    H = np.diag([-1e-6, 1.0])
    assert verdict_from_matrix(H, 0, tol=1e-9).verdict is Verdict.CERTIFIED_NO
    assert verdict_from_matrix(H, 0, tol=1e-7).verdict is Verdict.INCONCLUSIVE
    assert verdict_from_matrix(H, 0, tol=1e-5).verdict is Verdict.CERTIFIED_YES


def test_verdicts_are_monotone_in_q(rng):
    for _ in range(100):
        A = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
        H = A + A.conj().T
        for strict in (False, True):
            yes = [verdict_from_matrix(H, q, strict).verdict is Verdict.CERTIFIED_YES for q in range(4)]
            first = yes.index(True)
            assert all(yes[first:])


def test_margins_agree_with_eigenvalues(rng):
    for _ in range(100):
        eigs = rng.uniform(-1, 1, 3)
        eigs[np.abs(eigs) < 1e-6] = 0.5
        Q, _ = np.linalg.qr(rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3)))
        H = Q @ np.diag(eigs) @ Q.conj().T
        for q in range(3):
            expected = np.sort(eigs)[q] >= 0
            got = verdict_from_matrix(H, q).verdict
            assert got is (Verdict.CERTIFIED_YES if expected else Verdict.CERTIFIED_NO)


def test_holomorphic_tangent_of_sphere():
    p = np.array([1.0, 0.0])
    H = holomorphic_tangent([p.conj()])
    assert H.dim == 1
    assert abs(H.basis[0, 0]) < 1e-12


def test_vanishing_gradient():
    with pytest.raises(VanishingGradientError):
        holomorphic_tangent([[0, 0]])


def test_restrict_form_convention():
    H = np.array([[1, 2j], [-2j, 3]])
    S = Subspace.full(2)
    assert np.allclose(restrict_form(H, S), H)
    line = Subspace(2, np.array([[0], [1j]]))
    assert np.allclose(restrict_form(H, line), [[3]])


def test_levi_null_space_of_flat_hypersurface():
    grads = [np.array([0, -0.5j])]
    H = holomorphic_tangent(grads)
    N = levi_null_space(grads, [np.zeros((2, 2))], H)
    assert N.dim == 1


def test_affine_pullback():
    e = parse("abs2(z1) - abs2(z2)", 2)
    pulled = affine_pullback(e, np.array([[1], [1j]]), [0.5, 0])
    assert evaluate(pulled, [0.5]).real == pytest.approx(1.0 - 0.25)


def _hermitian_with_spectrum(rng, eigs):
    Q, _ = np.linalg.qr(rng.standard_normal((len(eigs), len(eigs))) + 1j * rng.standard_normal((len(eigs), len(eigs))))
    return Q @ np.diag(eigs) @ Q.conj().T


def _spectrum(rng, n):
    eigs = rng.uniform(-1, 1, n)
    return np.where(np.abs(eigs) < 0.1, 0.5, eigs)


def test_inertia_is_unitarily_invariant(rng):
    for _ in range(100):
        eigs = _spectrum(rng, 4)
        eigs[rng.integers(4)] = 0.0
        H = _hermitian_with_spectrum(rng, eigs)
        U, _ = np.linalg.qr(rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4)))
        a, b = inertia(H), inertia(U.conj().T @ H @ U)
        assert (a.n_neg, a.n_zero, a.n_pos) == (b.n_neg, b.n_zero, b.n_pos)


def test_negative_counts_are_subadditive(rng):
    for _ in range(200):
        A = _hermitian_with_spectrum(rng, _spectrum(rng, 4))
        B = _hermitian_with_spectrum(rng, _spectrum(rng, 4))
        assert inertia(A + B).n_neg <= inertia(A).n_neg + inertia(B).n_neg


def test_restricted_eigenvalues_interlace(rng):
    n = 5
    for _ in range(50):
        A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        H = A + A.conj().T
        k = int(rng.integers(1, n))
        basis, _ = np.linalg.qr(rng.standard_normal((n, k)) + 1j * rng.standard_normal((n, k)))
        lam = np.linalg.eigvalsh(H)
        mu = np.linalg.eigvalsh(restrict_form(H, Subspace(n, basis)))
        for i in range(k):
            assert lam[i] - 1e-10 <= mu[i] <= lam[i + n - k] + 1e-10


def test_holomorphic_slices_keep_strict_index(rng):
    psi = parse("-abs2(z1) + abs2(z2) + abs2(z3) + abs2(z1)*abs2(z3)", 3)
    for _ in range(30):
        p = 0.6 * (rng.uniform(-1, 1, 3) + 1j * rng.uniform(-1, 1, 3)) / np.sqrt(2)
        assert classify_qpsh(psi, p, 1, strict=True).verdict is Verdict.CERTIFIED_YES
        frame, _ = np.linalg.qr(rng.standard_normal((3, 2)) + 1j * rng.standard_normal((3, 2)))
        sliced = affine_pullback(psi, frame, p)
        assert classify_qpsh(sliced, [0, 0], 1, strict=True).verdict is Verdict.CERTIFIED_YES
        line = affine_pullback(psi, frame[:, :1], p)
        assert classify_qpsh(line, [0], 1, strict=True).verdict is Verdict.CERTIFIED_YES
