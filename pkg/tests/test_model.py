import numpy as np
import pytest

from cpkern.channels import CPMap, iterate_kernel
from cpkern.errors import DimensionMismatchError, LiftInadmissibleError
from cpkern.kernels import PDKernel, dominates, gram, kolmogorov
from cpkern.matrix_core import hermitian_eigen, op_norm, psd_check
from cpkern.model import (
    certify, compressed_gram, feature_gram, feature_norm_sq, feature_vector, lift, lift_all,
    lifted_apply, model_inner, model_norm, premise_probe, realize_kernel, word_residual,
)

from instances import (
    DEPHASING, DIAG_HALF, SCALAR_HALF, full_rank_instance, random_map, rank_deficient_instance, unit, words,
)

K_ONE = PDKernel.single(np.array([[1.0]]))
K_I2 = PDKernel.single(np.eye(2))
K_RANK1 = PDKernel.single(np.ones((2, 2)))
K_HALF = PDKernel.single(np.array([[1.0, 0.5], [0.5, 1.0]]))


def test_lift_scalar():
    lf = lift(kolmogorov(K_ONE), SCALAR_HALF)
    assert lf.m == 1 and lf.admissible
    np.testing.assert_allclose(np.abs(lf.gammas[0]), [[np.sqrt(0.5)]])
    assert lf.d_norm == pytest.approx(0.5)


def test_lift_identity_gram_is_literal():
    kf = kolmogorov(K_I2)
    np.testing.assert_allclose(kf.W, np.eye(2), atol=1e-15)
    lf = lift(kf, DEPHASING)
    np.testing.assert_allclose(lf.gammas, DEPHASING.kraus, atol=1e-15)
    assert lf.d_norm == pytest.approx(1)


def test_lift_dephasing_full_rank():
    kf = kolmogorov(K_HALF)
    lf = lift(kf, DEPHASING)
    assert lf.admissible
    # W is only fixed up to a unitary, so compare the spectrum and W^* D W
    np.testing.assert_allclose(hermitian_eigen(lf.d_op).values, [2 / 3, 2], atol=1e-12)
    # W^* D W = Phi(gram K) = I
    np.testing.assert_allclose(kf.W.conj().T @ lf.d_op @ kf.W, np.eye(2), atol=1e-12)
    assert lf.d_norm == pytest.approx(2)


def test_lift_rank_deficient_is_inadmissible():
    lf = lift(kolmogorov(K_RANK1), DEPHASING)
    assert not lf.admissible
    assert lf.residuals.max() > 0.1
    with pytest.raises(LiftInadmissibleError):
        compressed_gram({"s": lf}, ["s"])


def test_lift_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        lift(kolmogorov(K_ONE), DEPHASING)


def test_lifted_apply_examples():
    lf = lift(kolmogorov(K_ONE), SCALAR_HALF)
    np.testing.assert_allclose(lifted_apply(lf, [[0.0]]), [[0.0]])
    np.testing.assert_allclose(lifted_apply(lf, [[1.0]]), [[0.5]])
    lf = lift(kolmogorov(K_I2), DIAG_HALF)
    np.testing.assert_allclose(lifted_apply(lf, np.eye(2)), np.diag([1, 0.25]), atol=1e-15)
    np.testing.assert_allclose(lifted_apply(lf, np.eye(2)), lf.d_op, atol=1e-15)


def test_compressed_gram_examples():
    lifts = {"s": lift(kolmogorov(K_ONE), SCALAR_HALF)}
    np.testing.assert_array_equal(compressed_gram(lifts, ()).a_w, [[1]])
    np.testing.assert_allclose(compressed_gram(lifts, ["s", "s"]).a_w, [[0.25]])
    lifts = {"s": lift(kolmogorov(K_I2), DIAG_HALF)}
    np.testing.assert_allclose(compressed_gram(lifts, ["s", "s"]).a_w, np.diag([1, 1 / 16]), atol=1e-15)


def test_realize_kernel_examples():
    kf = kolmogorov(K_ONE)
    lifts = {"s": lift(kf, SCALAR_HALF)}
    np.testing.assert_allclose(realize_kernel(kf, compressed_gram(lifts, ()), "x", "x"), [[1]])
    np.testing.assert_allclose(realize_kernel(kf, compressed_gram(lifts, ["s"]), "x", "x"), [[0.5]])
    kf = kolmogorov(K_I2)
    lifts = {"s": lift(kf, DIAG_HALF)}
    np.testing.assert_allclose(realize_kernel(kf, compressed_gram(lifts, ["s"]), "x", "x"),
                               np.diag([1, 0.25]), atol=1e-15)


def test_model_norm_examples():
    lifts = {"s": lift(kolmogorov(K_ONE), SCALAR_HALF)}
    for n in range(5):
        assert model_norm(lifts, ["s"] * n) == pytest.approx(2 ** (-n / 2))
    lifts = {"s": lift(kolmogorov(K_I2), DEPHASING)}
    assert model_norm(lifts, ["s"]) == pytest.approx(1)
    assert model_norm(lifts, ()) == 1


def test_feature_vector_examples():
    kf = kolmogorov(K_I2)
    a, b = np.array([1.0, 2.0]), np.array([0.5, -1.0])
    F = feature_vector(kf, {}, (), "x", a)
    assert len(F.components) == 1
    assert feature_gram(F, feature_vector(kf, {}, (), "x", b)) == pytest.approx(np.vdot(a, b))
    # rank-deficient Gram: the lift is inadmissible yet the realization is exact
    kf = kolmogorov(K_RANK1)
    v = np.array([1.0, -1.0]) / np.sqrt(2)
    F = feature_vector(kf, {"s": DEPHASING}, ["s"], "x", v)
    assert feature_gram(F, F) == pytest.approx(1)
    assert feature_norm_sq(F) == pytest.approx(1)
    kf = kolmogorov(K_ONE)
    F = feature_vector(kf, {"s": SCALAR_HALF}, ["s", "s"], "x", [1.0])
    assert feature_gram(F, F) == pytest.approx(0.25)


def test_model_inner_examples():
    kf = kolmogorov(K_ONE)
    t = CPMap("t", np.array([[[0.3]]]))
    maps = {"s": SCALAR_HALF, "t": t}
    assert model_inner(kf, maps, ["s"], "x", [1.0], ["t"], "x", [1.0]) == 0
    assert model_inner(kf, maps, (), "x", [2.0], (), "x", [3.0]) == pytest.approx(6)
    assert model_inner(kf, maps, ["s", "s"], "x", [1.0], ["s", "s"], "x", [1.0]) == pytest.approx(0.25)


def test_certify_examples():
    c = certify({"s": lift(kolmogorov(K_ONE), SCALAR_HALF)}, {"s": SCALAR_HALF})
    assert c.model_contractive and c.labels["s"].paper_premise_holds
    assert c.labels["s"].d_norm == pytest.approx(0.5) and c.labels["s"].cb_value == pytest.approx(0.5)
    c = certify({"s": lift(kolmogorov(K_I2), DEPHASING)}, {"s": DEPHASING})
    assert c.model_contractive and c.labels["s"].d_norm == pytest.approx(1)
    c = certify({"s": lift(kolmogorov(K_HALF), DEPHASING)}, {"s": DEPHASING})
    assert not c.model_contractive and not c.labels["s"].paper_premise_holds
    assert c.labels["s"].d_norm == pytest.approx(2, abs=1e-9)


def test_premise_probe_regression():
    alpha = np.array([1.0, -1.0]) / np.sqrt(2)
    lhs, rhs, _ = premise_probe(K_RANK1, DEPHASING, alpha)
    assert lhs == pytest.approx(1) and rhs == pytest.approx(0, abs=1e-15)
    lhs, rhs, _ = premise_probe(K_RANK1, DEPHASING)
    assert lhs - rhs >= 1 - 1e-12


def test_full_rank_properties():
    for seed in range(40):
        K, maps, rng = full_rank_instance(seed)
        kf = kolmogorov(K)
        lifts = lift_all(kf, maps)
        scale = max(1.0, op_norm(gram(K)))
        for lf in lifts.values():
            assert lf.admissible
        labels = sorted(maps)
        for w in words(labels, 3):
            assert word_residual(kf, lifts, maps, w) <= 1e-8 * scale
            a = compressed_gram(lifts, w).a_w
            assert np.abs(a - a.conj().T).max() <= 1e-10
            assert psd_check(a, 1e-10)[0]
        # multiplicativity Gamma(A) Gamma(B) = Gamma(AB)
        phi = maps[labels[0]]
        A, B = phi.kraus[0], random_map(rng, K.fiber_dim, "t").kraus[0]
        gA = lift(kf, CPMap("a", A[None])).gammas[0]
        gB = lift(kf, CPMap("b", B[None])).gammas[0]
        gAB = lift(kf, CPMap("ab", (A @ B)[None])).gammas[0]
        assert np.abs(gA @ gB - gAB).max() <= 1e-9 * max(1, np.abs(gAB).max())
        # model norms are submultiplicative
        for w in words(labels, 2):
            for v in words(labels, 2):
                assert model_norm(lifts, w + v) <= model_norm(lifts, w) * model_norm(lifts, v) + 1e-9


def test_feature_realization_rank_deficient():
    for seed in range(40):
        K, maps, rng = rank_deficient_instance(1000 + seed)
        kf = kolmogorov(K)
        d = K.fiber_dim
        for w in words(sorted(maps), 2):
            x, y = K.points[0], K.points[-1]
            a, b = unit(rng, d), unit(rng, d)
            F = feature_vector(kf, maps, w, x, a)
            G = feature_vector(kf, maps, w, y, b)
            direct = np.vdot(a, iterate_kernel(K, w, maps).block(x, y) @ b)
            assert abs(feature_gram(F, G) - direct) <= 1e-8
            Fx = feature_vector(kf, maps, w, x, a)
            assert feature_norm_sq(Fx) == pytest.approx(np.vdot(a, iterate_kernel(K, w, maps).block(x, x) @ a).real,
                                                         abs=1e-8)


def test_certificate_soundness():
    hits = 0
    for seed in range(60):
        K, maps, rng = full_rank_instance(seed)
        kf = kolmogorov(K)
        lifts = lift_all(kf, maps)
        # shrink the maps until the certificate holds
        if not certify(lifts, maps).model_contractive:
            worst = max(lf.d_norm for lf in lifts.values())
            maps = {s: CPMap(s, phi.kraus / np.sqrt(worst)) for s, phi in maps.items()}
            lifts = lift_all(kf, maps)
        cert = certify(lifts, maps)
        assert cert.model_contractive
        hits += 1
        for w in words(sorted(maps), 3):
            a = compressed_gram(lifts, w).a_w
            assert op_norm(a) <= 1 + 1e-8
            Kw = iterate_kernel(K, w, maps)
            assert dominates(K, Kw, 1e-8)[0]
    assert hits == 60
