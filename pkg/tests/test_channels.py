import numpy as np
import pytest

from cpkern.channels import (
    CPMap, apply, apply_blocks, cb_norm, is_subunital, is_unital, iterate_kernel, kraus_strings,
)
from cpkern.errors import TooManyStringsError, UnknownLabelError
from cpkern.kernels import PDKernel, gram
from cpkern.matrix_core import op_norm, psd_check

from instances import DEPHASING, DIAG_HALF, SCALAR_HALF, cnormal, random_kernel, random_map, rng_for, words


def test_apply_examples():
    np.testing.assert_allclose(apply(SCALAR_HALF, [[1.0]]), [[0.5]])
    np.testing.assert_allclose(apply(DEPHASING, np.ones((2, 2))), np.eye(2), atol=1e-15)
    np.testing.assert_array_equal(apply(DIAG_HALF, np.zeros((2, 2))), np.zeros((2, 2)))


def test_cb_norm_examples():
    assert cb_norm(SCALAR_HALF) == pytest.approx(0.5)
    assert cb_norm(DEPHASING) == pytest.approx(1)
    assert cb_norm(DIAG_HALF) == pytest.approx(1)


def test_unital_flags():
    assert is_unital(DEPHASING)
    assert not is_unital(DIAG_HALF) and is_subunital(DIAG_HALF)
    assert not is_subunital(CPMap("s", np.array([np.sqrt(2) * np.eye(2)])))


def test_iterate_examples():
    K = PDKernel.single(np.array([[1.0]]))
    maps = {"s": SCALAR_HALF}
    assert iterate_kernel(K, (), maps) is K
    np.testing.assert_allclose(iterate_kernel(K, ("s",) * 3, maps).blocks[0, 0], [[0.125]])
    K = PDKernel.single(np.ones((2, 2)))
    np.testing.assert_allclose(iterate_kernel(K, ["s"], {"s": DEPHASING}).blocks[0, 0], np.eye(2), atol=1e-15)
    with pytest.raises(UnknownLabelError):
        iterate_kernel(K, ["t"], {"s": DEPHASING})


def test_iterate_folds_from_the_right():
    u = CPMap("u", np.array([[[0.0, 1.0], [0.0, 0.0]]]))
    v = CPMap("v", np.array([np.diag([1.0, 0.0])]))
    K = PDKernel.single(np.eye(2))
    maps = {"u": u, "v": v}
    # K_{uv} = u(v(K))
    expected = apply(u, apply(v, np.eye(2)))
    np.testing.assert_allclose(iterate_kernel(K, ("u", "v"), maps).blocks[0, 0], expected)
    assert not np.allclose(expected, apply(v, apply(u, np.eye(2))))


def test_kraus_strings_examples():
    (tag, P), = kraus_strings((), {}, dim=2)
    assert tag == () and np.array_equal(P, np.eye(2))
    two = CPMap("s", np.array([np.eye(2), 2 * np.eye(2)]))
    out = kraus_strings(("s",), {"s": two})
    assert [t for t, _ in out] == [(("s", 0),), (("s", 1),)]
    out = kraus_strings(("s", "s"), {"s": DEPHASING})
    assert len(out) == 4
    Z = np.diag([1.0, -1.0])
    for _, P in out:
        assert min(np.abs(P - c * M).max() for c in (0.5, -0.5) for M in (np.eye(2), Z)) < 1e-15
    with pytest.raises(TooManyStringsError):
        kraus_strings(("s",) * 3, {"s": DEPHASING}, max_count=7)


def test_kraus_strings_product_order():
    A = CPMap("a", np.array([[[0.0, 1.0], [0.0, 0.0]]]))
    B = CPMap("b", np.array([np.diag([2.0, 3.0])]))
    (_, P), = kraus_strings(("a", "b"), {"a": A, "b": B})
    # product A_{s_2} A_{s_1}
    np.testing.assert_array_equal(P, B.kraus[0] @ A.kraus[0])


def test_psd_preservation_random():
    for seed in range(200):
        rng = rng_for(seed)
        d = int(rng.integers(1, 5))
        phi = random_map(rng, d, "s", cb=rng.uniform(0.1, 3))
        B = cnormal(rng, (d, d))
        out = apply(phi, B @ B.conj().T)
        assert psd_check(out, 0)[1] >= -1e-10


def test_composition_and_bounds_random():
    for seed in range(50):
        rng = rng_for(seed)
        n, d = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        K = random_kernel(rng, n, d)
        maps = {s: random_map(rng, d, s, cb=rng.uniform(0.2, 2)) for s in "ab"}
        w, v = ("a", "b"), ("b", "b", "a")
        lhs = iterate_kernel(K, w + v, maps).blocks
        rhs = iterate_kernel(iterate_kernel(K, v, maps), w, maps).blocks
        assert np.abs(lhs - rhs).max() <= 1e-10 * max(1, np.abs(lhs).max())
        for word in words("ab", 3):
            Kw = iterate_kernel(K, word, maps)
            factor = np.prod([cb_norm(maps[s]) for s in word])
            for i in range(n):
                for j in range(n):
                    assert op_norm(Kw.blocks[i, j]) <= factor * op_norm(K.blocks[i, j]) + 1e-9


def test_kraus_strings_partition_random():
    for seed in range(30):
        rng = rng_for(seed)
        d = int(rng.integers(1, 4))
        maps = {s: random_map(rng, d, s) for s in "ab"}
        T = cnormal(rng, (d, d))
        for word in words("ab", 3):
            total = sum(P.conj().T @ T @ P for _, P in kraus_strings(word, maps, dim=d))
            direct = T
            for s in reversed(word):
                direct = apply(maps[s], direct)
            assert np.abs(total - direct).max() <= 1e-10 * max(1, np.abs(direct).max())


def test_apply_blocks_matches_apply():
    rng = rng_for(9)
    K = random_kernel(rng, 3, 2)
    phi = random_map(rng, 2, "s")
    out = apply_blocks(phi, K.blocks)
    for i in range(3):
        for j in range(3):
            np.testing.assert_allclose(out[i, j], apply(phi, K.blocks[i, j]), atol=1e-15)
    assert psd_check(gram(K.with_blocks(out)), 1e-10)[0]


def test_cpmap_wire_roundtrip():
    phi = CPMap.from_wire("s", DEPHASING.to_wire())
    np.testing.assert_array_equal(phi.kraus, DEPHASING.kraus)
