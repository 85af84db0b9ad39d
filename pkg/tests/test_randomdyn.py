import numpy as np
import pytest

from cpkern.channels import CPMap
from cpkern.errors import BadDistributionError, UnderflowError
from cpkern.kernels import PDKernel, kolmogorov
from cpkern.model import lift_all, model_norm
from cpkern.randomdyn import (
    IIDModel, growth_check, lyapunov_estimate, path_log_norm, sample_path, splitmix64, trial_seed,
    uniform_bound_check,
)

from instances import SCALAR_HALF, full_rank_instance, unit

K_ONE = PDKernel.single(np.array([[1.0]]))
K_I2 = PDKernel.single(np.eye(2))
U = CPMap("u", np.array([np.diag([1.0, 0.5])]))
V = CPMap("v", np.array([np.diag([0.5, 1.0])]))
PAIR = {"u": U, "v": V}


def _lifts(K, maps):
    return lift_all(kolmogorov(K), maps)


def test_splitmix_reference_values():
    # first outputs of the reference generator seeded with 0
    assert splitmix64(0) == 0xE220A8397B1DCDAF
    assert trial_seed(0, 0) == splitmix64(0x9E3779B97F4A7C15)


def test_sampling_deterministic():
    m = IIDModel(("u", "v"), (0.3, 0.7))
    assert sample_path(m, 50, 7) == sample_path(m, 50, 7)
    assert sample_path(m, 50, 7) != sample_path(m, 50, 8)
    assert sample_path(IIDModel(("u",), (1.0,)), 5, 0).labels_drawn == ("u",) * 5
    assert set(sample_path(IIDModel(("u", "v"), (1.0, 0.0)), 200, 3).labels_drawn) == {"u"}
    with pytest.raises(ValueError):
        sample_path(m, 0, 1)


@pytest.mark.parametrize("labels, probs", [
    (("u", "v"), (0.5, 0.6)),
    (("u", "v"), (-0.1, 1.1)),
    ((), ()),
    (("u", "u"), (0.5, 0.5)),
    (("u",), (float("nan"),)),
])
def test_bad_distribution(labels, probs):
    with pytest.raises(BadDistributionError):
        IIDModel(labels, probs)


def test_sampling_frequencies():
    m = IIDModel.from_mapping({"u": 0.25, "v": 0.75})
    drawn = sample_path(m, 20000, 11).labels_drawn
    assert drawn.count("u") / 20000 == pytest.approx(0.25, abs=0.01)


def test_scalar_log_norms():
    lifts = _lifts(K_ONE, {"s": SCALAR_HALF})
    X = path_log_norm(lifts, ("s",) * 6)
    np.testing.assert_allclose(X, -0.5 * np.log(2) * np.arange(1, 7), atol=1e-14)
    est = lyapunov_estimate(IIDModel(("s",), (1.0,)), lifts, 100, 3, 0)
    assert est.lambda_hat == pytest.approx(-0.5 * np.log(2), abs=1e-14)
    assert est.stderr == pytest.approx(0, abs=1e-14)
    assert est.lambda_upper == pytest.approx(-0.5 * np.log(2))


def test_commuting_pair_exact():
    lifts = _lifts(K_I2, PAIR)
    for seed in range(20):
        labels = sample_path(IIDModel(("u", "v"), (0.5, 0.5)), 30, seed).labels_drawn
        expected = [-np.log(2) * min(labels[:k].count("u"), labels[:k].count("v")) for k in range(1, 31)]
        for order in ("reversed", "exact"):
            np.testing.assert_allclose(path_log_norm(lifts, labels, order=order), expected, atol=1e-12)


def test_exact_matches_model_norm():
    K, maps, _ = full_rank_instance(4)
    lifts = _lifts(K, maps)
    labels = tuple(sorted(maps)) * 3
    X = path_log_norm(lifts, labels, order="exact")
    for k in range(1, len(labels) + 1):
        assert X[k - 1] == pytest.approx(np.log(model_norm(lifts, labels[:k])), abs=1e-9)


def test_subadditivity_exact():
    for seed in range(15):
        K, maps, rng = full_rank_instance(seed)
        lifts = _lifts(K, maps)
        m = IIDModel.from_mapping({s: 1 / len(maps) for s in maps})
        labels = sample_path(m, 24, seed).labels_drawn
        X = path_log_norm(lifts, labels, order="exact")
        for k in (1, 5, 11, 17):
            tail = path_log_norm(lifts, labels[k:], order="exact")
            for j in range(1, len(labels) - k + 1):
                assert X[k + j - 1] <= X[k - 1] + tail[j - 1] + 1e-9


def test_estimate_properties():
    K, maps, _ = full_rank_instance(2)
    lifts = _lifts(K, maps)
    m = IIDModel.from_mapping({s: 1 / len(maps) for s in maps})
    est = lyapunov_estimate(m, lifts, 200, 8, 5)
    assert est.series.shape == (8, 200)
    assert est.lambda_inf_hat <= est.lambda_hat + 1e-15
    assert est.inf_formula_track[-1] == pytest.approx(est.lambda_hat)
    assert est.lambda_hat <= est.lambda_upper + 1e-9
    par = lyapunov_estimate(m, lifts, 200, 8, 5, workers=4)
    assert np.array_equal(par.series, est.series)
    assert par.lambda_hat == est.lambda_hat
    assert est.summary()["trials"] == 8


def test_underflow_and_negative_infinity():
    tiny = CPMap("s", np.array([[[1e-10]]]))
    lifts = _lifts(K_ONE, {"s": tiny})
    with pytest.raises(UnderflowError):
        path_log_norm(lifts, ("s",) * 100, renorm=False)
    X = path_log_norm(lifts, ("s",) * 100)
    assert X[-1] == pytest.approx(100 * np.log(1e-10), rel=1e-12)
    zero = CPMap("z", np.array([[[0.0]]]))
    lifts = _lifts(K_ONE, {"s": SCALAR_HALF, "z": zero})
    X = path_log_norm(lifts, ("s", "z", "s"))
    assert np.isfinite(X[0]) and np.isneginf(X[1:]).all()
    est = lyapunov_estimate(IIDModel(("s", "z"), (0.5, 0.5)), lifts, 50, 4, 1)
    assert est.neg_inf and est.summary()["lambda_hat"] is None


def test_growth_and_uniform_examples():
    lifts = _lifts(K_ONE, {"s": SCALAR_HALF})
    rep = growth_check(kolmogorov(K_ONE), lifts, K_ONE, ("s",) * 4, "x", [1.0], "x", [1.0],
                       maps={"s": SCALAR_HALF})
    assert rep.passed
    assert [r.lhs for r in rep.rows] == pytest.approx([0.5 ** k for k in range(1, 5)])
    assert rep.rows[-1].rate == pytest.approx(np.log(0.5))
    u = uniform_bound_check(K_I2, PAIR, ("u", "v", "u"))
    assert u.passed and u.L == pytest.approx(1) and not u.decay_guaranteed


def test_growth_random():
    for seed in range(20):
        K, maps, rng = full_rank_instance(seed)
        kf = kolmogorov(K)
        lifts = lift_all(kf, maps)
        path = sample_path(IIDModel.from_mapping({s: 1 / len(maps) for s in maps}), 8, seed)
        d = K.fiber_dim
        x, y = K.points[0], K.points[-1]
        assert growth_check(kf, lifts, K, path, x, unit(rng, d), y, unit(rng, d), maps=maps).passed
        assert uniform_bound_check(K, maps, path).passed
