"""Random i.i.d. compositions of CP maps and their Lyapunov exponent.

For a path ``z_1, z_2, ...`` the tracked quantity is
``X_k = log ||C_{xi_k}|| = 0.5 log ||a_{xi_k}||``. The incremental estimator
folds ``B_k = Psi_{z_k}(B_{k-1})``, which evaluates the reversed word
``z_k ... z_1``; for i.i.d. letters it has the same law as the forward word, so
the almost-sure exponent is unchanged. ``order="exact"`` refolds the forward
word for every ``k`` (quadratic cost) and is meant for validation.

Trials use sub-seeds ``splitmix64(seed + (t + 1) * 0x9E3779B97F4A7C15)`` and are
reduced in trial order, so results do not depend on the worker count.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .channels import cb_norm, iterate_kernel
from .errors import BadDistributionError, DimensionMismatchError, UnderflowError
from .asymptotics import BOUND_SLACK, _pair_bound_rows
from .matrix_core import op_norm
from .model import _require_admissible, compressed_gram, pack_lifts

MASK64 = (1 << 64) - 1
GOLDEN64 = 0x9E3779B97F4A7C15


def splitmix64(x):
    z = (x + GOLDEN64) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def trial_seed(seed, t):
    return splitmix64((int(seed) + (t + 1) * GOLDEN64) & MASK64)


@dataclass(frozen=True)
class IIDModel:
    labels: tuple
    probs: tuple

    def __post_init__(self):
        labels = tuple(self.labels)
        probs = tuple(float(p) for p in self.probs)
        if not labels or len(labels) != len(probs):
            raise BadDistributionError("labels and probabilities must be nonempty and aligned")
        if len(set(labels)) != len(labels):
            raise BadDistributionError("duplicate labels in distribution")
        if any(not np.isfinite(p) or p < 0 for p in probs):
            raise BadDistributionError("probabilities must be finite and nonnegative")
        if abs(sum(probs) - 1.0) > 1e-12:
            raise BadDistributionError(f"probabilities sum to {sum(probs)!r}, not 1")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "probs", probs)

    @classmethod
    def from_mapping(cls, probs):
        return cls(tuple(probs), tuple(probs.values()))

    def cumulative(self):
        c = np.cumsum(self.probs)
        c[-1] = 1.0
        return c


@dataclass(frozen=True)
class PathSample:
    seed: int
    labels_drawn: tuple


def _draw_indices(model, n, seed):
    rng = np.random.Generator(np.random.PCG64(int(seed) & MASK64))
    u = rng.random(n)
    # half-open intervals [c_{k-1}, c_k)
    return np.searchsorted(model.cumulative(), u, side="right").astype(np.int_)


def sample_path(model, n, seed):
    if n < 1:
        raise ValueError("path length must be at least 1")
    idx = _draw_indices(model, n, seed)
    return PathSample(int(seed), tuple(model.labels[i] for i in idx))


def _path_indices(lifts, labels_drawn):
    order = sorted(set(labels_drawn))
    pos = {s: i for i, s in enumerate(order)}
    return order, np.array([pos[s] for s in labels_drawn], dtype=np.int_)


def path_log_norm(lifts, path, renorm=True, order="reversed"):
    """``X_1 .. X_n`` for a sampled path.

    Returns
    -------
    X : ndarray
        Entries are ``-inf`` from the first step whose product is exactly zero.

    Raises
    ------
    UnderflowError
        Only with ``renorm=False``, when the unscaled norm leaves the double range.
    """
    labels = path.labels_drawn if isinstance(path, PathSample) else tuple(path)
    _require_admissible(lifts, labels)
    order_labels, idx = _path_indices(lifts, labels)
    stack, counts = pack_lifts(lifts, order_labels)
    if stack.shape[2] == 0:
        return np.full(len(idx), -np.inf)
    kern = _backend.kernels
    if order == "reversed":
        X, status = kern.reversed_log_norms(stack, counts, idx, bool(renorm))
        if status == 2:
            raise UnderflowError("operator norm left the double range; enable renormalization")
        return X
    if order != "exact":
        raise ValueError(f"unknown order {order!r}")
    m = stack.shape[2]
    eye = np.eye(m, dtype=np.complex128)
    X = np.empty(len(idx))
    for k in range(1, len(idx) + 1):
        if renorm:
            B, log_scale = kern.fold_word(stack, counts, idx[:k], eye)
            top = np.abs(kern.eigvalsh(np.ascontiguousarray(B))).max()
            X[k - 1] = 0.5 * (np.log(top) + log_scale) if np.isfinite(log_scale) else -np.inf
        else:
            B = eye
            for lab in idx[:k][::-1]:
                B = kern.psi_apply(stack[lab, :counts[lab]], B)
            top = np.abs(kern.eigvalsh(np.ascontiguousarray(B))).max()
            if not (np.finfo(float).tiny < top < np.finfo(float).max):
                raise UnderflowError("operator norm left the double range; enable renormalization")
            X[k - 1] = 0.5 * np.log(top)
    return X


@dataclass(frozen=True, eq=False)
class LyapunovEstimate:
    n: int
    trials: int
    seed: int
    per_trial_Xn: np.ndarray
    lambda_hat: float
    stderr: float
    inf_formula_track: np.ndarray = field(repr=False)
    lambda_inf_hat: float
    neg_inf: bool
    series: np.ndarray = field(repr=False)
    lambda_upper: float
    lambda_upper_cb: float

    def summary(self):
        def fin(v):
            return float(v) if np.isfinite(v) else None

        return {
            "lambda_hat": fin(self.lambda_hat),
            "lambda_inf_hat": fin(self.lambda_inf_hat),
            "stderr": fin(self.stderr),
            "n": self.n,
            "trials": self.trials,
            "seed": self.seed,
            "neg_inf": self.neg_inf,
            "lambda_upper": fin(self.lambda_upper),
            "lambda_upper_cb": fin(self.lambda_upper_cb),
        }


def lyapunov_estimate(model, lifts, n, trials, seed, renorm=True, order="reversed", workers=1):
    """Monte-Carlo estimate of the exponent of ``(1/n) log ||C_{xi_n}||``.

    ``lambda_hat`` averages ``X_n / n`` over trials; ``inf_formula_track[k-1]``
    is ``(1/k)`` times the trial mean of ``X_k`` and ``lambda_inf_hat`` its
    minimum. ``lambda_upper`` is ``0.5 log max_s ||D_s||`` from the computed
    lifts and ``lambda_upper_cb`` the same with cb norms.
    """
    for s in model.labels:
        if s not in lifts:
            raise DimensionMismatchError(f"no lift for label {s!r}")

    def run(t):
        path = sample_path(model, n, trial_seed(seed, t))
        return path_log_norm(lifts, path, renorm, order)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(run, range(trials)))
    else:
        rows = [run(t) for t in range(trials)]
    series = np.vstack(rows)
    ks = np.arange(1, n + 1)
    with np.errstate(invalid="ignore"):
        rates = series[:, -1] / n
        track = series.mean(axis=0) / ks
    neg_inf = bool(np.isneginf(series[:, -1]).any())
    lam = float(rates.mean())
    stderr = float(rates.std(ddof=1) / np.sqrt(trials)) if trials > 1 and not neg_inf else 0.0
    live = [s for s, p in zip(model.labels, model.probs) if p > 0]
    d_max = max(lifts[s].d_norm for s in live)
    with np.errstate(divide="ignore"):
        upper = 0.5 * np.log(d_max)
        upper_cb = 0.5 * np.log(max(_kraus_cb(lifts[s].kraus) for s in live))
    return LyapunovEstimate(
        n=n, trials=trials, seed=int(seed),
        per_trial_Xn=series[:, -1].copy(),
        lambda_hat=lam, stderr=stderr,
        inf_formula_track=track,
        lambda_inf_hat=float(track.min()),
        neg_inf=neg_inf,
        series=series,
        lambda_upper=float(upper),
        lambda_upper_cb=float(upper_cb),
    )


def _kraus_cb(kraus):
    return op_norm(np.einsum("rji,rjk->ik", kraus.conj(), kraus))


@dataclass(frozen=True)
class GrowthRow:
    k: int
    lhs: float
    rhs: float
    ok: bool
    rate: float
    model_rate: float


@dataclass(frozen=True, eq=False)
class GrowthReport:
    rows: list
    passed: bool


def growth_check(kf, lifts, K, path, x, a, y, b, maps=None):
    """Per-step Cauchy-Schwarz form of the scalar growth bound.

    ``|<a, K_{xi_k}(x,y) b>| <= ||C_{xi_k}||^2 ||J_x a|| ||J_y b||``; the left
    side comes from the direct iteration when ``maps`` is given, otherwise
    from the compressed realization.
    """
    labels = path.labels_drawn if isinstance(path, PathSample) else tuple(path)
    _require_admissible(lifts, labels)
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    i, j = K.index(x), K.index(y)
    Jx = np.sqrt(max(np.vdot(a, K.blocks[i, i] @ a).real, 0.0))
    Jy = np.sqrt(max(np.vdot(b, K.blocks[j, j] @ b).real, 0.0))
    Vx, Vy = kf.V(x) @ a, kf.V(y) @ b
    rows = []
    for k in range(1, len(labels) + 1):
        word = labels[:k]
        a_w = compressed_gram(lifts, word).a_w
        if maps is not None:
            lhs = abs(np.vdot(a, iterate_kernel(K, word, maps).blocks[i, j] @ b))
        else:
            lhs = abs(np.vdot(Vx, a_w @ Vy))
        norm_sq = float(np.abs(np.linalg.eigvalsh(a_w)).max())
        rhs = norm_sq * Jx * Jy
        with np.errstate(divide="ignore"):
            rate = float(np.log(lhs) / k) if lhs > 0 else -np.inf
            model_rate = float(np.log(norm_sq) / k) if norm_sq > 0 else -np.inf
        rows.append(GrowthRow(k, float(lhs), float(rhs), bool(lhs <= rhs + BOUND_SLACK), rate, model_rate))
    return GrowthReport(rows, all(r.ok for r in rows))


@dataclass(frozen=True, eq=False)
class UniformBoundReport:
    rows: list
    passed: bool
    L: float
    decay_guaranteed: bool


def uniform_bound_check(K, maps, path):
    """``||K_{xi_k}(x,y)|| <= L^k sqrt(||K(x,x)|| ||K(y,y)||)`` with ``L = max_s ||Phi_s||_cb``."""
    labels = path.labels_drawn if isinstance(path, PathSample) else tuple(path)
    L = max(cb_norm(maps[s]) for s in set(labels)) if labels else max(cb_norm(p) for p in maps.values())
    rows = _pair_bound_rows(K, K, 1.0, 0)
    for k in range(1, len(labels) + 1):
        rows.extend(_pair_bound_rows(K, iterate_kernel(K, labels[:k], maps), L ** k, k))
    return UniformBoundReport(rows, all(r.ok for r in rows), float(L), bool(L < 1))

