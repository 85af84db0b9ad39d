"""Long-run behaviour of a single iterated CP map.

The compressed iteration ``D_{n+1} = Psi(D_n)``, ``D_0 = I`` is the base-layer
image of ``C^{*n} C^n``. When the lifted map is certified contractive the
sequence decreases in the PSD order and its limit ``d_inf`` realizes the
limit kernel ``V_x^* d_inf V_y``. Without the certificate no limit is
claimed; the direct kernel orbit is still examined so that genuine
non-convergence (e.g. a unitary swap) is reported as such.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .channels import CPMap, apply_blocks, cb_norm, iterate_kernel
from .errors import (
    CertificateFailedError,
    CheckFailedError,
    LiftInadmissibleError,
    NotConvergedError,
    PreconditionFailedError,
)
from .kernels import PDKernel, dominates, gram, kolmogorov
from .matrix_core import hermitian_eigen, op_norm, psd_check
from .model import CERT_TOL, certify, lift, lifted_apply, realize_blocks

DEFAULT_CONV_TOL = 1e-12
DEFAULT_MAX_ITER = 10_000
MONOTONE_SLACK = 1e-10
MAX_PERIOD = 8


@dataclass(frozen=True, eq=False)
class LimitResult:
    d_inf: np.ndarray
    iterations: int
    step_residual: float
    projection_defect: float
    kbar: PDKernel
    monotone_min_eig: float
    series: np.ndarray = field(repr=False)

    def series_rows(self):
        """Rows ``(n, step_residual, ||D_n||, projection_defect)``."""
        return [(int(r[0]), float(r[1]), float(r[2]), float(r[3])) for r in self.series]


def _single_certificate(lf, tol):
    return certify({lf.label: lf}, {lf.label: CPMap(lf.label, lf.kraus)}, tol)


def _orbit_diagnostic(K, phi, conv_tol, max_iter):
    """Iterate ``Phi^n(K)`` directly; return ``None`` if it settles, else a report."""
    history = [K.blocks]
    blocks = K.blocks
    scale = max(1.0, op_norm(gram(K)))
    step = np.inf
    for n in range(1, max_iter + 1):
        blocks = apply_blocks(phi, blocks)
        step = float(np.abs(blocks - history[-1]).max())
        history.append(blocks)
        if len(history) > 2 * MAX_PERIOD + 2:
            history.pop(0)
        if step <= conv_tol * scale:
            return None
        for p in range(2, MAX_PERIOD + 1):
            if len(history) < 2 * p + 1:
                break
            cycle = max(float(np.abs(history[-1 - i] - history[-1 - i - p]).max()) for i in range(p + 1))
            if cycle <= conv_tol * scale:
                return {
                    "period": p,
                    "iterations": n,
                    "step_residual": step,
                    "cycle_residual": cycle,
                    "orbit_norms": [op_norm(gram(K.with_blocks(h))) for h in history[-p:]],
                }
    return {"period": None, "iterations": max_iter, "step_residual": step}


def limit_kernel(lf, kf, conv_tol=DEFAULT_CONV_TOL, max_iter=DEFAULT_MAX_ITER, tol=CERT_TOL):
    """Limit of ``Phi^n(K)`` through the compressed iteration.

    Raises
    ------
    NotConvergedError
        The kernel orbit does not settle (the diagnostic carries the detected
        period), or the compressed iteration ran out of iterations.
    CertificateFailedError
        The lift is inadmissible or not contractive, while the orbit itself
        shows no oscillation.
    """
    cert = _single_certificate(lf, tol)
    if not cert.model_contractive:
        phi = CPMap(lf.label, lf.kraus)
        diag = _orbit_diagnostic(kf.source, phi, conv_tol, max_iter)
        if diag is not None:
            raise NotConvergedError(
                f"kernel orbit of {lf.label!r} does not converge"
                + (f" (period-{diag['period']} oscillation)" if diag["period"] else ""),
                **diag,
            )
        c = cert.labels[lf.label]
        raise CertificateFailedError(
            f"lift of {lf.label!r} not certified contractive "
            f"(admissible={c.admissible}, d_norm={c.d_norm:.6g})",
            admissible=c.admissible, d_norm=c.d_norm,
        )
    m = lf.m
    if m == 0:
        D = np.zeros((0, 0), dtype=np.complex128)
        series = np.zeros((1, 4))
        series[0, 0] = 1
        it, steps, mono = 1, np.zeros(1), np.zeros(1)
        defects = np.zeros(1)
    else:
        D, it, steps, norms, defects, mono = _backend.kernels.fixed_point_iteration(
            np.ascontiguousarray(lf.gammas), int(max_iter), float(conv_tol)
        )
        series = np.column_stack([np.arange(1, it + 1), steps, norms, defects])
    if steps[-1] > conv_tol:
        raise NotConvergedError(
            f"compressed iteration did not reach {conv_tol:g} in {max_iter} steps",
            period=None, iterations=it, step_residual=float(steps[-1]),
        )
    D = 0.5 * (D + D.conj().T)
    kbar = kf.source.with_blocks(realize_blocks(kf, D))
    return LimitResult(
        d_inf=D,
        iterations=it,
        step_residual=float(steps[-1]),
        projection_defect=float(defects[-1]),
        kbar=kbar,
        monotone_min_eig=float(mono.min()),
        series=series,
    )


@dataclass(frozen=True, eq=False)
class SteinResult:
    q_kernel: np.ndarray
    q_valid: bool
    increments: list = field(repr=False)
    partial_sums: list = field(repr=False)
    telescoping_residuals: np.ndarray
    increments_psd: np.ndarray
    certified: bool
    limit_gaps: np.ndarray | None = None
    kbar: PDKernel | None = None

    def assert_certified(self, slack=1e-9):
        """Raise unless the instance is certified and every increment is PSD."""
        if not self.certified:
            raise CertificateFailedError("Stein assertions need a contractive certificate")
        if not self.increments_psd.all():
            raise CheckFailedError("an increment Phi^j(Q) failed the PSD check")
        if self.limit_gaps is not None and np.any(np.diff(self.limit_gaps) > slack):
            raise CheckFailedError("partial sums do not approach K - Kbar monotonically")


def stein(K, phi, n_max=30, psd_slack=1e-9, tol=CERT_TOL, conv_tol=DEFAULT_CONV_TOL,
          max_iter=DEFAULT_MAX_ITER):
    """Defect ``Q = K - Phi(K)`` and partial sums ``S_N = sum_{j<N} Phi^j(Q)``.

    The series and the telescoping identity ``S_N = K - Phi^N(K)`` are always
    computed. Positivity of the increments and the gap to ``K - Kbar`` are
    only meaningful on certified instances; ``certified`` says which case
    applies.
    """
    G = gram(K)
    scale = max(1.0, op_norm(G))
    Q = K.blocks - apply_blocks(phi, K.blocks)
    q_valid = psd_check(gram(K.with_blocks(Q)), psd_slack)[0]
    increments, partial, tele, inc_psd = [], [], [], []
    inc = Q
    S = np.zeros_like(Q)
    orbit = K.blocks
    for _ in range(n_max):
        increments.append(inc)
        inc_psd.append(psd_check(gram(K.with_blocks(inc)), psd_slack)[0])
        S = S + inc
        orbit = apply_blocks(phi, orbit)
        partial.append(S)
        diff = gram(K.with_blocks(S)) - (G - gram(K.with_blocks(orbit)))
        tele.append(op_norm(diff) / scale)
        inc = apply_blocks(phi, inc)

    gaps = None
    kbar = None
    kf = kolmogorov(K)
    lf = lift(kf, phi)
    certified = _single_certificate(lf, tol).model_contractive
    if certified:
        try:
            kbar = limit_kernel(lf, kf, conv_tol, max_iter, tol).kbar
        except NotConvergedError:
            kbar = None
    if kbar is not None:
        target = G - gram(kbar)
        gaps = np.array([op_norm(gram(K.with_blocks(S_N)) - target) for S_N in partial])
    return SteinResult(
        q_kernel=Q,
        q_valid=bool(q_valid),
        increments=increments,
        partial_sums=partial,
        telescoping_residuals=np.array(tele),
        increments_psd=np.array(inc_psd, dtype=bool),
        certified=bool(certified),
        limit_gaps=gaps,
        kbar=kbar,
    )


def harmonic_check(kbar, phi):
    """``max_{x,y} ||Phi(Kbar)(x,y) - Kbar(x,y)||``."""
    diff = apply_blocks(phi, kbar.blocks) - kbar.blocks
    return max(op_norm(B) for B in diff.reshape(-1, *diff.shape[2:]))


def maximality_check(L, K, kbar, phi, tol=1e-8):
    """Check that a harmonic kernel ``L <= K`` also satisfies ``L <= Kbar``."""
    if harmonic_check(L, phi) > tol:
        raise PreconditionFailedError("L is not Phi-harmonic")
    if not dominates(K, L, tol)[0]:
        raise PreconditionFailedError("L is not dominated by K")
    kf = kolmogorov(K)
    if not _single_certificate(lift(kf, phi), CERT_TOL).model_contractive:
        raise CertificateFailedError("maximality is only asserted on certified instances")
    return bool(dominates(kbar, L, tol)[0])


@dataclass(frozen=True)
class BoundRow:
    x: object
    y: object
    k: int
    lhs: float
    rhs: float
    ok: bool


@dataclass(frozen=True, eq=False)
class BoundReport:
    rows: list
    passed: bool
    bound_constant: float

    @property
    def max_excess(self):
        return max(r.lhs - r.rhs for r in self.rows)


BOUND_SLACK = 1e-9


def _pair_bound_rows(K, Kw, factor, k):
    diag = [op_norm(K.blocks[i, i]) for i in range(K.n)]
    rows = []
    for i, x in enumerate(K.points):
        for j, y in enumerate(K.points):
            lhs = op_norm(Kw.blocks[i, j])
            rhs = factor * np.sqrt(diag[i] * diag[j])
            rows.append(BoundRow(x, y, k, lhs, float(rhs), bool(lhs <= rhs + BOUND_SLACK)))
    return rows


def decay_bound_check(K, maps, w):
    """``||K_w(x,y)|| <= prod_j ||Phi_{s_j}||_cb sqrt(||K(x,x)|| ||K(y,y)||)`` for all pairs."""
    w = tuple(w)
    factor = float(np.prod([cb_norm(maps[s]) for s in w])) if w else 1.0
    rows = _pair_bound_rows(K, iterate_kernel(K, w, maps), factor, len(w))
    return BoundReport(rows, all(r.ok for r in rows), factor)


@dataclass(frozen=True, eq=False)
class SpectralRadiusEstimate:
    r_n: np.ndarray
    estimate: float
    running_inf: np.ndarray
    monotone_tail: bool


def spectral_radius_estimate(lf, n_max=50):
    """Gelfand sequence ``r_n = ||Psi^n(I)||^{1/(2n)}`` for ``n = 1..n_max``.

    ``running_inf`` is the running minimum, which bounds the spectral radius
    from above because ``||C^n||`` is submultiplicative.
    """
    if not lf.admissible:
        raise LiftInadmissibleError(f"lift of {lf.label!r} is inadmissible")
    D = np.eye(lf.m, dtype=np.complex128)
    log_scale = 0.0
    r = np.empty(n_max)
    for n in range(1, n_max + 1):
        D = lifted_apply(lf, D)
        c = op_norm(D)
        if c == 0.0:
            r[n - 1:] = 0.0
            break
        log_scale += np.log(c)
        D = D / c
        r[n - 1] = np.exp(log_scale / (2 * n))
    running = np.minimum.accumulate(r)
    tail = r[n_max // 2:]
    return SpectralRadiusEstimate(r, float(r[-1]), running, bool(np.all(np.diff(tail) <= 1e-12)))


def limit_consistency(result, K, phi, depth=None):
    """``||gram(Kbar) - gram(Phi^N(K))||`` with the direct orbit run to the same depth."""
    depth = result.iterations if depth is None else depth
    blocks = K.blocks
    for _ in range(depth):
        blocks = apply_blocks(phi, blocks)
    return op_norm(gram(result.kbar) - gram(K.with_blocks(blocks)))


def d_inf_bounds(result):
    """``(min, max)`` eigenvalues of ``d_inf``."""
    vals = hermitian_eigen(result.d_inf).values
    if vals.size == 0:
        return 0.0, 0.0
    return float(vals[0]), float(vals[-1])
