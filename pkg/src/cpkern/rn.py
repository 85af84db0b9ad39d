"""Radon-Nikodym derivatives of dominated kernels on the Kolmogorov space."""

from dataclasses import dataclass

import numpy as np

from .channels import is_subunital, iterate_kernel, resolve
from .errors import CertificateFailedError, CheckFailedError, NotDominatedError, NotSubunitalError
from .kernels import PDKernel, dominates, gram, range_residual
from .matrix_core import DEFAULT_PSD_TOL, RESIDUAL_TOL, hermitian_eigen, matrix_to_wire, op_norm
from .model import CERT_TOL, certify, compressed_gram, realize_blocks, seeded_fold

RANGE_TOL = 1e-7
EIG_SLACK = 1e-9


@dataclass(frozen=True, eq=False)
class RNDerivative:
    a: np.ndarray
    reconstruction_residual: float
    max_eig: float
    min_eig: float

    def to_dict(self, word=None, dominated=None):
        out = {
            "rn": matrix_to_wire(self.a),
            "min_eig": self.min_eig,
            "max_eig": self.max_eig,
            "reconstruction_residual": self.reconstruction_residual,
        }
        if word is not None:
            out = {"word": list(word), **out}
        if dominated is not None:
            out["dominated"] = bool(dominated)
        return out


def _eig_range(a):
    vals = hermitian_eigen(a).values
    if vals.size == 0:
        return 0.0, 0.0
    return float(vals[0]), float(vals[-1])


def rn_derivative(kf, L, tol=DEFAULT_PSD_TOL):
    """``dL/dK`` as the ``m x m`` matrix ``a`` with ``L(x,y) = V_x^* a V_y``.

    Computed as ``(W^+)^* gram(L) W^+`` and then verified; the verification,
    not the domination pre-check alone, decides the outcome.

    Raises
    ------
    NotDominatedError
        If ``L`` is not dominated by ``K``, ``gram(L)`` leaves the range of
        ``gram(K)``, or the reconstruction/eigenvalue checks fail.
    """
    K = kf.source
    ok, min_gap = dominates(K, L, tol)
    if not ok:
        raise NotDominatedError(f"L is not dominated by K (min eig {min_gap:.3e})", min_eig=min_gap)
    rr = range_residual(K, L, kf.rank_tol_used)
    if rr > RANGE_TOL:
        raise NotDominatedError(f"range(gram L) not inside range(gram K): residual {rr:.3e}")
    Wp = kf.W_pinv()
    GL = gram(L)
    a = Wp.conj().T @ GL @ Wp
    a = 0.5 * (a + a.conj().T)
    scale = max(1.0, op_norm(gram(K)))
    resid = op_norm(kf.W.conj().T @ a @ kf.W - GL)
    lo, hi = _eig_range(a)
    if resid > RESIDUAL_TOL * scale or lo < -EIG_SLACK or hi > 1 + EIG_SLACK:
        raise NotDominatedError(
            f"RN verification failed (residual {resid:.3e}, eigenvalues [{lo:.3e}, {hi:.3e}])",
            residual=resid, min_eig=lo, max_eig=hi,
        )
    return RNDerivative(a, float(resid), hi, lo)


def rn_iterated(lifts, kf, w, maps, tol=CERT_TOL):
    """``A_w`` realizing ``K_w = V_x^* A_w V_y`` under subunitality and a contractive certificate."""
    w = tuple(w)
    for phi in resolve(w, maps):
        if not is_subunital(phi, tol):
            raise NotSubunitalError(f"map {phi.label!r} is not subunital")
    cert = certify({s: lifts[s] for s in set(w)}, maps, tol)
    if not cert.model_contractive:
        raise CertificateFailedError("model contractivity certificate failed for this word")
    K = kf.source
    a = compressed_gram(lifts, w).a_w
    direct = iterate_kernel(K, w, maps)
    scale = max(1.0, op_norm(gram(K)))
    resid = op_norm(gram(direct) - kf.W.conj().T @ a @ kf.W)
    lo, hi = _eig_range(a)
    if lo < -EIG_SLACK or hi > 1 + tol + EIG_SLACK:
        raise CheckFailedError(f"A_w eigenvalues [{lo:.3e}, {hi:.3e}] leave [0, 1]")
    if resid > RESIDUAL_TOL * scale:
        raise CheckFailedError(f"A_w does not reproduce K_w (residual {resid:.3e})")
    if not dominates(K, direct, tol)[0]:
        raise CheckFailedError("K_w is not dominated by K")
    return RNDerivative(a, float(resid), hi, lo)


def cross_model(K1, K2, kf2, lifts2, w, maps, tol=DEFAULT_PSD_TOL):
    """``K1_w`` computed inside the model of the dominating kernel ``K2``.

    The RN derivative ``A = dK1/dK2`` seeds the right fold of the lifted maps
    of ``K2`` in place of the identity; the result is checked against the
    direct iteration of ``K1``.
    """
    w = tuple(w)
    if kf2.source is not K2 and not np.array_equal(kf2.source.blocks, K2.blocks):
        raise NotDominatedError("kf2 is not the Kolmogorov factor of K2")
    A = rn_derivative(kf2, K1, tol).a
    B = seeded_fold(lifts2, w, A)
    out = PDKernel(K1.points, K1.fiber_dim, realize_blocks(kf2, B))
    direct = iterate_kernel(K1, w, maps)
    resid = op_norm(gram(out) - gram(direct))
    if resid > RESIDUAL_TOL * max(1.0, op_norm(gram(K2))):
        raise CheckFailedError(f"cross-model kernel differs from direct iteration by {resid:.3e}")
    return out
