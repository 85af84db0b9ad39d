"""Compressed realization of the model space.

The model space is a graded direct sum of copies of the Kolmogorov feature
space ``C^m``, one per tagged Kraus string. It is never materialized: the
creation operator of a map acts on the base layer through the lifted Kraus
operators ``Gamma(A) = W (I_n (x) A) W^+``, and ``C_w^* C_w`` compresses to
the ``m x m`` matrix ``a_w``. The explicit graded vectors are still available
through :func:`feature_vector` for the unconditional realization check.

A lift is only well defined when ``W (I_n (x) A)`` vanishes on the kernel of
``W``; the residual of that condition is recorded per Kraus operator and the
compressed path refuses to run on inadmissible lifts.
"""

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .channels import DEFAULT_MAX_STRINGS, apply_blocks, cb_norm, iterate_kernel, kraus_strings
from .errors import DimensionMismatchError, LiftInadmissibleError, UnknownLabelError
from .kernels import gram
from .matrix_core import RESIDUAL_TOL, as_matrix, hermitian_part, op_norm

CERT_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class LiftedFamily:
    label: str
    kraus: np.ndarray = field(repr=False)
    gammas: np.ndarray = field(repr=False)
    residuals: np.ndarray
    d_op: np.ndarray = field(repr=False)
    d_norm: float
    adm_tol: float
    admissible: bool

    @property
    def m(self):
        return self.gammas.shape[1]


def default_adm_tol(kf, phi):
    return RESIDUAL_TOL * max(op_norm(kf.W), 1.0) * max(op_norm(A) for A in phi.kraus)


def lift(kf, phi, adm_tol=None):
    """Lift the Kraus family of ``phi`` to the feature space of ``kf``."""
    n, d = kf.source_dims
    if phi.dim != d:
        raise DimensionMismatchError(f"map acts on C^{phi.dim}, kernel fiber is C^{d}")
    if adm_tol is None:
        adm_tol = default_adm_tol(kf, phi)
    W = kf.W
    m = W.shape[0]
    Wp = kf.W_pinv()
    null_proj = np.eye(n * d) - Wp @ W
    eye_n = np.eye(n)
    gammas = np.empty((phi.kraus.shape[0], m, m), dtype=np.complex128)
    residuals = np.empty(phi.kraus.shape[0])
    for r, A in enumerate(phi.kraus):
        WA = W @ np.kron(eye_n, A)
        gammas[r] = WA @ Wp
        residuals[r] = op_norm(WA @ null_proj) if m else 0.0
    D = hermitian_part(np.einsum("rki,rkj->ij", gammas.conj(), gammas)) if m else np.zeros((0, 0))
    gammas.setflags(write=False)
    return LiftedFamily(
        label=phi.label,
        kraus=phi.kraus,
        gammas=gammas,
        residuals=residuals,
        d_op=D,
        d_norm=op_norm(D),
        adm_tol=float(adm_tol),
        admissible=bool(residuals.max() <= adm_tol),
    )


def lift_all(kf, maps, adm_tol=None):
    return {label: lift(kf, phi, adm_tol) for label, phi in maps.items()}


def lifted_apply(lf, T):
    """``Psi(T) = sum_r Gamma_r^* T Gamma_r``."""
    T = as_matrix(T)
    if T.shape != (lf.m, lf.m):
        raise DimensionMismatchError(f"operand is {T.shape}, lift acts on {lf.m}x{lf.m}")
    if lf.m == 0:
        return T.copy()
    return _backend.kernels.psi_apply(np.ascontiguousarray(lf.gammas), np.ascontiguousarray(T))


def _require_admissible(lifts, word):
    for s in word:
        if s not in lifts:
            raise UnknownLabelError(f"no lift for label {s!r}")
        if not lifts[s].admissible:
            lf = lifts[s]
            raise LiftInadmissibleError(
                f"lift of {s!r} has residual {lf.residuals.max():.3e} > {lf.adm_tol:.3e}; "
                "use the direct or feature-vector route",
                label=s, residual=float(lf.residuals.max()),
            )


def _m_of(lifts):
    ms = {lf.m for lf in lifts.values()}
    if len(ms) != 1:
        raise DimensionMismatchError("lifts come from different Kolmogorov factors")
    return ms.pop()


@dataclass(frozen=True, eq=False)
class CompressedGram:
    word: tuple
    a_w: np.ndarray


def seeded_fold(lifts, w, seed):
    """``Psi_{s_1}(...Psi_{s_n}(seed))``, rightmost letter innermost."""
    w = tuple(w)
    _require_admissible(lifts, w)
    B = as_matrix(seed)
    for s in reversed(w):
        B = lifted_apply(lifts[s], B)
    return B


def compressed_gram(lifts, w):
    w = tuple(w)
    m = _m_of(lifts)
    return CompressedGram(w, seeded_fold(lifts, w, np.eye(m, dtype=np.complex128)))


def realize_kernel(kf, cg, x, y):
    """``V_x^* a_w V_y``."""
    if cg.a_w.shape != (kf.rank, kf.rank):
        raise DimensionMismatchError("compressed Gram does not match the Kolmogorov factor")
    return kf.V(x).conj().T @ cg.a_w @ kf.V(y)


def realize_blocks(kf, a):
    """All blocks ``V_x^* a V_y`` as an ``(n, n, d, d)`` array."""
    n, d = kf.source_dims
    G = kf.W.conj().T @ a @ kf.W
    return G.reshape(n, d, n, d).transpose(0, 2, 1, 3)


def model_norm(lifts, w):
    """``||C_w|| = ||a_w||^{1/2}``."""
    return float(np.sqrt(op_norm(compressed_gram(lifts, w).a_w)))


@dataclass(frozen=True, eq=False)
class FeatureVector:
    word: tuple
    source: tuple
    components: dict


def feature_vector(kf, maps, w, x, a, max_count=DEFAULT_MAX_STRINGS):
    """``C_w J_x a`` as a map from tagged Kraus strings to ``V_x (A_str a)``."""
    w = tuple(w)
    a = np.asarray(a, dtype=np.complex128)
    d = kf.source_dims[1]
    if a.shape != (d,):
        raise DimensionMismatchError(f"vector must have length {d}")
    Vx = kf.V(x)
    comps = {tag: Vx @ (P @ a) for tag, P in kraus_strings(w, maps, max_count, dim=d)}
    return FeatureVector(w, (x, a), comps)


def feature_gram(F, G):
    """Inner product over matching tagged strings only."""
    total = 0j
    for tag, u in F.components.items():
        v = G.components.get(tag)
        if v is not None:
            total += np.vdot(u, v)
    return complex(total)


def feature_norm_sq(F):
    return float(sum(np.vdot(u, u).real for u in F.components.values()))


def model_inner(kf, maps, w, x, a, v, y, b, max_count=DEFAULT_MAX_STRINGS):
    """``<C_w J_x a, C_v J_y b>`` on the model space; zero across distinct words."""
    F = feature_vector(kf, maps, w, x, a, max_count)
    G = feature_vector(kf, maps, v, y, b, max_count)
    return feature_gram(F, G)


@dataclass(frozen=True)
class LabelCertificate:
    admissible: bool
    d_norm: float
    cb_value: float
    paper_premise_holds: bool
    max_residual: float


@dataclass(frozen=True)
class Certificate:
    labels: dict
    model_contractive: bool
    tol: float

    def to_dict(self):
        return {
            "model_contractive": self.model_contractive,
            "tol": self.tol,
            "labels": {
                s: {
                    "admissible": c.admissible,
                    "d_norm": c.d_norm,
                    "cb_value": c.cb_value,
                    "paper_premise_holds": c.paper_premise_holds,
                    "max_residual": c.max_residual,
                }
                for s, c in self.labels.items()
            },
        }


def certify(lifts, maps, tol=CERT_TOL):
    """Check admissibility and ``||D_s|| <= 1`` for every lifted map.

    ``paper_premise_holds`` records whether ``||D_s|| <= ||Phi_s||_cb``,
    i.e. whether the cb-norm bound on the creation operator is borne out.
    """
    labels = {}
    for s, lf in lifts.items():
        cb = cb_norm(maps[s])
        labels[s] = LabelCertificate(
            admissible=lf.admissible,
            d_norm=lf.d_norm,
            cb_value=cb,
            paper_premise_holds=bool(lf.d_norm <= cb + tol),
            max_residual=float(lf.residuals.max()),
        )
    contractive = all(c.admissible and c.d_norm <= 1.0 + tol for c in labels.values())
    return Certificate(labels, bool(contractive), tol)


def pack_lifts(lifts, labels):
    """Zero-padded ``(L, Rmax, m, m)`` stack and Kraus counts for the compiled folds."""
    fams = [lifts[s] for s in labels]
    m = _m_of({s: lifts[s] for s in labels})
    rmax = max(lf.gammas.shape[0] for lf in fams)
    stack = np.zeros((len(fams), rmax, m, m), dtype=np.complex128)
    counts = np.empty(len(fams), dtype=np.int_)
    for i, lf in enumerate(fams):
        stack[i, :lf.gammas.shape[0]] = lf.gammas
        counts[i] = lf.gammas.shape[0]
    return stack, counts


def premise_probe(K, phi, alpha=None):
    """Evaluate the quadratic-form premise ``<alpha,[Phi(T_jk)]alpha> <= cb <alpha,[T_jk]alpha>``.

    ``T_jk`` is the Gram block matrix of ``K``. Without ``alpha`` the worst
    direction (top eigenvector of ``gram(Phi K) - cb gram(K)``) is used.
    Returns ``(lhs, rhs, alpha)``.
    """
    G = gram(K)
    GP = gram(K.with_blocks(apply_blocks(phi, K.blocks)))
    cb = cb_norm(phi)
    if alpha is None:
        w, V = np.linalg.eigh(hermitian_part(GP - cb * G))
        alpha = V[:, -1]
    alpha = np.asarray(alpha, dtype=np.complex128)
    if alpha.shape != (G.shape[0],):
        raise DimensionMismatchError(f"alpha must have length {G.shape[0]}")
    lhs = float(np.vdot(alpha, GP @ alpha).real)
    rhs = float(cb * np.vdot(alpha, G @ alpha).real)
    return lhs, rhs, alpha


def word_residual(kf, lifts, maps, w, K=None):
    """Block residual of the compressed realization against the direct oracle."""
    K = kf.source if K is None else K
    direct = iterate_kernel(K, w, maps).blocks
    a = compressed_gram(lifts, w).a_w
    realized = realize_blocks(kf, a)
    return max(op_norm(B) for B in (direct - realized).reshape(-1, *direct.shape[2:]))

