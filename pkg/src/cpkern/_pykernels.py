"""Pure numpy implementation of the lifted-map folds.

This is the reference for the compiled ``_ckernels`` extension and the
fallback when the extension is not built. Both modules expose the same five
functions with the same argument layout:

``gam``        ``(R, m, m)`` stack of lifted Kraus operators of one map
``gam_stack``  ``(L, Rmax, m, m)`` one zero-padded stack per label
``counts``     ``(L,)`` number of live Kraus operators per label
"""

import numpy as np

_TINY = np.finfo(np.float64).tiny
_HUGE = np.finfo(np.float64).max


def _herm(M):
    return 0.5 * (M + M.conj().T)


def psi_apply(gam, T):
    return _herm(np.einsum("rki,kl,rlj->ij", gam.conj(), T, gam))


def eigvalsh(A):
    return np.linalg.eigvalsh(A)


def _top(B):
    w = np.linalg.eigvalsh(B)
    return float(max(abs(w[0]), abs(w[-1]))) if w.size else 0.0


def fold_word(gam_stack, counts, word, seed):
    B = np.array(seed, dtype=np.complex128, copy=True)
    log_scale = 0.0
    for lab in word[::-1]:
        B = psi_apply(gam_stack[lab, :counts[lab]], B)
        c = _top(B)
        if c == 0.0:
            return B, -np.inf
        log_scale += np.log(c)
        B = B / c
    return B, log_scale


def reversed_log_norms(gam_stack, counts, path, renorm):
    m = gam_stack.shape[2]
    n = len(path)
    X = np.empty(n)
    B = np.eye(m, dtype=np.complex128)
    acc = 0.0
    for k, lab in enumerate(path):
        B = psi_apply(gam_stack[lab, :counts[lab]], B)
        c = _top(B)
        if renorm:
            if c == 0.0:
                X[k:] = -np.inf
                return X, 1
            X[k] = 0.5 * (np.log(c) + acc)
            acc += np.log(c)
            B = B / c
        else:
            if not (_TINY < c < _HUGE):
                return X, 2
            X[k] = 0.5 * np.log(c)
    return X, 0


def fixed_point_iteration(gam, max_iter, conv_tol):
    m = gam.shape[1]
    D = np.eye(m, dtype=np.complex128)
    steps, norms, defects, mono = [], [], [], []
    it = 0
    while it < max_iter:
        Dn = psi_apply(gam, D)
        w = np.linalg.eigvalsh(D - Dn)
        step = float(max(abs(w[0]), abs(w[-1]))) if m else 0.0
        mono.append(float(w[0]) if m else 0.0)
        mu = np.linalg.eigvalsh(Dn)
        norms.append(float(np.abs(mu).max()) if m else 0.0)
        defects.append(float(np.abs(mu * mu - mu).max()) if m else 0.0)
        steps.append(step)
        it += 1
        D = Dn
        if step <= conv_tol:
            break
    return (D, it, np.array(steps), np.array(norms), np.array(defects), np.array(mono))
