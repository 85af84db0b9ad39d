"""CP maps in Kraus form and the direct computation of iterated kernels.

The iterated kernel for a word ``w = s_1 ... s_n`` is
``K_w = Phi_{s_1}(Phi_{s_2}(... Phi_{s_n}(K)))``: the rightmost letter acts
first. Everything here works blockwise on the kernel and never touches the
model space, so it serves as the oracle for :mod:`cpkern.model`.
"""

from dataclasses import dataclass
from itertools import product
from math import prod

import numpy as np

from .errors import DimensionMismatchError, TooManyStringsError, UnknownLabelError, ValidationError
from .matrix_core import as_matrix, hermitian_eigen, matrix_from_wire, matrix_to_wire, op_norm

DEFAULT_MAX_STRINGS = 100_000


@dataclass(frozen=True, eq=False)
class CPMap:
    """``Phi(T) = sum_r A_r^* T A_r`` for a finite Kraus family."""

    label: str
    kraus: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.kraus, dtype=np.complex128)
        if A.ndim == 2:
            A = A[None]
        if A.ndim != 3 or A.shape[0] == 0 or A.shape[1] != A.shape[2]:
            raise DimensionMismatchError(
                f"Kraus family must be a nonempty stack of square matrices, got {A.shape}"
            )
        if not np.all(np.isfinite(A)):
            raise DimensionMismatchError("Kraus matrices contain non-finite entries")
        A.setflags(write=False)
        object.__setattr__(self, "kraus", A)

    @property
    def dim(self):
        return self.kraus.shape[1]

    @property
    def unit_image(self):
        A = self.kraus
        U = np.einsum("rji,rjk->ik", A.conj(), A)
        return 0.5 * (U + U.conj().T)

    def __call__(self, T):
        return apply(self, T)

    def to_wire(self):
        return {"kraus": [matrix_to_wire(A) for A in self.kraus]}

    @classmethod
    def from_wire(cls, label, obj):
        try:
            mats = obj["kraus"]
        except (KeyError, TypeError):
            raise ValidationError(f"map {label!r} has no 'kraus' list") from None
        if not mats:
            raise ValidationError(f"map {label!r} has an empty Kraus family")
        kraus = [matrix_from_wire(m) for m in mats]
        if len({k.shape for k in kraus}) != 1:
            raise DimensionMismatchError(f"map {label!r}: Kraus matrices differ in shape")
        return cls(label, np.array(kraus))


def maps_from_wire(obj):
    return {label: CPMap.from_wire(label, spec) for label, spec in obj.items()}


def maps_to_wire(maps):
    return {label: phi.to_wire() for label, phi in maps.items()}


def apply(phi, T):
    T = as_matrix(T)
    if T.shape != (phi.dim, phi.dim):
        raise DimensionMismatchError(f"operand is {T.shape}, map acts on {phi.dim}x{phi.dim}")
    A = phi.kraus
    return np.einsum("rji,jk,rkl->il", A.conj(), T, A)


def apply_blocks(phi, blocks):
    """Apply ``phi`` to every ``d x d`` block of an ``(n, n, d, d)`` array."""
    if blocks.shape[-2:] != (phi.dim, phi.dim):
        raise DimensionMismatchError(
            f"blocks are {blocks.shape[-2:]}, map acts on {phi.dim}x{phi.dim}"
        )
    A = phi.kraus
    return np.einsum("rji,xyjk,rkl->xyil", A.conj(), blocks, A)


def cb_norm(phi):
    """``||Phi(I)||``, which equals the completely bounded norm of a CP map."""
    return op_norm(phi.unit_image)


def is_unital(phi, tol=1e-9):
    return op_norm(phi.unit_image - np.eye(phi.dim)) <= tol


def is_subunital(phi, tol=1e-9):
    return float(hermitian_eigen(phi.unit_image - np.eye(phi.dim)).values[-1]) <= tol


def as_word(w):
    if w is None:
        return ()
    if isinstance(w, str):
        return (w,)
    return tuple(w)


def resolve(w, maps):
    try:
        return [maps[s] for s in as_word(w)]
    except KeyError as exc:
        raise UnknownLabelError(f"unknown map label {exc.args[0]!r}") from None


def iterate_kernel(K, w, maps):
    """``K_w`` by folding the word from the right over every block."""
    blocks = K.blocks
    for phi in reversed(resolve(w, maps)):
        if phi.dim != K.fiber_dim:
            raise DimensionMismatchError(
                f"map {phi.label!r} acts on C^{phi.dim}, kernel fiber is C^{K.fiber_dim}"
            )
        blocks = apply_blocks(phi, blocks)
    return K.with_blocks(blocks) if blocks is not K.blocks else K


def kernel_orbit(K, phi, n):
    """``[K, Phi(K), ..., Phi^n(K)]`` for a single map."""
    out = [K]
    for _ in range(n):
        out.append(out[-1].with_blocks(apply_blocks(phi, out[-1].blocks)))
    return out


def string_count(w, maps):
    return prod(phi.kraus.shape[0] for phi in resolve(w, maps))


def kraus_strings(w, maps, max_count=DEFAULT_MAX_STRINGS, dim=None):
    """All Kraus strings of ``w`` with their products ``A_{s_n,r_n} ... A_{s_1,r_1}``.

    Each string is tagged position by position with ``(label, index)`` so that
    strings of different words never compare equal. The empty word yields a
    single empty tag with the identity product (of size ``dim``, or the
    dimension of the declared maps).
    """
    phis = resolve(w, maps)
    count = prod(phi.kraus.shape[0] for phi in phis)
    if count > max_count:
        raise TooManyStringsError(f"word has {count} Kraus strings (limit {max_count})")
    if not phis:
        if dim is None:
            if not maps:
                raise DimensionMismatchError("empty word needs dim when no maps are declared")
            dim = next(iter(maps.values())).dim
        return [((), np.eye(dim, dtype=np.complex128))]
    d = phis[0].dim
    if any(phi.dim != d for phi in phis):
        raise DimensionMismatchError("maps in word act on different dimensions")
    out = []
    for idx in product(*(range(phi.kraus.shape[0]) for phi in phis)):
        P = np.eye(d, dtype=np.complex128)
        for phi, r in zip(phis, idx):
            P = phi.kraus[r] @ P
        out.append((tuple((phi.label, r) for phi, r in zip(phis, idx)), P))
    return out
