"""Hermitian product bases and trace-and-replace polynomials.

All subspace projectors in this package (process validity, ordered combs,
non-signalling channels, adapter classes) are polynomials with ±1 coefficients
in the commuting trace-and-replace maps ``_X``.  Each ``_X`` is diagonal in a
product basis of per-factor orthonormal Hermitian matrices whose first element
is 1/√d: it keeps a basis string iff the string is the identity on X.  That
makes every such projector diagonal with 0/1 eigenvalues computable per basis
string, which is how the SDP layer parametrizes subspace-constrained blocks.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache, reduce
from typing import Iterable, Mapping, Sequence

import numpy as np

from .labeled import LabeledOperator, trace_replace

__all__ = ["ggm_basis", "coeff_tensor", "from_coeff_tensor", "ReplacePoly"]


@lru_cache(maxsize=32)
def ggm_basis(d: int) -> np.ndarray:
    """Orthonormal Hermitian basis of d×d matrices, shape (d², d, d).

    Element 0 is 1/√d; the rest are the generalized Gell-Mann matrices
    (symmetric pairs, antisymmetric pairs, then diagonal), all traceless.
    For d=2 this is {1, σx, σy, σz}/√2.
    """
    mats = [np.eye(d, dtype=complex) / np.sqrt(d)]
    for j in range(d):
        for k in range(j + 1, d):
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = m[k, j] = 1 / np.sqrt(2)
            mats.append(m)
            m = np.zeros((d, d), dtype=complex)
            m[j, k] = -1j / np.sqrt(2)
            m[k, j] = 1j / np.sqrt(2)
            mats.append(m)
    for l in range(1, d):
        m = np.zeros((d, d), dtype=complex)
        m[:l, :l] = np.eye(l)
        m[l, l] = -l
        mats.append(m / np.sqrt(l * (l + 1)))
    out = np.stack(mats)
    out.flags.writeable = False
    return out


def coeff_tensor(a: LabeledOperator) -> np.ndarray:
    """Real coefficient tensor of a Hermitian operator, shape (d₁², …, d_k²).

    c[s₁,…,s_k] = tr[(g_{s₁}⊗…⊗g_{s_k}) a];  a == Σ c·(g⊗…⊗g) since the
    basis is orthonormal.
    """
    dims = a.dims
    k = len(dims)
    t = a.as_tensor()
    # contract factor i: tr(g M) pairs g[s,a,b] with M[..b.., ..a..]
    for i in range(k):
        g = ggm_basis(dims[i])
        # current layout: (s_0..s_{i-1}, row_i..row_{k-1}, col_i..col_{k-1});
        # row_i sits at axis i and col_i always at axis k
        t = np.tensordot(g, t, axes=([2, 1], [i, k]))
        # tensordot puts the new string axis first; rotate it behind the
        # previous string axes
        t = np.moveaxis(t, 0, i)
    if np.abs(t.imag).max() > 1e-9 * max(1.0, np.abs(t.real).max()):
        raise ValueError("coefficient tensor has large imaginary part "
                         "(operator not Hermitian?)")
    return np.ascontiguousarray(t.real)


def from_coeff_tensor(c: np.ndarray, factors) -> LabeledOperator:
    """Inverse of :func:`coeff_tensor`."""
    dims = tuple(f.dim for f in factors)
    k = len(dims)
    t = np.asarray(c, dtype=complex)
    for i in range(k):
        g = ggm_basis(dims[i])
        # the next unprocessed string axis is always axis 0; its row/col
        # axes are appended at the end
        t = np.tensordot(t, g, axes=([0], [0]))
    # axes now: (s-remainder none) rows/cols interleaved per factor at the end:
    # after the loop the layout is (row_0, col_0, row_1, col_1, …)
    order = [2 * i for i in range(k)] + [2 * i + 1 for i in range(k)]
    t = t.transpose(order)
    d = int(np.prod(dims, dtype=np.int64))
    return LabeledOperator(factors, t.reshape(d, d))


@dataclass(frozen=True)
class ReplacePoly:
    """A linear combination Σ coeff · _{S} of trace-and-replace maps.

    Terms are keyed by frozen label-name sets; the empty set is the identity
    map.  Composition uses _{S}∘_{T} = _{S∪T}, so these polynomials form a
    commutative algebra.
    """

    terms: Mapping[frozenset, float]

    @staticmethod
    def identity() -> "ReplacePoly":
        return ReplacePoly({frozenset(): 1.0})

    @staticmethod
    def replace(labels: Iterable[str]) -> "ReplacePoly":
        return ReplacePoly({frozenset(labels): 1.0})

    def __add__(self, other: "ReplacePoly") -> "ReplacePoly":
        out = dict(self.terms)
        for s, c in other.terms.items():
            out[s] = out.get(s, 0.0) + c
        return ReplacePoly({s: c for s, c in out.items() if c != 0.0})

    def __sub__(self, other: "ReplacePoly") -> "ReplacePoly":
        return self + (other * -1.0)

    def __mul__(self, c: float) -> "ReplacePoly":
        return ReplacePoly({s: c * v for s, v in self.terms.items()})

    __rmul__ = __mul__

    def compose(self, other: "ReplacePoly") -> "ReplacePoly":
        out: dict[frozenset, float] = {}
        for s1, c1 in self.terms.items():
            for s2, c2 in other.terms.items():
                key = s1 | s2
                out[key] = out.get(key, 0.0) + c1 * c2
        return ReplacePoly({s: c for s, c in out.items() if c != 0.0})

    def apply(self, a: LabeledOperator) -> LabeledOperator:
        parts = [c * trace_replace(a, s) for s, c in self.terms.items()]
        return reduce(lambda x, y: x + y, parts)

    def eigenvalues(self, names: Sequence[str], dims: Sequence[int]) -> np.ndarray:
        """Diagonal eigenvalues on the product basis, shape (d₁², …, d_k²).

        _{X} keeps a string iff its X-component is index 0 (the identity),
        so each term contributes coeff·∏_{l∈S} [s_l == 0].
        """
        shape = tuple(d * d for d in dims)
        out = np.zeros(shape)
        pos = {n: i for i, n in enumerate(names)}
        for s, c in self.terms.items():
            term = np.ones(shape)
            for lbl in s:
                mask_shape = [1] * len(dims)
                i = pos[lbl]
                mask = np.zeros(shape[i])
                mask[0] = 1.0
                mask_shape[i] = shape[i]
                term = term * mask.reshape(mask_shape)
            out += c * term
        return out

    def residual(self, a: LabeledOperator) -> float:
        """Frobenius norm of this polynomial applied to `a`."""
        return self.apply(a).norm()


def fixed_string_mask(
    vanish: Sequence[ReplacePoly], names: Sequence[str], dims: Sequence[int]
) -> np.ndarray:
    """Boolean mask of product-basis strings on which every listed polynomial
    evaluates to zero (the joint kernel, i.e. the constrained subspace)."""
    shape = tuple(d * d for d in dims)
    mask = np.ones(shape, dtype=bool)
    for p in vanish:
        mask &= np.abs(p.eigenvalues(names, dims)) < 1e-12
    return mask
