"""Labeled multi-factor operator algebra.

Operators live on an ordered list of named tensor factors (e.g. ``A_I``,
``B_O'``, ``E1``).  All compositions used elsewhere in the package — tensor
product, partial trace/transpose, trace-and-replace, and the link product —
are defined here as pure functions on :class:`LabeledOperator`.

Conventions
-----------
* matrices are dense, complex, row-major over the listed factor order;
* the link product of ``f`` and ``l`` contracts the *shared* label set ``Y``::

      f ⋆ l = tr_Y[(f ⊗ 1)(1 ⊗ l^{T_Y})]

  and reduces to the tensor product when no labels are shared;
* for equality comparisons, factors are canonicalized by sorting label names.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

__all__ = [
    "SpaceLabel",
    "LabeledOperator",
    "Tolerance",
    "DuplicateLabel",
    "UnknownLabel",
    "DimensionMismatch",
    "NotHermitian",
    "tensor",
    "rename_labels",
    "partial_trace",
    "partial_transpose",
    "trace_replace",
    "link_product",
    "choi_identity",
    "identity_operator",
    "is_psd",
    "min_eigenvalue",
    "hermitian_part",
    "operator_to_json",
    "operator_from_json",
]


class DuplicateLabel(ValueError):
    """Two factors with the same name in one operator."""


class UnknownLabel(KeyError):
    """A referenced label name is not among an operator's factors."""


class DimensionMismatch(ValueError):
    """Shared labels (or matrix shape) disagree on dimension."""


class NotHermitian(ValueError):
    """Anti-Hermitian residual exceeds the Hermiticity tolerance."""


@dataclass(frozen=True)
class SpaceLabel:
    """A named tensor factor with its dimension."""

    name: str
    dim: int

    def __post_init__(self) -> None:
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")


@dataclass(frozen=True)
class Tolerance:
    """Numerical tolerances shared across the package."""

    eps_herm: float = 1e-9
    eps_psd: float = 1e-9
    eps_eq: float = 1e-9

    def __post_init__(self) -> None:
        if min(self.eps_herm, self.eps_psd, self.eps_eq) < 0:
            raise ValueError("tolerances must be non-negative")


DEFAULT_TOL = Tolerance()


class LabeledOperator:
    """A dense square operator over an ordered list of labeled factors."""

    __slots__ = ("factors", "mat")

    def __init__(self, factors: Sequence[SpaceLabel], mat: np.ndarray):
        factors = tuple(factors)
        names = [f.name for f in factors]
        if len(set(names)) != len(names):
            raise DuplicateLabel(f"duplicate factor names in {names}")
        d = 1
        for f in factors:
            d *= f.dim
        mat = np.asarray(mat, dtype=complex)
        if mat.shape != (d, d):
            raise DimensionMismatch(
                f"matrix shape {mat.shape} does not match factor dims (total {d})"
            )
        mat = mat.copy()
        mat.flags.writeable = False
        object.__setattr__(self, "factors", factors)
        object.__setattr__(self, "mat", mat)

    def __setattr__(self, *_):  # immutable
        raise AttributeError("LabeledOperator is immutable")

    # -- basic introspection ------------------------------------------------

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(f.name for f in self.factors)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return self.mat.shape[0]

    def label(self, name: str) -> SpaceLabel:
        for f in self.factors:
            if f.name == name:
                return f
        raise UnknownLabel(name)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.factors):
            if f.name == name:
                return i
        raise UnknownLabel(name)

    def trace(self) -> complex:
        return complex(np.trace(self.mat))

    # -- tensor-shaped views ------------------------------------------------

    def as_tensor(self) -> np.ndarray:
        """View with one row axis and one column axis per factor."""
        return self.mat.reshape(self.dims + self.dims)

    def permuted(self, names: Sequence[str]) -> "LabeledOperator":
        """Same operator with factors reordered to `names`."""
        names = list(names)
        if sorted(names) != sorted(self.names):
            raise UnknownLabel(f"permutation {names} does not match {self.names}")
        if tuple(names) == self.names:
            return self
        perm = [self.index(n) for n in names]
        k = len(self.factors)
        t = self.as_tensor().transpose(perm + [p + k for p in perm])
        new_factors = [self.factors[p] for p in perm]
        d = self.dim
        return LabeledOperator(new_factors, t.reshape(d, d))

    def canonical(self) -> "LabeledOperator":
        """Factors sorted by name — the order used for comparisons."""
        return self.permuted(sorted(self.names))

    # -- arithmetic (factor lists aligned automatically) --------------------

    def _aligned(self, other: "LabeledOperator") -> np.ndarray:
        if set(other.names) != set(self.names):
            raise DimensionMismatch(
                f"label sets differ: {self.names} vs {other.names}"
            )
        return other.permuted(self.names).mat

    def __add__(self, other: "LabeledOperator") -> "LabeledOperator":
        return LabeledOperator(self.factors, self.mat + self._aligned(other))

    def __sub__(self, other: "LabeledOperator") -> "LabeledOperator":
        return LabeledOperator(self.factors, self.mat - self._aligned(other))

    def __mul__(self, c: complex) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.mat * c)

    __rmul__ = __mul__

    def __truediv__(self, c: complex) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.mat / c)

    def __neg__(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, -self.mat)

    def adjoint(self) -> "LabeledOperator":
        return LabeledOperator(self.factors, self.mat.conj().T)

    def allclose(self, other: "LabeledOperator", atol: float = 1e-9) -> bool:
        """Entrywise comparison in canonical factor order."""
        if set(other.names) != set(self.names):
            return False
        a = self.canonical()
        b = other.canonical()
        if a.dims != b.dims:
            return False
        return bool(np.allclose(a.mat, b.mat, atol=atol, rtol=0.0))

    def distance(self, other: "LabeledOperator") -> float:
        """Frobenius distance in canonical factor order."""
        a = self.canonical()
        return float(np.linalg.norm(a.mat - a._aligned(other)))

    def norm(self) -> float:
        return float(np.linalg.norm(self.mat))

    def __repr__(self) -> str:
        facs = ", ".join(f"{f.name}:{f.dim}" for f in self.factors)
        return f"LabeledOperator([{facs}], tr={self.trace():.4g})"


def hermitian_part(a: LabeledOperator) -> LabeledOperator:
    return LabeledOperator(a.factors, 0.5 * (a.mat + a.mat.conj().T))


def _require_hermitian(a: LabeledOperator, eps: float) -> np.ndarray:
    """Return the symmetrized matrix, failing if the residual is large."""
    resid = np.linalg.norm(a.mat - a.mat.conj().T)
    if resid > eps * max(1.0, np.linalg.norm(a.mat)):
        raise NotHermitian(f"anti-Hermitian residual {resid:.3e}")
    return 0.5 * (a.mat + a.mat.conj().T)


# ---------------------------------------------------------------------------
# products and traces
# ---------------------------------------------------------------------------


def rename_labels(a: LabeledOperator, mapping: Mapping[str, str]) -> LabeledOperator:
    """Same matrix with factor names substituted (dims unchanged)."""
    factors = tuple(
        SpaceLabel(mapping.get(f.name, f.name), f.dim) for f in a.factors
    )
    return LabeledOperator(factors, a.mat)


def tensor(a: LabeledOperator, b: LabeledOperator) -> LabeledOperator:
    """Kronecker product; factor list is a's factors followed by b's."""
    overlap = set(a.names) & set(b.names)
    if overlap:
        raise DuplicateLabel(f"labels {sorted(overlap)} present in both operands")
    return LabeledOperator(a.factors + b.factors, np.kron(a.mat, b.mat))


def tensor_all(ops: Iterable[LabeledOperator]) -> LabeledOperator:
    ops = list(ops)
    out = ops[0]
    for op in ops[1:]:
        out = tensor(out, op)
    return out


def _check_over(a: LabeledOperator, over: Iterable[str]) -> list[int]:
    idx = []
    for name in over:
        idx.append(a.index(name))  # raises UnknownLabel
    return sorted(set(idx))


def partial_trace(a: LabeledOperator, over: Iterable[str]) -> LabeledOperator:
    """Trace out the named factors; tracing everything leaves a 1×1 operator."""
    traced = _check_over(a, over)
    k = len(a.factors)
    keep = [i for i in range(k) if i not in traced]
    t = a.as_tensor()
    # contract each traced factor's row axis with its column axis
    src = list(range(2 * k))
    for i in traced:
        src[k + i] = src[i]
    out_axes = [src[i] for i in keep] + [src[k + i] for i in keep]
    res = np.einsum(t, src, out_axes)
    new_factors = [a.factors[i] for i in keep]
    d = int(np.prod([f.dim for f in new_factors], dtype=np.int64)) if new_factors else 1
    return LabeledOperator(new_factors, res.reshape(d, d))


def partial_transpose(a: LabeledOperator, over: Iterable[str]) -> LabeledOperator:
    """Transpose the named factors; applying twice returns the input."""
    swapped = _check_over(a, over)
    k = len(a.factors)
    axes = list(range(2 * k))
    for i in swapped:
        axes[i], axes[k + i] = axes[k + i], axes[i]
    t = a.as_tensor().transpose(axes)
    return LabeledOperator(a.factors, t.reshape(a.dim, a.dim))


def identity_operator(labels: Sequence[SpaceLabel]) -> LabeledOperator:
    d = 1
    for f in labels:
        d *= f.dim
    return LabeledOperator(labels, np.eye(d))


def trace_replace(a: LabeledOperator, over: Iterable[str]) -> LabeledOperator:
    """Trace-and-replace: trace out `over`, re-insert 1/d there.

    Keeps the original factor order, preserves the total trace, and is a
    projection; it is also insensitive to the order of the labels in `over`.
    """
    over = list(over)
    if not over:
        return a
    _check_over(a, over)
    reduced = partial_trace(a, over)
    labels = [a.label(n) for n in over]
    d_over = 1
    for f in labels:
        d_over *= f.dim
    filler = identity_operator(labels) / d_over
    if not reduced.factors:
        filled = filler * complex(reduced.mat[0, 0])
        return filled.permuted(a.names)
    return tensor(reduced, filler).permuted(a.names)


def link_product(f: LabeledOperator, l: LabeledOperator) -> LabeledOperator:
    """Link product f ⋆ l over the shared label set.

    Implements tr_Y[(F⊗1)(1⊗L^{T_Y})] where Y is the set of labels common to
    both operands.  On disjoint label sets this is the tensor product; on
    Choi matrices of channels it composes the channels.
    """
    shared = [n for n in f.names if n in set(l.names)]
    for n in shared:
        if f.label(n).dim != l.label(n).dim:
            raise DimensionMismatch(
                f"label {n}: dim {f.label(n).dim} vs {l.label(n).dim}"
            )
    if not shared:
        return tensor(f, l)

    kf, kl = len(f.factors), len(l.factors)
    f_keep = [i for i in range(kf) if f.factors[i].name not in shared]
    l_keep = [i for i in range(kl) if l.factors[i].name not in shared]

    # Index bookkeeping:  N_{x z, x' z'} = Σ_{y y'} F_{x y, x' y'} L_{y z, y' z'}
    # i.e. row axes of shared labels contract with row axes, columns with
    # columns (the partial transpose in the definition flips L's shared axes).
    f_src = list(range(2 * kf))
    l_src = [0] * (2 * kl)
    nxt = 2 * kf
    for j in range(kl):
        name = l.factors[j].name
        if name in shared:
            i = f.index(name)
            l_src[j] = f_src[i]          # y with y
            l_src[kl + j] = f_src[kf + i]  # y' with y'
        else:
            l_src[j] = nxt
            l_src[kl + j] = nxt + 1
            nxt += 2
    out = (
        [f_src[i] for i in f_keep]
        + [l_src[j] for j in l_keep]
        + [f_src[kf + i] for i in f_keep]
        + [l_src[kl + j] for j in l_keep]
    )
    res = np.einsum(f.as_tensor(), f_src, l.as_tensor(), l_src, out)
    new_factors = [f.factors[i] for i in f_keep] + [l.factors[j] for j in l_keep]
    d = 1
    for fac in new_factors:
        d *= fac.dim
    return LabeledOperator(new_factors, res.reshape(d, d))


def link_all(ops: Iterable[LabeledOperator]) -> LabeledOperator:
    ops = list(ops)
    out = ops[0]
    for op in ops[1:]:
        out = link_product(out, op)
    return out


def choi_identity(frm: SpaceLabel, to: SpaceLabel) -> LabeledOperator:
    """Unnormalized maximally entangled operator Φ⁺ = Σ_{ij}|ii⟩⟨jj| on (frm, to).

    This is the Choi matrix of the identity channel frm → to; its trace is d.
    """
    if frm.dim != to.dim:
        raise DimensionMismatch(f"{frm.name} dim {frm.dim} != {to.name} dim {to.dim}")
    d = frm.dim
    v = np.eye(d).reshape(d * d)  # |Φ⁺⟩ = Σ_i |ii⟩
    return LabeledOperator((frm, to), np.outer(v, v))


# ---------------------------------------------------------------------------
# spectra
# ---------------------------------------------------------------------------


def min_eigenvalue(a: LabeledOperator, tol: Tolerance = DEFAULT_TOL) -> float:
    h = _require_hermitian(a, tol.eps_herm)
    return float(np.linalg.eigvalsh(h)[0])


def is_psd(a: LabeledOperator, tol: Tolerance = DEFAULT_TOL) -> bool:
    return min_eigenvalue(a, tol) >= -tol.eps_psd


# ---------------------------------------------------------------------------
# JSON interchange
# ---------------------------------------------------------------------------


def operator_to_json(a: LabeledOperator) -> dict:
    return {
        "factors": [{"name": f.name, "dim": f.dim} for f in a.factors],
        "re": a.mat.real.tolist(),
        "im": a.mat.imag.tolist(),
    }


def operator_from_json(data: Mapping) -> LabeledOperator:
    try:
        factors = [SpaceLabel(f["name"], int(f["dim"])) for f in data["factors"]]
        re = np.array(data["re"], dtype=float)
        im = np.array(data["im"], dtype=float)
    except (KeyError, TypeError) as exc:
        raise ValueError(f"malformed operator JSON: {exc}") from exc
    if re.shape != im.shape:
        raise ValueError("re/im shape mismatch")
    return LabeledOperator(factors, re + 1j * im)


def operator_dump(a: LabeledOperator, path: str) -> None:
    with open(path, "w") as fh:
        json.dump(operator_to_json(a), fh)


def operator_load(path: str) -> LabeledOperator:
    with open(path) as fh:
        return operator_from_json(json.load(fh))
