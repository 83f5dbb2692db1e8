"""Process matrices: validity, causal structure, projectors, constructors.

A process matrix W lives on the input/output labels of a set of parties and
encodes all correlations obtainable by plugging local operations into it.
Validity for two parties means W ⪰ 0, W is a fixed point of the validity
projector, and tr W equals the product of output dimensions.  For more
parties only causally *ordered* processes (combs) are certified here; their
defining trace conditions telescope into a single projector built from
trace-and-replace maps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional, Sequence

import numpy as np

from .basis import ReplacePoly
from .labeled import (
    DEFAULT_TOL,
    DimensionMismatch,
    LabeledOperator,
    SpaceLabel,
    Tolerance,
    choi_identity,
    identity_operator,
    link_all,
    min_eigenvalue,
    partial_trace,
    tensor,
    tensor_all,
    trace_replace,
)

__all__ = [
    "Party",
    "PartyLayout",
    "ProcessMatrix",
    "ValidationReport",
    "CausalClass",
    "InvalidProcess",
    "UnsupportedArity",
    "BadOrdering",
    "NotOrdered",
    "BadProbability",
    "bipartite_layout",
    "chain_layout",
    "validity_projector",
    "project_valid",
    "validate_process",
    "comb_projector",
    "comb_project_ordered",
    "order_legs",
    "is_free",
    "is_ordered",
    "is_causally_separable",
    "make_fully_signalling",
    "make_mix",
    "make_ocb",
    "make_free",
    "make_Z",
    "dilate_ordered_comb",
    "relink_dilation",
]


class InvalidProcess(ValueError):
    """Operator failed process validation."""


class UnsupportedArity(ValueError):
    """Operation defined only for a specific number of parties."""


class BadOrdering(ValueError):
    """Leg sequence is not a consistent comb ordering."""


class NotOrdered(ValueError):
    """Process is not a comb for the requested order."""


class BadProbability(ValueError):
    pass


@dataclass(frozen=True)
class Party:
    name: str
    input: SpaceLabel
    output: SpaceLabel


@dataclass(frozen=True)
class PartyLayout:
    """Which labels are the inputs/outputs of which party."""

    parties: tuple[Party, ...]

    def __post_init__(self) -> None:
        labels = [p.input.name for p in self.parties] + [
            p.output.name for p in self.parties
        ]
        if len(set(labels)) != len(labels):
            raise ValueError(f"labels reused across party slots: {labels}")

    @property
    def input_names(self) -> tuple[str, ...]:
        return tuple(p.input.name for p in self.parties)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(p.output.name for p in self.parties)

    @property
    def labels(self) -> tuple[SpaceLabel, ...]:
        out = []
        for p in self.parties:
            out.extend([p.input, p.output])
        return tuple(out)

    @property
    def d_out(self) -> int:
        return int(np.prod([p.output.dim for p in self.parties], dtype=np.int64))

    def party(self, name: str) -> Party:
        for p in self.parties:
            if p.name == name:
                return p
        raise KeyError(name)

    def to_json(self) -> list[dict]:
        return [
            {"party": p.name, "in": p.input.name, "out": p.output.name}
            for p in self.parties
        ]

    @staticmethod
    def from_json(data: Sequence[Mapping], op: LabeledOperator) -> "PartyLayout":
        parties = []
        for e in data:
            parties.append(
                Party(e["party"], op.label(e["in"]), op.label(e["out"]))
            )
        return PartyLayout(tuple(parties))


def bipartite_layout(d: int = 2, prime: str = "") -> PartyLayout:
    """The standard two-party layout A=(A_I,A_O), B=(B_I,B_O), all dim d."""
    s = prime
    return PartyLayout(
        (
            Party("A" + s, SpaceLabel("A_I" + s, d), SpaceLabel("A_O" + s, d)),
            Party("B" + s, SpaceLabel("B_I" + s, d), SpaceLabel("B_O" + s, d)),
        )
    )


def chain_layout(names: Sequence[str], d: int = 2) -> PartyLayout:
    return PartyLayout(
        tuple(
            Party(n, SpaceLabel(f"{n}_I", d), SpaceLabel(f"{n}_O", d))
            for n in names
        )
    )


# ---------------------------------------------------------------------------
# projectors
# ---------------------------------------------------------------------------


def validity_projector(layout: PartyLayout) -> ReplacePoly:
    """The two-party validity projector (seven trace-and-replace terms)."""
    if len(layout.parties) != 2:
        raise UnsupportedArity("validity projector is defined for 2 parties")
    ai, ao = layout.parties[0].input.name, layout.parties[0].output.name
    bi, bo = layout.parties[1].input.name, layout.parties[1].output.name
    R = ReplacePoly.replace
    return (
        R({ao})
        + R({bo})
        - R({ao, bo})
        - R({bi, bo})
        + R({ao, bi, bo})
        - R({ai, ao})
        + R({ai, ao, bo})
    )


def project_valid(a: LabeledOperator, layout: PartyLayout) -> LabeledOperator:
    """Apply the two-party validity projector to `a`."""
    return validity_projector(layout).apply(a)


def order_legs(layout: PartyLayout, order: Sequence[str]) -> list[str]:
    """Leg sequence X1_I, X1_O, X2_I, … for the given party order.

    The last party's output leg is dropped when its dimension is 1 — not
    used by the standard layouts, so normally all 2N legs appear.
    """
    legs: list[str] = []
    for name in order:
        p = layout.party(name)
        legs.extend([p.input.name, p.output.name])
    return legs


def comb_projector(order: Sequence[str]) -> ReplacePoly:
    """Projector onto combs with the given leg ordering.

    `order` lists legs from earliest to latest, alternating party-input legs
    (states the process delivers) at even positions and party-output legs
    (states the process receives) at odd positions; a trailing unpaired leg
    at an even position is allowed (last party with trivial output).

    The defining trace conditions telescope from the back: each condition is
    the projector  id − _{S} + _{S∪T}  for a growing traced set S, and all
    conditions commute, so their composition is again a projector.
    """
    legs = list(order)
    if len(set(legs)) != len(legs) or not legs:
        raise BadOrdering(f"bad leg sequence {legs}")
    ident = ReplacePoly.identity()
    proj = ident
    traced: set[str] = set()
    i = len(legs) - 1
    while i > 0:
        if i % 2 == 1:
            # party-output leg: the comb must carry 1 on it given the
            # already-traced later legs
            if traced:
                cond = ident - ReplacePoly.replace(traced) + ReplacePoly.replace(
                    traced | {legs[i]}
                )
            else:
                cond = ReplacePoly.replace({legs[i]})
            traced = traced | {legs[i]}
            i -= 1
        else:
            # party-input leg: tracing it must release the preceding
            # party-output leg to the identity
            s1 = traced | {legs[i]}
            s2 = s1 | {legs[i - 1]}
            cond = ident - ReplacePoly.replace(s1) + ReplacePoly.replace(s2)
            traced = s2
            i -= 2
        proj = proj.compose(cond)
    return proj


def comb_project_ordered(
    a: LabeledOperator, order: Sequence[str]
) -> LabeledOperator:
    """Apply the ordered-comb projector for the given leg sequence to `a`."""
    for name in order:
        a.index(name)  # raises UnknownLabel
    return comb_projector(order).apply(a)


# ---------------------------------------------------------------------------
# validation
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ValidationReport:
    psd: bool
    subspace: bool
    trace: bool
    min_eig: float
    subspace_residual: float
    trace_residual: float

    @property
    def accepted(self) -> bool:
        return self.psd and self.subspace and self.trace

    def to_json(self) -> dict:
        return {
            "accepted": self.accepted,
            "psd": self.psd,
            "subspace": self.subspace,
            "trace": self.trace,
            "min_eig": self.min_eig,
            "subspace_residual": self.subspace_residual,
            "trace_residual": self.trace_residual,
        }


def _structure_projector(
    layout: PartyLayout, order: Optional[Sequence[str]]
) -> ReplacePoly:
    if len(layout.parties) == 2 and order is None:
        return validity_projector(layout)
    party_order = order if order is not None else [p.name for p in layout.parties]
    return comb_projector(order_legs(layout, party_order))


def validate_process(
    a: LabeledOperator,
    layout: PartyLayout,
    tol: Tolerance = DEFAULT_TOL,
    order: Optional[Sequence[str]] = None,
) -> ValidationReport:
    """Check positivity, structural subspace membership, and normalization.

    Two parties use the validity projector; for N>2 parties (or when `order`
    is given) the comb projector for that party order is used instead.
    """
    expected = {l.name for l in layout.labels}
    if set(a.names) != expected:
        raise DimensionMismatch(f"labels {a.names} do not match layout {expected}")
    proj = _structure_projector(layout, order)
    resid_op = a - proj.apply(a)
    sub_res = resid_op.norm()
    tr_res = abs(a.trace() - layout.d_out)
    try:
        mineig = min_eigenvalue(a, tol)
        psd_ok = mineig >= -tol.eps_psd
    except Exception:
        mineig = -math.inf
        psd_ok = False
    scale = max(1.0, a.norm())
    return ValidationReport(
        psd=psd_ok,
        subspace=sub_res <= max(tol.eps_eq * scale, 1e-8),
        trace=tr_res <= max(tol.eps_eq * layout.d_out, 1e-8),
        min_eig=mineig,
        subspace_residual=sub_res,
        trace_residual=tr_res,
    )


@dataclass(frozen=True)
class ProcessMatrix:
    """A validated process matrix with its party layout."""

    op: LabeledOperator
    layout: PartyLayout
    order: Optional[tuple[str, ...]] = None  # certification order for N>2

    @staticmethod
    def build(
        op: LabeledOperator,
        layout: PartyLayout,
        tol: Tolerance = DEFAULT_TOL,
        order: Optional[Sequence[str]] = None,
    ) -> "ProcessMatrix":
        report = validate_process(op, layout, tol, order)
        if not report.accepted:
            raise InvalidProcess(f"not a valid process: {report.to_json()}")
        return ProcessMatrix(op, layout, tuple(order) if order else None)

    @property
    def d_out(self) -> int:
        return self.layout.d_out

    def to_json(self) -> dict:
        from .labeled import operator_to_json

        data = operator_to_json(self.op)
        data["layout"] = self.layout.to_json()
        return data


@dataclass(frozen=True)
class CausalClass:
    """Coarse classification in the Free ⊂ Ordered ⊂ Separable hierarchy."""

    kind: str  # "free" | "ordered" | "separable" | "nonseparable"
    order: Optional[tuple[str, ...]] = None
    strict: bool = False  # for "ordered": not also ordered the other way


# ---------------------------------------------------------------------------
# structure predicates
# ---------------------------------------------------------------------------


def is_free(w: ProcessMatrix, tol: Tolerance = DEFAULT_TOL) -> bool:
    """Non-signalling ("parallel") process: fixed by trace-replace over all
    output labels."""
    replaced = trace_replace(w.op, w.layout.output_names)
    return (w.op - replaced).norm() <= max(tol.eps_eq * max(1.0, w.op.norm()), 1e-8)


def is_ordered(
    w: ProcessMatrix, order: Sequence[str], tol: Tolerance = DEFAULT_TOL
) -> bool:
    """Fixed point of the comb projector for the given party order."""
    legs = order_legs(w.layout, order)
    resid = (w.op - comb_project_ordered(w.op, legs)).norm()
    return resid <= max(tol.eps_eq * max(1.0, w.op.norm()), 1e-8)


def is_causally_separable(
    w: ProcessMatrix, tol: Tolerance = DEFAULT_TOL, eps_sep: float = 1e-6
) -> bool:
    """Bipartite: causal robustness below the separability threshold."""
    if len(w.layout.parties) != 2:
        raise UnsupportedArity("separability check is bipartite-only")
    from .robustness import causal_robustness

    return causal_robustness(w, side="dual").value <= eps_sep


def classify(w: ProcessMatrix, tol: Tolerance = DEFAULT_TOL) -> CausalClass:
    names = [p.name for p in w.layout.parties]
    if is_free(w, tol):
        return CausalClass("free")
    orders = []
    import itertools

    for perm in itertools.permutations(names):
        if is_ordered(w, perm, tol):
            orders.append(perm)
    if orders:
        return CausalClass("ordered", orders[0], strict=len(orders) == 1)
    if len(names) == 2 and is_causally_separable(w, tol):
        return CausalClass("separable")
    return CausalClass("nonseparable")


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def generalized_choi_identity(frm: SpaceLabel, to: SpaceLabel) -> LabeledOperator:
    """Φ⁺ block embedded top-left and zero-padded when dims differ.

    Requires frm.dim ≤ to.dim (isometric embedding) so the result stays the
    Choi of a channel.
    """
    if frm.dim > to.dim:
        raise DimensionMismatch(
            f"cannot embed {frm.name} (dim {frm.dim}) into {to.name} (dim {to.dim})"
        )
    v = np.zeros(frm.dim * to.dim)
    for i in range(frm.dim):
        v[i * to.dim + i] = 1.0
    return LabeledOperator((frm, to), np.outer(v, v))


def make_fully_signalling(
    layout: PartyLayout,
    order: Optional[Sequence[str]] = None,
    pad: bool = False,
    tol: Tolerance = DEFAULT_TOL,
) -> ProcessMatrix:
    """Chained identity channels: 1/d on the first input, Φ⁺ from each output
    to the next input, 1 on the last output."""
    names = list(order) if order is not None else [p.name for p in layout.parties]
    parties = [layout.party(n) for n in names]
    pieces = [identity_operator([parties[0].input]) / parties[0].input.dim]
    for a, b in zip(parties[:-1], parties[1:]):
        if a.output.dim == b.input.dim:
            pieces.append(choi_identity(a.output, b.input))
        elif pad:
            pieces.append(generalized_choi_identity(a.output, b.input))
        else:
            raise DimensionMismatch(
                f"{a.output.name} (dim {a.output.dim}) vs "
                f"{b.input.name} (dim {b.input.dim}); pass pad=True to embed"
            )
    pieces.append(identity_operator([parties[-1].output]))
    op = tensor_all(pieces)
    comb_order = names if len(names) > 2 else None
    return ProcessMatrix.build(op, layout, tol, order=comb_order)


def make_a2b(d: int = 2) -> ProcessMatrix:
    return make_fully_signalling(bipartite_layout(d), order=["A", "B"])


def make_b2a(d: int = 2) -> ProcessMatrix:
    return make_fully_signalling(bipartite_layout(d), order=["B", "A"])


def make_mix(q: float, d: int = 2) -> ProcessMatrix:
    """(1−q)·W^{A→B} + q·W^{B→A}; causally separable by construction."""
    if not 0.0 <= q <= 1.0:
        raise BadProbability(f"q={q} outside [0,1]")
    op = (1.0 - q) * make_a2b(d).op + q * make_b2a(d).op
    return ProcessMatrix.build(op, bipartite_layout(d))


_PAULI = {
    "i": np.eye(2),
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _pauli_string(chars: str) -> np.ndarray:
    out = np.array([[1.0 + 0j]])
    for c in chars:
        out = np.kron(out, _PAULI[c])
    return out


def make_ocb() -> ProcessMatrix:
    """The canonical causally non-separable two-qubit process.

    W = (1/4)[1 + (σz_{A_O} σz_{B_I} + σz_{A_I} σx_{B_I} σz_{B_O})/√2]
    on factor order (A_I, A_O, B_I, B_O).
    """
    layout = bipartite_layout(2)
    m = (
        _pauli_string("iiii")
        + (_pauli_string("izzi") + _pauli_string("zixz")) / np.sqrt(2)
    ) / 4.0
    return ProcessMatrix.build(LabeledOperator(layout.labels, m), layout)


def make_free(
    rho: Optional[LabeledOperator] = None, d: int = 2
) -> ProcessMatrix:
    """ρ_{A_I B_I} ⊗ 1_{A_O B_O}; defaults to the maximally mixed state."""
    layout = bipartite_layout(d)
    ins = [layout.parties[0].input, layout.parties[1].input]
    if rho is None:
        rho = identity_operator(ins) / (d * d)
    if abs(rho.trace() - 1.0) > 1e-9:
        raise InvalidProcess("input state must have unit trace")
    outs = identity_operator([layout.parties[0].output, layout.parties[1].output])
    op = tensor(rho, outs).permuted([l.name for l in layout.labels])
    return ProcessMatrix.build(op, layout)


def make_Z(d: int = 2) -> LabeledOperator:
    """Identity channels both ways: Φ⁺_{A_O B_I} ⊗ Φ⁺_{A_I B_O}.

    This operator is PSD with trace d² but is *not* a valid process matrix.
    """
    layout = bipartite_layout(d)
    a, b = layout.parties
    op = tensor(choi_identity(a.output, b.input), choi_identity(a.input, b.output))
    return op.permuted([l.name for l in layout.labels])


# ---------------------------------------------------------------------------
# dilation of ordered combs
# ---------------------------------------------------------------------------

_PINV_CUTOFF = 1e-10


def _purify(rho: np.ndarray) -> tuple[np.ndarray, int]:
    """Purification vector (matrix of shape d×r) in rho's eigenbasis."""
    w, v = np.linalg.eigh(rho)
    keep = w > _PINV_CUTOFF
    w, v = w[keep], v[:, keep]
    return v * np.sqrt(w), int(keep.sum())


def dilate_ordered_comb(
    w: ProcessMatrix, order: Optional[Sequence[str]] = None
) -> tuple[LabeledOperator, list[LabeledOperator]]:
    """Write an ordered comb as a circuit: initial pure state + channel Chois.

    Returns (Ψ on (X1_I, E1), [Λ_1, …, Λ_{N-1}]) where intermediate channels
    are isometry Chois (E_i, X_i_O) → (X_{i+1}_I, E_{i+1}) and the final one
    drops the memory.  Relinking them (plus 1 on the last output) reproduces
    the comb; see :func:`relink_dilation`.
    """
    names = list(order) if order is not None else (
        list(w.order) if w.order else [p.name for p in w.layout.parties]
    )
    if not is_ordered(w, names):
        raise NotOrdered(f"process is not ordered {names}")
    parties = [w.layout.party(n) for n in names]
    n = len(parties)
    if n not in (2, 3):
        raise UnsupportedArity("dilation implemented for 2 or 3 parties")

    # marginal combs: M_k on legs up to X_{k+1}_I, removing later legs and
    # dividing by the removed output dimensions
    def marginal(k: int) -> LabeledOperator:
        keep = []
        for p in parties[: k + 1]:
            keep.append(p.input.name)
            if p is not parties[k]:
                keep.append(p.output.name)
        drop = [x for x in w.op.names if x not in keep]
        scale = 1
        for p in parties[k:]:
            scale *= p.output.dim
        return partial_trace(w.op, drop) / scale

    rho1 = marginal(0)  # state on X1_I, trace 1
    qm, r1 = _purify(rho1.mat)
    e_label = SpaceLabel("E1", r1)
    psi = LabeledOperator(
        (parties[0].input, e_label), np.outer(qm.reshape(-1), qm.conj().reshape(-1))
    )

    chois: list[LabeledOperator] = []
    # `qm` is the matrix of the accumulated pure comb: rows indexed by the
    # processed legs (in a fixed order), columns by the current environment
    done_legs = [parties[0].input]
    for k in range(1, n):
        m_k = marginal(k)
        x_legs = [l.name for l in done_legs] + [parties[k - 1].output.name]
        m_perm = m_k.permuted(x_legs + [parties[k].input.name])
        # sandwich with the pseudo-inverse of the accumulated purification,
        # acting on the processed legs, to expose the channel Choi
        p = np.linalg.pinv(qm, rcond=_PINV_CUTOFF)
        d_rest = parties[k - 1].output.dim * parties[k].input.dim
        big = m_perm.mat.reshape(qm.shape[0], d_rest, qm.shape[0], d_rest)
        x = np.einsum("ex,xayb,fy->eafb", p, big, p.conj())
        x = x.reshape(e_label.dim * d_rest, -1)
        x = 0.5 * (x + x.conj().T)
        in_labels = (e_label, parties[k - 1].output)
        if k < n - 1:
            # Stinespring: purify the channel Choi; memory dim = its rank
            xm, r2 = _purify(x)
            e_next = SpaceLabel(f"E{k+1}", r2)
            vec = xm.reshape(-1)
            choi = LabeledOperator(
                in_labels + (parties[k].input, e_next),
                np.outer(vec, vec.conj()),
            )
            chois.append(choi)
            # accumulate: new pure comb matrix over (done legs + X_{k-1}O +
            # X_k I) × E_{k+1}
            # rows of xm: (E_k, X_{k-1}O, X_kI); contract E_k with qm cols
            xm_t = xm.reshape(e_label.dim, d_rest, r2)
            qm = np.einsum("ue,eam->uam", qm, xm_t).reshape(-1, r2)
            e_label = e_next
            done_legs = done_legs + [parties[k - 1].output, parties[k].input]
        else:
            choi = LabeledOperator(in_labels + (parties[k].input,), x)
            chois.append(choi)
    return psi, chois


def relink_dilation(
    psi: LabeledOperator,
    chois: Sequence[LabeledOperator],
    layout: PartyLayout,
    order: Optional[Sequence[str]] = None,
) -> LabeledOperator:
    """Reassemble a comb from its dilation pieces (adds 1 on the last output)."""
    names = list(order) if order is not None else [p.name for p in layout.parties]
    last_out = layout.party(names[-1]).output
    op = link_all([psi, *chois])
    return tensor(op, identity_operator([last_out])).permuted(
        [l.name for l in layout.labels]
    )
