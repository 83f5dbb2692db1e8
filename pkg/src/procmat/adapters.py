"""Adapters: higher-order maps sending process matrices to process matrices.

An adapter Υ lives on the doubled label set — the *inner* labels it plugs
into an existing process, the *primed* outer labels it exposes to the new
parties — and acts by the link product, W ↦ Υ ⋆ W.

Four nested classes are supported, each characterized by affine constraints
that are diagonal in the Hermitian product basis plus positivity:

* admissible      — maps every process to a process;
* free-preserving — additionally maps non-signalling processes to
                    non-signalling processes;
* AFP             — admissible and free-preserving;
* NS              — a local-structure superset of the physically realizable
                    adapters (shared entanglement + local pre/post maps);
                    membership is a single fixed-point equation.

The realizable subclass itself (shared state with local side-channels,
``make_lose``) has no known efficient membership test, so asking for one
raises :class:`Unsupported`.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

import numpy as np

from .basis import ReplacePoly, coeff_tensor
from .labeled import (
    LabeledOperator,
    SpaceLabel,
    choi_identity,
    identity_operator,
    is_psd,
    link_all,
    link_product,
    min_eigenvalue,
    tensor_all,
)
from .processes import Party, PartyLayout, ProcessMatrix

__all__ = [
    "Adapter",
    "Unsupported",
    "primed_layout",
    "adapter_labels",
    "apply_adapter",
    "project_ns_channel",
    "ns_projector_poly",
    "vanish_polys",
    "adapter_block",
    "membership_report",
    "is_admissible",
    "is_free_preserving",
    "is_afp",
    "is_ns",
    "is_lose",
    "identity_adapter",
    "make_swap1",
    "make_swap2",
    "mix_adapter",
    "make_lose",
    "random_lose_adapter",
    "make_trace_replace_adapter",
]


class Unsupported(NotImplementedError):
    """Membership question with no implemented decision procedure."""


def primed_layout(layout: PartyLayout, mark: str = "'") -> PartyLayout:
    """Same party structure with every label renamed name+mark."""
    return PartyLayout(
        tuple(
            Party(
                p.name,
                SpaceLabel(p.input.name + mark, p.input.dim),
                SpaceLabel(p.output.name + mark, p.output.dim),
            )
            for p in layout.parties
        )
    )


def adapter_labels(layout: PartyLayout) -> tuple[SpaceLabel, ...]:
    """Inner labels followed by primed outer labels."""
    return layout.labels + primed_layout(layout).labels


@dataclass(frozen=True)
class Adapter:
    op: LabeledOperator
    inner: PartyLayout

    @property
    def outer(self) -> PartyLayout:
        return primed_layout(self.inner)

    def to_json(self) -> dict:
        from .labeled import operator_to_json

        data = operator_to_json(self.op)
        data["layout"] = self.inner.to_json()
        return data


def compose_adapters(second: Adapter, first: Adapter) -> Adapter:
    """Adapter realizing W ↦ second ⋆ (first ⋆ W).

    The two adapters must share the same inner layout; the intermediate
    primed labels are contracted away.
    """
    from .labeled import rename_labels

    mid = {
        pl.name: il.name + "@"
        for il, pl in zip(first.inner.labels, primed_layout(first.inner).labels)
    }
    a = rename_labels(first.op, mid)
    b = rename_labels(
        second.op, {l.name: l.name + "@" for l in second.inner.labels}
    )
    op = link_product(a, b)
    return Adapter(
        op.permuted([l.name for l in adapter_labels(first.inner)]), first.inner
    )


def apply_adapter(adapter: Adapter, w: ProcessMatrix) -> ProcessMatrix:
    """Υ ⋆ W: contract the inner labels, return a process on the primed
    outer layout (validated)."""
    out = link_product(adapter.op, w.op)
    outer = adapter.outer
    return ProcessMatrix.build(out.permuted([l.name for l in outer.labels]), outer)


# ---------------------------------------------------------------------------
# superoperator polynomials
# ---------------------------------------------------------------------------


def _as_name_set(x) -> frozenset:
    return frozenset([x]) if isinstance(x, str) else frozenset(x)


def ns_projector_poly(pairs: Sequence[tuple]) -> ReplacePoly:
    """Projector onto non-signalling channels, as a composition of
    (I − _outs + _{ins ∪ outs}) over the given (inputs, outputs) pairs;
    each side may be a single label name or a collection of them."""
    poly = ReplacePoly.identity()
    for ins, outs in pairs:
        ins, outs = _as_name_set(ins), _as_name_set(outs)
        step = (
            ReplacePoly.identity()
            - ReplacePoly.replace(outs)
            + ReplacePoly.replace(ins | outs)
        )
        poly = poly.compose(step)
    return poly


def project_ns_channel(
    choi: LabeledOperator, pairs: Sequence[tuple[str, str]]
) -> LabeledOperator:
    """Project a multi-party channel Choi onto its non-signalling part."""
    return ns_projector_poly(pairs).apply(choi)


def _channel_pairs(layout: PartyLayout, mark: str = "") -> list[tuple[str, str]]:
    return [(p.input.name + mark, p.output.name + mark) for p in layout.parties]


def _party_local_poly(p: Party, pp: Party) -> ReplacePoly:
    """Per-party fixed-point map for the NS adapter class."""
    i, o = p.input.name, p.output.name
    ip, op_ = pp.input.name, pp.output.name
    return (
        ReplacePoly.identity()
        - ReplacePoly.replace({o})
        + ReplacePoly.replace({o, op_})
        - ReplacePoly.replace({ip, o, op_})
        + ReplacePoly.replace({p.input.name, ip, o, op_})
    )


def vanish_polys(layout: PartyLayout, kind: str) -> list[ReplacePoly]:
    """Affine membership constraints (each poly must annihilate Υ)."""
    play = primed_layout(layout)
    ins = set(layout.input_names)
    outs = set(layout.output_names)
    p_ins = set(play.input_names)
    p_outs = set(play.output_names)
    unprimed = ins | outs
    primed = p_ins | p_outs
    l_ns = ns_projector_poly(_channel_pairs(layout))
    l_ns_p = ns_projector_poly(_channel_pairs(primed_layout(layout)))

    if kind == "admissible":
        return [
            l_ns_p - l_ns.compose(l_ns_p),
            ReplacePoly.replace(unprimed).compose(l_ns_p)
            - ReplacePoly.replace(unprimed | primed),
        ]
    if kind == "fp":
        return [
            ReplacePoly.replace(outs) - ReplacePoly.replace(outs | p_outs),
            ReplacePoly.replace(primed | outs)
            - ReplacePoly.replace(primed | unprimed),
        ]
    if kind == "afp":
        return vanish_polys(layout, "admissible") + [
            ReplacePoly.replace(outs) - ReplacePoly.replace(outs | p_outs)
        ]
    if kind == "ns":
        poly = ReplacePoly.identity()
        for p, pp in zip(layout.parties, play.parties):
            poly = poly.compose(_party_local_poly(p, pp))
        return [ReplacePoly.identity() - poly]
    raise ValueError(f"unknown adapter class {kind}")


def class_trace(layout: PartyLayout, kind: str) -> float:
    play = primed_layout(layout)
    if kind == "ns":
        return float(np.prod([l.dim for l in play.labels], dtype=np.int64))
    dims = [layout.party(p.name).input.dim for p in layout.parties]
    dims += [play.party(p.name).output.dim for p in play.parties]
    return float(np.prod(dims, dtype=np.int64))


def adapter_block(layout: PartyLayout, kind: str, name: str = "Upsilon"):
    """SDP variable block over the adapter class's affine subspace."""
    from .sdp import Block

    return Block.subspace(name, adapter_labels(layout), vanish_polys(layout, kind))


# ---------------------------------------------------------------------------
# membership tests
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MembershipReport:
    kind: str
    min_eig: float
    subspace_residual: float
    trace_residual: float

    @property
    def accepted(self) -> bool:
        return (
            self.min_eig >= -1e-9
            and self.subspace_residual <= 1e-8
            and self.trace_residual <= 1e-8
        )


def membership_report(
    ups: Adapter, kind: str
) -> MembershipReport:
    layout = ups.inner
    op = ups.op
    resid = 0.0
    for poly in vanish_polys(layout, kind):
        resid = max(resid, poly.apply(op).norm())
    tr_res = abs(op.trace().real - class_trace(layout, kind))
    return MembershipReport(
        kind=kind,
        min_eig=float(min_eigenvalue(op)),
        subspace_residual=float(resid),
        trace_residual=float(tr_res),
    )


def is_admissible(ups: Adapter) -> bool:
    return membership_report(ups, "admissible").accepted


def is_free_preserving(ups: Adapter) -> bool:
    return membership_report(ups, "fp").accepted


def is_afp(ups: Adapter) -> bool:
    return membership_report(ups, "afp").accepted


def is_ns(ups: Adapter) -> bool:
    return membership_report(ups, "ns").accepted


def is_lose(ups: Adapter) -> bool:
    raise Unsupported(
        "deciding shared-state + local-side-channel realizability is not "
        "implemented; only the constructive direction (make_lose) is supported"
    )


# ---------------------------------------------------------------------------
# constructors
# ---------------------------------------------------------------------------


def _phi(a: SpaceLabel, b: SpaceLabel) -> LabeledOperator:
    return choi_identity(a, b)


def identity_adapter(layout: PartyLayout) -> Adapter:
    play = primed_layout(layout)
    parts = []
    for p, pp in zip(layout.parties, play.parties):
        parts.append(_phi(p.input, pp.input))
        parts.append(_phi(pp.output, p.output))
    return Adapter(tensor_all(parts), layout)


def make_swap1(layout: PartyLayout) -> Adapter:
    """Route each party's input to the *other* new party; keep outputs local.

    Free-preserving but not admissible: feeding it a generic process can
    produce a signalling loop.
    """
    a, b = layout.parties
    pa, pb = primed_layout(layout).parties
    op = tensor_all(
        [
            _phi(a.input, pb.input),
            _phi(b.input, pa.input),
            _phi(pa.output, a.output),
            _phi(pb.output, b.output),
        ]
    )
    return Adapter(op, layout)


def make_swap2(layout: PartyLayout) -> Adapter:
    """Swap both the input and the output wiring between the parties,
    reversing any causal order; AFP but not NS."""
    a, b = layout.parties
    pa, pb = primed_layout(layout).parties
    op = tensor_all(
        [
            _phi(a.input, pb.input),
            _phi(b.input, pa.input),
            _phi(pa.output, b.output),
            _phi(pb.output, a.output),
        ]
    )
    return Adapter(op, layout)


def mix_adapter(p: float, layout: PartyLayout) -> Adapter:
    """p · double-swap + (1−p) · identity."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"mixing weight must be in [0,1], got {p}")
    sw = make_swap2(layout).op
    iden = identity_adapter(layout).op.permuted(sw.names)
    return Adapter(p * sw + (1.0 - p) * iden, layout)


def make_lose(
    layout: PartyLayout,
    shared_state: LabeledOperator,
    pre_maps: Mapping[str, LabeledOperator],
    post_maps: Mapping[str, LabeledOperator],
) -> Adapter:
    """Local-operations-shared-entanglement adapter.

    ``shared_state``: state on auxiliary labels, split among the parties.
    ``pre_maps[X]``: channel Choi (X_I, aux…) → X_I' feeding the new input.
    ``post_maps[X]``: channel Choi (X_O', aux…) → X_O producing the old
    output.  All auxiliary labels are contracted by the link product.
    """
    pieces = [shared_state]
    for p in layout.parties:
        if p.name not in pre_maps or p.name not in post_maps:
            raise ValueError(f"missing pre/post map for party {p.name}")
        pieces.append(pre_maps[p.name])
        pieces.append(post_maps[p.name])
    op = link_all(pieces)
    want = sorted(l.name for l in adapter_labels(layout))
    have = sorted(op.names)
    if want != have:
        raise ValueError(f"pieces leave labels {have}, expected {want}")
    return Adapter(op.permuted([l.name for l in adapter_labels(layout)]), layout)


def random_lose_adapter(
    layout: PartyLayout, rng, aux_dim: int = 2
) -> Adapter:
    """Sampled realizable adapter: random shared state, random local
    pre/post channels with one auxiliary leg each."""
    from .random_ops import make_rng, random_cptp_choi, random_state

    rng = make_rng(rng)
    play = primed_layout(layout)
    aux = {}
    for p in layout.parties:
        aux[p.name] = (
            SpaceLabel(f"_{p.name}ai", aux_dim),
            SpaceLabel(f"_{p.name}ao", aux_dim),
        )
    shared = random_state([a for pair in aux.values() for a in pair], rng)
    pre, post = {}, {}
    for p, pp in zip(layout.parties, play.parties):
        ai, ao = aux[p.name]
        pre[p.name] = random_cptp_choi([p.input, ai], [pp.input], rng)
        post[p.name] = random_cptp_choi([pp.output, ao], [p.output], rng)
    return make_lose(layout, shared, pre, post)


def make_trace_replace_adapter(
    layout: PartyLayout,
    parties: Optional[Sequence[str]] = None,
    states: Optional[Mapping[str, LabeledOperator]] = None,
) -> Adapter:
    """Adapter that severs the chosen parties' output wires: the old
    process's output slot is measured against a fixed state (maximally
    mixed by default) and the new party's output is discarded.

    Applying it with all parties selected sends any process to a free one.
    """
    play = primed_layout(layout)
    chosen = set(parties if parties is not None else [p.name for p in layout.parties])
    parts = []
    for p, pp in zip(layout.parties, play.parties):
        parts.append(_phi(p.input, pp.input))
        if p.name in chosen:
            if states and p.name in states:
                sigma = states[p.name].permuted([p.output.name])
            else:
                sigma = (1.0 / p.output.dim) * identity_operator([p.output])
            # feed sigma into the old output slot, ignore the new output;
            # the link transposes shared legs, so insert sigma transposed
            # to realize the untransposed pairing tr(sigma·W)
            from .labeled import partial_transpose

            parts.append(
                tensor_all(
                    [
                        partial_transpose(sigma, [p.output.name]),
                        identity_operator([pp.output]),
                    ]
                )
            )
        else:
            parts.append(_phi(pp.output, p.output))
    return Adapter(tensor_all(parts), layout)
