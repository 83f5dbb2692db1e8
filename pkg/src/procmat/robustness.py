"""Resource monotones for process matrices, computed as SDPs.

Four programs:

* ``signalling_robustness`` — minimal mixing weight of an arbitrary process
  needed to bring the input into the non-signalling (free) set.
* ``causal_robustness`` — same, with the free set enlarged to convex
  mixtures of the two fixed-order combs (bipartite).
* ``robustness_to_proc`` — distance of a Hermitian block to the valid
  process subspace, measured by minimal PSD completion weight.
* ``monotone_fQ`` — best overlap with a fixed effect achievable by
  post-processing with a non-signalling-preserving adapter.

Each solver can run the primal, the explicit dual, or both (cross-checked
through the reported gap).  Dual solutions yield witnesses: Hermitian
operators G with tr(G·free) ≥ 0 for every free object but tr(G·W) < 0 for
the input, the value being −robustness at optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .basis import ReplacePoly, coeff_tensor
from .labeled import LabeledOperator, identity_operator
from .processes import (
    PartyLayout,
    ProcessMatrix,
    UnsupportedArity,
    comb_projector,
    order_legs,
    validity_projector,
)
from .sdp import (
    Block,
    EqConstraint,
    IllFormed,
    PsdConstraint,
    ScalarVar,
    SDPProblem,
    SolverOptions,
    identity_term,
    lift_term,
    link_rows,
    poly_term,
    ptrace_term,
    scalar_term,
    solve,
)

__all__ = [
    "Witness",
    "RobustnessResult",
    "signalling_robustness",
    "causal_robustness",
    "robustness_to_proc",
    "monotone_fQ",
    "extract_witness",
]


@dataclass(frozen=True)
class Witness:
    """Hermitian detector: value = tr(op·W) is < 0 iff the witness fires."""

    op: LabeledOperator
    value: float


@dataclass
class RobustnessResult:
    value: float
    witness: Optional[Witness] = None
    T: Optional[LabeledOperator] = None  # closest free/separable process
    gap: float = np.nan
    status: str = "optimal"


def extract_witness(result: RobustnessResult) -> Witness:
    if result.witness is None:
        raise IllFormed("no witness available (solve with side='dual' or 'both')")
    return result.witness


def _check_side(side: str) -> None:
    if side not in ("primal", "dual", "both"):
        raise ValueError(f"side must be primal|dual|both, got {side}")


# ---------------------------------------------------------------------------
# signalling robustness
# ---------------------------------------------------------------------------


def signalling_robustness(
    w: ProcessMatrix, side: str = "both", opts: SolverOptions = SolverOptions()
) -> RobustnessResult:
    """Minimal s with (W + s·Ω)/(1+s) non-signalling, Ω any valid process."""
    _check_side(side)
    layout = w.layout
    labels = layout.labels
    ins = tuple(layout.party(p.name).input for p in layout.parties)
    d_out = layout.d_out

    primal = dual = None
    if side in ("primal", "both"):
        rho = Block.full("rho", ins)
        p = SDPProblem(
            blocks=[rho],
            sense="min",
            objective={"rho": rho.trace_row()},
            obj_constant=-1.0,
            psds=[
                PsdConstraint(
                    labels, {"rho": lift_term(rho, labels)}, const=-1.0 * w.op
                )
            ],
        )
        primal = solve(p, opts)
    if side in ("dual", "both"):
        s_blk = Block.full("S", labels)
        p = SDPProblem(
            blocks=[s_blk],
            sense="max",
            objective={"S": s_blk.coeffs_of(w.op)},
            obj_constant=-1.0,
            psds=[
                PsdConstraint(
                    ins,
                    {"S": -1.0 * ptrace_term(s_blk, ins)},
                    const=identity_operator(ins),
                )
            ],
        )
        dual = solve(p, opts)

    return _package(w, primal, dual, labels, d_out)


def _package(w, primal, dual, labels, d_out) -> RobustnessResult:
    """Shared bookkeeping for the two mixing-robustness programs."""
    value = np.nan
    status = "optimal"
    T = witness = None
    for sol in (primal, dual):
        if sol is not None and not sol.optimal:
            status = sol.status
    if primal is not None and primal.optimal:
        value = primal.objective
        s = max(value, 0.0)
        if "rho" in primal.block_values:
            from .labeled import tensor

            outs = [l for l in labels if l.name not in
                    {f.name for f in primal.block_values["rho"].factors}]
            dom = tensor(primal.block_values["rho"], identity_operator(outs))
            T = (1.0 / (1.0 + s)) * dom.permuted([l.name for l in labels])
        else:
            blocks = primal.block_values
            total = None
            for v in blocks.values():
                total = v if total is None else total + v
            if total is not None:
                T = (1.0 / (1.0 + s)) * total
    if dual is not None and dual.optimal:
        if np.isnan(value):
            value = dual.objective
        s_opt = dual.block_values["S"]
        g = (1.0 / d_out) * identity_operator(labels) - s_opt
        witness = Witness(op=g, value=float(np.real(
            np.trace(g.permuted(w.op.names).mat @ w.op.mat))))
    gap = (
        abs(primal.objective - dual.objective)
        if primal is not None and dual is not None
        and primal.optimal and dual.optimal
        else np.nan
    )
    return RobustnessResult(value=float(value), witness=witness, T=T,
                            gap=gap, status=status)


# ---------------------------------------------------------------------------
# causal robustness (bipartite)
# ---------------------------------------------------------------------------


def causal_robustness(
    w: ProcessMatrix, side: str = "both", opts: SolverOptions = SolverOptions()
) -> RobustnessResult:
    """Minimal s with (W + s·Ω)/(1+s) a mixture of the two fixed-order combs."""
    _check_side(side)
    layout = w.layout
    if len(layout.parties) != 2:
        raise UnsupportedArity("causal robustness is bipartite-only")
    labels = layout.labels
    d_out = layout.d_out
    names = [p.name for p in layout.parties]
    orders = [names, list(reversed(names))]
    polys = [comb_projector(order_legs(layout, o)) for o in orders]

    primal = dual = None
    if side in ("primal", "both"):
        blocks = [
            Block.subspace(f"W{i}", labels, [ReplacePoly.identity() - polys[i]])
            for i in range(2)
        ]
        obj = {b.name: b.trace_row() / d_out for b in blocks}
        p = SDPProblem(
            blocks=blocks,
            sense="min",
            objective=obj,
            obj_constant=-1.0,
            psds=[
                PsdConstraint(
                    labels,
                    {b.name: identity_term(b) for b in blocks},
                    const=-1.0 * w.op,
                )
            ],
        )
        primal = solve(p, opts)
    if side in ("dual", "both"):
        s_blk = Block.full("S", labels)
        u_blk = Block.full("U", labels, psd=False)
        v_blk = Block.full("V", labels, psd=False)
        eye = (1.0 / d_out) * identity_operator(labels)
        cons = []
        for aux, poly in ((u_blk, polys[0]), (v_blk, polys[1])):
            cons.append(
                PsdConstraint(
                    labels,
                    {
                        aux.name: poly_term(aux, ReplacePoly.identity() - poly),
                        "S": -1.0 * identity_term(s_blk),
                    },
                    const=eye,
                )
            )
        p = SDPProblem(
            blocks=[s_blk, u_blk, v_blk],
            sense="max",
            objective={"S": s_blk.coeffs_of(w.op)},
            obj_constant=-1.0,
            psds=cons,
        )
        dual = solve(p, opts)

    return _package(w, primal, dual, labels, d_out)


# ---------------------------------------------------------------------------
# distance to the valid-process subspace
# ---------------------------------------------------------------------------


def robustness_to_proc(
    z: LabeledOperator,
    layout: PartyLayout,
    opts: SolverOptions = SolverOptions(),
) -> RobustnessResult:
    """Minimal s admitting PSD T̃ with tr T̃ = s·d_O and Z + T̃ a (scaled)
    valid process; the closest process is (Z + T̃)/(1+s)."""
    d_out = layout.d_out
    if not np.isclose(z.trace().real, d_out, atol=1e-8):
        raise IllFormed(f"input must have trace {d_out}, got {z.trace().real}")
    labels = layout.labels
    t_blk = Block.full("T", labels)
    ev = (ReplacePoly.identity() - validity_projector(layout)).eigenvalues(
        [l.name for l in labels], [l.dim for l in labels]
    ).reshape(-1)
    sel = np.nonzero(np.abs(ev) > 1e-12)[0]
    zc = coeff_tensor(z.permuted([l.name for l in labels])).reshape(-1)
    rows = np.zeros((len(sel), t_blk.n_coeffs))
    rows[np.arange(len(sel)), sel] = ev[sel]
    p = SDPProblem(
        blocks=[t_blk],
        scalars=[ScalarVar("s")],
        sense="min",
        objective={"s": 1.0},
        eqs=[
            EqConstraint({"T": rows}, -ev[sel] * zc[sel], name="into-subspace"),
            EqConstraint(
                {"T": t_blk.trace_row()[None, :], "s": np.array([[-float(d_out)]])},
                np.array([0.0]),
                name="noise-budget",
            ),
        ],
    )
    sol = solve(p, opts)
    if not sol.optimal:
        return RobustnessResult(value=np.nan, status=sol.status)
    s = sol.scalar_values["s"]
    closest = (1.0 / (1.0 + s)) * (z.permuted([l.name for l in labels])
                                   + sol.block_values["T"])
    return RobustnessResult(value=float(s), T=closest, gap=sol.gap)


# ---------------------------------------------------------------------------
# adapter-optimized overlap monotone
# ---------------------------------------------------------------------------


def monotone_fQ(
    w: ProcessMatrix,
    q: LabeledOperator,
    opts: SolverOptions = SolverOptions(),
) -> RobustnessResult:
    """max tr(Q·(Υ ⋆ W)) over non-signalling-preserving adapters Υ.

    Q lives on the primed (output) labels of the canonical adapter layout
    matching ``w``'s party layout.
    """
    from .adapters import adapter_block, primed_layout

    out_layout = primed_layout(w.layout)
    blk = adapter_block(w.layout, "ns")
    rows = link_rows(blk, w.op, out_layout.labels)
    qc = coeff_tensor(q.permuted([l.name for l in out_layout.labels])).reshape(-1)
    obj = np.asarray(rows.T @ qc).reshape(-1)
    trace_target = float(np.prod(
        [l.dim for l in out_layout.labels], dtype=np.int64
    ))
    p = SDPProblem(
        blocks=[blk],
        sense="max",
        objective={blk.name: obj},
        eqs=[EqConstraint({blk.name: blk.trace_row()[None, :]},
                          np.array([trace_target]))],
    )
    sol = solve(p, opts)
    if not sol.optimal:
        return RobustnessResult(value=np.nan, status=sol.status)
    return RobustnessResult(value=float(sol.objective), gap=sol.gap)
