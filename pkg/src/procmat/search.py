"""Stochastic and alternating-optimization procedures.

* ``sample_process`` — rejection sampling of valid processes (Ginibre PSD
  draw, projection onto the validity subspace, trace rescale, PSD accept).
* ``seesaw_causal`` — alternate the causal-robustness dual (witness step)
  with a maximize-overlap SDP over the process subspace.
* ``conversion_feasible`` — decide whether an adapter of a given class maps
  one process onto another.
* ``search_afp_nonsep`` — alternating search for an AFP adapter whose
  output on the fully signalling process is causally non-separable.
* ``degrade_to_order`` — constructive trace-replace degradation of any
  signalling process to a strictly ordered one.

Every procedure is deterministic for a fixed seed (PCG64 streams, one
solver thread per trajectory); multi-start aggregation is a plain max.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from .adapters import (
    Adapter,
    adapter_block,
    apply_adapter,
    class_trace,
    make_trace_replace_adapter,
    primed_layout,
)
from .basis import ReplacePoly, coeff_tensor
from .labeled import LabeledOperator, SpaceLabel
from .processes import (
    Party,
    PartyLayout,
    ProcessMatrix,
    is_free,
    is_ordered,
    project_valid,
    validate_process,
    validity_projector,
)
from .random_ops import ginibre, make_rng
from .robustness import causal_robustness, signalling_robustness
from .sdp import (
    Block,
    EqConstraint,
    SDPProblem,
    SolverOptions,
    link_rows,
    solve,
)

__all__ = [
    "MaxRetriesExceeded",
    "SolverFailure",
    "InputFree",
    "DegradeFailed",
    "SeesawTrace",
    "FeasibilityResult",
    "AfpSearchResult",
    "sample_process",
    "seesaw_causal",
    "conversion_feasible",
    "search_afp_nonsep",
    "degrade_to_order",
]


class MaxRetriesExceeded(RuntimeError):
    """Rejection sampler exhausted its retry budget."""


class SolverFailure(RuntimeError):
    """An SDP inside a search failed to reach an optimum."""


class InputFree(ValueError):
    """Degradation requested for a process with no signalling resource."""


class DegradeFailed(RuntimeError):
    """No strictly ordered output found by the trace-replace sweep."""


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------


def _as_layout(dims: Union[PartyLayout, Sequence[int]]) -> PartyLayout:
    if isinstance(dims, PartyLayout):
        return dims
    dims = list(dims)
    if len(dims) % 2 or not dims or any(d < 1 for d in dims):
        raise ValueError("dims must be positive (in, out) pairs per party")
    names = [chr(ord("A") + k) for k in range(len(dims) // 2)]
    return PartyLayout(
        tuple(
            Party(
                n,
                SpaceLabel(f"{n}_I", dims[2 * k]),
                SpaceLabel(f"{n}_O", dims[2 * k + 1]),
            )
            for k, n in enumerate(names)
        )
    )


def sample_process(
    dims: Union[PartyLayout, Sequence[int]],
    seed,
    max_tries: int = 10_000,
) -> ProcessMatrix:
    """Rejection-sample a valid process: PSD Ginibre draw, project onto the
    validity subspace, rescale to trace d_O, accept iff still PSD."""
    layout = _as_layout(dims)
    rng = make_rng(seed)
    labels = layout.labels
    d = int(np.prod([l.dim for l in labels], dtype=np.int64))
    for _ in range(max_tries):
        g = ginibre(rng, d, d)
        q = LabeledOperator(labels, g @ g.conj().T)
        w = project_valid(q, layout)
        w = (layout.d_out / w.trace().real) * w
        if np.linalg.eigvalsh(w.mat).min() >= -1e-12:
            return ProcessMatrix.build(w, layout)
    raise MaxRetriesExceeded(f"no PSD projection within {max_tries} draws")


# ---------------------------------------------------------------------------
# seesaw for extremal causal robustness
# ---------------------------------------------------------------------------


@dataclass
class SeesawTrace:
    objectives: list = field(default_factory=list)  # tr(W·S) per round
    witnesses: list = field(default_factory=list)
    processes: list = field(default_factory=list)
    converged: bool = False
    stalls: int = 0
    status: str = "ok"

    @property
    def best_value(self) -> float:
        return max(self.objectives) if self.objectives else np.nan

    @property
    def best_process(self) -> Optional[LabeledOperator]:
        return self.processes[-1] if self.processes else None

    @property
    def best_witness(self) -> Optional[LabeledOperator]:
        return self.witnesses[-1] if self.witnesses else None


def seesaw_causal(
    w0: Optional[ProcessMatrix] = None,
    max_rounds: int = 200,
    seed=0,
    opts: SolverOptions = SolverOptions(),
) -> SeesawTrace:
    """Alternate the causal-robustness dual (best witness for the current
    process) with maximizing the witness overlap over all valid processes.

    The objective tr(W·S) equals 1 + causal robustness at the witness
    steps and is nondecreasing throughout.
    """
    if w0 is None:
        w0 = sample_process(_as_layout([2, 2, 2, 2]), seed)
    layout = w0.layout
    labels = layout.labels
    d_out = layout.d_out
    w_blk = Block.subspace(
        "W", labels, [ReplacePoly.identity() - validity_projector(layout)]
    )
    trace = SeesawTrace()
    w = w0
    prev = -np.inf
    for _ in range(max_rounds):
        dual = causal_robustness(w, side="dual", opts=opts)
        if dual.status != "optimal" or dual.witness is None:
            trace.status = f"solver:{dual.status}"
            break
        s_op = (1.0 / d_out) * _identity_like(labels) - dual.witness.op
        obj = dual.value + 1.0
        # process step: maximize tr(W·S) over the process subspace
        p = SDPProblem(
            blocks=[w_blk],
            sense="max",
            objective={"W": w_blk.coeffs_of(project_valid(s_op, layout))},
            eqs=[
                EqConstraint(
                    {"W": w_blk.trace_row()[None, :]}, np.array([float(d_out)])
                )
            ],
        )
        sol = solve(p, opts)
        if not sol.optimal:
            trace.status = f"solver:{sol.status}"
            break
        obj = max(obj, sol.objective)
        w = ProcessMatrix(sol.block_values["W"], layout)
        trace.objectives.append(obj)
        trace.witnesses.append(s_op)
        trace.processes.append(w.op)
        if obj - prev < 1e-7:
            trace.stalls += 1
            if trace.stalls >= 3:
                trace.converged = True
                break
        else:
            trace.stalls = 0
        prev = obj
    return trace


def _identity_like(labels) -> LabeledOperator:
    from .labeled import identity_operator

    return identity_operator(labels)


# ---------------------------------------------------------------------------
# conversion feasibility
# ---------------------------------------------------------------------------


def polish_block_operator(
    op: LabeledOperator,
    blk: Block,
    trace_target: float,
    iters: int = 300,
    tol: float = 1e-11,
) -> LabeledOperator:
    """Alternating projections onto the PSD cone and the block's coefficient
    subspace (with trace fixed), to strip first-order solver noise."""
    from .basis import from_coeff_tensor

    shape = tuple(f.dim * f.dim for f in blk.factors)
    mask = np.zeros(int(np.prod(shape, dtype=np.int64)), dtype=bool)
    mask[blk.string_indices] = True
    cur = op.permuted([f.name for f in blk.factors])
    for _ in range(iters):
        vals, vecs = np.linalg.eigh(cur.mat)
        psd_gap = max(0.0, -float(vals.min()))
        clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
        c = coeff_tensor(
            LabeledOperator(blk.factors, clipped)
        ).reshape(-1)
        sub_gap = float(np.linalg.norm(c[~mask]))
        c[~mask] = 0.0
        cur = from_coeff_tensor(c.reshape(shape), blk.factors)
        cur = (trace_target / cur.trace().real) * cur
        if psd_gap <= tol and sub_gap <= tol:
            break
    return cur


@dataclass
class FeasibilityResult:
    feasible: bool
    adapter: Optional[Adapter] = None
    residual: float = np.nan  # ‖Υ⋆W − W′‖ when feasible
    certificate: Optional[np.ndarray] = None  # eq multipliers when infeasible
    status: str = "optimal"


def conversion_feasible(
    w: ProcessMatrix,
    w_target: ProcessMatrix,
    adapter_class: str = "ns",
    opts: SolverOptions = SolverOptions(gap_tol=1e-7),
) -> FeasibilityResult:
    """Decide whether some adapter of the class maps w onto w_target."""
    layout = w.layout
    play = primed_layout(layout)
    blk = adapter_block(layout, adapter_class)
    rows = link_rows(blk, w.op, play.labels)
    target = w_target.op.permuted([l.name for l in layout.labels])
    tvec = coeff_tensor(
        LabeledOperator(play.labels, target.mat)
    ).reshape(-1)
    p = SDPProblem(
        blocks=[blk],
        sense="min",
        objective={},
        eqs=[
            EqConstraint({blk.name: rows}, tvec, name="maps-onto-target"),
            EqConstraint(
                {blk.name: blk.trace_row()[None, :]},
                np.array([class_trace(layout, adapter_class)]),
                name="class-trace",
            ),
        ],
    )
    sol = solve(p, opts)
    if sol.status == "infeasible":
        cert = sol.eq_duals[0] if sol.eq_duals else None
        return FeasibilityResult(False, certificate=cert, status=sol.status)
    if not sol.optimal:
        raise SolverFailure(f"conversion SDP ended with status {sol.status}")
    polished = polish_block_operator(
        sol.block_values[blk.name], blk, class_trace(layout, adapter_class)
    )
    adapter = Adapter(polished, layout)
    out = apply_adapter(adapter, w)
    resid = out.op.distance(LabeledOperator(play.labels, target.mat))
    return FeasibilityResult(True, adapter=adapter, residual=float(resid))


# ---------------------------------------------------------------------------
# AFP non-separability search
# ---------------------------------------------------------------------------


@dataclass
class AfpSearchResult:
    adapter: Optional[Adapter]
    value: float
    status: str  # "violation" | "no-violation-found" | "solver:<...>"
    trace: list = field(default_factory=list)


def search_afp_nonsep(
    seed,
    rounds: int = 3,
    opts: SolverOptions = SolverOptions(gap_tol=1e-4, scs_max_iters=10_000),
) -> AfpSearchResult:
    """Alternating search for an AFP adapter creating causal non-separability
    out of the fully signalling process.

    Round structure: fix a witness G and minimize tr[(Υ⋆W)·G] over the AFP
    class, then refit G as the causal-robustness dual witness of the output.
    The value tr[(Υ⋆W)·G] equals −(causal robustness of the output) after
    each witness refit, so anything below −1e-3 certifies the finding.
    """
    from .processes import make_a2b

    w = make_a2b()
    layout = w.layout
    play = primed_layout(layout)
    blk = adapter_block(layout, "afp")
    rows = link_rows(blk, w.op, play.labels)
    trace_eq = EqConstraint(
        {blk.name: blk.trace_row()[None, :]},
        np.array([class_trace(layout, "afp")]),
        name="class-trace",
    )
    # seed the witness from a random process's causal dual
    w_rand = sample_process(layout, seed)
    g = causal_robustness(w_rand, side="dual", opts=SolverOptions()).witness.op
    g = LabeledOperator(play.labels, g.permuted([l.name for l in layout.labels]).mat)

    best_val = np.inf
    best_adapter = None
    history = []
    prev = np.inf
    for _ in range(rounds):
        gvec = coeff_tensor(g).reshape(-1)
        obj = np.asarray(rows.T @ gvec).reshape(-1)
        p = SDPProblem(blocks=[blk], sense="min",
                       objective={blk.name: obj}, eqs=[trace_eq])
        sol = solve(p, opts)
        if not sol.optimal:
            return AfpSearchResult(best_adapter, best_val,
                                   f"solver:{sol.status}", history)
        polished = polish_block_operator(
            sol.block_values[blk.name], blk, class_trace(layout, "afp")
        )
        ups = Adapter(polished, layout)
        out = apply_linked(ups, w, play)
        dual = causal_robustness(ProcessMatrix(out, play), side="dual",
                                 opts=SolverOptions())
        if dual.status != "optimal" or dual.witness is None:
            return AfpSearchResult(best_adapter, best_val,
                                   f"solver:{dual.status}", history)
        val = dual.witness.value  # = −R_c(output)
        history.append(val)
        if val < best_val:
            best_val = val
            best_adapter = ups
        g = dual.witness.op
        if prev - val < 1e-5:
            break
        prev = val
    status = "violation" if best_val < -1e-3 else "no-violation-found"
    return AfpSearchResult(best_adapter, float(best_val), status, history)


def apply_linked(ups: Adapter, w: ProcessMatrix, play: PartyLayout) -> LabeledOperator:
    """Υ ⋆ W with a gentle cleanup (validity projection, PSD clip) so that
    first-order solver noise does not leak into downstream SDPs."""
    from .labeled import link_product

    out = link_product(ups.op, w.op).permuted([l.name for l in play.labels])
    out = project_valid(out, play)
    vals, vecs = np.linalg.eigh(out.mat)
    clipped = (vecs * np.clip(vals, 0.0, None)) @ vecs.conj().T
    clipped *= play.d_out / np.trace(clipped).real
    out = LabeledOperator(play.labels, clipped)
    return project_valid(out, play)


# ---------------------------------------------------------------------------
# degradation to a strict causal order
# ---------------------------------------------------------------------------


def _tomographic_states(label: SpaceLabel) -> list[LabeledOperator]:
    d = label.dim
    states = []
    for i in range(d):
        v = np.zeros(d, dtype=complex)
        v[i] = 1.0
        states.append(v)
    for i in range(d):
        for j in range(i + 1, d):
            for phase in (1.0, 1j):
                v = np.zeros(d, dtype=complex)
                v[i] = 1.0 / np.sqrt(2)
                v[j] = phase / np.sqrt(2)
                states.append(v)
    return [LabeledOperator((label,), np.outer(v, v.conj())) for v in states]


def degrade_to_order(
    w: ProcessMatrix,
    order: Optional[Sequence[str]] = None,
    eps: float = 1e-6,
) -> tuple[Adapter, ProcessMatrix, tuple[str, ...]]:
    """Sever one party's output wire (trace-replace adapter, optionally
    feeding a swept pure state) until the output is strictly ordered.

    With ``order`` given, only that target order is attempted; otherwise
    both are tried, severed-last-party first.
    """
    if signalling_robustness(w, side="primal").value <= eps:
        raise InputFree("no signalling to order")
    layout = w.layout
    names = [p.name for p in layout.parties]
    if order is not None:
        targets = [tuple(order)]
    else:
        targets = [tuple(names), tuple(reversed(names))]
    for target in targets:
        severed = target[-1]  # killing the last party's output wire
        out_label = layout.party(severed).output
        candidates = [None] + _tomographic_states(out_label)
        for state in candidates:
            states = None if state is None else {severed: state}
            adapter = make_trace_replace_adapter(layout, [severed], states)
            out = apply_adapter(adapter, w)
            fwd = is_ordered(out, list(target))
            bwd = is_ordered(out, list(reversed(target)))
            if fwd and not bwd:
                return adapter, out, target
    raise DegradeFailed("no strictly ordered output under the sweep")
