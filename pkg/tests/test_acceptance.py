"""Acceptance suite: one test per published-value or property criterion.

Each test prints a single PASS line (visible with ``pytest -s`` / in the
captured output) summarizing the measured quantity.
"""

import time

import numpy as np
import pytest

from procmat.adapters import (
    Adapter,
    adapter_labels,
    apply_adapter,
    compose_adapters,
    identity_adapter,
    is_admissible,
    is_afp,
    is_free_preserving,
    is_ns,
    make_swap1,
    make_swap2,
    membership_report,
    ns_projector_poly,
    primed_layout,
    random_lose_adapter,
)
from procmat.labeled import (
    LabeledOperator,
    SpaceLabel,
    choi_identity,
    link_product,
    tensor,
    tensor_all,
    trace_replace,
)
from procmat.processes import (
    ProcessMatrix,
    bipartite_layout,
    chain_layout,
    comb_project_ordered,
    make_Z,
    make_a2b,
    make_b2a,
    make_free,
    make_fully_signalling,
    make_mix,
    make_ocb,
    order_legs,
)
from procmat.random_ops import make_rng, random_cptp_choi, random_ordered_comb
from procmat.robustness import (
    causal_robustness,
    robustness_to_proc,
    signalling_robustness,
)
from procmat.search import (
    conversion_feasible,
    sample_process,
    search_afp_nonsep,
    seesaw_causal,
)

LAY = bipartite_layout(2)


def _rs(w, side="dual"):
    return signalling_robustness(w, side=side).value


def _rc(w):
    return causal_robustness(w, side="dual").value


# ---------------------------------------------------------------------------
# 1. signalling robustness of the canonical non-separable process
# ---------------------------------------------------------------------------


def test_criterion_01_rs_ocb():
    t0 = time.time()
    r = signalling_robustness(make_ocb(), side="both")
    elapsed = time.time() - t0
    assert abs(r.value - 1.0) <= 1e-6
    assert r.gap <= 1e-6
    assert elapsed < 2.0
    print(f"[criterion 01] PASS  R_s(ocb)={r.value:.8f} gap={r.gap:.1e} "
          f"t={elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. fully signalling qubit processes all sit at 3
# ---------------------------------------------------------------------------


def test_criterion_02_rs_fully_signalling_triple():
    vals = [_rs(w, side="both") for w in
            (make_a2b(), make_b2a(), make_mix(0.5))]
    for v in vals:
        assert abs(v - 3.0) <= 1e-6
    print(f"[criterion 02] PASS  R_s(a2b,b2a,mix)={['%.8f' % v for v in vals]}")


# ---------------------------------------------------------------------------
# 3. causal robustness values
# ---------------------------------------------------------------------------


def test_criterion_03_rc_values():
    v_ocb = causal_robustness(make_ocb(), side="both").value
    v_a2b = _rc(make_a2b())
    assert abs(v_ocb - 0.1716) <= 5e-4
    assert abs(v_a2b) <= 1e-6
    print(f"[criterion 03] PASS  R_c(ocb)={v_ocb:.6f} R_c(a2b)={v_a2b:.1e}")


# ---------------------------------------------------------------------------
# 4. distance of the boundary operator to the process cone
# ---------------------------------------------------------------------------


def test_criterion_04_rproc_z():
    r = robustness_to_proc(make_Z(), LAY)
    assert abs(r.value - 3.0) <= 1e-6
    wm = make_mix(0.5).op
    dist = r.T.distance(wm.permuted(r.T.names))
    assert dist <= 1e-5
    print(f"[criterion 04] PASS  R_Proc(Z)={r.value:.8f} "
          f"‖closest−mix‖={dist:.1e}")


# ---------------------------------------------------------------------------
# 5. output-replacement dominance on valid processes, with a violator
# ---------------------------------------------------------------------------


def test_criterion_05_output_replacement_dominance():
    dbar2 = max(p.output.dim for p in LAY.parties) ** 2
    worst = 0.0
    for seed in range(500):
        w = sample_process(LAY, 10_000 + seed)
        dom = dbar2 * trace_replace(w.op, LAY.output_names) - w.op
        worst = min(worst, float(np.linalg.eigvalsh(dom.mat).min()))
    assert worst >= -1e-9
    # a sampled PSD trace-4 operator that is *not* a process violates it
    rng = make_rng(99)
    violator_eig = None
    for _ in range(50):
        g = rng.normal(size=(16, 1)) + 1j * rng.normal(size=(16, 1))
        q = g @ g.conj().T
        a = LabeledOperator(LAY.labels, 4.0 * q / np.trace(q).real)
        dom = dbar2 * trace_replace(a, LAY.output_names) - a
        ev = float(np.linalg.eigvalsh(dom.mat).min())
        if ev < -1e-3:
            violator_eig = ev
            break
    assert violator_eig is not None
    print(f"[criterion 05] PASS  500 processes min-eig={worst:.1e}; "
          f"violator min-eig={violator_eig:.3f}")


# ---------------------------------------------------------------------------
# 6. monotonicity under realizable adapters
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_06_monotonicity_under_lose():
    processes = [make_ocb(), make_a2b(), make_mix(0.5)]
    processes += [sample_process(LAY, 20_000 + k) for k in range(7)]
    base = [( _rs(w), _rc(w) ) for w in processes]
    worst_s = worst_c = -np.inf
    for a_seed in range(50):
        ups = random_lose_adapter(LAY, 30_000 + a_seed)
        for w, (rs0, rc0) in zip(processes, base):
            out = apply_adapter(ups, w)
            worst_s = max(worst_s, _rs(out) - rs0)
            worst_c = max(worst_c, _rc(out) - rc0)
    assert worst_s <= 1e-6
    assert worst_c <= 1e-6
    print(f"[criterion 06] PASS  max increase R_s={worst_s:.1e} "
          f"R_c={worst_c:.1e} over 50×10")


# ---------------------------------------------------------------------------
# 7. order preservation under realizable adapters
# ---------------------------------------------------------------------------


def test_criterion_07_order_preservation():
    worst = 0.0
    for seed in range(50):
        order = ["A", "B"] if seed % 2 == 0 else ["B", "A"]
        w = random_ordered_comb(LAY, order=order, rng=40_000 + seed)
        # certify the input order first
        legs = order_legs(LAY, order)
        assert (w.op - comb_project_ordered(w.op, legs)).norm() <= 1e-9
        ups = random_lose_adapter(LAY, 50_000 + seed)
        out = apply_adapter(ups, w)
        plegs = [n + "'" for n in legs]
        resid = (out.op - comb_project_ordered(out.op, plegs)).norm()
        worst = max(worst, float(resid))
    assert worst <= 1e-7
    print(f"[criterion 07] PASS  50 ordered maps, max residual={worst:.1e}")


# ---------------------------------------------------------------------------
# 8. adapter hierarchy fixtures
# ---------------------------------------------------------------------------


def test_criterion_08_hierarchy_fixtures():
    sw1, sw2 = make_swap1(LAY), make_swap2(LAY)
    assert is_free_preserving(sw1) and not is_admissible(sw1)
    assert is_afp(sw2) and not is_ns(sw2)
    for seed in range(5):
        assert is_ns(random_lose_adapter(LAY, 60_000 + seed))
    for kind in ("fp",):
        assert membership_report(sw1, kind).subspace_residual <= 1e-8
    assert membership_report(sw2, "afp").subspace_residual <= 1e-8
    print("[criterion 08] PASS  1SW∈FP∖A, 2SW∈AFP∖NS, LOSE∈NS")


# ---------------------------------------------------------------------------
# 9. conversion suite
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_09_conversion():
    w = make_a2b()
    target = random_ordered_comb(LAY, order=["A", "B"], rng=61_000)
    res = conversion_feasible(w, target, "ns")
    assert res.feasible
    assert res.residual <= 1e-6
    assert is_ns(res.adapter)
    res2 = conversion_feasible(w, make_b2a(), "ns")
    assert not res2.feasible
    print(f"[criterion 09] PASS  a2b→comb feasible (err {res.residual:.1e}); "
          f"a2b→b2a infeasible")


# ---------------------------------------------------------------------------
# 10. AFP non-separability search
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_10_afp_search():
    # the 20-seed aggregate is a minimum, so seeds are evaluated lazily:
    # the first seed reaching the band certifies the multi-start bound
    best = np.inf
    best_res = None
    used = 0
    for seed in range(20):
        res = search_afp_nonsep(seed, rounds=2)
        used += 1
        if res.value < best:
            best, best_res = res.value, res
        if best <= -0.15:
            break
    assert best <= -0.15
    assert is_afp(best_res.adapter)
    out = apply_adapter(best_res.adapter, make_a2b())
    rc = _rc(out)
    assert rc > 1e-3
    print(f"[criterion 10] PASS  best={best:.4f} after {used} seed(s), "
          f"output R_c={rc:.4f}")


# ---------------------------------------------------------------------------
# 11. seesaw multi-start
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_11_seesaw_multistart():
    best = -np.inf
    for seed in range(50):
        tr = seesaw_causal(None, max_rounds=200, seed=seed)
        if len(tr.objectives) > 1:
            assert (np.diff(tr.objectives) >= -1e-6).all()
        best = max(best, tr.best_value - 1.0)
    assert best >= 0.20
    print(f"[criterion 11] PASS  best R_c over 50 seeds = {best:.4f}")


# ---------------------------------------------------------------------------
# 12. convexity of the signalling robustness
# ---------------------------------------------------------------------------


def test_criterion_12_convexity():
    rng = make_rng(71_000)
    worst = -np.inf
    for k in range(100):
        w1 = sample_process(LAY, 72_000 + k)
        w2 = sample_process(LAY, 73_000 + k)
        p = float(rng.uniform())
        mix = ProcessMatrix(
            w1.op * p + w2.op.permuted(w1.op.names) * (1 - p), LAY
        )
        lhs = _rs(mix)
        rhs = p * _rs(w1) + (1 - p) * _rs(w2)
        worst = max(worst, lhs - rhs)
    assert worst <= 1e-6
    print(f"[criterion 12] PASS  100 triples, max convexity gap={worst:.1e}")


# ---------------------------------------------------------------------------
# 13. tripartite signalling bound
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_criterion_13_tripartite_bound():
    layout = chain_layout(["A", "B", "C"])
    d_os = [p.output.dim for p in layout.parties]
    bound = (np.prod(d_os) ** 2) / (max(d_os) ** 2) - 1  # 15 for qubits
    worst = -np.inf
    for seed in range(100):
        w = random_ordered_comb(layout, rng=80_000 + seed, env_dim=2)
        worst = max(worst, signalling_robustness(w, side="primal").value)
    assert worst <= bound + 1e-6
    w_full = make_fully_signalling(layout)
    attained = signalling_robustness(w_full, side="both").value
    assert abs(attained - bound) <= 1e-6
    print(f"[criterion 13] PASS  100 combs max R_s={worst:.4f} ≤ {bound}; "
          f"fully signalling attains {attained:.8f}")


# ---------------------------------------------------------------------------
# 14. extended-channel probe of the NS class
# ---------------------------------------------------------------------------


def _extension_labels():
    return {
        "A": (SpaceLabel("A_eI", 2), SpaceLabel("A_eO", 2)),
        "B": (SpaceLabel("B_eI", 2), SpaceLabel("B_eO", 2)),
    }


def _extended_output_ns_residual(ups: Adapter, channel: LabeledOperator) -> float:
    out = link_product(ups.op, channel)
    pairs = [
        (("A_I", "A_eI"), ("A_O", "A_eO")),
        (("B_I", "B_eI"), ("B_O", "B_eO")),
    ]
    return float((out - ns_projector_poly(pairs).apply(out)).norm())


def _random_extended_product_channel(rng):
    ext = _extension_labels()
    play = primed_layout(LAY)
    parts = []
    for p in play.parties:
        ei, eo = ext[p.name]
        parts.append(random_cptp_choi([p.input, ei], [p.output, eo], rng))
    return tensor_all(parts)


def test_criterion_14_extended_channel_probe():
    rng = make_rng(90_000)
    worst = 0.0
    for seed in range(50):
        ups = random_lose_adapter(LAY, 91_000 + seed)
        n = _random_extended_product_channel(rng)
        worst = max(worst, _extended_output_ns_residual(ups, n))
    assert worst <= 1e-7
    # explicit counterexample for the double swap: each party's local channel
    # swaps its primed wire with its side wire — a non-signalling product
    # channel that the double swap turns into a signalling one
    ext = _extension_labels()
    play = primed_layout(LAY)
    parts = []
    for p in play.parties:
        ei, eo = ext[p.name]
        parts.append(tensor(choi_identity(p.input, eo),
                            choi_identity(ei, p.output)))
    swap_channel = tensor_all(parts)
    resid = _extended_output_ns_residual(make_swap2(LAY), swap_channel)
    assert resid > 1e-3
    print(f"[criterion 14] PASS  50 NS adapters max residual={worst:.1e}; "
          f"2SW counterexample residual={resid:.3f}")


# ---------------------------------------------------------------------------
# transitivity of conversion (module invariant, constructive check)
# ---------------------------------------------------------------------------


def test_conversion_transitive_on_sampled_triples():
    rng = make_rng(95_000)
    for k in range(10):
        w = sample_process(LAY, 96_000 + k)
        u1 = random_lose_adapter(LAY, 97_000 + k)
        u2 = random_lose_adapter(LAY, 98_000 + k)
        w1 = apply_adapter(u1, w)
        comp = compose_adapters(u2, u1)
        direct = apply_adapter(comp, w)
        # sequential: re-express the intermediate on the unprimed layout
        inter = ProcessMatrix(
            LabeledOperator(
                LAY.labels,
                w1.op.permuted([l.name + "'" for l in LAY.labels]).mat,
            ),
            LAY,
        )
        seq = apply_adapter(u2, inter)
        assert direct.op.distance(seq.op.permuted(direct.op.names)) <= 1e-9
        assert is_ns(comp)
    print("[invariant] PASS  conversion transitivity on 10 sampled triples")
