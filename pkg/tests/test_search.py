"""Sampling, seesaw, conversion, degradation."""

import numpy as np
import pytest

from procmat.adapters import is_ns
from procmat.labeled import LabeledOperator
from procmat.processes import (
    bipartite_layout,
    is_ordered,
    make_free,
    make_a2b,
    make_b2a,
    make_mix,
    make_ocb,
    validate_process,
)
from procmat.search import (
    DegradeFailed,
    InputFree,
    conversion_feasible,
    degrade_to_order,
    sample_process,
    seesaw_causal,
)

LAY = bipartite_layout(2)


# ---------------------------------------------------------------------------
# sampler
# ---------------------------------------------------------------------------


def test_sampler_deterministic():
    a = sample_process(LAY, 7)
    b = sample_process(LAY, 7)
    assert np.array_equal(a.op.mat, b.op.mat)
    c = sample_process(LAY, 8)
    assert not np.allclose(a.op.mat, c.op.mat)


def test_sampler_outputs_valid_processes():
    for seed in range(20):
        w = sample_process([2, 2, 2, 2], seed)
        assert validate_process(w.op, w.layout).accepted


def test_sampler_dims_validation():
    with pytest.raises(ValueError):
        sample_process([2, 2, 2], 0)
    with pytest.raises(ValueError):
        sample_process([2, 0, 2, 2], 0)


def test_sampler_acceptance_rate_positive():
    # the rejection loop must accept within a modest budget for qubits
    ok = 0
    for seed in range(10):
        try:
            sample_process(LAY, seed, max_tries=50)
            ok += 1
        except Exception:
            pass
    assert ok > 0


# ---------------------------------------------------------------------------
# seesaw
# ---------------------------------------------------------------------------


def test_seesaw_from_ocb_reaches_at_least_its_own_robustness():
    tr = seesaw_causal(make_ocb(), max_rounds=30)
    assert tr.best_value >= 1.1716 - 1e-4
    diffs = np.diff(tr.objectives)
    assert (diffs >= -1e-9).all()


def test_seesaw_from_separable_terminates_flat():
    tr = seesaw_causal(make_a2b(), max_rounds=20)
    assert tr.best_value <= 1.0 + 1e-6
    assert tr.converged


def test_seesaw_random_start_monotone():
    tr = seesaw_causal(None, max_rounds=15, seed=3)
    assert len(tr.objectives) >= 1
    diffs = np.diff(tr.objectives)
    assert (diffs >= -1e-9).all()


# ---------------------------------------------------------------------------
# conversion feasibility
# ---------------------------------------------------------------------------


@pytest.mark.slow
def test_conversion_reflexive():
    w = make_ocb()
    res = conversion_feasible(w, w, "ns")
    assert res.feasible
    assert res.residual <= 1e-6
    assert is_ns(res.adapter)


@pytest.mark.slow
def test_conversion_cannot_reverse_order():
    res = conversion_feasible(make_a2b(), make_b2a(), "ns")
    assert not res.feasible
    assert res.status == "infeasible"


# ---------------------------------------------------------------------------
# degradation to strict order
# ---------------------------------------------------------------------------


def test_degrade_ocb_both_orders():
    for order in (("A", "B"), ("B", "A")):
        adapter, out, got = degrade_to_order(make_ocb(), order=order)
        assert got == order
        assert is_ordered(out, list(order))
        assert not is_ordered(out, list(reversed(order)))
        assert is_ns(adapter)


def test_degrade_mix_strictly_ordered():
    adapter, out, order = degrade_to_order(make_mix(0.5))
    assert is_ordered(out, list(order))
    assert not is_ordered(out, list(reversed(order)))


def test_degrade_free_raises():
    with pytest.raises(InputFree):
        degrade_to_order(make_free())
