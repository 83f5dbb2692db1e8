"""Tests for the labeled operator algebra.

Derived expectations are checked against independent oracles (double-loop
Kronecker, index summation, explicit channel composition) rather than against
the implementation's own primitives.
"""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from procmat.labeled import (
    DimensionMismatch,
    DuplicateLabel,
    LabeledOperator,
    NotHermitian,
    SpaceLabel,
    Tolerance,
    UnknownLabel,
    choi_identity,
    identity_operator,
    is_psd,
    link_product,
    operator_from_json,
    operator_to_json,
    partial_trace,
    partial_transpose,
    tensor,
    trace_replace,
)

rng = np.random.default_rng(1234)

X = SpaceLabel("X", 2)
Y = SpaceLabel("Y", 2)
Z = SpaceLabel("Z", 3)


def rand_op(*labels, herm=False, seed=None):
    r = np.random.default_rng(seed) if seed is not None else rng
    d = int(np.prod([l.dim for l in labels]))
    m = r.normal(size=(d, d)) + 1j * r.normal(size=(d, d))
    if herm:
        m = 0.5 * (m + m.conj().T)
    return LabeledOperator(labels, m)


def rand_psd(*labels, seed=None):
    a = rand_op(*labels, seed=seed)
    return LabeledOperator(a.factors, a.mat @ a.mat.conj().T)


# ---------------------------------------------------------------------------
# tensor
# ---------------------------------------------------------------------------


def test_tensor_identities():
    a = identity_operator([X])
    b = identity_operator([Z])
    t = tensor(a, b)
    assert t.dim == 6
    assert np.allclose(t.mat, np.eye(6))


def test_tensor_equals_link_on_disjoint_labels():
    a = rand_op(X)
    b = rand_op(Z)
    assert tensor(a, b).allclose(link_product(a, b), atol=1e-12)


def test_tensor_matches_double_loop_kronecker_oracle():
    a = rand_op(X)
    b = rand_op(Y)
    got = tensor(a, b).mat
    # independent double-loop Kronecker
    want = np.zeros((4, 4), dtype=complex)
    for i in range(2):
        for j in range(2):
            want[2 * i : 2 * i + 2, 2 * j : 2 * j + 2] = a.mat[i, j] * b.mat
    assert np.allclose(got, want)


def test_tensor_rejects_duplicate_labels():
    with pytest.raises(DuplicateLabel):
        tensor(rand_op(X), rand_op(X))


# ---------------------------------------------------------------------------
# partial trace / transpose
# ---------------------------------------------------------------------------


def test_partial_trace_of_product():
    a = rand_op(X)
    b = rand_op(Z)
    out = partial_trace(tensor(a, b), {"Z"})
    assert out.names == ("X",)
    assert np.allclose(out.mat, a.mat * np.trace(b.mat))


def test_trace_over_everything_gives_scalar():
    a = rand_op(X, Z)
    out = partial_trace(a, {"X", "Z"})
    assert out.dim == 1
    assert np.isclose(out.mat[0, 0], np.trace(a.mat))


def test_partial_trace_matches_index_summation_oracle():
    a = rand_psd(X, Y)
    got = partial_trace(a, {"Y"}).mat
    want = np.zeros((2, 2), dtype=complex)
    for i in range(2):
        for j in range(2):
            for k in range(2):  # summed Y index
                want[i, j] += a.mat[2 * i + k, 2 * j + k]
    assert np.allclose(got, want)


def test_partial_trace_unknown_label():
    with pytest.raises(UnknownLabel):
        partial_trace(rand_op(X), {"Q"})


def test_partial_transpose_involution():
    a = rand_op(X, Z)
    back = partial_transpose(partial_transpose(a, {"Z"}), {"Z"})
    assert np.array_equal(back.mat, a.mat)


def test_full_transpose_of_symmetric_real_matrix_is_identity():
    m = rng.normal(size=(4, 4))
    m = m + m.T
    a = LabeledOperator((X, Y), m)
    assert np.allclose(partial_transpose(a, {"X", "Y"}).mat, m)


def test_partial_transpose_of_choi_identity_spectrum():
    # PT over one qubit of unnormalized Φ⁺ is the swap operator with
    # eigenvalues {+1,+1,+1,−1}
    phi = choi_identity(X, Y)
    pt = partial_transpose(phi, {"Y"})
    evs = np.sort(np.linalg.eigvalsh(pt.mat))
    assert np.allclose(evs, [-1, 1, 1, 1])


# ---------------------------------------------------------------------------
# trace-and-replace
# ---------------------------------------------------------------------------


def test_trace_replace_product_case():
    a = rand_op(X)
    b = rand_op(Z)
    out = trace_replace(tensor(a, b), {"Z"})
    want = np.kron(a.mat, np.eye(3) / 3) * np.trace(b.mat)
    assert np.allclose(out.mat, want)


def test_trace_replace_label_order_irrelevant():
    a = rand_op(X, Y, Z, herm=True)
    assert trace_replace(a, ["X", "Y"]).allclose(trace_replace(a, ["Y", "X"]),
                                                 atol=1e-12)


def test_trace_replace_self_dual_oracle():
    # tr[Q(_X R)] == tr[(_X Q) R], both sides evaluated independently
    q = rand_op(X, Z, herm=True)
    r = rand_op(X, Z, herm=True)
    lhs = np.trace(q.mat @ trace_replace(r, {"X"}).mat)
    rhs = np.trace(trace_replace(q, {"X"}).mat @ r.mat)
    assert np.isclose(lhs, rhs)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=25, deadline=None)
def test_trace_replace_idempotent_and_trace_preserving(seed):
    a = rand_op(X, Y, herm=True, seed=seed)
    once = trace_replace(a, {"Y"})
    twice = trace_replace(once, {"Y"})
    assert once.allclose(twice, atol=1e-11)
    assert np.isclose(once.trace(), a.trace())


# ---------------------------------------------------------------------------
# link product
# ---------------------------------------------------------------------------


def _choi_of_channel(kraus, frm, to):
    d_in, d_out = frm.dim, to.dim
    m = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for i in range(d_in):
        for j in range(d_in):
            eij = np.zeros((d_in, d_in))
            eij[i, j] = 1.0
            out = sum(k @ eij @ k.conj().T for k in kraus)
            m += np.kron(eij, out)
    return LabeledOperator((frm, to), m)


def _rand_kraus(d_in, d_out, n=3, seed=0):
    r = np.random.default_rng(seed)
    ks = [r.normal(size=(d_out, d_in)) + 1j * r.normal(size=(d_out, d_in))
          for _ in range(n)]
    s = sum(k.conj().T @ k for k in ks)
    inv = np.linalg.inv(_matsqrt(s))
    return [k @ inv for k in ks]


def _matsqrt(m):
    w, v = np.linalg.eigh(m)
    return v @ np.diag(np.sqrt(w)) @ v.conj().T


def test_link_product_identity_channel_relabels():
    mid = SpaceLabel("M", 2)
    m = rand_op(mid)
    phi = choi_identity(mid, X)
    out = link_product(phi, m)
    assert out.names == ("X",)
    # the identity channel Choi contracts as a transpose-canceling relabel
    assert np.allclose(out.mat, m.mat)


def test_link_product_composes_channels_oracle():
    a, b, c = SpaceLabel("a", 2), SpaceLabel("b", 2), SpaceLabel("c", 2)
    k1 = _rand_kraus(2, 2, seed=5)
    k2 = _rand_kraus(2, 2, seed=6)
    choi1 = _choi_of_channel(k1, a, b)
    choi2 = _choi_of_channel(k2, b, c)
    got = link_product(choi2, choi1)
    # oracle: compose the channels as matrix maps, then take the Choi
    k12 = [x @ y for x in k2 for y in k1]
    want = _choi_of_channel(k12, a, c)
    assert got.allclose(want, atol=1e-10)


def test_link_product_commutative_up_to_reordering():
    f = rand_op(X, Y, herm=True)
    l = rand_op(Y, Z, herm=True)
    assert link_product(f, l).allclose(link_product(l, f), atol=1e-10)


def test_link_product_associative():
    w = SpaceLabel("W", 2)
    f = rand_op(X, Y)
    g = rand_op(Y, Z)
    h = rand_op(Z, w)
    lhs = link_product(link_product(f, g), h)
    rhs = link_product(f, link_product(g, h))
    assert lhs.allclose(rhs, atol=1e-9)


def test_link_product_preserves_psd():
    f = rand_psd(X, Y)
    l = rand_psd(Y, Z)
    assert is_psd(link_product(f, l), Tolerance(eps_psd=1e-8, eps_herm=1e-7))


def test_link_product_dim_mismatch():
    y3 = SpaceLabel("Y", 3)
    with pytest.raises(DimensionMismatch):
        link_product(rand_op(X, Y), rand_op(y3, Z))


# ---------------------------------------------------------------------------
# choi_identity / is_psd
# ---------------------------------------------------------------------------


def test_choi_identity_entries_and_trace():
    phi = choi_identity(X, Y)
    assert phi.dim == 4
    assert np.count_nonzero(phi.mat) == 4
    assert np.allclose(np.sort(phi.mat[phi.mat != 0]), [1, 1, 1, 1])
    assert np.isclose(phi.trace(), 2)


def test_choi_identity_chains():
    phi1 = choi_identity(X, Y)
    phi2 = choi_identity(Y, SpaceLabel("Y2", 2))
    chained = link_product(phi2, phi1)
    want = choi_identity(X, SpaceLabel("Y2", 2))
    assert chained.allclose(want, atol=1e-12)


def test_is_psd_basic():
    assert is_psd(identity_operator([X]))
    neg = LabeledOperator((X,), np.diag([1.0, -1.0]))
    assert not is_psd(neg)
    assert is_psd(rand_psd(X, Z))


def test_is_psd_rejects_non_hermitian():
    with pytest.raises(NotHermitian):
        is_psd(rand_op(X))


# ---------------------------------------------------------------------------
# misc
# ---------------------------------------------------------------------------


def test_canonical_reorders_factors():
    a = rand_op(Z, X, herm=True)
    c = a.canonical()
    assert c.names == ("X", "Z")
    assert a.allclose(c, atol=0.0)


def test_json_round_trip_any_factor_order():
    a = rand_op(Z, X, herm=True)
    data = operator_to_json(a)
    back = operator_from_json(data)
    assert back.allclose(a, atol=0.0)
    assert back.names == a.names


def test_json_malformed():
    with pytest.raises(ValueError):
        operator_from_json({"factors": [{"name": "X"}], "re": [[1]]})
