"""Seeded random states, channels, and ordered combs.

All sampling goes through numpy's PCG64 generator with explicit seeds, so
identical seeds give identical streams on every platform.
"""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

from .labeled import LabeledOperator, SpaceLabel, identity_operator, link_all, tensor
from .processes import PartyLayout, ProcessMatrix

__all__ = [
    "make_rng",
    "ginibre",
    "random_state",
    "random_pure_state_vec",
    "random_cptp_choi",
    "random_ordered_comb",
]


def make_rng(seed) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.Generator(np.random.PCG64(seed))


def ginibre(rng: np.random.Generator, n: int, m: int) -> np.ndarray:
    return rng.normal(size=(n, m)) + 1j * rng.normal(size=(n, m))


def random_state(
    labels: Sequence[SpaceLabel], rng, rank: Optional[int] = None
) -> LabeledOperator:
    """Unit-trace PSD operator, Hilbert–Schmidt-style (Ginibre) sampling."""
    rng = make_rng(rng)
    d = int(np.prod([l.dim for l in labels]))
    g = ginibre(rng, d, rank or d)
    q = g @ g.conj().T
    return LabeledOperator(labels, q / np.trace(q))


def random_pure_state_vec(rng, d: int) -> np.ndarray:
    rng = make_rng(rng)
    v = ginibre(rng, d, 1)[:, 0]
    return v / np.linalg.norm(v)


def random_cptp_choi(
    in_labels: Sequence[SpaceLabel],
    out_labels: Sequence[SpaceLabel],
    rng,
    kraus_rank: Optional[int] = None,
) -> LabeledOperator:
    """Choi matrix of a Haar-ish random CPTP map (random Stinespring isometry).

    Factor order is (inputs…, outputs…); tr_out equals the identity.
    """
    rng = make_rng(rng)
    d_in = int(np.prod([l.dim for l in in_labels]))
    d_out = int(np.prod([l.dim for l in out_labels]))
    k = kraus_rank or d_out
    g = ginibre(rng, d_out * k, d_in)
    # QR gives a Haar-distributed isometry d_in → d_out ⊗ env(k)
    q, r = np.linalg.qr(g)
    q = q * np.sign(np.diag(r))  # fix phases for determinism
    v = q.reshape(d_out, k, d_in)
    kraus = [v[:, l, :] for l in range(k)]
    m = np.zeros((d_in * d_out, d_in * d_out), dtype=complex)
    for kr in kraus:
        # Σ_{ij} |i⟩⟨j| ⊗ K|i⟩⟨j|K†  assembled as an outer product
        blk = np.einsum("oi,pj->iojp", kr, kr.conj())
        m += blk.reshape(d_in * d_out, d_in * d_out)
    return LabeledOperator(tuple(in_labels) + tuple(out_labels), m)


def random_ordered_comb(
    layout: PartyLayout,
    order: Optional[Sequence[str]] = None,
    rng=0,
    env_dim: int = 2,
) -> ProcessMatrix:
    """Ordered comb sampled as a random circuit: initial pure system-memory
    state, chained random channels with memory, identity on the last output."""
    rng = make_rng(rng)
    names = list(order) if order is not None else [p.name for p in layout.parties]
    parties = [layout.party(n) for n in names]
    n = len(parties)
    e = [SpaceLabel(f"_E{i}", env_dim) for i in range(1, n)]
    first = parties[0].input
    vec = random_pure_state_vec(rng, first.dim * e[0].dim)
    pieces = [LabeledOperator((first, e[0]), np.outer(vec, vec.conj()))]
    for k in range(1, n):
        ins = [e[k - 1], parties[k - 1].output]
        outs = [parties[k].input] + ([e[k]] if k < n - 1 else [])
        pieces.append(random_cptp_choi(ins, outs, rng))
    op = link_all(pieces)
    op = tensor(op, identity_operator([parties[-1].output]))
    op = op.permuted([l.name for l in layout.labels])
    comb_order = names if n > 2 else None
    return ProcessMatrix.build(op, layout, order=comb_order)
