"""Semidefinite programs over Hermitian blocks with labeled factors.

Problems are stated over Hermitian variable blocks (optionally restricted to
a subspace spanned by a subset of product-basis strings, which is how all
projector constraints enter) plus scalar variables, with linear equality and
operator-inequality (⪰) constraints.  Complex Hermitian data is embedded as
real symmetric via ``realify``; the factor-2 trace convention lives *only*
inside this module — callers state objectives and read off values in the
complex picture throughout.

The numerical core is delegated to an interior-point conic backend
(clarabel, default) or a first-order one (scs, for the large adapter
programs); both satisfy the same conformance suite.  Solutions report
status, primal block values, dual multipliers, objective, and the
primal-dual gap.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Mapping, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp

from .basis import ReplacePoly, coeff_tensor, fixed_string_mask, ggm_basis
from .labeled import LabeledOperator, NotHermitian, SpaceLabel

__all__ = [
    "Block",
    "ScalarVar",
    "EqConstraint",
    "PsdConstraint",
    "SDPProblem",
    "SDPSolution",
    "SolverOptions",
    "IllFormed",
    "NumericalBreakdown",
    "realify",
    "derealify",
    "solve",
]


class IllFormed(ValueError):
    """Problem data inconsistent (dimensions, labels, shapes)."""


class NumericalBreakdown(RuntimeError):
    """Backend failed without a usable status."""


# ---------------------------------------------------------------------------
# realification
# ---------------------------------------------------------------------------


def realify(h: Union[LabeledOperator, np.ndarray], eps_herm: float = 1e-9) -> np.ndarray:
    """[[Re,−Im],[Im,Re]] embedding of a Hermitian matrix.

    Eigenvalues are doubled in multiplicity; PSD is preserved both ways.
    Note tr(realify(a)·realify(b)) = 2·tr(a·b) for Hermitian a, b.
    """
    m = h.mat if isinstance(h, LabeledOperator) else np.asarray(h, dtype=complex)
    if np.linalg.norm(m - m.conj().T) > eps_herm * max(1.0, np.linalg.norm(m)):
        raise NotHermitian("realify requires a Hermitian input")
    m = 0.5 * (m + m.conj().T)
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def derealify(r: np.ndarray) -> np.ndarray:
    """Inverse of :func:`realify` (averages the redundant blocks)."""
    n2 = r.shape[0]
    if n2 % 2:
        raise IllFormed("derealify needs even dimension")
    n = n2 // 2
    re = 0.5 * (r[:n, :n] + r[n:, n:])
    im = 0.5 * (r[n:, :n] - r[:n, n:])
    m = re + 1j * im
    return 0.5 * (m + m.conj().T)


# ---------------------------------------------------------------------------
# scaled-triangle vectorization (svec) in both backend orderings
# ---------------------------------------------------------------------------

_SQ2 = np.sqrt(2.0)


def _svec_pos(i: np.ndarray, j: np.ndarray, n: int, order: str) -> np.ndarray:
    """Position of entry (i,j), i ≥ j, in the stacked triangle."""
    if order == "triu_colmajor":  # clarabel: upper triangle, column-major
        # entry (j,i) of the upper triangle at column i, row j
        return (i * (i + 1)) // 2 + j
    if order == "tril_colmajor":  # scs: lower triangle, column-major
        return j * n - (j * (j - 1)) // 2 + (i - j)
    raise ValueError(order)


def svec_dense(m: np.ndarray, order: str) -> np.ndarray:
    """svec of a dense real symmetric matrix (off-diagonal scaled by √2)."""
    n = m.shape[0]
    i, j = np.tril_indices(n)
    vals = m[i, j] * np.where(i == j, 1.0, _SQ2)
    out = np.zeros(n * (n + 1) // 2)
    out[_svec_pos(i, j, n, order)] = vals
    return out


def unsvec_dense(v: np.ndarray, n: int, order: str) -> np.ndarray:
    i, j = np.tril_indices(n)
    vals = v[_svec_pos(i, j, n, order)] / np.where(i == j, 1.0, _SQ2)
    m = np.zeros((n, n))
    m[i, j] = vals
    m[j, i] = vals
    return m


# ---------------------------------------------------------------------------
# product-basis string matrices → svec columns
# ---------------------------------------------------------------------------


@lru_cache(maxsize=64)
def _factor_elements(d: int):
    """Sparse (rows, cols, vals) triples for each basis element of dim d."""
    g = ggm_basis(d)
    out = []
    for s in range(d * d):
        r, c = np.nonzero(np.abs(g[s]) > 1e-14)
        out.append((r.astype(np.int64), c.astype(np.int64), g[s][r, c]))
    return out


def _string_entries(dims: Sequence[int], multi: Sequence[int]):
    """Entries of g_{s₁}⊗…⊗g_{s_k} as (rows, cols, vals)."""
    rows = np.zeros(1, dtype=np.int64)
    cols = np.zeros(1, dtype=np.int64)
    vals = np.ones(1, dtype=complex)
    for d, s in zip(dims, multi):
        r, c, v = _factor_elements(d)[s]
        rows = (rows[:, None] * d + r[None, :]).reshape(-1)
        cols = (cols[:, None] * d + c[None, :]).reshape(-1)
        vals = (vals[:, None] * v[None, :]).reshape(-1)
    return rows, cols, vals


_SVEC_CACHE: dict = {}


def svec_columns(dims: tuple[int, ...], strings: np.ndarray, order: str) -> sp.csc_matrix:
    """Sparse matrix whose column s is svec(realify(g_s)), g_s the product-
    basis string with flat index strings[s]."""
    key = (dims, strings.tobytes(), order)
    hit = _SVEC_CACHE.get(key)
    if hit is not None:
        return hit
    n = int(np.prod(dims, dtype=np.int64))
    shape = tuple(d * d for d in dims)
    svlen = (2 * n) * (2 * n + 1) // 2
    data, ridx, cidx = [], [], []
    for col, flat in enumerate(strings):
        multi = np.unravel_index(int(flat), shape)
        r, c, v = _string_entries(dims, multi)
        # realified entries: the complex entry list already holds both (r,c)
        # and (c,r), so the three blocks below cover the whole symmetric
        # matrix; the top-right block never reaches the lower triangle
        rr = np.concatenate([r, r + n, r + n])
        cc = np.concatenate([c, c + n, c])
        vv = np.concatenate([v.real, v.real, v.imag])
        keep = (rr >= cc) & (np.abs(vv) > 1e-14)
        rr, cc, vv = rr[keep], cc[keep], vv[keep]
        vals = vv * np.where(rr == cc, 1.0, _SQ2)
        pos = _svec_pos(rr, cc, 2 * n, order)
        ridx.append(pos)
        cidx.append(np.full(len(pos), col, dtype=np.int64))
        data.append(vals)
    m = sp.csc_matrix(
        (np.concatenate(data), (np.concatenate(ridx), np.concatenate(cidx))),
        shape=(svlen, len(strings)),
    )
    _SVEC_CACHE[key] = m
    return m


# ---------------------------------------------------------------------------
# problem statement
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Block:
    """A Hermitian variable block, parametrized by real coefficients on a
    (possibly restricted) set of product-basis strings."""

    name: str
    factors: tuple[SpaceLabel, ...]
    psd: bool = True
    strings: Optional[np.ndarray] = None  # flat indices; None = full basis

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))

    @property
    def string_indices(self) -> np.ndarray:
        if self.strings is not None:
            return self.strings
        return np.arange(self.dim**2, dtype=np.int64)

    @property
    def n_coeffs(self) -> int:
        return len(self.string_indices)

    @staticmethod
    def full(name: str, factors: Sequence[SpaceLabel], psd: bool = True) -> "Block":
        return Block(name, tuple(factors), psd, None)

    @staticmethod
    def subspace(
        name: str,
        factors: Sequence[SpaceLabel],
        vanish: Sequence[ReplacePoly],
        psd: bool = True,
    ) -> "Block":
        """Block constrained to the joint kernel of the given polynomials."""
        factors = tuple(factors)
        names = [f.name for f in factors]
        dims = [f.dim for f in factors]
        mask = fixed_string_mask(vanish, names, dims)
        strings = np.nonzero(mask.reshape(-1))[0].astype(np.int64)
        return Block(name, factors, psd, strings)

    # -- coefficient helpers ------------------------------------------------

    def coeffs_of(self, op: LabeledOperator) -> np.ndarray:
        """Coefficient vector of an operator on this block's strings.

        Raises if the operator has weight outside the block's subspace.
        """
        aligned = op.permuted([f.name for f in self.factors])
        c = coeff_tensor(aligned).reshape(-1)
        out = c[self.string_indices]
        rest = np.linalg.norm(c) ** 2 - np.linalg.norm(out) ** 2
        if rest > 1e-12 * max(1.0, np.linalg.norm(c) ** 2):
            raise IllFormed(f"operator leaves block {self.name}'s subspace")
        return out

    def operator_of(self, x: np.ndarray) -> LabeledOperator:
        from .basis import from_coeff_tensor

        full = np.zeros(self.dim**2)
        full[self.string_indices] = x
        shape = tuple(d * d for d in self.dims)
        return from_coeff_tensor(full.reshape(shape), self.factors)

    def trace_row(self) -> np.ndarray:
        """Row vector r with r·x = tr(X)."""
        r = np.zeros(self.n_coeffs)
        where = np.nonzero(self.string_indices == 0)[0]
        if len(where):
            r[where[0]] = np.sqrt(self.dim)
        return r


@dataclass(frozen=True)
class ScalarVar:
    name: str
    nonneg: bool = True


@dataclass
class EqConstraint:
    """Σ_v terms[v]·x_v = rhs  (rows are real linear functionals)."""

    terms: dict
    rhs: np.ndarray
    name: str = ""


@dataclass
class PsdConstraint:
    """Σ_v terms[v]·x_v + const ⪰ 0 on the given factors.

    Each term maps a variable's coefficient vector into the full product-
    basis coefficient space of the expression (shape: expr-strings × n_var);
    scalar variables count as one-coefficient blocks.
    """

    factors: tuple[SpaceLabel, ...]
    terms: dict
    const: Optional[LabeledOperator] = None
    name: str = ""

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(f.dim for f in self.factors)

    @property
    def dim(self) -> int:
        return int(np.prod(self.dims, dtype=np.int64))


@dataclass
class SDPProblem:
    blocks: list
    scalars: list = field(default_factory=list)
    sense: str = "min"
    objective: dict = field(default_factory=dict)  # var name → vec / float
    obj_constant: float = 0.0
    eqs: list = field(default_factory=list)
    psds: list = field(default_factory=list)

    def block(self, name: str) -> Block:
        for b in self.blocks:
            if b.name == name:
                return b
        raise IllFormed(f"no block {name}")


@dataclass(frozen=True)
class SolverOptions:
    feas_tol: float = 1e-9
    gap_tol: float = 1e-8
    max_iter: int = 200
    backend: str = "auto"  # auto | clarabel | scs
    verbose: bool = False
    scs_max_iters: int = 200_000
    # interior-point cost grows with the square of the svec length, so big
    # cones go to the first-order backend instead
    auto_psd_limit: int = 128


@dataclass
class SDPSolution:
    status: str  # optimal | infeasible | unbounded | max_iter | numerical
    objective: float
    gap: float
    block_values: dict
    scalar_values: dict
    eq_duals: list
    psd_duals: list  # complex Hermitian multipliers (pairing: 2·tr(Z·expr))
    solve_time: float = 0.0

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


# ---------------------------------------------------------------------------
# assembly + backends
# ---------------------------------------------------------------------------


def _var_layout(p: SDPProblem):
    offsets = {}
    n = 0
    for s in p.scalars:
        offsets[s.name] = (n, 1)
        n += 1
    for b in p.blocks:
        offsets[b.name] = (n, b.n_coeffs)
        n += b.n_coeffs
    return offsets, n


def _stack_term(rows_out, cols_out, vals_out, mat, row0: int, col0: int):
    m = sp.coo_matrix(mat)
    rows_out.append(m.row + row0)
    cols_out.append(m.col + col0)
    vals_out.append(m.data)


def solve(p: SDPProblem, opts: SolverOptions = SolverOptions()) -> SDPSolution:
    offsets, nvar = _var_layout(p)
    if nvar == 0:
        raise IllFormed("no variables")
    sign = 1.0 if p.sense == "min" else -1.0
    q = np.zeros(nvar)
    for name, coef in p.objective.items():
        if name not in offsets:
            raise IllFormed(f"objective references unknown variable {name}")
        off, width = offsets[name]
        coef_arr = np.atleast_1d(np.asarray(coef, dtype=float))
        if coef_arr.shape != (width,):
            raise IllFormed(f"objective width mismatch for {name}")
        q[off : off + width] = sign * coef_arr

    rows, cols, vals = [], [], []
    b_parts = []
    cones = []  # list of ("zero"|"nonneg"|"psd", size)
    nrow = 0

    # equalities → zero cone
    for eq in p.eqs:
        m = len(np.atleast_1d(eq.rhs))
        for name, mat in eq.terms.items():
            if name not in offsets:
                raise IllFormed(f"constraint references unknown variable {name}")
            off, width = offsets[name]
            mat = np.atleast_2d(mat) if not sp.issparse(mat) else mat
            if mat.shape != (m, width):
                raise IllFormed(
                    f"eq '{eq.name}': term {name} shape {mat.shape} != {(m, width)}"
                )
            _stack_term(rows, cols, vals, mat, nrow, off)
        b_parts.append(np.atleast_1d(np.asarray(eq.rhs, dtype=float)))
        cones.append(("zero", m))
        nrow += m

    # scalar sign constraints → nonnegative cone (x ≥ 0 ⇒ s = x)
    nn = [s for s in p.scalars if s.nonneg]
    if nn:
        for s in nn:
            off, _ = offsets[s.name]
            rows.append(np.array([nrow]))
            cols.append(np.array([off]))
            vals.append(np.array([-1.0]))
            nrow += 1
        b_parts.append(np.zeros(len(nn)))
        cones.append(("nonneg", len(nn)))

    backend = opts.backend
    if backend == "auto":
        biggest = max(
            [2 * b.dim for b in p.blocks if b.psd]
            + [2 * c.dim for c in p.psds]
            + [0]
        )
        backend = "clarabel" if biggest <= opts.auto_psd_limit else "scs"
    order = "triu_colmajor" if backend == "clarabel" else "tril_colmajor"
    psd_meta = []  # (row0, matdim)

    def add_psd_rows(dims, terms, const, blocks_by_name):
        nonlocal nrow
        n = int(np.prod(dims, dtype=np.int64))
        svlen = (2 * n) * (2 * n + 1) // 2
        # collect the expression's active strings
        active = set()
        const_vec = None
        if const is not None:
            cvec = coeff_tensor(const).reshape(-1)
            nz = np.nonzero(np.abs(cvec) > 1e-14)[0]
            active.update(nz.tolist())
        mats = {}
        for name, mat in terms.items():
            m = sp.csr_matrix(mat)
            mats[name] = m
            active.update(np.unique(m.tocoo().row).tolist())
        active = np.array(sorted(active), dtype=np.int64)
        cols_sv = svec_columns(tuple(dims), active, order)
        lookup = {int(s): i for i, s in enumerate(active)}
        for name, m in mats.items():
            off, width = offsets[name]
            mc = m.tocoo()
            local = np.array([lookup[int(r)] for r in mc.row], dtype=np.int64)
            restricted = sp.csc_matrix(
                (mc.data, (local, mc.col)), shape=(len(active), width)
            )
            _stack_term(rows, cols, vals, -(cols_sv @ restricted), nrow, off)
        if const is not None:
            cv = np.zeros(len(active))
            for s, i in lookup.items():
                cv[i] = cvec[s]
            b_parts.append(cols_sv @ cv)
        else:
            b_parts.append(np.zeros(svlen))
        cones.append(("psd", 2 * n))
        psd_meta.append((nrow, 2 * n))
        nrow += svlen

    blocks_by_name = {b.name: b for b in p.blocks}

    # PSD cones for psd-flagged blocks
    block_cone_index = {}
    for b in p.blocks:
        if b.psd:
            block_cone_index[b.name] = len(psd_meta)
            ident = sp.csc_matrix(
                (np.ones(b.n_coeffs), (b.string_indices, np.arange(b.n_coeffs))),
                shape=(b.dim**2, b.n_coeffs),
            )
            add_psd_rows(b.dims, {b.name: ident}, None, blocks_by_name)

    for con in p.psds:
        # expression terms are given over the full string space already
        add_psd_rows(con.dims, con.terms, con.const, blocks_by_name)

    A = sp.csc_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
        shape=(nrow, nvar),
    )
    b = np.concatenate(b_parts) if b_parts else np.zeros(0)

    if backend == "clarabel":
        raw = _solve_clarabel(A, b, q, cones, opts)
    elif backend == "scs":
        raw = _solve_scs(A, b, q, cones, opts)
    else:
        raise IllFormed(f"unknown backend {backend}")
    status, x, z, obj, obj_dual, t = raw

    block_values, scalar_values = {}, {}
    if x is not None:
        for s in p.scalars:
            off, _ = offsets[s.name]
            scalar_values[s.name] = float(x[off])
        for bl in p.blocks:
            off, width = offsets[bl.name]
            block_values[bl.name] = bl.operator_of(x[off : off + width])

    eq_duals, psd_duals = [], []
    if z is not None:
        r0 = 0
        ci = 0
        for kind, size in cones:
            if kind == "zero":
                eq_duals.append(np.asarray(z[r0 : r0 + size]))
                r0 += size
            elif kind == "nonneg":
                r0 += size
            else:
                svlen = size * (size + 1) // 2
                zm = unsvec_dense(np.asarray(z[r0 : r0 + svlen]), size, order)
                psd_duals.append(derealify(zm))
                r0 += svlen

    objective = sign * obj + p.obj_constant if obj is not None else np.nan
    gap = abs(obj - obj_dual) if obj is not None and obj_dual is not None else np.nan
    return SDPSolution(
        status=status,
        objective=float(objective),
        gap=float(gap),
        block_values=block_values,
        scalar_values=scalar_values,
        eq_duals=eq_duals,
        psd_duals=psd_duals,
        solve_time=t,
    )


def _solve_clarabel(A, b, q, cones, opts: SolverOptions):
    import clarabel

    cone_objs = []
    for kind, size in cones:
        if kind == "zero":
            cone_objs.append(clarabel.ZeroConeT(size))
        elif kind == "nonneg":
            cone_objs.append(clarabel.NonnegativeConeT(size))
        else:
            cone_objs.append(clarabel.PSDTriangleConeT(size))
    settings = clarabel.DefaultSettings()
    settings.verbose = opts.verbose
    settings.max_iter = max(opts.max_iter, 50)
    settings.tol_feas = opts.feas_tol
    settings.tol_gap_abs = opts.gap_tol
    settings.tol_gap_rel = opts.gap_tol
    P = sp.csc_matrix((len(q), len(q)))
    try:
        solver = clarabel.DefaultSolver(P, q, A, b, cone_objs, settings)
        sol = solver.solve()
    except BaseException as exc:  # clarabel raises pyo3 panics on bad data
        raise NumericalBreakdown(str(exc)) from exc
    s = str(sol.status)
    mapping = {
        "Solved": "optimal",
        "AlmostSolved": "optimal",
        "PrimalInfeasible": "infeasible",
        "AlmostPrimalInfeasible": "infeasible",
        "DualInfeasible": "unbounded",
        "AlmostDualInfeasible": "unbounded",
        "MaxIterations": "max_iter",
    }
    status = mapping.get(s.split(".")[-1], "numerical")
    x = np.asarray(sol.x) if status == "optimal" else None
    z = np.asarray(sol.z) if status in ("optimal", "infeasible") else None
    obj = sol.obj_val if status == "optimal" else None
    obj_d = sol.obj_val_dual if status == "optimal" else None
    return status, x, z, obj, obj_d, sol.solve_time


def _solve_scs(A, b, q, cones, opts: SolverOptions):
    import scs

    mz = sum(s for k, s in cones if k == "zero")
    ml = sum(s for k, s in cones if k == "nonneg")
    ms = [s for k, s in cones if k == "psd"]
    # scs expects rows ordered zero, nonneg, psd — our assembly does that
    data = {"A": A, "b": b, "c": q}
    cone = {"z": mz, "l": ml, "s": ms}
    solver = scs.SCS(
        data,
        cone,
        eps_abs=max(opts.gap_tol, 1e-9),
        eps_rel=max(opts.gap_tol, 1e-9),
        eps_infeas=1e-9,
        max_iters=opts.scs_max_iters,
        verbose=opts.verbose,
    )
    out = solver.solve()
    st = out["info"]["status"]
    if st.startswith("solved"):
        status = "optimal"
    elif "infeasible" in st:
        status = "infeasible"
    elif "unbounded" in st:
        status = "unbounded"
    else:
        status = "numerical"
    x = out["x"] if status == "optimal" else None
    z = out["y"] if status in ("optimal", "infeasible") else None
    obj = out["info"]["pobj"] if status == "optimal" else None
    obj_d = out["info"]["dobj"] if status == "optimal" else None
    return status, x, z, obj, obj_d, out["info"]["solve_time"] / 1000.0


# ---------------------------------------------------------------------------
# term builders used by the robustness / search layers
# ---------------------------------------------------------------------------


def identity_term(block: Block) -> sp.csc_matrix:
    """Block's coefficients placed at their own strings (expression on the
    block's factors)."""
    return sp.csc_matrix(
        (np.ones(block.n_coeffs), (block.string_indices, np.arange(block.n_coeffs))),
        shape=(block.dim**2, block.n_coeffs),
    )


def poly_term(block: Block, poly: ReplacePoly) -> sp.csc_matrix:
    """Coefficients of poly[X] for X in the block (diagonal in the basis)."""
    names = [f.name for f in block.factors]
    ev = poly.eigenvalues(names, block.dims).reshape(-1)[block.string_indices]
    return sp.csc_matrix(
        (ev, (block.string_indices, np.arange(block.n_coeffs))),
        shape=(block.dim**2, block.n_coeffs),
    )


def lift_term(block: Block, expr_factors: Sequence[SpaceLabel]) -> sp.csc_matrix:
    """Coefficients of X ⊗ 1_extra on the expression factor set.

    The extra labels of `expr_factors` (not in the block) carry the identity;
    each block string maps to the expression string with index 0 there, with
    weight √(∏ d_extra).
    """
    expr_factors = tuple(expr_factors)
    expr_names = [f.name for f in expr_factors]
    blk_names = [f.name for f in block.factors]
    for n in blk_names:
        if n not in expr_names:
            raise IllFormed(f"block label {n} missing from expression")
    shape = tuple(f.dim * f.dim for f in expr_factors)
    scale = 1.0
    for f in expr_factors:
        if f.name not in blk_names:
            scale *= np.sqrt(f.dim)
    # map each block string's multi-index into the expression index space
    blk_shape = tuple(d * d for d in block.dims)
    multi = np.stack(np.unravel_index(block.string_indices, blk_shape))
    expr_multi = np.zeros((len(expr_factors), block.n_coeffs), dtype=np.int64)
    for i, n in enumerate(blk_names):
        expr_multi[expr_names.index(n)] = multi[i]
    flat = np.ravel_multi_index([expr_multi[i] for i in range(len(expr_factors))], shape)
    total = int(np.prod(shape, dtype=np.int64))
    return sp.csc_matrix(
        (np.full(block.n_coeffs, scale), (flat, np.arange(block.n_coeffs))),
        shape=(total, block.n_coeffs),
    )


def ptrace_term(block: Block, keep_factors: Sequence[SpaceLabel]) -> sp.csc_matrix:
    """Coefficients of tr_{dropped}(X) on the kept factor set."""
    keep_factors = tuple(keep_factors)
    keep_names = [f.name for f in keep_factors]
    blk_names = [f.name for f in block.factors]
    dropped = [n for n in blk_names if n not in keep_names]
    scale = 1.0
    for f in block.factors:
        if f.name in dropped:
            scale *= np.sqrt(f.dim)
    blk_shape = tuple(d * d for d in block.dims)
    multi = np.stack(np.unravel_index(block.string_indices, blk_shape))
    # only strings that are identity on every dropped factor survive
    mask = np.ones(block.n_coeffs, dtype=bool)
    for i, n in enumerate(blk_names):
        if n in dropped:
            mask &= multi[i] == 0
    out_shape = tuple(f.dim * f.dim for f in keep_factors)
    out_multi = np.zeros((len(keep_factors), int(mask.sum())), dtype=np.int64)
    for i, n in enumerate(blk_names):
        if n in keep_names:
            out_multi[keep_names.index(n)] = multi[i][mask]
    flat = np.ravel_multi_index([out_multi[i] for i in range(len(keep_factors))],
                                out_shape)
    total = int(np.prod(out_shape, dtype=np.int64))
    colidx = np.arange(block.n_coeffs)[mask]
    return sp.csc_matrix(
        (np.full(len(flat), scale), (flat, colidx)),
        shape=(total, block.n_coeffs),
    )


def scalar_term(expr_factors: Sequence[SpaceLabel], op: LabeledOperator) -> sp.csc_matrix:
    """Column mapping a scalar variable s to s·op on the expression factors."""
    aligned = op.permuted([f.name for f in expr_factors])
    c = coeff_tensor(aligned).reshape(-1)
    nz = np.nonzero(np.abs(c) > 1e-14)[0]
    return sp.csc_matrix((c[nz], (nz, np.zeros(len(nz), dtype=np.int64))),
                         shape=(len(c), 1))


def link_rows(
    block: Block,
    w: LabeledOperator,
    out_factors: Sequence[SpaceLabel],
) -> sp.csc_matrix:
    """Rows of the map x ↦ coeffs of (X ⋆ w) over the block's coefficients.

    `w` must live exactly on the block labels not in `out_factors`; the link
    contracts them all, so each block string (u, t) contributes its inner
    coefficient tr(g_u wᵀ) to output string t.
    """
    from .labeled import partial_transpose

    out_factors = tuple(out_factors)
    out_names = [f.name for f in out_factors]
    blk_names = [f.name for f in block.factors]
    inner = [n for n in blk_names if n not in out_names]
    if set(w.names) != set(inner):
        raise IllFormed(f"link operand labels {w.names} != inner labels {inner}")
    wt = partial_transpose(w, w.names).permuted(inner)
    kw = coeff_tensor(wt).reshape(-1)
    blk_shape = tuple(d * d for d in block.dims)
    multi = np.stack(np.unravel_index(block.string_indices, blk_shape))
    inner_shape = tuple(
        block.factors[i].dim ** 2 for i, n in enumerate(blk_names) if n in inner
    )
    inner_multi = [multi[i] for i, n in enumerate(blk_names) if n in inner]
    u_flat = np.ravel_multi_index(inner_multi, inner_shape)
    out_shape = tuple(f.dim * f.dim for f in out_factors)
    out_multi = np.zeros((len(out_factors), block.n_coeffs), dtype=np.int64)
    for i, n in enumerate(blk_names):
        if n in out_names:
            out_multi[out_names.index(n)] = multi[i]
    t_flat = np.ravel_multi_index([out_multi[i] for i in range(len(out_factors))],
                                  out_shape)
    vals = kw[u_flat]
    total = int(np.prod(out_shape, dtype=np.int64))
    nz = np.abs(vals) > 1e-14
    return sp.csc_matrix(
        (vals[nz], (t_flat[nz], np.arange(block.n_coeffs)[nz])),
        shape=(total, block.n_coeffs),
    )
