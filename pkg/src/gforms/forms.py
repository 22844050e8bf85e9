"""Alternating forms with vector-valued coefficients.

On each chart a ``k``-form is a table from strictly increasing index tuples
``I`` to coefficients ``f_I``, meaning ``sum_I f_I dx^I``.  Wedge products
pair values through the tensor product of the value spaces, the exterior
derivative differentiates coefficients symbolically, and pullbacks use
symbolic Jacobian minors.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .chart_atlas import Manifold, Support, as_exprs, overlap_points, transition
from .exprs import (
    ZERO,
    flatten_value,
    CoefficientFn,
    Const,
    Expr,
    combine_parts,
    diff,
    evaluate_many,
    kron_parts,
    mul,
    neg,
    substitute,
    sum_exprs,
)
from .tensor_fields import (
    INTEGRABLE,
    KINDS,
    SMOOTH,
    FieldError,
    SmoothMap,
    TensorField,
    TensorMultiIndex,
    _map_support,
    _scalar_on_chart,
)
from .value_space import LinearMap, SpaceMismatchError, ValueSpace, tensor_product_space

Index = tuple[int, ...]


def increasing_indices(N: int, k: int) -> list[Index]:
    return [tuple(c) for c in itertools.combinations(range(1, N + 1), k)]


def permutation_sign(seq: Sequence[int]) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an entry repeats."""
    seq = list(seq)
    if len(set(seq)) != len(seq):
        return 0
    inversions = sum(1 for a, b in itertools.combinations(range(len(seq)), 2) if seq[a] > seq[b])
    return -1 if inversions % 2 else 1


def shuffle_sign(I: Index, J: Index) -> int:
    """``dx^I ^ dx^J = shuffle_sign(I, J) dx^{sorted(I+J)}`` (0 if they share an index)."""
    return permutation_sign(tuple(I) + tuple(J))


@dataclass(frozen=True, eq=False)
class Form:
    manifold: Manifold
    degree: int
    space: ValueSpace
    kind: str
    tables: Mapping[str, Mapping[Index, CoefficientFn]]
    support: Support | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FieldError(f"kind must be one of {KINDS}")
        if self.kind == INTEGRABLE and self.support is None:
            raise FieldError("integrable forms need a declared compact support")
        N = self.manifold.dim
        if self.degree < 0:
            raise FieldError("negative degree")
        clean = {}
        for cid, table in self.tables.items():
            self.manifold.chart(cid)
            t = {}
            for I, f in table.items():
                I = tuple(I)
                if len(I) != self.degree or any(a >= b for a, b in zip(I, I[1:])):
                    raise FieldError(f"{I} is not a strictly increasing {self.degree}-index")
                if I and (I[0] < 1 or I[-1] > N):
                    raise FieldError(f"index {I} out of range 1..{N}")
                if f.space != self.space:
                    raise SpaceMismatchError(f"coefficient over {f.space.name}, form over {self.space.name}")
                if not f.is_zero:
                    t[I] = f
            clean[cid] = t
        object.__setattr__(self, "tables", clean)

    @property
    def charts(self) -> list[str]:
        return list(self.tables)

    def coefficient(self, chart_id: str, I: Index) -> CoefficientFn:
        return self.table(chart_id).get(tuple(I)) or CoefficientFn.zero(self.space, self.manifold.dim)

    def table(self, chart_id: str) -> Mapping[Index, CoefficientFn]:
        if chart_id not in self.tables:
            raise FieldError(f"form has no coefficient table on chart {chart_id!r}")
        return self.tables[chart_id]

    def values(self, chart_id: str, X: np.ndarray) -> np.ndarray:
        """Coefficients at chart points: shape ``(C(N,k), dim, n)`` in increasing-index order."""
        X = np.asarray(X, dtype=np.float64)
        idx = increasing_indices(self.manifold.dim, self.degree)
        out = np.zeros((len(idx), self.space.dim, X.shape[1]), dtype=self.space.dtype)
        table = self.table(chart_id)
        for k, I in enumerate(idx):
            if I in table:
                out[k] = table[I].evaluate(X).reshape(self.space.dim, -1)
        return out

    def is_zero(self) -> bool:
        return all(not t for t in self.tables.values())


def _coeffs(space: ValueSpace, table: Mapping, arity: int) -> dict[Index, CoefficientFn]:
    out = {}
    for I, v in table.items():
        I = tuple(I)
        out[I] = v if isinstance(v, CoefficientFn) else CoefficientFn(space, as_exprs(flatten_value(v, space), arity), arity)
    return out


def form(
    M: Manifold,
    degree: int,
    space: ValueSpace,
    tables: Mapping[str, Mapping],
    kind: str = SMOOTH,
    support: Support | None = None,
) -> Form:
    """Build a form from ``{chart: {I: value}}`` with values as in :func:`~gforms.exprs.flatten_value`."""
    return Form(M, degree, space, kind, {c: _coeffs(space, t, M.dim) for c, t in tables.items()}, support)


def from_ambient(
    M: Manifold,
    degree: int,
    space: ValueSpace,
    table: Mapping,
    kind: str = SMOOTH,
    support: Support | None = None,
    charts: Sequence[str] | None = None,
) -> Form:
    """Restrict an ambient form ``sum_I f_I dx^I`` on ``R^m`` to every chart of ``M``."""
    m = M.ambient_dim
    amb = _coeffs(space, table, m)
    tables = {}
    for cid in charts or M.chart_ids:
        c = M.chart(cid)
        jac = [[diff(e, j + 1) for j in range(M.dim)] for e in c.param]
        tables[cid] = _pullback_table(amb, c.param, jac, M.dim, degree, space)
    return Form(M, degree, space, kind, tables, support)


def det_expr(rows: Sequence[Sequence[Expr]]) -> Expr:
    """Symbolic determinant by the Leibniz formula (small matrices only)."""
    n = len(rows)
    if n == 0:
        return Const(1.0)
    terms = []
    for perm in itertools.permutations(range(n)):
        prod = None
        for i, j in enumerate(perm):
            prod = rows[i][j] if prod is None else mul(prod, rows[i][j])
        terms.append(prod if permutation_sign(perm) > 0 else neg(prod))
    return sum_exprs(terms)


def _pullback_table(table, exprs, jac, n_w: int, k: int, space: ValueSpace) -> dict[Index, CoefficientFn]:
    """``(F^x theta)_J = sum_I (f_I o F) det(dF^I/dx^J)`` on one chart."""
    composed = {I: [substitute(p, exprs) for p in f.parts] for I, f in table.items()}
    out = {}
    for J in increasing_indices(n_w, k):
        terms = [[] for _ in range(space.real_dim)]
        for I, parts in composed.items():
            minor = det_expr([[jac[i - 1][j - 1] for j in J] for i in I])
            if minor is ZERO or (isinstance(minor, Const) and minor.value == 0.0):
                continue
            for q, p in enumerate(parts):
                terms[q].append(mul(p, minor))
        out[J] = CoefficientFn(space, tuple(sum_exprs(ts) for ts in terms), n_w)
    return out


def pullback_form(F: SmoothMap, theta: Form) -> Form:
    if theta.manifold is not F.target:
        raise FieldError("form does not live on the map's target manifold")
    if theta.kind == INTEGRABLE and F.inverse is None:
        raise FieldError("pulling back an integrable form needs a diffeomorphism with its inverse")
    support = _map_support(F, theta.support) if theta.kind == INTEGRABLE else None
    if theta.degree > F.source.dim:
        return Form(F.source, theta.degree, theta.space, theta.kind, {w: {} for w in F.pieces}, support)
    tables = {}
    for w, (m, exprs) in F.pieces.items():
        tables[w] = _pullback_table(theta.table(m), exprs, F.jacobian(w), F.source.dim, theta.degree, theta.space)
    return Form(F.source, theta.degree, theta.space, theta.kind, tables, support)


def boundary_inclusion(M: Manifold, dM: Manifold) -> SmoothMap:
    """The inclusion of ``dM = boundary_manifold(M)`` into ``M``, chartwise."""
    return SmoothMap(dM, M, dict(dM.inclusion))


def pushforward_form(psi: LinearMap, theta: Form) -> Form:
    if theta.space != psi.source:
        raise SpaceMismatchError(f"map from {psi.source.name} applied to form over {theta.space.name}")
    tables = {
        cid: {
            I: CoefficientFn(psi.target, tuple(combine_parts(psi.real_matrix, f.parts)), f.arity, f.support)
            for I, f in t.items()
        }
        for cid, t in theta.tables.items()
    }
    return Form(theta.manifold, theta.degree, psi.target, theta.kind, tables, theta.support)


def _common_charts(a: Form, b: Form) -> list[str]:
    if a.manifold is not b.manifold:
        raise FieldError("forms live on different manifolds")
    return [c for c in a.tables if c in b.tables]


def wedge(theta: Form, eps: Form, variant: int = 1) -> Form:
    """``theta ^ eps`` with values in ``theta.space (x) eps.space``.

    Variant 1 allows an integrable left factor against a smooth right factor,
    variant 2 the reverse; two integrable factors are rejected.
    """
    if variant not in (1, 2):
        raise ValueError("wedge variant must be 1 or 2")
    if theta.kind == INTEGRABLE and eps.kind == INTEGRABLE:
        raise FieldError("wedge of two integrable forms is not defined")
    if variant == 1 and eps.kind == INTEGRABLE:
        raise FieldError("variant 1 needs a smooth right factor")
    if variant == 2 and theta.kind == INTEGRABLE:
        raise FieldError("variant 2 needs a smooth left factor")
    charts = _common_charts(theta, eps)
    space = tensor_product_space(theta.space, eps.space)
    N = theta.manifold.dim
    k = theta.degree + eps.degree
    tables = {}
    if k <= N:
        for cid in charts:
            acc: dict[Index, list[list[Expr]]] = {}
            for I, f in theta.tables[cid].items():
                for J, g in eps.tables[cid].items():
                    sign = shuffle_sign(I, J)
                    if sign == 0:
                        continue
                    K = tuple(sorted(I + J))
                    prod = kron_parts(f, g)
                    slots = acc.setdefault(K, [[] for _ in range(space.real_dim)])
                    for q, p in enumerate(prod):
                        slots[q].append(p if sign > 0 else neg(p))
            tables[cid] = {
                K: CoefficientFn(space, tuple(sum_exprs(ts) for ts in slots), N) for K, slots in acc.items()
            }
    else:
        tables = {cid: {} for cid in charts}
    integrable = INTEGRABLE in (theta.kind, eps.kind)
    support = theta.support if theta.kind == INTEGRABLE else eps.support if integrable else None
    return Form(theta.manifold, k, space, INTEGRABLE if integrable else SMOOTH, tables, support)


def exterior_derivative(theta: Form) -> Form:
    """``d(sum_I f_I dx^I) = sum_I sum_j d_j f_I dx^j ^ dx^I`` on every chart."""
    if theta.kind != SMOOTH:
        raise FieldError("the exterior derivative is defined for smooth forms")
    N = theta.manifold.dim
    k = theta.degree + 1
    tables = {}
    for cid, table in theta.tables.items():
        acc: dict[Index, list[list[Expr]]] = {}
        if k <= N:
            for I, f in table.items():
                for j in range(1, N + 1):
                    if j in I:
                        continue
                    K = tuple(sorted(I + (j,)))
                    sign = -1 if K.index(j) % 2 else 1
                    slots = acc.setdefault(K, [[] for _ in range(theta.space.real_dim)])
                    for q, p in enumerate(f.parts):
                        dp = diff(p, j)
                        slots[q].append(dp if sign > 0 else neg(dp))
        tables[cid] = {K: CoefficientFn(theta.space, tuple(sum_exprs(ts) for ts in s), N) for K, s in acc.items()}
    return Form(theta.manifold, k, theta.space, SMOOTH, tables, theta.support)


def add_forms(a: Form, b: Form) -> Form:
    if a.degree != b.degree or a.space != b.space:
        raise FieldError("forms must share degree and value space")
    charts = _common_charts(a, b)
    tables = {}
    for cid in charts:
        ta, tb = a.tables[cid], b.tables[cid]
        t = {}
        for I in set(ta) | set(tb):
            pa = ta[I].parts if I in ta else (ZERO,) * a.space.real_dim
            pb = tb[I].parts if I in tb else (ZERO,) * a.space.real_dim
            t[I] = CoefficientFn(a.space, tuple(sum_exprs([x, y]) for x, y in zip(pa, pb)), a.manifold.dim)
        tables[cid] = t
    kind = INTEGRABLE if INTEGRABLE in (a.kind, b.kind) else SMOOTH
    if a.support is not None and b.support is not None:
        support = a.support.union(b.support)
    else:
        support = a.support if b.kind == SMOOTH and a.kind == INTEGRABLE else b.support if a.kind == SMOOTH and b.kind == INTEGRABLE else None
    return Form(a.manifold, a.degree, a.space, kind, tables, support)


def scale_form(c: float, a: Form) -> Form:
    tables = {
        cid: {I: f.map_parts(lambda p: mul(Const(c), p)) for I, f in t.items()} for cid, t in a.tables.items()
    }
    return Form(a.manifold, a.degree, a.space, a.kind, tables, a.support)


def scalar_action_form(g, a: Form, g_support: Support | None = None) -> Form:
    """``g . a`` for a scalar function ``g`` (ambient expression, per-chart mapping or constant)."""
    tables = {}
    for cid, t in a.tables.items():
        h = _scalar_on_chart(g, a.manifold, cid)
        tables[cid] = {I: f.map_parts(lambda p, h=h: mul(h, p)) for I, f in t.items()}
    support = a.support if a.support is not None else g_support
    return Form(a.manifold, a.degree, a.space, a.kind, tables, support)


def as_tensor(a: Form) -> TensorField:
    """The alternating ``(0, k)`` tensor field of a form (determinant convention)."""
    tables = {}
    for cid, t in a.tables.items():
        out = {}
        for I, f in t.items():
            for perm in itertools.permutations(range(len(I))):
                J = tuple(I[p] for p in perm)
                sign = permutation_sign(perm)
                out[TensorMultiIndex((), J)] = f if sign > 0 else f.map_parts(neg)
        tables[cid] = out
    return TensorField(a.manifold, 0, a.degree, a.space, a.kind, tables, a.support)


# -- sampled comparisons -------------------------------------------------------------


def sample_points(M: Manifold, charts: Sequence[str], n: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
    return {cid: M.chart(cid).sample(n, rng, shrink=0.01) for cid in charts}


def max_coefficient(a: Form, points: Mapping[str, np.ndarray]) -> float:
    """``max |f_I|`` over the given chart sample points."""
    worst = 0.0
    for cid, X in points.items():
        if cid in a.tables and a.tables[cid]:
            worst = max(worst, float(np.max(np.abs(a.values(cid, X)))))
    return worst


def max_difference(a: Form, b: Form, points: Mapping[str, np.ndarray]) -> float:
    """Largest coefficient discrepancy of two forms of equal degree at sample points."""
    if a.degree != b.degree or a.space.dim != b.space.dim:
        raise FieldError("forms differ in degree or value dimension")
    worst = 0.0
    for cid, X in points.items():
        va = a.values(cid, X) if cid in a.tables else 0.0
        vb = b.values(cid, X) if cid in b.tables else 0.0
        diffs = np.abs(np.asarray(va) - np.asarray(vb))
        if diffs.size:
            worst = max(worst, float(np.max(diffs)))
    return worst


def overlap_residual(a: Form, samples: int = 50, rng: np.random.Generator | None = None) -> float:
    """Max violation of ``f^a_J(x) = sum_I f^b_I(y) det(dy^I/dx^J)`` on sampled overlaps."""
    rng = rng or np.random.default_rng(0)
    M = a.manifold
    N, k = M.dim, a.degree
    idx = increasing_indices(N, k)
    worst = 0.0
    ids = list(a.tables)
    for ca, cb in itertools.permutations(ids, 2):
        if not M.overlapping(ca, cb):
            continue
        X = overlap_points(M, ca, cb, samples, rng)
        if X.shape[1] == 0:
            continue
        tr = transition(M, ca, cb)
        Y = evaluate_many(tr.map, X).reshape(N, -1)
        Jm = tr.evaluate_jacobian(X)
        vb = a.values(cb, Y)
        va = a.values(ca, X)
        for q, J in enumerate(idx):
            pulled = 0.0
            for p, I in enumerate(idx):
                sub_ = Jm[np.ix_([i - 1 for i in I], [j - 1 for j in J])] if k else np.ones((0, 0, X.shape[1]))
                minor = np.linalg.det(np.moveaxis(sub_, -1, 0)) if k else np.ones(X.shape[1])
                pulled = pulled + vb[p] * minor
            worst = max(worst, float(np.max(np.abs(va[q] - pulled))))
    return worst
