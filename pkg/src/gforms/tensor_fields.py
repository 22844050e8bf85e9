"""Chart-decomposed ``(r, s)`` tensor fields with values in a :class:`ValueSpace`.

A field is stored as its unique decomposition on every chart: a table from
tensor multi-indices to vector-valued coefficients in that chart's
coordinates.  Missing indices are zero.  Agreement of the tables on chart
overlaps is a checked invariant (:func:`overlap_residual`), not something
the constructor enforces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .chart_atlas import Manifold, Support, overlap_points, transition
from .exprs import (
    CoefficientFn,
    Expr,
    as_expr,
    combine_parts,
    diff,
    evaluate_many,
    flatten_value,
    mul,
    parse,
    substitute,
    sum_exprs,
)
from .value_space import LinearMap, SpaceMismatchError, ValueSpace

SMOOTH = "smooth"
INTEGRABLE = "integrable"
KINDS = (SMOOTH, INTEGRABLE)


class FieldError(ValueError):
    pass


class TensorMultiIndex(NamedTuple):
    upper: tuple[int, ...]
    lower: tuple[int, ...]


def all_indices(N: int, r: int, s: int) -> list[TensorMultiIndex]:
    rng = range(1, N + 1)
    return [
        TensorMultiIndex(tuple(u), tuple(l))
        for u in itertools.product(rng, repeat=r)
        for l in itertools.product(rng, repeat=s)
    ]


@dataclass(frozen=True)
class SmoothMap:
    """A smooth map ``W -> M`` given chartwise.

    ``pieces[w] = (m, exprs)``: on chart ``w`` of ``W`` the map lands in chart
    ``m`` of ``M`` with coordinate expressions ``exprs`` (arity ``W.dim``).
    ``inverse`` has the same shape in the other direction and is required to
    pull back integrable fields.
    """

    source: Manifold
    target: Manifold
    pieces: Mapping[str, tuple[str, tuple[Expr, ...]]]
    inverse: Mapping[str, tuple[str, tuple[Expr, ...]]] | None = None

    def __post_init__(self):
        for w, (m, exprs) in self.pieces.items():
            self.source.chart(w)
            self.target.chart(m)
            if len(exprs) != self.target.dim:
                raise FieldError(f"map on chart {w} has {len(exprs)} components, target dim is {self.target.dim}")

    def jacobian(self, w: str) -> list[list[Expr]]:
        """``J[i][j] = d F^i / d x^j`` on chart ``w``."""
        _, exprs = self.pieces[w]
        return [[diff(e, j + 1) for j in range(self.source.dim)] for e in exprs]


def identity_map(M: Manifold) -> SmoothMap:
    from .exprs import variables

    xs = tuple(variables(M.dim))
    return SmoothMap(M, M, {c: (c, xs) for c in M.chart_ids}, {c: (c, xs) for c in M.chart_ids})


@dataclass(frozen=True, eq=False)
class TensorField:
    manifold: Manifold
    r: int
    s: int
    space: ValueSpace
    kind: str
    tables: Mapping[str, Mapping[TensorMultiIndex, CoefficientFn]]
    support: Support | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise FieldError(f"kind must be one of {KINDS}")
        if self.kind == INTEGRABLE and self.support is None:
            raise FieldError("integrable fields need a declared compact support")
        N = self.manifold.dim
        clean = {}
        for cid, table in self.tables.items():
            self.manifold.chart(cid)
            t = {}
            for idx, coeff in table.items():
                idx = TensorMultiIndex(tuple(idx[0]), tuple(idx[1]))
                if len(idx.upper) != self.r or len(idx.lower) != self.s:
                    raise FieldError(f"index {idx} does not have shape ({self.r},{self.s})")
                if any(i < 1 or i > N for i in idx.upper + idx.lower):
                    raise FieldError(f"index {idx} out of range 1..{N}")
                if coeff.space != self.space:
                    raise SpaceMismatchError(f"coefficient over {coeff.space.name}, field over {self.space.name}")
                if not coeff.is_zero:
                    t[idx] = coeff
            clean[cid] = t
        object.__setattr__(self, "tables", clean)

    def coefficient(self, chart_id: str, idx) -> CoefficientFn:
        idx = TensorMultiIndex(tuple(idx[0]), tuple(idx[1]))
        table = self._table(chart_id)
        return table.get(idx) or CoefficientFn.zero(self.space, self.manifold.dim)

    def _table(self, chart_id: str):
        if chart_id not in self.tables:
            raise FieldError(f"field has no coefficient table on chart {chart_id!r}")
        return self.tables[chart_id]

    def dense(self, chart_id: str, X: np.ndarray) -> np.ndarray:
        """Values at chart points as an array ``(dim, N, ..., N, n)`` (r+s index axes)."""
        N = self.manifold.dim
        X = np.asarray(X, dtype=np.float64)
        n = X.shape[1]
        out = np.zeros((self.space.dim,) + (N,) * (self.r + self.s) + (n,), dtype=self.space.dtype)
        for idx, coeff in self._table(chart_id).items():
            pos = tuple(i - 1 for i in idx.upper + idx.lower)
            out[(slice(None),) + pos] = coeff.evaluate(X).reshape(self.space.dim, n)
        return out


def tensor_field(
    M: Manifold,
    r: int,
    s: int,
    space: ValueSpace,
    tables: Mapping[str, Mapping],
    kind: str = SMOOTH,
    support: Support | None = None,
) -> TensorField:
    """Build a field from ``{chart: {((upper), (lower)): parts}}`` where parts
    are expressions (or strings) for the real parts of the value."""
    from .chart_atlas import as_exprs

    built = {}
    for cid, table in tables.items():
        built[cid] = {
            idx: v if isinstance(v, CoefficientFn) else CoefficientFn(space, as_exprs(flatten_value(v, space), M.dim), M.dim)
            for idx, v in table.items()
        }
    return TensorField(M, r, s, space, kind, built, support)


def field_from_ambient(
    M: Manifold,
    r: int,
    s: int,
    space: ValueSpace,
    table: Mapping,
    kind: str = SMOOTH,
    support: Support | None = None,
) -> TensorField:
    """Restrict an ambient ``(r, s)`` tensor on ``R^m`` to every chart of ``M``.

    Lower slots pull back through the parametrization and upper slots push
    forward through the coordinate map, so the chart tables agree on overlaps
    whenever the upper slots are tangent to ``M``.
    """
    from .chart_atlas import as_exprs

    m = M.ambient_dim
    amb = {
        TensorMultiIndex(tuple(k[0]), tuple(k[1])): v if isinstance(v, CoefficientFn) else as_exprs(flatten_value(v, space), m)
        for k, v in table.items()
    }
    amb = {k: v.parts if isinstance(v, CoefficientFn) else tuple(v) for k, v in amb.items()}
    for k in amb:
        if len(k.upper) != r or len(k.lower) != s or any(i < 1 or i > m for i in k.upper + k.lower):
            raise FieldError(f"ambient index {k} does not fit shape ({r},{s}) on R^{m}")
    tables = {}
    for c in M.charts:
        dparam = [[diff(e, j + 1) for j in range(M.dim)] for e in c.param]
        dcoord = [[substitute(diff(e, a + 1), c.param) for a in range(m)] for e in c.coord]
        composed = {k: [substitute(p, c.param) for p in parts] for k, parts in amb.items()}
        out = {}
        for idx in all_indices(M.dim, r, s):
            terms = [[] for _ in range(space.real_dim)]
            for k, parts in composed.items():
                factor = None
                for i, a in zip(idx.upper, k.upper):
                    factor = dcoord[i - 1][a - 1] if factor is None else mul(factor, dcoord[i - 1][a - 1])
                for j, b in zip(idx.lower, k.lower):
                    factor = dparam[b - 1][j - 1] if factor is None else mul(factor, dparam[b - 1][j - 1])
                for q, p in enumerate(parts):
                    terms[q].append(p if factor is None else mul(p, factor))
            out[idx] = CoefficientFn(space, tuple(sum_exprs(ts) for ts in terms), M.dim)
        tables[c.id] = out
    return TensorField(M, r, s, space, kind, tables, support)


def decompose(T: TensorField, chart_id: str) -> dict[TensorMultiIndex, CoefficientFn]:
    """The full coefficient table of ``T`` on a chart, zeros included."""
    T.manifold.chart(chart_id)
    T._table(chart_id)
    return {idx: T.coefficient(chart_id, idx) for idx in all_indices(T.manifold.dim, T.r, T.s)}


def _push_coeff(psi: LinearMap, f: CoefficientFn) -> CoefficientFn:
    return CoefficientFn(psi.target, tuple(combine_parts(psi.real_matrix, f.parts)), f.arity, f.support)


def pushforward(psi: LinearMap, T: TensorField) -> TensorField:
    """Apply ``psi`` to every coefficient value; the geometric part is untouched."""
    if T.space != psi.source:
        raise SpaceMismatchError(f"map from {psi.source.name} applied to field over {T.space.name}")
    tables = {cid: {idx: _push_coeff(psi, f) for idx, f in t.items()} for cid, t in T.tables.items()}
    return TensorField(T.manifold, T.r, T.s, psi.target, T.kind, tables, T.support)


def _scalar_on_chart(g, M: Manifold, chart_id: str) -> Expr:
    """``g`` is an ambient expression, a per-chart mapping, or a constant."""
    if isinstance(g, Mapping):
        if chart_id not in g:
            raise FieldError(f"scalar function not given on chart {chart_id!r}")
        v = g[chart_id]
        return parse(v, M.dim) if isinstance(v, str) else as_expr(v)
    e = parse(g, M.ambient_dim) if isinstance(g, str) else as_expr(g)
    return substitute(e, M.chart(chart_id).param)


def scalar_action(g, T: TensorField, g_support: Support | None = None) -> TensorField:
    """Pointwise product of a scalar function with every coefficient.

    ``g`` may be a constant, an expression in ambient coordinates, or a
    mapping chart id -> expression in chart coordinates.
    """
    tables = {}
    for cid, t in T.tables.items():
        h = _scalar_on_chart(g, T.manifold, cid)
        tables[cid] = {idx: f.map_parts(lambda p, h=h: mul(h, p)) for idx, f in t.items()}
    support = T.support
    if support is None:
        support = g_support
    return TensorField(T.manifold, T.r, T.s, T.space, T.kind, tables, support)


def add_fields(A: TensorField, B: TensorField) -> TensorField:
    if (A.r, A.s, A.space) != (B.r, B.s, B.space) or A.manifold is not B.manifold:
        raise FieldError("fields must share manifold, type and value space")
    tables = {}
    for cid in set(A.tables) | set(B.tables):
        ta, tb = A.tables.get(cid, {}), B.tables.get(cid, {})
        t = {}
        for idx in set(ta) | set(tb):
            parts = [
                sum_exprs([p for p in ps if p is not None])
                for ps in itertools.zip_longest(
                    ta[idx].parts if idx in ta else (), tb[idx].parts if idx in tb else ()
                )
            ]
            t[idx] = CoefficientFn(A.space, tuple(parts), A.manifold.dim)
        tables[cid] = t
    kind = A.kind if A.kind == B.kind else "integrable"
    support = _union(A.support, B.support)
    return TensorField(A.manifold, A.r, A.s, A.space, kind, tables, support)


def _union(a: Support | None, b: Support | None) -> Support | None:
    if a is None or b is None:
        return None
    return a.union(b)


def _map_support(F: SmoothMap, support: Support | None, samples: int = 9) -> Support | None:
    """Support of a pulled-back field: preimages of support pieces, boxed in
    source-chart coordinates (grid-sampled and padded)."""
    if support is None:
        return None
    if F.inverse is None:
        raise FieldError("pulling back a compactly supported field needs the inverse map")
    pieces = []
    M = F.target
    for m_box in support.ambient_boxes(M):
        grids = np.meshgrid(*[np.linspace(a, b, samples) for a, b in m_box], indexing="ij")
        P = np.stack([g.ravel() for g in grids])
        for m_cid, (w_cid, inv) in F.inverse.items():
            X, ok = M.chart(m_cid).locate(P)
            if not np.any(ok):
                continue
            Y = evaluate_many(inv, X[:, ok]).reshape(len(inv), -1)
            lo, hi = Y.min(axis=1), Y.max(axis=1)
            pad = 0.1 * (hi - lo) + 1e-6
            pieces.append((w_cid, tuple(zip((lo - pad).tolist(), (hi + pad).tolist()))))
    return Support(tuple(pieces))


def pullback(F: SmoothMap, T: TensorField) -> TensorField:
    """``(F^x T)_J = sum_I T_I(F(x)) prod_k dF^{I_k}/dx^{J_k}`` for covariant ``T``."""
    if T.r != 0:
        raise FieldError("pullback is defined for covariant fields (r = 0)")
    if T.manifold is not F.target:
        raise FieldError("field does not live on the map's target manifold")
    if T.kind == INTEGRABLE and F.inverse is None:
        raise FieldError("pulling back an integrable field needs a diffeomorphism with its inverse")
    W = F.source
    tables = {}
    for w, (m, exprs) in F.pieces.items():
        jac = F.jacobian(w)
        src = T._table(m)
        composed = {idx: f.map_parts(lambda p: substitute(p, exprs), W.dim) for idx, f in src.items()}
        out = {}
        for J in itertools.product(range(1, W.dim + 1), repeat=T.s):
            terms = [[] for _ in range(T.space.real_dim)]
            for idx, f in composed.items():
                factor = None
                for Ik, Jk in zip(idx.lower, J):
                    d = jac[Ik - 1][Jk - 1]
                    factor = d if factor is None else mul(factor, d)
                for k, p in enumerate(f.parts):
                    terms[k].append(p if factor is None else mul(p, factor))
            parts = tuple(sum_exprs(ts) for ts in terms)
            out[TensorMultiIndex((), J)] = CoefficientFn(T.space, parts, W.dim)
        tables[w] = out
    return TensorField(W, 0, T.s, T.space, T.kind, tables, _map_support(F, T.support) if T.kind == INTEGRABLE else None)


def evaluate_field(T: TensorField, chart_id: str, x, covectors: Sequence = (), vectors: Sequence = ()):
    """``T(theta_1..theta_r, X_1..X_s)`` at one chart point, as a value-space vector."""
    from .value_space import Vector

    chart = T.manifold.chart(chart_id)
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if len(covectors) != T.r or len(vectors) != T.s:
        raise FieldError(f"expected {T.r} covectors and {T.s} vectors")
    if x.shape[0] != chart.dim or not chart.contains(x[:, None])[0]:
        raise FieldError(f"point {x.tolist()} is outside the image of chart {chart_id}")
    A = T.dense(chart_id, x[:, None])[..., 0]
    for arg in list(covectors) + list(vectors):
        A = np.tensordot(A, np.asarray(arg, dtype=np.float64), axes=([1], [0]))
    return Vector(T.space, A)


def support(T: TensorField) -> Support:
    """Declared support (an overestimate); the zero field has empty support."""
    if all(not t for t in T.tables.values()):
        return Support(())
    if T.support is not None:
        return T.support
    return Support(tuple((cid, T.manifold.chart(cid).image) for cid, t in T.tables.items() if t))


def overlap_residual(T: TensorField, samples: int = 50, rng: np.random.Generator | None = None) -> float:
    """Max deviation from the ``(r, s)`` transformation law over sampled overlaps."""
    rng = rng or np.random.default_rng(0)
    M = T.manifold
    worst = 0.0
    ids = [c for c in M.chart_ids if c in T.tables]
    for a, b in itertools.permutations(ids, 2):
        if not M.overlapping(a, b):
            continue
        X = overlap_points(M, a, b, samples, rng)
        if X.shape[1] == 0:
            continue
        tr = transition(M, a, b)
        Y = evaluate_many(tr.map, X).reshape(M.dim, -1)
        J = tr.evaluate_jacobian(X)  # dy/dx
        Jinv = np.moveaxis(np.linalg.inv(np.moveaxis(J, -1, 0)), 0, -1)  # dx/dy
        A = _transform(T.dense(b, Y), J, Jinv, T.r, T.s)
        B = T.dense(a, X)
        worst = max(worst, float(np.max(np.abs(A - B))) if A.size else 0.0)
    return worst


def _transform(A: np.ndarray, J: np.ndarray, Jinv: np.ndarray, r: int, s: int) -> np.ndarray:
    """Chart-b components ``A[v, i1..ir, j1..js, n]`` to chart-a components."""
    for k in range(r + s):
        axis = 1 + k
        M = Jinv if k < r else J
        A = np.moveaxis(A, axis, -2)
        if k < r:
            # new[..., i, n] = sum_p Jinv[i, p, n] A[..., p, n]
            A = np.einsum("ipn,...pn->...in", M, A)
        else:
            # new[..., j, n] = sum_q J[q, j, n] A[..., q, n]
            A = np.einsum("qjn,...qn->...jn", M, A)
        A = np.moveaxis(A, -2, axis)
    return A


def as_section(T: TensorField) -> TensorField:
    """Field -> section view.  Both sides carry the same coefficient tables."""
    return TensorField(T.manifold, T.r, T.s, T.space, T.kind, T.tables, T.support)


def from_section(S: TensorField) -> TensorField:
    return TensorField(S.manifold, S.r, S.s, S.space, S.kind, S.tables, S.support)


def structurally_equal(A: TensorField, B: TensorField) -> bool:
    if (A.r, A.s, A.space, A.kind) != (B.r, B.s, B.space, B.kind) or A.manifold is not B.manifold:
        return False
    if set(A.tables) != set(B.tables):
        return False
    for cid in A.tables:
        ta, tb = A.tables[cid], B.tables[cid]
        if set(ta) != set(tb):
            return False
        for idx in ta:
            if [str(p) for p in ta[idx].parts] != [str(p) for p in tb[idx].parts]:
                return False
    return True


def sample_values(T: TensorField, X_by_chart: Mapping[str, np.ndarray]) -> dict[str, np.ndarray]:
    return {cid: T.dense(cid, X) for cid, X in X_by_chart.items()}
