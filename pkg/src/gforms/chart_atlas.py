"""Manifolds given by finite atlases of box-image charts.

Every chart has an axis-aligned open box as image (a half-box
``{x in box : x_N >= 0}`` for boundary charts), a parametrization into an
ambient ``R^m`` and a coordinate map back, both as expression lists.  Chart
domains are recognised in ambient space by a round trip: a point ``p`` lies
in chart ``b`` iff ``coord_b(p)`` is in the image and maps back onto ``p``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .exprs import (
    ZERO,
    Bump,
    Const,
    Expr,
    as_expr,
    diff,
    evaluate,
    evaluate_many,
    mul,
    parse,
    substitute,
    variables,
)

Box = tuple[tuple[float, float], ...]

# Induced orientation of the x_N = 0 face of a half-box chart is
# gamma_phi * BOUNDARY_SIGN**N (outward normal first).  Fixed once from the
# flat half-plane, where it makes  int d(f dx1) = int f(x1, 0) dx1  hold.
BOUNDARY_SIGN = -1

DEFAULT_MARGIN = 0.05
ROUNDTRIP_TOL = 1e-8


class AtlasError(ValueError):
    pass


class CoverageError(AtlasError):
    def __init__(self, message: str, point: np.ndarray):
        super().__init__(message)
        self.point = point


@dataclass(frozen=True, eq=False)
class Chart:
    id: str
    dim: int
    image: Box
    param: tuple[Expr, ...]
    coord: tuple[Expr, ...]
    gamma: int = 1
    boundary: bool = False

    def __post_init__(self):
        object.__setattr__(self, "image", tuple((float(a), float(b)) for a, b in self.image))
        object.__setattr__(self, "param", tuple(self.param))
        object.__setattr__(self, "coord", tuple(self.coord))
        if len(self.image) != self.dim or len(self.coord) != self.dim:
            raise AtlasError(f"chart {self.id}: image/coord lengths must equal dim {self.dim}")
        if any(a >= b for a, b in self.image):
            raise AtlasError(f"chart {self.id}: empty image box")
        if self.gamma not in (1, -1):
            raise AtlasError(f"chart {self.id}: orientation sign must be +1 or -1")
        if self.boundary and (self.dim == 0 or self.image[-1][0] != 0.0):
            raise AtlasError(f"chart {self.id}: boundary charts need a last image interval [0, b)")

    @property
    def ambient_dim(self) -> int:
        return len(self.param)

    def lo(self) -> np.ndarray:
        return np.array([a for a, _ in self.image])

    def hi(self) -> np.ndarray:
        return np.array([b for _, b in self.image])

    def volume(self) -> float:
        return float(np.prod(self.hi() - self.lo()))

    def to_ambient(self, X) -> np.ndarray:
        return evaluate_many(self.param, X)

    def contains(self, X: np.ndarray, closed_face: bool = True) -> np.ndarray:
        """Mask of coordinate points inside the (half-)box image."""
        X = np.asarray(X)
        lo, hi = self.lo()[:, None], self.hi()[:, None]
        inside = np.all((X > lo) & (X < hi), axis=0)
        if self.boundary and closed_face:
            face = np.all((X[:-1] > lo[:-1]) & (X[:-1] < hi[:-1]), axis=0) & (X[-1] == 0.0)
            inside |= face
        return inside

    def sample(self, n: int, rng: np.random.Generator, shrink: float = 0.0) -> np.ndarray:
        lo, hi = self.lo(), self.hi()
        pad = shrink * (hi - lo)
        if self.boundary:
            pad[-1] = 0.0
        u = rng.uniform(size=(self.dim, n))
        return (lo + pad)[:, None] + u * (hi - lo - 2 * pad)[:, None]

    def locate(self, P: np.ndarray, tol: float = ROUNDTRIP_TOL) -> tuple[np.ndarray, np.ndarray]:
        """Chart coordinates of ambient points and the mask of points in the domain."""
        P = np.asarray(P, dtype=np.float64)
        X = evaluate_many(self.coord, P, strict=False)
        X = X.reshape(self.dim, P.shape[1])
        ok = np.all(np.isfinite(X), axis=0)
        # snap the boundary face so round-off does not push it out of the half-box
        if self.boundary:
            X[-1] = np.where(np.abs(X[-1]) < 1e-12, 0.0, X[-1])
        ok &= self.contains(np.where(np.isfinite(X), X, 0.0))
        if np.any(ok):
            back = evaluate_many(self.param, X[:, ok], strict=False).reshape(len(self.param), -1)
            err = np.max(np.abs(back - P[:, ok]), axis=0)
            scale = 1.0 + np.max(np.abs(P[:, ok]), axis=0)
            good = err <= tol * scale
            ok[np.flatnonzero(ok)[~good]] = False
        return X, ok

    def roundtrip_error(self, n: int, rng: np.random.Generator) -> float:
        """Max |coord(param(x)) - x| over random image points."""
        X = self.sample(n, rng)
        back = evaluate_many(self.coord, self.to_ambient(X)).reshape(self.dim, n)
        return float(np.max(np.abs(back - X))) if n else 0.0


@dataclass(frozen=True, eq=False)
class Transition:
    source: str
    target: str
    map: tuple[Expr, ...]
    jacobian: tuple[tuple[Expr, ...], ...]

    def evaluate_jacobian(self, X) -> np.ndarray:
        """Shape ``(N, N, n)``: ``J[i, j] = d map_i / d x_j``."""
        N = len(self.map)
        flat = [e for row in self.jacobian for e in row]
        vals = evaluate_many(flat, X) if flat else np.zeros((0, np.asarray(X).shape[1]))
        return vals.reshape(N, N, -1)


@dataclass(frozen=True, eq=False)
class Manifold:
    name: str
    dim: int
    ambient_dim: int
    charts: tuple[Chart, ...]
    oriented: bool = True
    overlaps: frozenset | None = None
    compact: bool = False
    description: str = ""
    # boundary manifolds remember which chart face each chart came from
    inclusion: dict = field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "charts", tuple(self.charts))
        if not self.charts:
            raise AtlasError(f"{self.name}: atlas is empty")
        ids = [c.id for c in self.charts]
        if len(set(ids)) != len(ids):
            raise AtlasError(f"{self.name}: duplicate chart ids")
        for c in self.charts:
            if c.dim != self.dim or c.ambient_dim != self.ambient_dim:
                raise AtlasError(f"{self.name}: chart {c.id} has the wrong dimensions")
        if self.overlaps is not None:
            pairs = frozenset(frozenset(p) for p in self.overlaps)
            for p in pairs:
                if not p <= set(ids):
                    raise AtlasError(f"{self.name}: overlap {sorted(p)} names unknown charts")
            object.__setattr__(self, "overlaps", pairs)

    @property
    def has_boundary(self) -> bool:
        return any(c.boundary for c in self.charts)

    @property
    def chart_ids(self) -> list[str]:
        return [c.id for c in self.charts]

    def chart(self, chart_id: str) -> Chart:
        for c in self.charts:
            if c.id == chart_id:
                return c
        raise AtlasError(f"{self.name}: no chart {chart_id!r}")

    def overlapping(self, a: str, b: str) -> bool:
        if a == b:
            return True
        if self.overlaps is not None:
            return frozenset((a, b)) in self.overlaps
        return overlap_points(self, a, b, 400, np.random.default_rng(0)).shape[1] > 0

    def overlap_pairs(self) -> list[tuple[str, str]]:
        return [(a, b) for a, b in itertools.combinations(self.chart_ids, 2) if self.overlapping(a, b)]

    def with_gamma(self, chart_id: str, gamma: int) -> "Manifold":
        charts = [
            Chart(c.id, c.dim, c.image, c.param, c.coord, gamma, c.boundary) if c.id == chart_id else c
            for c in self.charts
        ]
        return _replace_charts(self, charts)

    def reversed(self) -> "Manifold":
        """Same atlas with every orientation sign flipped."""
        charts = [Chart(c.id, c.dim, c.image, c.param, c.coord, -c.gamma, c.boundary) for c in self.charts]
        return _replace_charts(self, charts)


def _replace_charts(M: Manifold, charts) -> Manifold:
    return Manifold(M.name, M.dim, M.ambient_dim, tuple(charts), M.oriented, M.overlaps, M.compact,
                    M.description, M.inclusion)


def overlap_points(M: Manifold, a: str, b: str, n: int, rng: np.random.Generator) -> np.ndarray:
    """Chart-``a`` coordinates of random points that also lie in chart ``b``."""
    ca, cb = M.chart(a), M.chart(b)
    X = ca.sample(n, rng)
    _, ok = cb.locate(ca.to_ambient(X).reshape(M.ambient_dim, n))
    return X[:, ok]


def transition(M: Manifold, a: str, b: str) -> Transition:
    """``coord_b o param_a`` with its symbolic Jacobian."""
    ca, cb = M.chart(a), M.chart(b)
    if a == b:
        ident = tuple(variables(M.dim))
    else:
        if not M.overlapping(a, b):
            raise AtlasError(f"{M.name}: charts {a} and {b} do not overlap")
        ident = tuple(substitute(e, ca.param) for e in cb.coord)
    jac = tuple(tuple(diff(e, j + 1) for j in range(M.dim)) for e in ident)
    return Transition(a, b, ident, jac)


@dataclass
class OrientationReport:
    passed: bool
    min_value: float
    samples: int
    violation: tuple[str, str, np.ndarray] | None = None

    @property
    def residual(self) -> float:
        return max(0.0, -self.min_value)


def orientation_check(M: Manifold, samples: int = 100, rng: np.random.Generator | None = None) -> OrientationReport:
    """``gamma_a * gamma_b * det J_ab > 0`` at sampled overlap points of every pair."""
    if not M.oriented:
        raise AtlasError(f"{M.name} is not declared oriented")
    rng = rng or np.random.default_rng(0)
    lowest = math.inf
    count = 0
    for a, b in M.overlap_pairs():
        X = overlap_points(M, a, b, samples, rng)
        if X.shape[1] == 0:
            continue
        J = transition(M, a, b).evaluate_jacobian(X)
        det = np.linalg.det(np.moveaxis(J, -1, 0)) if M.dim else np.ones(X.shape[1])
        vals = M.chart(a).gamma * M.chart(b).gamma * det
        count += vals.size
        k = int(np.argmin(vals))
        if vals[k] < lowest:
            lowest = float(vals[k])
        if vals[k] <= 0:
            return OrientationReport(False, float(vals[k]), count, (a, b, X[:, k]))
    return OrientationReport(True, lowest if count else 1.0, count)


# -- partitions of unity ----------------------------------------------------------


def chart_bump(chart: Chart, margin: float = DEFAULT_MARGIN) -> Expr:
    """Product of 1-d bumps filling the image box shrunk by ``margin`` per edge.

    For boundary charts the last factor is centred on the face so the bump
    stays positive on ``x_N = 0``.
    """
    out: Expr = Const(1.0)
    xs = variables(chart.dim)
    for k, (a, b) in enumerate(chart.image):
        pad = margin * (b - a)
        if chart.boundary and k == chart.dim - 1:
            radius, center = b - pad, 0.0
        else:
            radius, center = (b - a) / 2 - pad, (a + b) / 2
        out = mul(out, Bump(radius, [center], [xs[k]]))
    return out


def _box_gap2(P: np.ndarray, box: Box) -> np.ndarray:
    lo = np.array([a for a, _ in box])[:, None]
    hi = np.array([b for _, b in box])[:, None]
    gap = np.maximum(lo - P, 0.0) + np.maximum(P - hi, 0.0)
    return np.sum(gap**2, axis=0)


def _flat(t: np.ndarray) -> np.ndarray:
    """``exp(-1/t)`` for ``t > 0`` and 0 at ``t = 0``; smooth and flat at 0."""
    with np.errstate(divide="ignore", over="ignore"):
        return np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)


@dataclass(frozen=True)
class Support:
    """A union of closed boxes, each in ambient coordinates (chart ``None``)
    or in the coordinates of a named chart."""

    pieces: tuple[tuple[str | None, Box], ...]

    @classmethod
    def ambient(cls, box: Sequence[Sequence[float]]) -> "Support":
        return cls(((None, _as_box(box)),))

    @classmethod
    def in_chart(cls, chart_id: str, box: Sequence[Sequence[float]]) -> "Support":
        return cls(((chart_id, _as_box(box)),))

    def union(self, other: "Support") -> "Support":
        return Support(self.pieces + tuple(p for p in other.pieces if p not in self.pieces))

    def gaps(self, M: Manifold, P: np.ndarray) -> np.ndarray:
        """Squared distance to each piece (in that piece's coordinates); ``inf``
        where a chart piece's chart does not contain the point."""
        P = np.asarray(P, dtype=np.float64)
        out = np.full((len(self.pieces), P.shape[1]), np.inf)
        for k, (cid, bx) in enumerate(self.pieces):
            if cid is None:
                out[k] = _box_gap2(P, bx)
            else:
                X, ok = M.chart(cid).locate(P)
                if np.any(ok):
                    out[k, ok] = _box_gap2(X[:, ok], bx)
        return out

    def contains(self, M: Manifold, P: np.ndarray) -> np.ndarray:
        return np.any(self.gaps(M, P) == 0, axis=0)

    def complement_bump(self, M: Manifold, P: np.ndarray) -> np.ndarray:
        """Vanishes exactly on the support, positive elsewhere."""
        g = self.gaps(M, P)
        return np.prod(np.where(np.isinf(g), 1.0, _flat(np.where(np.isinf(g), 1.0, g))), axis=0)

    def ambient_boxes(self, M: Manifold, samples: int = 17) -> list[Box]:
        """Ambient bounding boxes (grid-sampled, padded) of the pieces."""
        boxes = []
        for cid, bx in self.pieces:
            if cid is None:
                boxes.append(bx)
                continue
            grids = np.meshgrid(*[np.linspace(a, b, samples) for a, b in bx], indexing="ij")
            X = np.stack([g.ravel() for g in grids]) if grids else np.zeros((0, 1))
            P = M.chart(cid).to_ambient(X).reshape(M.ambient_dim, -1)
            lo, hi = P.min(axis=1), P.max(axis=1)
            pad = 0.05 * (hi - lo) + 1e-9
            boxes.append(tuple(zip((lo - pad).tolist(), (hi + pad).tolist())))
        return boxes


def _as_box(box) -> Box:
    return tuple((float(a), float(b)) for a, b in box)


def as_support(s) -> Support | None:
    if s is None or isinstance(s, Support):
        return s
    return Support.ambient(s)


@dataclass(frozen=True, eq=False)
class PartitionOfUnity:
    """``psi_a = B_a / (sum_b B_b + B_dagger)`` over a finite set of charts.

    ``B_a`` is an expression in chart-``a`` coordinates (see :func:`chart_bump`);
    ``B_dagger`` vanishes on the target support box and is positive off it,
    playing the role of the complement chart.  Weights are evaluated
    numerically at ambient points, since ``B_b`` only makes sense inside the
    domain of chart ``b``.
    """

    manifold: Manifold
    chart_ids: tuple[str, ...]
    bumps: dict
    support: Support | None
    margin: float
    label: str = ""

    def raw(self, P: np.ndarray) -> np.ndarray:
        """``B_b`` for every chart ``b`` at ambient points; shape ``(len(charts), n)``."""
        P = np.asarray(P, dtype=np.float64)
        out = np.zeros((len(self.chart_ids), P.shape[1]))
        for k, cid in enumerate(self.chart_ids):
            X, ok = self.manifold.chart(cid).locate(P)
            if np.any(ok):
                out[k, ok] = evaluate(self.bumps[cid], X[:, ok])
        return out

    def complement(self, P: np.ndarray) -> np.ndarray:
        if self.support is None:
            return np.zeros(np.asarray(P).shape[1])
        return self.support.complement_bump(self.manifold, P)

    def weights(self, P: np.ndarray) -> np.ndarray:
        """``psi_b`` at ambient points, shape ``(len(charts), n)``; 0 where nothing covers."""
        B = self.raw(P)
        den = B.sum(axis=0) + self.complement(P)
        return np.divide(B, den, out=np.zeros_like(B), where=den > 0)

    def weight(self, chart_id: str, P: np.ndarray) -> np.ndarray:
        return self.weights(P)[self.chart_ids.index(chart_id)]

    def weight_in_chart(self, chart_id: str, X: np.ndarray) -> np.ndarray:
        """``psi_a`` at chart-``a`` coordinates, using the chart's own bump directly."""
        chart = self.manifold.chart(chart_id)
        X = np.asarray(X, dtype=np.float64)
        P = chart.to_ambient(X).reshape(self.manifold.ambient_dim, X.shape[1])
        B = self.raw(P)
        k = self.chart_ids.index(chart_id)
        own = evaluate(self.bumps[chart_id], X) if X.shape[0] else np.ones(X.shape[1])
        B[k] = own
        den = B.sum(axis=0) + self.complement(P)
        return np.divide(own, den, out=np.zeros_like(own), where=den > 0)

    def support_points(self, n_per_chart: int, rng: np.random.Generator) -> np.ndarray:
        """Random manifold points (ambient) inside the target support."""
        pts = []
        for c in self.manifold.charts:
            P = c.to_ambient(c.sample(n_per_chart, rng)).reshape(self.manifold.ambient_dim, -1)
            if self.support is not None:
                P = P[:, self.support.contains(self.manifold, P)]
            pts.append(P)
        return np.concatenate(pts, axis=1)

    def sum_residual(self, n_per_chart: int = 50, rng: np.random.Generator | None = None) -> float:
        """Max ``|sum_a psi_a - 1|`` over sampled support points."""
        rng = rng or np.random.default_rng(0)
        P = self.support_points(n_per_chart, rng)
        if P.shape[1] == 0:
            return 0.0
        return float(np.max(np.abs(self.weights(P).sum(axis=0) - 1.0)))


def build_partition(
    M: Manifold,
    target_support: Support | Box | None = None,
    charts: Sequence[str] | None = None,
    margin: float = DEFAULT_MARGIN,
    samples: int = 200,
    rng: np.random.Generator | None = None,
    check: bool = True,
    label: str = "",
) -> PartitionOfUnity:
    """Partition of unity subordinate to ``charts`` on ``target_support``.

    ``target_support`` is a :class:`Support` or an ambient box; ``None`` means the whole manifold,
    which is only sensible for compact ``M``.  With ``check`` the cover is
    verified on random manifold points of the support and a
    :class:`CoverageError` names the first uncovered point.
    """
    ids = tuple(charts) if charts is not None else tuple(M.chart_ids)
    if not ids:
        raise AtlasError("a partition of unity needs at least one chart")
    for cid in ids:
        M.chart(cid)
    target_support = as_support(target_support)
    if target_support is not None:
        for cid, bx in target_support.pieces:
            want = M.ambient_dim if cid is None else M.chart(cid).dim
            if len(bx) != want:
                raise AtlasError(f"support box {bx} has the wrong dimension")
    if target_support is None and len(M.charts) == 1:
        # a lone chart is the whole manifold, so psi = 1 is subordinate to it
        bumps = {ids[0]: Const(1.0)}
    else:
        bumps = {cid: chart_bump(M.chart(cid), margin) for cid in ids}
    pou = PartitionOfUnity(M, ids, bumps, target_support, margin, label)
    if check:
        rng = rng or np.random.default_rng(12345)
        P = pou.support_points(samples, rng)
        total = pou.raw(P).sum(axis=0)
        bad = np.flatnonzero(total == 0)
        if bad.size:
            raise CoverageError(
                f"{M.name}: support point {np.round(P[:, bad[0]], 6).tolist()} "
                f"is not covered by charts {list(ids)}",
                P[:, bad[0]],
            )
    return pou


# -- boundary ----------------------------------------------------------------------


def boundary_manifold(M: Manifold) -> Manifold:
    """The ``x_N = 0`` faces of the boundary charts, with induced orientation.

    ``inclusion`` maps each new chart id to ``(source chart id, exprs)`` where
    ``exprs`` send face coordinates to source-chart coordinates.
    """
    bcharts = [c for c in M.charts if c.boundary]
    if not bcharts:
        raise AtlasError(f"{M.name} has no boundary charts")
    n = M.dim - 1
    face = list(variables(n)) + [ZERO]
    charts, inclusion = [], {}
    for c in bcharts:
        cid = f"{c.id}|bd"
        param = tuple(substitute(e, face) for e in c.param)
        gamma = c.gamma * BOUNDARY_SIGN**M.dim
        charts.append(Chart(cid, n, c.image[:-1], param, c.coord[:-1], gamma, False))
        inclusion[cid] = (c.id, tuple(face))
    overlaps = None
    if M.overlaps is not None:
        ids = {c.id for c in bcharts}
        overlaps = frozenset(
            frozenset(f"{x}|bd" for x in p) for p in M.overlaps if p <= ids
        )
    return Manifold(f"∂{M.name}", n, M.ambient_dim, tuple(charts), M.oriented, overlaps,
                    True if M.compact else False, f"boundary of {M.name}", inclusion)


# -- catalog ------------------------------------------------------------------------


def _exprs(texts: Sequence[str], arity: int) -> tuple[Expr, ...]:
    return tuple(parse(t, arity) for t in texts)


def _identity_chart(cid: str, image: Box, boundary: bool = False) -> Chart:
    n = len(image)
    xs = tuple(variables(n))
    return Chart(cid, n, image, xs, xs, 1, boundary)


def box(n: int = 2, half_width: float = 2.0) -> Manifold:
    L = half_width
    whole = tuple((-L, L) for _ in range(n))
    low = whole[:-1] + ((-L, 0.25 * L),)
    high = whole[:-1] + ((-0.25 * L, L),)
    charts = (
        _identity_chart("whole", whole),
        _identity_chart("low", low),
        _identity_chart("high", high),
    )
    return Manifold(f"box{n}", n, n, charts, True, None, False,
                    f"open box (-{L:g},{L:g})^{n} in R^{n}; 3 identity charts (whole, low/high slabs)")


def halfplane(half_width: float = 3.0) -> Manifold:
    L = half_width
    charts = (
        _identity_chart("whole", ((-L, L), (0.0, L)), True),
        _identity_chart("left", ((-L, 0.25 * L), (0.0, L)), True),
        _identity_chart("right", ((-0.25 * L, L), (0.0, L)), True),
    )
    return Manifold("halfplane", 2, 2, charts, True, None, False,
                    f"half-plane patch (-{L:g},{L:g})x[0,{L:g}) with boundary x2=0; 3 identity half-box charts")


_QUARTER = {0: (1, 0), 1: (0, 1), 2: (-1, 0), 3: (0, -1)}


def _rotated_angle(k: int) -> tuple[str, str]:
    """Ambient expressions for the angle relative to the direction k*pi/2."""
    c, s = _QUARTER[k % 4]
    xr = {(1, 0): "x1", (0, 1): "x2", (-1, 0): "-x1", (0, -1): "-x2"}[(c, s)]
    yr = {(1, 0): "x2", (0, 1): "-x1", (-1, 0): "-x2", (0, -1): "x1"}[(c, s)]
    return yr, xr


def disk(collar: float = 0.7, inner: float = 0.68, half_angle: float = 1.2) -> Manifold:
    """Closed unit disk: a square interior chart plus four boundary collars.

    Collar ``k`` has coordinates ``(t, s)``: angle ``t`` about direction
    ``k*pi/2`` and depth ``s = 1 - |x|``, with the circle at ``s = 0``.
    """
    charts = [_identity_chart("interior", ((-inner, inner), (-inner, inner)))]
    for k in range(4):
        yr, xr = _rotated_angle(k)
        phase = k * math.pi / 2
        param = _exprs([f"(1 - x2)*cos(x1 + {phase!r})", f"(1 - x2)*sin(x1 + {phase!r})"], 2)
        coord = _exprs([f"atan2({yr}, {xr})", "1 - sqrt(x1^2 + x2^2)"], 2)
        charts.append(Chart(f"collar{k}", 2, ((-half_angle, half_angle), (0.0, collar)), param, coord, 1, True))
    return Manifold("disk", 2, 2, tuple(charts), True, None, True,
                    "closed unit disk in R^2; 5 charts (interior square + 4 boundary collars)")


def annulus(r_in: float = 1.0, r_out: float = 2.0, half_angle: float = 2.4) -> Manifold:
    """Open annulus with two polar charts ``(r, t)`` centred at angles 0 and pi."""
    charts = []
    for k, name in ((0, "east"), (2, "west")):
        yr, xr = _rotated_angle(k)
        phase = k * math.pi / 2
        param = _exprs([f"x1*cos(x2 + {phase!r})", f"x1*sin(x2 + {phase!r})"], 2)
        coord = _exprs(["sqrt(x1^2 + x2^2)", f"atan2({yr}, {xr})"], 2)
        charts.append(Chart(name, 2, ((r_in, r_out), (-half_angle, half_angle)), param, coord, 1))
    return Manifold("annulus", 2, 2, tuple(charts), True, None, False,
                    f"open annulus {r_in:g}<|x|<{r_out:g} in R^2; 2 polar charts")


def circle(half_angle: float = 2.4) -> Manifold:
    charts = []
    for k, name in ((0, "east"), (2, "west")):
        yr, xr = _rotated_angle(k)
        phase = k * math.pi / 2
        param = _exprs([f"cos(x1 + {phase!r})", f"sin(x1 + {phase!r})"], 1)
        coord = _exprs([f"atan2({yr}, {xr})"], 2)
        charts.append(Chart(name, 1, ((-half_angle, half_angle),), param, coord, 1))
    return Manifold("s1", 1, 2, tuple(charts), True, None, True,
                    "unit circle S^1 in R^2; 2 angular charts")


def sphere(half_width: float = 1.5) -> Manifold:
    """Unit sphere with stereographic charts from the north and south poles."""
    L = half_width
    img = ((-L, L), (-L, L))
    north = Chart(
        "north", 2, img,
        _exprs(["2*x1/(1 + x1^2 + x2^2)", "2*x2/(1 + x1^2 + x2^2)", "(x1^2 + x2^2 - 1)/(1 + x1^2 + x2^2)"], 2),
        _exprs(["x1/(1 - x3)", "x2/(1 - x3)"], 3),
        -1,
    )
    south = Chart(
        "south", 2, img,
        _exprs(["2*x1/(1 + x1^2 + x2^2)", "2*x2/(1 + x1^2 + x2^2)", "(1 - x1^2 - x2^2)/(1 + x1^2 + x2^2)"], 2),
        _exprs(["x1/(1 + x3)", "x2/(1 + x3)"], 3),
        1,
    )
    return Manifold("s2", 2, 3, (north, south), True, frozenset([frozenset(("north", "south"))]), True,
                    "unit sphere S^2 in R^3; 2 stereographic charts")


CATALOG = {
    "annulus": annulus,
    "box2": lambda: box(2),
    "box3": lambda: box(3),
    "disk": disk,
    "halfplane": halfplane,
    "s1": circle,
    "s2": sphere,
}


def catalog_manifold(name: str) -> Manifold:
    try:
        return CATALOG[name]()
    except KeyError:
        raise AtlasError(f"unknown catalog manifold {name!r}; known: {sorted(CATALOG)}") from None


def manifold_from_dict(spec: dict) -> Manifold:
    """Inline atlas: ``{name, dim, ambient_dim, charts: [...], overlaps, oriented, compact}``."""
    dim, amb = int(spec["dim"]), int(spec["ambient_dim"])
    charts = []
    for c in spec["charts"]:
        charts.append(
            Chart(
                c["id"], dim, tuple(tuple(iv) for iv in c["image"]),
                _exprs(c["param"], dim), _exprs(c["coord"], amb),
                int(c.get("gamma", 1)), bool(c.get("boundary", False)),
            )
        )
    overlaps = spec.get("overlaps")
    if overlaps is not None:
        overlaps = frozenset(frozenset(p) for p in overlaps)
    return Manifold(spec.get("name", "inline"), dim, amb, tuple(charts), bool(spec.get("oriented", True)),
                    overlaps, bool(spec.get("compact", False)), spec.get("description", "inline atlas"))


def as_exprs(items, arity: int) -> tuple[Expr, ...]:
    return tuple(parse(t, arity) if isinstance(t, str) else as_expr(t) for t in items)
