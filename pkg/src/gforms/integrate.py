"""Integration of top-degree forms, weak integrals and the Stokes residual.

Chart integrals use a tensor Gauss-Legendre rule on the chart's image box.
Integrals over a manifold sum ``gamma_a * int psi_a f_a`` over the charts of
a partition of unity; complex scalar forms are integrated through their
real and imaginary parts.  A ``G``-valued top form is integrated weakly,
one value per functional of the dual family.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np

from .chart_atlas import (
    AtlasError,
    Chart,
    CoverageError,
    Manifold,
    PartitionOfUnity,
    Support,
    boundary_manifold,
    build_partition,
)
from .forms import Form, FieldError, boundary_inclusion, exterior_derivative, pullback_form, pushforward_form
from .value_space import LinearMap, ValueSpace, Vector, dual_functionals, from_real_parts, vector_from_functional_values

DEFAULT_ORDER = 32
# Each axis is split into this many equal panels, each carrying an ``order``
# point rule.  Partition weights are smooth but not analytic, so a single
# Gauss panel converges slowly; splitting restores fast convergence.
DEFAULT_PANELS = {1: 8, 2: 8, 3: 2}

# Optional extra scalar factor on the integrand, evaluated at ambient points.
Density = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class QuadratureRule:
    """Composite tensor Gauss-Legendre rule on a box.

    Every axis is cut into ``panels`` equal pieces with ``order`` nodes each.
    """

    order: int
    box: tuple[tuple[float, float], ...]
    nodes: np.ndarray
    weights: np.ndarray
    panels: int = 1

    @property
    def size(self) -> int:
        return self.weights.shape[0]


@lru_cache(maxsize=None)
def _leggauss(q: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(q)


def default_panels(dim: int) -> int:
    return DEFAULT_PANELS.get(dim, 1)


def gauss_rule(box, order: int = DEFAULT_ORDER, panels: int | None = None) -> QuadratureRule:
    box = tuple((float(a), float(b)) for a, b in box)
    if order < 1:
        raise ValueError("quadrature order must be positive")
    if panels is None:
        panels = default_panels(len(box))
    if panels < 1:
        raise ValueError("panel count must be positive")
    if not box:
        return QuadratureRule(order, box, np.zeros((0, 1)), np.ones(1), panels)
    x, w = _leggauss(order)
    axes, wts = [], []
    for a, b in box:
        edges = np.linspace(a, b, panels + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        axes.append((half[:, None] * x + mid[:, None]).ravel())
        wts.append((half[:, None] * w).ravel())
    grids = np.meshgrid(*axes, indexing="ij")
    wgrid = np.meshgrid(*wts, indexing="ij")
    nodes = np.stack([g.ravel() for g in grids])
    weights = np.prod(np.stack([g.ravel() for g in wgrid]), axis=0)
    return QuadratureRule(order, box, nodes, weights, panels)


def chart_rule(chart: Chart, order: int = DEFAULT_ORDER, panels: int | None = None) -> QuadratureRule:
    return gauss_rule(chart.image, order, panels)


def _top_index(N: int) -> tuple[int, ...]:
    return tuple(range(1, N + 1))


def _require_top_scalar(omega: Form) -> None:
    if omega.degree != omega.manifold.dim:
        raise FieldError(f"only top-degree forms integrate; got degree {omega.degree} on a {omega.manifold.dim}-manifold")
    if omega.space.dim != 1:
        raise FieldError("integrate_maximal takes scalar forms; use weak_integral for vector values")


def _row_sums(parts: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """``parts @ weights`` one row at a time, so every real part is summed the same way."""
    return np.array([np.dot(row, weights) for row in parts])


def integrate_chart_form(omega: Form, chart_id: str, order: int = DEFAULT_ORDER) -> complex | float:
    """``int f_omega`` over the chart image for the top coefficient ``f_omega``."""
    _require_top_scalar(omega)
    chart = omega.manifold.chart(chart_id)
    rule = chart_rule(chart, order)
    f = omega.coefficient(chart_id, _top_index(chart.dim))
    parts = _row_sums(f.evaluate_parts(rule.nodes).reshape(f.space.real_dim, -1), rule.weights)
    total = from_real_parts(parts, omega.space.is_complex)[0]
    return complex(total) if omega.space.is_complex else float(total)


def chart_integrand(
    omega: Form, pou: PartitionOfUnity, chart_id: str, density: Density | None = None
) -> Callable[[np.ndarray], np.ndarray]:
    """``x -> psi_a(x) * density * f_a(x)`` on chart ``a`` (values ``(dim, n)``)."""
    M = omega.manifold
    chart = M.chart(chart_id)
    top = _top_index(M.dim)
    if chart_id not in omega.tables:
        raise FieldError(f"form has no table on chart {chart_id!r} of the partition")
    f = omega.coefficient(chart_id, top)

    def integrand(X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        w = pou.weight_in_chart(chart_id, X)
        if density is not None:
            w = w * density(chart.to_ambient(X).reshape(M.ambient_dim, -1))
        return f.evaluate(X).reshape(omega.space.dim, -1) * w

    integrand.parts = lambda X: _weighted_parts(f, pou, chart_id, chart, M, density, X)
    return integrand


def _weighted_parts(f, pou, chart_id, chart, M, density, X) -> np.ndarray:
    """The integrand as real parts ``(real_dim, n)``; complex values are never formed."""
    X = np.asarray(X, dtype=np.float64)
    w = pou.weight_in_chart(chart_id, X)
    if density is not None:
        w = w * density(chart.to_ambient(X).reshape(M.ambient_dim, -1))
    return f.evaluate_parts(X).reshape(f.space.real_dim, -1) * w


def chart_terms(
    omega: Form, pou: PartitionOfUnity, order: int = DEFAULT_ORDER, density: Density | None = None
) -> dict[str, np.ndarray]:
    """``gamma_a * int psi_a f_a`` per chart, each of shape ``(dim,)``."""
    M = omega.manifold
    if pou.manifold is not M:
        raise AtlasError("partition of unity belongs to a different manifold")
    if not M.oriented:
        raise AtlasError(f"{M.name} is not oriented")
    if omega.degree != M.dim:
        raise FieldError(f"only top-degree forms integrate; got degree {omega.degree} on a {M.dim}-manifold")
    out = {}
    for cid in pou.chart_ids:
        chart = M.chart(cid)
        rule = chart_rule(chart, order)
        # real and imaginary parts are integrated separately, as real integrals
        parts = _row_sums(chart_integrand(omega, pou, cid, density).parts(rule.nodes), rule.weights)
        out[cid] = chart.gamma * from_real_parts(parts, omega.space.is_complex)
    return out


def integrate_maximal(
    omega: Form, pou: PartitionOfUnity, order: int = DEFAULT_ORDER, density: Density | None = None
) -> complex | float:
    """``sum_a gamma_a int (phi_a^{-1})^x (psi_a omega)`` for a scalar top form."""
    _require_top_scalar(omega)
    terms = chart_terms(omega, pou, order, density)
    total = sum(v[0] for v in terms.values())
    return complex(total) if omega.space.is_complex else float(np.real(total))


@dataclass(frozen=True)
class WeakIntegral:
    """The functional ``psi -> int psi_x(eta)`` tabulated on the dual family."""

    space: ValueSpace
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=self.space.dtype).reshape(-1)
        if vals.shape[0] != self.space.dim:
            raise ValueError(f"{vals.shape[0]} values for a dual family of size {self.space.dim}")
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "WeakIntegral") -> "WeakIntegral":
        return WeakIntegral(self.space, self.values + other.values)

    def __rmul__(self, c) -> "WeakIntegral":
        return WeakIntegral(self.space, c * self.values)

    def to_dict(self) -> dict:
        vals = [complex(v) if self.space.is_complex else float(v) for v in self.values]
        if self.space.is_complex:
            vals = [[v.real, v.imag] for v in vals]
        return dict(zip(self.space.dual_labels, vals))


def weak_integral(
    eta: Form, pou: PartitionOfUnity, order: int = DEFAULT_ORDER, density: Density | None = None
) -> WeakIntegral:
    """One integral per dual functional: ``values[j] = int (psi_j)_x eta``."""
    vals = [integrate_maximal(pushforward_form(psi, eta), pou, order, density) for psi in dual_functionals(eta.space)]
    return WeakIntegral(eta.space, np.array(vals))


def belongs_to_G(w: WeakIntegral) -> Vector:
    """The vector ``b`` with ``psi_j(b) = values[j]`` for every functional."""
    return vector_from_functional_values(w.space, w.values)


class VectorialMeasure:
    """``g -> int g . eta`` for compactly supported scalar ``g``.

    ``g`` may be an ambient expression (string or :class:`Expr`), a mapping
    chart id -> chart expression, a constant, or a callable on ambient
    points (used for partition weights, which are not expressions).
    """

    def __init__(self, eta: Form, pou: PartitionOfUnity, order: int = DEFAULT_ORDER):
        self.eta = eta
        self.pou = pou
        self.order = order

    def __call__(self, g) -> WeakIntegral:
        from .forms import scalar_action_form

        if callable(g) and not isinstance(g, (str, dict)) and not hasattr(g, "children"):
            return weak_integral(self.eta, self.pou, self.order, density=g)
        return weak_integral(scalar_action_form(g, self.eta), self.pou, self.order)


def measure_apply(eta: Form, g, pou: PartitionOfUnity, order: int = DEFAULT_ORDER) -> WeakIntegral:
    return VectorialMeasure(eta, pou, order)(g)


def partition_weight(pou: PartitionOfUnity, chart_id: str) -> Density:
    """``psi_a`` as an ambient density, for use with :class:`VectorialMeasure`."""
    return lambda P: pou.weight(chart_id, P)


@dataclass
class StokesResult:
    lhs: WeakIntegral
    rhs: WeakIntegral

    @property
    def residuals(self) -> np.ndarray:
        return np.abs(self.lhs.values - self.rhs.values)

    @property
    def residual(self) -> float:
        return float(np.max(self.residuals))


def boundary_restriction(theta: Form, dM: Manifold | None = None) -> tuple[Manifold, Form]:
    """``(dM, iota^x theta)`` for the boundary of the form's manifold."""
    M = theta.manifold
    dM = dM or boundary_manifold(M)
    return dM, pullback_form(boundary_inclusion(M, dM), theta)


def boundary_support(theta: Form) -> Support | None:
    """The form's support as ambient boxes, usable on the boundary manifold."""
    if theta.support is None:
        return None
    return Support(tuple((None, b) for b in theta.support.ambient_boxes(theta.manifold)))


def stokes_residual(
    theta: Form,
    pou_M: PartitionOfUnity | None = None,
    pou_dM: PartitionOfUnity | None = None,
    order: int = DEFAULT_ORDER,
    boundary_sign: int = 1,
) -> StokesResult:
    """Both sides of ``int d theta = int iota^x theta`` as weak integrals.

    ``boundary_sign`` multiplies the right-hand side; it exists only to inject
    a wrong orientation convention in failure tests.
    """
    M = theta.manifold
    if theta.degree != M.dim - 1:
        raise FieldError(f"Stokes needs an ({M.dim - 1})-form, got degree {theta.degree}")
    if theta.support is None and not M.compact:
        raise FieldError("Stokes needs a compactly supported form on a non-compact manifold")
    pou_M = pou_M or build_partition(M, theta.support)
    lhs = weak_integral(exterior_derivative(theta), pou_M, order)
    if not M.has_boundary:
        return StokesResult(lhs, WeakIntegral(theta.space, np.zeros(theta.space.dim)))
    dM, restricted = boundary_restriction(theta)
    if pou_dM is None:
        pou_dM = build_partition(dM, boundary_support(theta))
    elif pou_dM.manifold.name != dM.name:
        raise AtlasError("boundary partition belongs to a different manifold")
    else:
        pou_dM = build_partition(dM, pou_dM.support, pou_dM.chart_ids, pou_dM.margin, check=False)
    rhs = weak_integral(restricted, pou_dM, order)
    return StokesResult(lhs, boundary_sign * rhs)


def monte_carlo_chart_integral(
    integrand: Callable[[np.ndarray], np.ndarray],
    chart: Chart,
    samples: int = 10_000_000,
    seed: int = 0,
    batch: int = 1_000_000,
) -> tuple[np.ndarray, np.ndarray]:
    """Uniform Monte-Carlo estimate over the chart image and its standard error."""
    rng = np.random.default_rng(seed)
    lo, hi = chart.lo(), chart.hi()
    vol = float(np.prod(hi - lo))
    s1 = s2 = 0.0
    done = 0
    while done < samples:
        n = min(batch, samples - done)
        X = lo[:, None] + rng.uniform(size=(chart.dim, n)) * (hi - lo)[:, None]
        v = np.asarray(integrand(X))
        s1 = s1 + v.sum(axis=-1)
        s2 = s2 + (np.abs(v) ** 2).sum(axis=-1)
        done += n
    mean = s1 / samples
    var = np.maximum(s2 / samples - np.abs(mean) ** 2, 0.0)
    return vol * mean, vol * np.sqrt(var / samples)


__all__ = [
    "CoverageError",
    "DEFAULT_ORDER",
    "DEFAULT_PANELS",
    "default_panels",
    "QuadratureRule",
    "StokesResult",
    "VectorialMeasure",
    "WeakIntegral",
    "belongs_to_G",
    "boundary_restriction",
    "boundary_support",
    "chart_rule",
    "chart_terms",
    "gauss_rule",
    "integrate_chart_form",
    "integrate_maximal",
    "measure_apply",
    "monte_carlo_chart_integral",
    "partition_weight",
    "stokes_residual",
    "weak_integral",
]
