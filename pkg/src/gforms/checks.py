"""Check kinds run by the scenario runner.

Every check returns a :class:`CheckOutcome` holding a non-negative residual
and a details dict; the runner compares the residual with the tolerance.
Sampled identities report the largest coefficient discrepancy, integral
checks the largest per-functional discrepancy.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .chart_atlas import AtlasError, Manifold, PartitionOfUnity, build_partition, orientation_check
from .exprs import diff, evaluate, fd_gradient, is_polynomial, parse
from .forms import (
    Form,
    add_forms,
    exterior_derivative,
    max_coefficient,
    max_difference,
    overlap_residual as form_overlap_residual,
    pullback_form,
    pushforward_form,
    sample_points,
    scale_form,
    wedge,
)
from .integrate import (
    WeakIntegral,
    belongs_to_G,
    boundary_restriction,
    boundary_support,
    chart_integrand,
    chart_terms,
    default_panels,
    measure_apply,
    monte_carlo_chart_integral,
    partition_weight,
    stokes_residual,
    weak_integral,
)
from .scenario import Scenario, ScenarioError
from .tensor_fields import SMOOTH, FieldError
from .tensor_fields import overlap_residual as field_overlap_residual
from .value_space import LinearMap, apply_linear_map, kronecker_map, swap_map

DEFAULT_TOLERANCES = {
    "dd_zero": 1e-12,
    "leibniz": 1e-10,
    "wedge_commutativity": 1e-10,
    "pushforward_naturality": 1e-10,
    "pullback_naturality": 1e-10,
    "tensor_overlap_compat": 1e-10,
    "partition_sum": 1e-12,
    "cover_independence": 1e-8,
    "weak_integral_pushforward": 1e-10,
    "measure_linearity": 1e-10,
    "partition_additivity": 1e-8,
    "stokes": 1e-6,
    "orientation": 1e-12,
    "integral": 1e-8,
    # measured in standard errors of the Monte-Carlo oracle
    "quadrature_oracle": 3.0,
    "fd_gradient": 1e-5,
}

MC_SAMPLES = 10_000_000


@dataclass
class RunContext:
    order: int
    seed: int
    fd_step: float = 1e-5
    mc_samples: int = MC_SAMPLES


@dataclass
class CheckOutcome:
    residual: float
    details: dict = field(default_factory=dict)


def _value(v) -> float | list[float]:
    v = complex(v)
    return [v.real, v.imag] if v.imag != 0.0 else v.real


def _weak(w: WeakIntegral) -> dict:
    return {label: _value(v) for label, v in zip(w.space.dual_labels, w.values)}


def _forms(sc: Scenario, chk: dict, key: str = "forms") -> list[tuple[str, Form]]:
    names = chk.get(key)
    if names is None:
        names = [n for n, f in sc.forms.items() if f.kind == SMOOTH]
    return [(n, sc.forms[n]) for n in names]


def _rng(ctx: RunContext, salt: int = 0) -> np.random.Generator:
    return np.random.default_rng([ctx.seed, salt])


def _points(sc: Scenario, ctx: RunContext, M: Manifold | None = None, salt: int = 0) -> dict:
    M = M or sc.manifold
    return sample_points(M, M.chart_ids, sc.samples, _rng(ctx, salt))


def partition_for(
    sc: Scenario, name: str | None, support=None, M: Manifold | None = None, check: bool = True
) -> PartitionOfUnity:
    """The named scenario partition, or the all-chart partition of ``M`` on ``support``."""
    M = M or sc.manifold
    if name is None:
        return build_partition(M, support, label="default")
    spec = sc.partitions[name]
    if spec["manifold"] is not M:
        raise ScenarioError("partition", f"partition {name!r} lives on {spec['manifold'].name}, not {M.name}")
    sup = spec["support"] if spec["support"] is not None else support
    return build_partition(M, sup, spec["charts"], spec["margin"], check=check, label=name)


# -- algebraic identities ---------------------------------------------------------


def check_dd_zero(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    per = {}
    for name, th in _forms(sc, chk):
        per[name] = max_coefficient(exterior_derivative(exterior_derivative(th)), _points(sc, ctx, th.manifold))
    return CheckOutcome(max(per.values(), default=0.0), {"per_form": per, "forms": len(per)})


def _pairs(sc: Scenario, chk: dict) -> list[tuple[str, str]]:
    pairs = chk.get("forms")
    if pairs is None:
        smooth = [n for n, f in sc.forms.items() if f.kind == SMOOTH]
        return [(a, b) for a in smooth for b in smooth]
    out = []
    for p in pairs:
        if not isinstance(p, list) or len(p) != 2:
            raise ScenarioError("forms", "pairs are two-element lists of form names")
        out.append((p[0], p[1]))
    return out


def check_leibniz(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """``d(a ^ b) = da ^ b + (-1)^deg(a) a ^ db``."""
    per = {}
    for a_name, b_name in _pairs(sc, chk):
        a, b = sc.forms[a_name], sc.forms[b_name]
        pts = _points(sc, ctx, a.manifold)
        lhs = exterior_derivative(wedge(a, b))
        rhs = add_forms(wedge(exterior_derivative(a), b), scale_form((-1) ** a.degree, wedge(a, exterior_derivative(b))))
        per[f"{a_name}^{b_name}"] = max_difference(lhs, rhs, pts)
    return CheckOutcome(max(per.values(), default=0.0), {"per_pair": per})


def check_wedge_commutativity(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """``a ^ b = (-1)^(kl) swap_x (b ^ a)`` with the tensor factors swapped back."""
    per = {}
    for a_name, b_name in _pairs(sc, chk):
        a, b = sc.forms[a_name], sc.forms[b_name]
        pts = _points(sc, ctx, a.manifold)
        lhs = wedge(a, b)
        rhs = scale_form((-1) ** (a.degree * b.degree), pushforward_form(swap_map(b.space, a.space), wedge(b, a)))
        per[f"{a_name}^{b_name}"] = max_difference(lhs, rhs, pts)
    return CheckOutcome(max(per.values(), default=0.0), {"per_pair": per})


def check_pushforward_naturality(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """``psi_x d theta = d psi_x theta``, or with ``variant: wedge``
    ``(psi (x) phi)_x (theta ^ eps) = psi_x theta ^ phi_x eps``."""
    psi = sc.maps[chk["map"]]
    theta = sc.forms[chk["form"]]
    pts = _points(sc, ctx, theta.manifold)
    variant = chk.get("variant", "d")
    if variant == "d":
        lhs = pushforward_form(psi, exterior_derivative(theta))
        rhs = exterior_derivative(pushforward_form(psi, theta))
    elif variant == "wedge":
        if "second_map" not in chk or "right" not in chk:
            raise ScenarioError("variant", "the wedge variant needs 'second_map' and 'right'")
        phi = sc.maps[chk["second_map"]]
        eps = sc.forms[chk["right"]]
        lhs = pushforward_form(kronecker_map(psi, phi), wedge(theta, eps))
        rhs = wedge(pushforward_form(psi, theta), pushforward_form(phi, eps))
    else:
        raise ScenarioError("variant", f"unknown naturality variant {variant!r}")
    return CheckOutcome(max_difference(lhs, rhs, pts), {"variant": variant})


def check_pullback_naturality(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """``d F^x theta = F^x d theta`` on the charts where ``F`` is given."""
    F = sc.smooth_maps[chk["smooth_map"]]
    pts = {cid: X for cid, X in _points(sc, ctx, F.source).items() if cid in F.pieces}
    per = {}
    for name, th in _forms(sc, chk):
        lhs = exterior_derivative(pullback_form(F, th))
        rhs = pullback_form(F, exterior_derivative(th))
        per[name] = max_difference(lhs, rhs, pts)
    return CheckOutcome(max(per.values(), default=0.0), {"per_form": per})


def check_tensor_overlap_compat(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    per = {}
    for name in chk.get("fields", list(sc.fields)):
        per[f"field:{name}"] = field_overlap_residual(sc.fields[name], sc.samples, _rng(ctx, 1))
    for name in chk.get("forms", []):
        per[f"form:{name}"] = form_overlap_residual(sc.forms[name], sc.samples, _rng(ctx, 2))
    return CheckOutcome(max(per.values(), default=0.0), {"per_object": per})


def check_fd_gradient(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """Symbolic gradients against central differences.

    The error of a component is ``|sym - fd| / (1 + |sym|)``: relative for
    large derivatives, absolute near zero crossings.
    """
    arity = int(chk.get("arity", sc.manifold.ambient_dim))
    exprs = chk.get("exprs")
    if not exprs:
        raise ScenarioError("exprs", "fd_gradient needs a non-empty 'exprs' list")
    box = np.asarray(chk.get("box", [[-0.9, 0.9]] * arity), dtype=float)
    rng = _rng(ctx, 3)
    n = int(chk.get("points", 100))
    P = box[:, :1] + rng.uniform(size=(arity, n)) * (box[:, 1:] - box[:, :1])
    per = {}
    for text in exprs:
        e = parse(text, arity)
        worst = 0.0
        grads = np.stack([evaluate(diff(e, i + 1), P) for i in range(arity)])
        for k in range(n):
            fd = fd_gradient(e, P[:, k], ctx.fd_step)
            err = np.abs(grads[:, k] - fd) / (1.0 + np.abs(grads[:, k]))
            worst = max(worst, float(np.max(err)))
        per[text] = worst
    return CheckOutcome(max(per.values()), {"per_expr": per, "step": ctx.fd_step, "points": n})


# -- atlas checks -----------------------------------------------------------------


def check_orientation(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    M = sc.manifolds[chk.get("manifold", "main")]
    rep = orientation_check(M, sc.samples, _rng(ctx, 4))
    details = {"min_jacobian_sign_product": rep.min_value, "samples": rep.samples}
    if rep.violation is not None:
        a, b, x = rep.violation
        details["violation"] = {"charts": [a, b], "point": [float(t) for t in x]}
    return CheckOutcome(max(0.0, -rep.min_value), details)


def check_partition_sum(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    name = chk.get("partition")
    M = sc.partitions[name]["manifold"] if name else sc.manifolds[chk.get("manifold", "main")]
    pou = partition_for(sc, name, M=M, check=False)
    res = pou.sum_residual(sc.samples, _rng(ctx, 5))
    return CheckOutcome(res, {"partition": pou.label, "charts": list(pou.chart_ids)})


# -- integrals --------------------------------------------------------------------


def _integral_details(ctx: RunContext, pou: PartitionOfUnity, **extra) -> dict:
    out = {"order": ctx.order, "panels": default_panels(pou.manifold.dim), "partition": pou.label}
    out.update(extra)
    return out


def check_integral(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    eta = sc.forms[chk["form"]]
    pou = partition_for(sc, chk.get("partition"), eta.support, eta.manifold)
    w = weak_integral(eta, pou, ctx.order)
    expected = _expected(chk, eta.space.dim)
    res = float(np.max(np.abs(w.values - expected)))
    return CheckOutcome(res, _integral_details(ctx, pou, value=_weak(w), expected=[_value(v) for v in expected]))


def _expected(chk: dict, dim: int) -> np.ndarray:
    raw = chk.get("expected")
    if raw is None:
        raise ScenarioError("expected", "this check needs an 'expected' list")
    if not isinstance(raw, list) or len(raw) != dim:
        raise ScenarioError("expected", f"'expected' needs one value per dual functional ({dim})")
    return np.array([complex(v[0], v[1]) if isinstance(v, list) else v for v in raw])


def check_cover_independence(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    eta = sc.forms[chk["form"]]
    names = chk.get("partitions")
    if not names or len(names) < 2:
        raise ScenarioError("partitions", "cover_independence needs at least two partitions")
    values = {}
    for n in names:
        values[n] = weak_integral(eta, partition_for(sc, n, eta.support, eta.manifold), ctx.order)
    first = values[names[0]].values
    res = max(float(np.max(np.abs(v.values - first))) for v in values.values())
    return CheckOutcome(res, {"order": ctx.order, "values": {n: _weak(v) for n, v in values.items()}})


def _random_map(space, rng: np.random.Generator) -> LinearMap:
    A = rng.normal(size=(space.dim, space.dim))
    if space.is_complex:
        A = A + 1j * rng.normal(size=(space.dim, space.dim))
    return LinearMap(space, space, A)


def check_weak_integral_pushforward(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """``int psi_x eta = psi(int eta)`` on the dual family, plus exact reconstruction."""
    eta = sc.forms[chk["form"]]
    pou = partition_for(sc, chk.get("partition"), eta.support, eta.manifold)
    w = weak_integral(eta, pou, ctx.order)
    b = belongs_to_G(w)
    recon = float(np.max(np.abs(eta.space.dual_family() @ b.components - w.values)))
    if "maps" in chk:
        maps = [sc.maps[n] for n in chk["maps"]]
    else:
        rng = _rng(ctx, 6)
        maps = [_random_map(eta.space, rng) for _ in range(int(chk.get("random_maps", 5)))]
    per = []
    for psi in maps:
        lhs = weak_integral(pushforward_form(psi, eta), pou, ctx.order).values
        rhs = psi.target.dual_family() @ apply_linear_map(psi, b).components
        scale = max(1.0, float(np.max(np.abs(rhs))))
        per.append(float(np.max(np.abs(lhs - rhs))) / scale)
    res = max([recon] + per)
    return CheckOutcome(res, _integral_details(ctx, pou, reconstruction=recon, per_map=per, value=_weak(w)))


def _scalar_text(chk: dict, key: str) -> str:
    v = chk.get(key)
    if not isinstance(v, str):
        raise ScenarioError(key, f"'{key}' must be an expression string")
    return v


def check_measure_linearity(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    eta = sc.forms[chk["form"]]
    pou = partition_for(sc, chk.get("partition"), eta.support, eta.manifold)
    g, h = _scalar_text(chk, "g"), _scalar_text(chk, "h")
    a, b = float(chk.get("a", 2.0)), float(chk.get("b", -0.5))
    combo = measure_apply(eta, f"({a!r})*({g}) + ({b!r})*({h})", pou, ctx.order).values
    mg = measure_apply(eta, g, pou, ctx.order).values
    mh = measure_apply(eta, h, pou, ctx.order).values
    res = float(np.max(np.abs(combo - (a * mg + b * mh))))
    return CheckOutcome(res, _integral_details(ctx, pou, a=a, b=b))


def check_partition_additivity(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """``sum_a m_eta(psi_a) = int eta``, the weights coming from ``partition`` and
    every integral taken with ``integration_partition`` (default: all charts)."""
    eta = sc.forms[chk["form"]]
    weights = partition_for(sc, chk.get("partition"), eta.support, eta.manifold)
    pou = partition_for(sc, chk.get("integration_partition"), eta.support, eta.manifold)
    total = weak_integral(eta, pou, ctx.order)
    parts = {cid: measure_apply(eta, partition_weight(weights, cid), pou, ctx.order) for cid in weights.chart_ids}
    acc = sum(p.values for p in parts.values())
    res = float(np.max(np.abs(acc - total.values)))
    return CheckOutcome(res, _integral_details(
        ctx, pou, weights=weights.label, total=_weak(total), per_chart={c: _weak(p) for c, p in parts.items()},
    ))


def check_stokes(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    theta = sc.forms[chk["form"]]
    pou = partition_for(sc, chk.get("partition"), theta.support, theta.manifold) if "partition" in chk else None
    sign = int(chk.get("boundary_sign", 1))
    result = stokes_residual(theta, pou, order=ctx.order, boundary_sign=sign)
    res = result.residual
    details = {
        "order": ctx.order,
        "panels": default_panels(theta.manifold.dim),
        "lhs": _weak(result.lhs),
        "rhs": _weak(result.rhs),
        "residual_per_functional": [float(r) for r in result.residuals],
    }
    if "expected" in chk:
        expected = _expected(chk, theta.space.dim)
        err = max(float(np.max(np.abs(result.lhs.values - expected))), float(np.max(np.abs(result.rhs.values - expected))))
        details["expected"] = [_value(v) for v in expected]
        details["error_vs_expected"] = err
        res = max(res, err)
    if sign != 1:
        details["boundary_sign"] = sign
    return CheckOutcome(res, details)


def check_quadrature_oracle(sc: Scenario, chk: dict, ctx: RunContext) -> CheckOutcome:
    """Gauss chart integrals against a seeded uniform Monte-Carlo estimate.

    The residual is the largest discrepancy in units of the oracle's
    standard error.
    """
    eta = sc.forms[chk["form"]]
    pou = partition_for(sc, chk.get("partition"), eta.support, eta.manifold)
    samples = int(chk.get("mc_samples", ctx.mc_samples))
    return CheckOutcome(*oracle_comparison(eta, pou, ctx.order, samples, ctx.seed))


def oracle_comparison(eta: Form, pou: PartitionOfUnity, order: int, samples: int, seed: int) -> tuple[float, dict]:
    terms = chart_terms(eta, pou, order)
    per = {}
    worst = 0.0
    for k, cid in enumerate(pou.chart_ids):
        chart = eta.manifold.chart(cid)
        f = chart_integrand(eta, pou, cid)
        mc, se = monte_carlo_chart_integral(f, chart, samples, seed=seed + k)
        mc = chart.gamma * np.asarray(mc)
        diff_ = np.abs(np.asarray(terms[cid]) - mc)
        z = np.where(se > 0, diff_ / np.where(se > 0, se, 1.0), np.where(diff_ < 1e-12, 0.0, np.inf))
        worst = max(worst, float(np.max(z)))
        per[cid] = {
            "quadrature": [_value(v) for v in terms[cid]],
            "monte_carlo": [_value(v) for v in mc],
            "standard_error": [float(s) for s in np.atleast_1d(se)],
            "z": [float(t) for t in np.atleast_1d(z)],
        }
    return worst, {"order": order, "samples": samples, "per_chart": per}


def is_polynomial_integral(eta: Form, pou: PartitionOfUnity, chart_id: str) -> bool:
    """True when ``psi_a f_a`` is a polynomial on the chart, so Gauss is exact."""
    trivial = len(pou.chart_ids) == 1 and pou.support is None
    top = tuple(range(1, eta.manifold.dim + 1))
    return trivial and all(is_polynomial(p) for p in eta.coefficient(chart_id, top).parts)


@dataclass
class IntegrationTarget:
    """A top form integrated by some check, with the partition it was integrated against."""

    label: str
    form: Form
    partition: PartitionOfUnity

    def key(self) -> str:
        """Identifies equal integrals across scenarios (same atlas, weights and integrand)."""
        M = self.form.manifold
        pou = self.partition
        sup = None if pou.support is None else pou.support.pieces
        tables = {cid: {I: [str(p) for p in f.parts] for I, f in sorted(t.items())} for cid, t in sorted(self.form.tables.items())}
        return repr((M.name, M.description, [(c.id, c.gamma) for c in M.charts], pou.chart_ids, pou.margin, sup, tables))


def integration_targets(sc: Scenario) -> list[IntegrationTarget]:
    """Every (form, partition) integral computed by the scenario's integral checks."""
    out = []
    for i, chk in enumerate(sc.checks):
        kind = chk["kind"]
        tag = f"{sc.id}[{i}]"
        try:
            if kind == "stokes":
                theta = sc.forms[chk["form"]]
                pou = partition_for(sc, chk.get("partition"), theta.support, theta.manifold) if "partition" in chk else None
                pou = pou or build_partition(theta.manifold, theta.support, label="default")
                out.append(IntegrationTarget(f"{tag} d{chk['form']}", exterior_derivative(theta), pou))
                if theta.manifold.has_boundary:
                    dM, restricted = boundary_restriction(theta)
                    dpou = build_partition(dM, boundary_support(theta), label="boundary")
                    out.append(IntegrationTarget(f"{tag} boundary {chk['form']}", restricted, dpou))
            elif kind == "cover_independence":
                eta = sc.forms[chk["form"]]
                for n in chk["partitions"]:
                    out.append(IntegrationTarget(f"{tag} {chk['form']} on {n}", eta, partition_for(sc, n, eta.support, eta.manifold)))
            elif kind in ("integral", "weak_integral_pushforward", "measure_linearity", "partition_additivity", "quadrature_oracle"):
                eta = sc.forms[chk["form"]]
                key = "integration_partition" if kind == "partition_additivity" else "partition"
                out.append(IntegrationTarget(f"{tag} {chk['form']}", eta, partition_for(sc, chk.get(key), eta.support, eta.manifold)))
        except (AtlasError, FieldError):
            # failure-injection scenarios integrate nothing meaningful
            continue
    return out


CHECKS: dict[str, Callable[[Scenario, dict, RunContext], CheckOutcome]] = {
    "dd_zero": check_dd_zero,
    "leibniz": check_leibniz,
    "wedge_commutativity": check_wedge_commutativity,
    "pushforward_naturality": check_pushforward_naturality,
    "pullback_naturality": check_pullback_naturality,
    "tensor_overlap_compat": check_tensor_overlap_compat,
    "partition_sum": check_partition_sum,
    "cover_independence": check_cover_independence,
    "weak_integral_pushforward": check_weak_integral_pushforward,
    "measure_linearity": check_measure_linearity,
    "partition_additivity": check_partition_additivity,
    "stokes": check_stokes,
    "orientation": check_orientation,
    "integral": check_integral,
    "quadrature_oracle": check_quadrature_oracle,
    "fd_gradient": check_fd_gradient,
}
