"""EPR-Reid and EPR-Bohm steering criteria, inference variances and efficiency scans."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .channels import apply_loss_all
from .hilbert import (CONDITION_MIN_PROB, JointDistribution, Operator, expectation,
                      joint_distribution, schwinger_spin, site_number)
from .states import SITE_A, SITE_B, spin_singlet

BELOW = "lhs<rhs"
ABOVE = "lhs>rhs"


@dataclass(frozen=True)
class CriterionReport:
    """One inequality evaluation.

    `direction` says which side must dominate for a violation: "lhs<rhs"
    (steering and macroscopic witnesses) or "lhs>rhs" (Bell inequalities).
    A report with `defined=False` is never violated.
    """

    label: str
    lhs: float
    rhs: float
    params: Mapping[str, float] = field(default_factory=dict)
    direction: str = BELOW
    defined: bool = True

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs if self.direction == BELOW else self.lhs - self.rhs

    @property
    def violated(self) -> bool:
        return self.defined and self.margin > 0

    def as_row(self) -> dict:
        row = {"label": self.label, "lhs": self.lhs, "rhs": self.rhs,
               "margin": self.margin, "violated": self.violated}
        row.update(self.params)
        return row


@dataclass(frozen=True)
class InferenceVariance:
    """Average inference variance; `g` is the regression slope of the linear estimate g*A."""

    value: float
    kind: str
    g: float | None = None

    def __float__(self):
        return self.value


def _pair_table(joint: JointDistribution, target_axis: int, pointer_axis: int):
    if target_axis == pointer_axis:
        raise ValueError("target and pointer axes must differ")
    m = joint.marginal([pointer_axis, target_axis])
    return m.outcomes[0], m.outcomes[1], m.probs


def inference_variance(joint: JointDistribution, target_axis: int = 1, pointer_axis: int = 0,
                       kind: str = "conditional") -> InferenceVariance:
    """Error in predicting the target outcome from the pointer outcome.

    conditional: sum_a P(a) Var(B | a), skipping outcomes with P(a) < 1e-12.
    linear: <B^2> - <AB>^2 / <A^2>, the error of the best estimate g*A.
    """
    a, b, p = _pair_table(joint, target_axis, pointer_axis)
    if kind == "conditional":
        pa = p.sum(axis=1)
        total = 0.0
        for i in np.nonzero(pa >= CONDITION_MIN_PROB)[0]:
            cond = p[i] / pa[i]
            mu = np.dot(cond, b)
            total += pa[i] * np.dot(cond, (b - mu) ** 2)
        return InferenceVariance(float(max(total, 0.0)), kind)
    if kind == "linear":
        aa = float(np.einsum("ij,i->", p, a * a))
        ab = float(np.einsum("ij,i,j->", p, a, b))
        bb = float(np.einsum("ij,j->", p, b * b))
        if aa <= 0:
            raise ValueError("linear estimator needs <A^2> > 0")
        return InferenceVariance(float(max(bb - ab * ab / aa, 0.0)), kind, ab / aa)
    raise ValueError(f"unknown estimator kind {kind!r}")


def linear_inference_variance(state, target: Operator, pointer: Operator) -> InferenceVariance:
    """Linear-estimate inference variance from operator moments (no spectra needed)."""
    aa = expectation(state, pointer @ pointer)
    ab = expectation(state, 0.5 * (pointer @ target + target @ pointer))
    bb = expectation(state, target @ target)
    if aa <= 0:
        raise ValueError("linear estimator needs <A^2> > 0")
    return InferenceVariance(max(bb - ab * ab / aa, 0.0), "linear", ab / aa)


def pair_inference(state, target: Operator, pointer: Operator, kind: str = "conditional") -> InferenceVariance:
    if kind == "linear":
        return linear_inference_variance(state, target, pointer)
    return inference_variance(joint_distribution(state, pointer, target), 1, 0, kind)


def reid_criterion(rho, x_pair: Sequence[Operator], p_pair: Sequence[Operator],
                   kind: str = "conditional") -> CriterionReport:
    """Delta_inf(x^B | x^A) * Delta_inf(p^B | p^A) >= 1; x_pair = (X^A, X^B)."""
    vx = pair_inference(rho, x_pair[1], x_pair[0], kind)
    vp = pair_inference(rho, p_pair[1], p_pair[0], kind)
    lhs = math.sqrt(vx.value * vp.value)
    return CriterionReport("epr-reid", lhs, 1.0,
                           {"var_inf_x": vx.value, "var_inf_p": vp.value,
                            "product_of_variances": vx.value * vp.value})


def _spin_set(layout, site):
    return {c: schwinger_spin(layout, site, c) for c in "xyz"}


def _pointers(layout, sites, axes):
    spins_a = _spin_set(layout, sites[0])
    spins_b = _spin_set(layout, sites[1])
    pointers = dict(spins_a)
    for comp, obs in (axes or {}).items():
        if comp not in "xyz":
            raise ValueError(f"unknown B component {comp!r}")
        pointers[comp] = spins_a[obs] if isinstance(obs, str) else obs
    for comp, obs in pointers.items():
        if set(obs.modes) & set(sites[1]):
            raise ValueError(f"pointer for j_{comp}^B must act on site A only")
    return pointers, spins_b


def z_correlation_sum(rho, pointer: Operator, target: Operator) -> float:
    """sum over pointer outcomes of P(a) |<target | a>|."""
    joint = joint_distribution(rho, pointer, target)
    pa = joint.probs.sum(axis=1)
    total = 0.0
    for i in np.nonzero(pa >= CONDITION_MIN_PROB)[0]:
        total += abs(np.dot(joint.probs[i], joint.outcomes[1]))
    return float(total)


def bohm_product_criterion(rho, sites: Sequence[Sequence[int]] = (SITE_A, SITE_B),
                           axes: Mapping[str, object] | None = None,
                           kind: str = "conditional") -> CriterionReport:
    """Delta_inf(j_x^B) Delta_inf(j_y^B) >= (1/2) sum P(J_z^A) |<j_z^B | J_z^A>|.

    The factor 1/2 is the spin uncertainty bound Delta j_x Delta j_y >= |<j_z>|/2
    applied to each conditional state of B; `zz_sum` in params is the bare sum.
    `axes` maps a B component to the site-A observable used to infer it.
    """
    pointers, spins_b = _pointers(rho.layout, sites, axes)
    vx = pair_inference(rho, spins_b["x"], pointers["x"], kind)
    vy = pair_inference(rho, spins_b["y"], pointers["y"], kind)
    zz = z_correlation_sum(rho, pointers["z"], spins_b["z"])
    lhs = math.sqrt(vx.value * vy.value)
    return CriterionReport("epr-bohm-product", lhs, 0.5 * zz,
                           {"var_inf_x": vx.value, "var_inf_y": vy.value, "zz_sum": zz})


def bohm_sum_criterion(rho, sites: Sequence[Sequence[int]] = (SITE_A, SITE_B),
                       axes: Mapping[str, object] | None = None,
                       kind: str = "conditional") -> CriterionReport:
    """sum_{i=x,y,z} Delta^2_inf(j_i^B | J_i^A) >= <N^B>/2."""
    pointers, spins_b = _pointers(rho.layout, sites, axes)
    parts = {c: pair_inference(rho, spins_b[c], pointers[c], kind).value for c in "xyz"}
    nb = expectation(rho, site_number(rho.layout, sites[1]))
    params = {f"var_inf_{c}": v for c, v in parts.items()}
    params["mean_NB"] = nb
    return CriterionReport("epr-bohm-sum", sum(parts.values()), nb / 2, params)


def superposition_size_from_epr(mean_nb: float, var_est_z: float) -> float:
    return math.sqrt(max(0.0, mean_nb - 2 * var_est_z))


# ------------------------------------------------------------ state families

def lossy_bell(eta: float):
    """j = 1/2 singlet with every mode sent through loss eta."""
    return apply_loss_all(spin_singlet(0.5).density(), eta)


def parametric_estimate_variance(eta: float, r: float) -> float:
    """Linear-estimate inference variance of each j_i^B for the lossy amplifier output."""
    s = math.sinh(r) ** 2
    return eta * s * (1 - eta ** 2 + 2 * eta * (1 - eta) * s) / (2 * (1 + eta * s))


def parametric_mean_nb(eta: float, r: float) -> float:
    return 2 * eta * math.sinh(r) ** 2


def parametric_sum_report(eta: float, mean_nb: float | None = None, r: float | None = None) -> CriterionReport:
    """Sum criterion for the lossy amplifier from the closed-form moments.

    Give either the detected <N^B> (then sinh^2 r = <N^B>/(2 eta)) or r.
    """
    if (mean_nb is None) == (r is None):
        raise ValueError("give exactly one of mean_nb or r")
    if r is None:
        r = math.asinh(math.sqrt(mean_nb / (2 * eta)))
    var = parametric_estimate_variance(eta, r)
    nb = parametric_mean_nb(eta, r)
    size = superposition_size_from_epr(nb, var)
    return CriterionReport("epr-bohm-sum-closed-form", 3 * var, nb / 2,
                           {"eta": eta, "r": r, "var_est": var, "mean_NB": nb, "size_S": size})


# ---------------------------------------------------------- threshold scans

@dataclass(frozen=True)
class ThresholdResult:
    threshold: float | None
    monotone: bool
    upper_bound_only: bool
    curve: list[tuple[float, float]]
    message: str = ""


def _margin(value) -> float:
    return value.margin if isinstance(value, CriterionReport) else float(value)


def efficiency_threshold_scan(criterion: Callable[[float], object], eta_grid: Sequence[float],
                              tol: float = 1e-4, threads: int = 1,
                              mono_tol: float = 1e-12) -> ThresholdResult:
    """Smallest eta at which the violation margin becomes positive.

    `criterion(eta)` returns a CriterionReport (or a bare margin). The margin
    must be non-decreasing on the grid; the crossing is refined by bisection
    until the bracket is narrower than `tol`.
    """
    grid = [float(e) for e in eta_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("eta grid must be non-empty and increasing")
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            margins = [_margin(v) for v in pool.map(criterion, grid)]
    else:
        margins = [_margin(criterion(e)) for e in grid]
    curve = list(zip(grid, margins))
    if any(b < a - mono_tol for a, b in zip(margins, margins[1:])):
        return ThresholdResult(None, False, False, curve, "margin is not monotone in eta")
    violated = [m > 0 for m in margins]
    if violated[0]:
        return ThresholdResult(grid[0], True, True, curve, "violated on the whole grid")
    if not any(violated):
        return ThresholdResult(None, True, False, curve, "no violation on the grid")
    i = violated.index(True)
    lo, hi = grid[i - 1], grid[i]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _margin(criterion(mid)) > 0:
            hi = mid
        else:
            lo = mid
    return ThresholdResult(0.5 * (lo + hi), True, False, curve)


def zero_crossing(etas: Sequence[float], margins: Sequence[float]) -> float | None:
    """Linear interpolation of the first sign change from <= 0 to > 0."""
    for (e0, m0), (e1, m1) in zip(zip(etas, margins), zip(etas[1:], margins[1:])):
        if m0 <= 0 < m1:
            return e0 + (e1 - e0) * (-m0) / (m1 - m0)
    return None
