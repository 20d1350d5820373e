"""Witnesses of superpositions spanning a separation S in a quadrature.

Binned criteria split x into x <= -S/2, a central band and x >= S/2 and
compare the resulting region statistics against a complementary variance;
the non-locatable criteria depend on the complementary spread alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .channels import BinnedSummary, bin
from .epr_steering import CriterionReport, pair_inference
from .hilbert import (JointDistribution, Observable, as_density, default_grid,
                      joint_distribution, quadrature, quadrature_basis,
                      quadrature_density, quadrature_joint_density, reduced, variance)


@dataclass(frozen=True)
class SScopicReport:
    S_max: float
    criterion: str
    sweep: list[tuple[float, float, float, bool]]
    downset: bool
    lower_bound_only: bool = False


def binned_terms(summary: BinnedSummary) -> tuple[float, float]:
    """(Delta^2_ave x, delta) for a summary with both outer regions populated."""
    s = summary.S
    ave = summary.p_plus * summary.var_plus + summary.p_minus * summary.var_minus
    delta = ((summary.mu_plus + s / 2) ** 2 + (summary.mu_minus - s / 2) ** 2 + s ** 2 / 2
             + summary.var_plus + summary.var_minus)
    return ave, delta


def _undefined(label, S, var_p):
    return CriterionReport(label, 0.0, 0.0, {"S": S, "var_p": var_p}, defined=False)


def binned_product_criterion(xdist: JointDistribution, var_p: float, S: float,
                             label: str = "binned-product") -> CriterionReport:
    """(Delta^2_ave x + P_0 delta) Var(p) >= 1."""
    summary = bin(xdist, S)
    if not summary.defined:
        return _undefined(label, S, var_p)
    ave, delta = binned_terms(summary)
    lhs = (ave + summary.p_zero * delta) * var_p
    return CriterionReport(label, lhs, 1.0, {"S": S, "var_ave": ave, "delta": delta,
                                             "p_zero": summary.p_zero, "var_p": var_p})


def binned_sum_criterion(xdist: JointDistribution, var_p: float, S: float,
                         label: str = "binned-sum") -> CriterionReport:
    """Delta^2_ave x + Var(p) >= 2 - P_0 delta."""
    summary = bin(xdist, S)
    if not summary.defined:
        return _undefined(label, S, var_p)
    ave, delta = binned_terms(summary)
    return CriterionReport(label, ave + var_p, 2 - summary.p_zero * delta,
                           {"S": S, "var_ave": ave, "delta": delta,
                            "p_zero": summary.p_zero, "var_p": var_p})


def single_mode_inputs(state, mode: int = 0, grid=None, method: str = "continuous"):
    """(x distribution, Var(p)) for one mode.

    `continuous` samples the quadrature density of the truncated state on a
    fine grid; `spectral` uses the discrete eigenvalues of truncated x.
    """
    x = quadrature(state.layout, mode, 0.0)
    p = quadrature(state.layout, mode, math.pi / 2)
    if method == "continuous":
        xdist = quadrature_density(state, mode, 0.0, grid)
    elif method == "spectral":
        xdist = joint_distribution(state, x)
    else:
        raise ValueError(f"unknown method {method!r}")
    return xdist, variance(state, p)


def bipartite_inputs(state, kind: str = "inference", modes: Sequence[int] = (0, 1),
                     inference: str = "linear", grid=None):
    """Inputs of the two-site binned criteria.

    inference: x = x^A, complementary variance = Delta^2_inf(p^A | p^B).
    sum-mode: x = (x^A + x^B)/sqrt 2, complementary variance = Var((p^A + p^B)/sqrt 2).
    """
    a, b = modes
    layout = state.layout
    pa, pb = quadrature(layout, a, math.pi / 2), quadrature(layout, b, math.pi / 2)
    if kind == "inference":
        xdist = quadrature_density(state, a, 0.0, grid)
        var = pair_inference(state, pa, pb, inference).value
        return xdist, var
    if kind == "sum-mode":
        if grid is None:
            ga = default_grid(state, a, 0.0, spacing=0.02, width=8.0)
            gb = default_grid(state, b, 0.0, spacing=0.02, width=8.0)
            half = max(abs(ga[0]), abs(gb[0]))
            grid = np.arange(-round(half / 0.02), round(half / 0.02) + 1) * 0.02
        joint = quadrature_joint_density(state, (a, b), (0.0, 0.0), (grid, grid))
        xdist = joint.derived(lambda u, v: (u + v) / math.sqrt(2), "(xA+xB)/sqrt2")
        psum = Observable.from_operator((pa + pb) / math.sqrt(2))
        return xdist, variance(state, psum)
    raise ValueError(f"unknown kind {kind!r}")


def bipartite_binned_criterion(state, S: float, kind: str = "inference", form: str = "product",
                               inference: str = "linear", modes: Sequence[int] = (0, 1),
                               inputs=None) -> CriterionReport:
    """Two-site binned criteria (inference or sum-mode variables, product or sum form)."""
    xdist, var = inputs if inputs is not None else bipartite_inputs(state, kind, modes, inference)
    fn = binned_product_criterion if form == "product" else binned_sum_criterion
    return fn(xdist, var, S, label=f"bipartite-{kind}-{form}")


def nonlocatable_size(spread: float) -> float:
    """Size certified by a complementary standard deviation: S = 2 / spread."""
    if not spread > 0:
        raise ValueError("spread must be positive")
    return 2.0 / spread


def nonlocatable_criterion(spread: float, S: float, label: str = "nonlocatable") -> CriterionReport:
    """Delta p > 2/S; violated when the spread falls below 2/S."""
    if not S > 0:
        raise ValueError("S must be positive")
    return CriterionReport(label, spread, 2.0 / S, {"S": S})


def coherent_superposition_size(var_p: float) -> float:
    """s_alpha = sqrt(1/Var(p) - 1); zero when Var(p) >= 1."""
    if not var_p > 0:
        raise ValueError("variance must be positive")
    if var_p >= 1:
        return 0.0
    return math.sqrt(1.0 / var_p - 1.0)


def coherent_state_criterion(var_p: float, s_alpha: float) -> CriterionReport:
    """Var(p) >= 1/(1 + s_alpha^2) for mixtures of coherent-state superpositions of separation < s_alpha.

    The bound rests on Var(x) <= 1 + s_alpha^2 for every such superposition,
    which holds for two-component cats but not for arbitrary coefficients:
    coherent states from a narrow window span the Fock space densely, so
    finely tuned combinations can be squeezed well below the bound.
    """
    return CriterionReport("coherent-superposition", var_p, 1.0 / (1.0 + s_alpha ** 2),
                           {"s_alpha": s_alpha})


def s_max_sweep(criterion: Callable[[float], CriterionReport], S_grid: Sequence[float],
                tol: float | None = None, label: str | None = None) -> SScopicReport:
    """Largest violated S on the grid, refined by bisection towards the next grid point."""
    grid = [float(s) for s in S_grid]
    if not grid or any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError("S grid must be non-empty and increasing")
    reports = [criterion(s) for s in grid]
    sweep = [(s, r.lhs, r.rhs, r.violated) for s, r in zip(grid, reports)]
    flags = [r.violated for r in reports]
    name = label or (reports[0].label if reports else "")
    seen_false = False
    downset = True
    for f in flags:
        if f and seen_false:
            downset = False
        seen_false |= not f
    if not any(flags):
        return SScopicReport(0.0, name, sweep, downset)
    last = max(i for i, f in enumerate(flags) if f)
    if last == len(grid) - 1:
        return SScopicReport(grid[-1], name, sweep, downset, lower_bound_only=True)
    lo, hi = grid[last], grid[last + 1]
    tol = tol if tol is not None else (hi - lo) / 256
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if criterion(mid).violated:
            lo = mid
        else:
            hi = mid
    return SScopicReport(lo, name, sweep, downset)


# ------------------------------------------------- coherence between outcomes

def _basis_matrix(basis, dim: int) -> np.ndarray:
    if basis is None:
        return np.eye(dim)
    if isinstance(basis, Observable):
        return basis.spectrum.eigvecs if basis.local.shape[0] == dim else None
    return np.asarray(basis)


def _rho_in_basis(rho, basis):
    mat = as_density(rho).matrix if not isinstance(rho, np.ndarray) else rho
    v = _basis_matrix(basis, mat.shape[0])
    if v is None:
        raise ValueError("basis observable must act on the whole layout")
    return v.conj().T @ mat @ v, v


def coherence_offdiag(rho, x1_index: int, x2_index: int, basis=None) -> complex:
    """<x1|rho|x2> in the eigenbasis of `basis` (an Observable, matrix of columns or None for Fock)."""
    r, _ = _rho_in_basis(rho, basis)
    d = r.shape[0]
    for i in (x1_index, x2_index):
        if not 0 <= i < d:
            raise IndexError(f"index {i} out of range for dimension {d}")
    return complex(r[x1_index, x2_index])


@dataclass(frozen=True)
class CoherenceDecomposition:
    """rho = p1 rho1 + p2 rho2 with <x2|rho1|x2> = 0 and <x1|rho2|x1> = 0 (in the chosen basis)."""

    p1: float
    rho1: np.ndarray
    p2: float
    rho2: np.ndarray


@dataclass(frozen=True)
class CoherencePresent:
    value: complex


def coherence_decompose(rho, x1_index: int, x2_index: int, basis=None, tol: float = 1e-10):
    """Split rho into one part without x2 and one without x1, if there is no x1-x2 coherence.

    With rho = M M^dag from its eigen-ensemble (the Schmidt form of a
    purification), measuring the purifying system along u = M^dag|x1>/|.|
    leaves p1 rho1 = rho|x1><x1|rho / <x1|rho|x1> and p2 rho2 = rho - p1 rho1.
    Matrices are returned in the chosen basis.
    """
    value = coherence_offdiag(rho, x1_index, x2_index, basis)
    if abs(value) >= tol:
        return CoherencePresent(value)
    r, _ = _rho_in_basis(rho, basis)
    r = 0.5 * (r + r.conj().T)
    d = r.shape[0]
    w, v = np.linalg.eigh(r)
    m = v * np.sqrt(np.clip(w, 0.0, None))
    e1 = np.zeros(d)
    e1[x1_index] = 1.0
    e2 = np.zeros(d)
    e2[x2_index] = 1.0
    u = m.conj().T @ e1
    nu = np.linalg.norm(u)
    if nu ** 2 < tol:
        # x1 never occurs: everything goes into the component without x1
        return CoherenceDecomposition(0.0, np.outer(e1, e1).astype(complex), 1.0, r)
    u = u / nu
    part1 = m @ np.outer(u, u.conj()) @ m.conj().T
    part2 = r - part1
    p1 = float(np.real(np.trace(part1)))
    p2 = float(np.real(np.trace(part2)))
    rho1 = part1 / p1
    rho2 = part2 / p2 if p2 > tol else np.outer(e2, e2).astype(complex)
    if p2 <= tol:
        p1, p2 = 1.0, 0.0
    return CoherenceDecomposition(p1, rho1, p2, rho2)


def position_kernel(state, x1: float, x2: float, mode: int = 0) -> complex:
    """Continuous <x1|rho|x2> for one mode of the truncated state."""
    cutoff = state.layout.cutoffs[mode]
    rho = reduced(state, (mode,))
    phi = quadrature_basis(cutoff, np.array([x1, x2]))
    return complex(phi[:, 0] @ rho @ phi[:, 1])
