"""Variance-inequality Bell tests: MABK recursion and the continuous-variable inequality."""

from __future__ import annotations

import itertools
import math
import warnings
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize

from .channels import apply_loss_all, mix_with_noise
from .epr_steering import ABOVE, CriterionReport, efficiency_threshold_scan
from .hilbert import (ModeLayout, Operator, StateVector, annihilation, commutator,
                      expect, expect_product, identity, number, quadrature)
from .states import cv_bell_state

MAX_ENUMERATION_SITES = 6


@dataclass(frozen=True)
class SiteSettings:
    """Per-site quadrature phases theta_k and ordering signs s_k."""

    thetas: tuple[float, ...]
    signs: tuple[int, ...]

    def __post_init__(self):
        if len(self.thetas) != len(self.signs):
            raise ValueError("one (theta, s) pair per site")
        if any(s not in (-1, 1) for s in self.signs):
            raise ValueError("signs must be +1 or -1")
        object.__setattr__(self, "thetas", tuple(float(t) for t in self.thetas))
        object.__setattr__(self, "signs", tuple(int(s) for s in self.signs))

    @classmethod
    def half_split(cls, n: int, thetas: Sequence[float] | None = None) -> "SiteSettings":
        """s_k = +1 on the first n/2 sites and -1 on the rest."""
        thetas = tuple(thetas) if thetas is not None else (0.0,) * n
        return cls(thetas, (1,) * (n // 2) + (-1,) * (n - n // 2))

    @property
    def n(self) -> int:
        return len(self.signs)


@dataclass(frozen=True)
class BellFunctional:
    """Polynomial in per-site symbols X_k, Y_k: each term picks one symbol per site."""

    n: int
    kind: str
    terms: Mapping[tuple[str, ...], object]

    def evaluate(self, x: np.ndarray, y: np.ndarray) -> np.ndarray:
        """Value on assignments x, y of shape (..., n)."""
        x = np.asarray(x)
        y = np.asarray(y)
        out = 0
        for word, coeff in self.terms.items():
            term = complex(coeff) if self.kind == "CV" else float(coeff)
            prod = term
            for k, sym in enumerate(word):
                prod = prod * (x[..., k] if sym == "X" else y[..., k])
            out = out + prod
        return out

    def exchanged(self) -> "BellFunctional":
        swap = {"X": "Y", "Y": "X"}
        return BellFunctional(self.n, self.kind,
                              {tuple(swap[s] for s in w): c for w, c in self.terms.items()})

    def operator(self, settings: Sequence[tuple[Operator, Operator]]) -> Operator:
        """Quantum operator obtained by substituting per-site operator pairs."""
        if len(settings) != self.n:
            raise ValueError("one (X, Y) operator pair per site")
        layout = settings[0][0].layout
        total = identity(layout) * 0.0
        for word, coeff in self.terms.items():
            prod = identity(layout) * complex(coeff)
            for (xo, yo), sym in zip(settings, word):
                prod = prod @ (xo if sym == "X" else yo)
            total = total + prod
        return total


def _combine(a: dict, b: dict, sa: Fraction, sb: Fraction, sym: str) -> dict:
    out: dict = {}
    for terms, scale in ((a, sa), (b, sb)):
        for w, c in terms.items():
            key = w + (sym,)
            out[key] = out.get(key, Fraction(0)) + scale * c
    return out


def mabk_build(n: int) -> tuple[BellFunctional, BellFunctional]:
    """(F_n, F_n') with F_n = (F+F')X_n/2 + (F-F')Y_n/2 and F' the X<->Y exchange."""
    if n < 1:
        raise ValueError("n must be >= 1")
    f: dict = {("X",): Fraction(1)}
    fp: dict = {("Y",): Fraction(1)}
    half = Fraction(1, 2)
    for _ in range(1, n):
        plus = _combine(f, fp, half, half, "X")
        minus = _combine(f, fp, half, -half, "Y")
        new = dict(plus)
        for w, c in minus.items():
            new[w] = new.get(w, Fraction(0)) + c
        new = {w: c for w, c in new.items() if c != 0}
        f = new
        fp = BellFunctional(n, "MABK", f).exchanged().terms
    return BellFunctional(n, "MABK", f), BellFunctional(n, "MABK", dict(fp))


def cv_build(n: int) -> BellFunctional:
    """C_n = prod_k (X_k + i Y_k) expanded into 2^n monomials."""
    terms = {}
    for word in itertools.product("XY", repeat=n):
        terms[word] = 1j ** word.count("Y")
    return BellFunctional(n, "CV", terms)


def _all_pm(n: int) -> np.ndarray:
    return np.array(list(itertools.product((-1.0, 1.0), repeat=n)))


def mabk_lhv_max(n: int) -> float:
    """Largest |F_n| over the 4^n deterministic +-1 strategies."""
    if n > MAX_ENUMERATION_SITES:
        warnings.warn(f"n={n} too large to enumerate; returning the analytic LHV bound 1")
        return 1.0
    f, _ = mabk_build(n)
    v = _all_pm(2 * n)
    return float(np.max(np.abs(f.evaluate(v[:, :n], v[:, n:]))))


def qubit_settings(layout: ModeLayout, angles_x: Sequence[float],
                   angles_y: Sequence[float]) -> list[tuple[Operator, Operator]]:
    """X(phi) on cutoff-1 modes: cos(phi) sigma_x + sin(phi) sigma_y up to basis order."""
    return [(quadrature(layout, k, ax), quadrature(layout, k, ay))
            for k, (ax, ay) in enumerate(zip(angles_x, angles_y))]


def ghz_qubits(n: int, chi: float = 0.0) -> StateVector:
    layout = ModeLayout((1,) * n)
    amps = np.zeros(layout.dim, dtype=complex)
    amps[0] = 1 / math.sqrt(2)
    amps[-1] = np.exp(1j * chi) / math.sqrt(2)
    return StateVector(layout, amps)


@dataclass(frozen=True)
class QuantumOptimum:
    value: float
    angles_x: tuple[float, ...]
    angles_y: tuple[float, ...]
    chi: float
    eig_max: float
    bound: float


def mabk_quantum_optimum(n: int, seed: int = 0, restarts: int = 12) -> QuantumOptimum:
    """Maximize <GHZ|F_n|GHZ> over per-site angles and the GHZ relative phase."""
    f, _ = mabk_build(n)
    layout = ModeLayout((1,) * n)
    bound = 2 ** ((n - 1) / 2)

    def unpack(v):
        return v[:n], v[n:2 * n], v[2 * n]

    def value(v):
        ax, ay, chi = unpack(v)
        op = f.operator(qubit_settings(layout, ax, ay))
        return expect(ghz_qubits(n, chi), op).real

    rng = np.random.default_rng(seed)
    best = None
    starts = [np.concatenate([np.zeros(n), np.full(n, np.pi / 2), [0.0]])]
    starts += [rng.uniform(-np.pi, np.pi, 2 * n + 1) for _ in range(restarts)]
    for x0 in starts:
        res = minimize(lambda v: -value(v), x0, method="BFGS", options={"gtol": 1e-12})
        if best is None or -res.fun > -best.fun:
            best = res
    ax, ay, chi = unpack(best.x)
    op = f.operator(qubit_settings(layout, ax, ay))
    eig = float(np.max(np.linalg.eigvalsh(0.5 * (op.matrix + op.matrix.conj().T))))
    return QuantumOptimum(float(-best.fun), tuple(ax), tuple(ay), float(chi), eig, bound)


def mabk_quantum_max(n: int, seed: int = 0) -> float:
    return mabk_quantum_optimum(n, seed).value


def _check_involutive(op: Operator, tol: float = 1e-8):
    sq = (op @ op).local
    if np.max(np.abs(sq - np.eye(sq.shape[0])), initial=0.0) > tol:
        raise ValueError("setting operator does not square to the identity")


def commutator_recursion_check(n: int, rho, settings: Sequence[tuple[Operator, Operator]]) -> float:
    """Max-norm residual of F_n^2 = F_{n-1}^2 - [F_{n-1}, F'_{n-1}][X_n, Y_n]/4.

    When `rho` is given the residual of its expectation is included too.
    """
    for xo, yo in settings[:n]:
        _check_involutive(xo)
        _check_involutive(yo)
    if n == 1:
        return 0.0
    f, _ = mabk_build(n)
    g, gp = mabk_build(n - 1)
    fo = f.operator(settings[:n])
    go = g.operator(settings[:n - 1])
    gpo = gp.operator(settings[:n - 1])
    xn, yn = settings[n - 1]
    diff = fo @ fo - (go @ go - 0.25 * (commutator(go, gpo) @ commutator(xn, yn)))
    residual = float(np.max(np.abs(diff.local), initial=0.0))
    if rho is not None:
        residual = max(residual, abs(expect(rho, diff)))
    return residual


# ------------------------------------------------------ CV Bell inequality

def _bell_ops(layout, settings: SiteSettings, modes):
    ops = []
    for k, s in zip(modes, settings.signs):
        a = annihilation(layout, k)
        ops.append(a if s == 1 else a.dag())
    return ops


def cv_bell_eval(rho, settings: SiteSettings, modes: Sequence[int] | None = None) -> CriterionReport:
    """|2^n <prod A_k(s_k)>|^2 against <prod (4 n_k + 2)>; violated when lhs > rhs.

    The right side uses the number-operator form: X_k^2 + Y_k^2 = 4 n_k + 2
    holds on the untruncated space, while truncated quadratures lose the top
    Fock level.
    """
    layout = rho.layout
    n = settings.n
    modes = list(range(n)) if modes is None else list(modes)
    if len(modes) != n or len(set(modes)) != n:
        raise ValueError("need one distinct mode per site")
    corr = expect_product(rho, _bell_ops(layout, settings, modes))
    lhs = 4.0 ** n * abs(corr) ** 2
    rhs_ops = [Operator(layout, (k,), 4 * number(layout, k).local + 2 * np.eye(layout.dims[k]))
               for k in modes]
    rhs = expect_product(rho, rhs_ops).real
    return CriterionReport("cv-bell", lhs, rhs,
                           {"n": n, "ratio": lhs / rhs, "abs_corr": abs(corr)}, direction=ABOVE)


def cv_ratio_closed_form(n: int, eta: float = 1.0) -> float:
    """lhs/rhs for the balanced state after loss eta on every mode."""
    return 0.25 * (4 * eta ** 2 / (2 * eta + 1)) ** (n / 2)


def balanced_cv_state(n: int) -> StateVector:
    return cv_bell_state(n, 1 / math.sqrt(2), 1 / math.sqrt(2))


def cv_efficiency_threshold(n: int) -> float:
    """eta_min = (1 + sqrt(1 + d)) / d with d = 4^{1 - 2/n}."""
    if n < 2 or n % 2:
        raise ValueError("n must be even")
    # ratio = (4/3)^{n/2} / 4, compared in logs so large n cannot overflow
    if 0.5 * n * math.log(4 / 3) <= math.log(4):
        raise ValueError(f"no violation at n={n} even without loss; no threshold exists")
    d = 4.0 ** (1 - 2 / n)
    return (1 + math.sqrt(1 + d)) / d


def cv_efficiency_threshold_numeric(n: int, tol: float = 1e-4, grid_points: int = 11):
    """Scan apply_loss on every mode of the balanced state; returns a ThresholdResult."""
    psi = balanced_cv_state(n).density()
    settings = SiteSettings.half_split(n)

    def crit(eta):
        return cv_bell_eval(apply_loss_all(psi, eta), settings)

    return efficiency_threshold_scan(crit, np.linspace(0.9, 1.0, grid_points), tol=tol)


def cv_fidelity_threshold(n: int, subspace="photon", tol: float = 1e-6, grid_points: int = 21):
    """Smallest eps at which eps|Psi><Psi| + (1-eps) noise still violates."""
    psi = balanced_cv_state(n)
    settings = SiteSettings.half_split(n)
    if cv_bell_eval(psi, settings).margin <= 0:
        raise ValueError(f"no violation at n={n} even without noise; no threshold exists")

    def crit(eps):
        return cv_bell_eval(mix_with_noise(psi, eps, subspace), settings)

    return efficiency_threshold_scan(crit, np.linspace(0.0, 1.0, grid_points), tol=tol)


# ------------------------------------------------------------ LHV sampling

Sampler = Callable[[np.random.Generator, int], tuple[np.ndarray, np.ndarray, np.ndarray]]


def deterministic_sampler(n: int, atoms: int = 1) -> Sampler:
    """Ensembles of `atoms` random +-1 strategies with Dirichlet weights."""
    def sample(rng, trials):
        w = rng.dirichlet(np.ones(atoms), size=trials)
        x = rng.choice((-1.0, 1.0), size=(trials, atoms, n))
        y = rng.choice((-1.0, 1.0), size=(trials, atoms, n))
        return w, x, y
    sample.bounds = np.ones(n)
    return sample


def bounded_sampler(n: int, atoms: int = 4) -> Sampler:
    """Real assignments uniform in [-1, 1]."""
    def sample(rng, trials):
        w = rng.dirichlet(np.ones(atoms), size=trials)
        return w, rng.uniform(-1, 1, (trials, atoms, n)), rng.uniform(-1, 1, (trials, atoms, n))
    sample.bounds = np.ones(n)
    return sample


def gaussian_sampler(n: int, atoms: int = 4, shift: float = 1.0) -> Sampler:
    """Unbounded Gaussian assignments with random per-site offsets."""
    def sample(rng, trials):
        w = rng.dirichlet(np.ones(atoms), size=trials)
        base = rng.normal(0, shift, (trials, 1, n))
        x = base + rng.normal(0, 1, (trials, atoms, n))
        y = rng.normal(0, shift, (trials, 1, n)) + rng.normal(0, 1, (trials, atoms, n))
        return w, x, y
    sample.bounds = None
    return sample


def _sup_square(functional: BellFunctional, bounds: np.ndarray) -> float:
    """max |F|^2 over the box |X_k|, |Y_k| <= b_k (attained at vertices: F is multilinear)."""
    n = functional.n
    v = _all_pm(2 * n) * np.concatenate([bounds, bounds])
    return float(np.max(np.abs(functional.evaluate(v[:, :n], v[:, n:])) ** 2))


def lhv_variance_sampler(functional: BellFunctional, strategy_sampler: Sampler, trials: int,
                         rng: np.random.Generator | int = 0, batch: int = 20000) -> float:
    """Largest |<F>|^2 / <|F|^2>_sup seen over sampled hidden-variable ensembles."""
    rng = np.random.default_rng(rng)
    bounds = getattr(strategy_sampler, "bounds", None)
    sup = _sup_square(functional, np.asarray(bounds)) if bounds is not None else None
    best = 0.0
    done = 0
    while done < trials:
        m = min(batch, trials - done)
        w, x, y = strategy_sampler(rng, m)
        vals = functional.evaluate(x, y)
        mean = np.sum(w * vals, axis=1)
        if sup is not None:
            denom = np.full(m, sup)
        else:
            denom = np.sum(w * np.abs(vals) ** 2, axis=1)
        ok = denom > 0
        if np.any(ok):
            best = max(best, float(np.max(np.abs(mean[ok]) ** 2 / denom[ok])))
        done += m
    return best
