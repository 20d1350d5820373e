"""Constructors for the states the criteria are evaluated on.

Four-mode Schwinger layouts use the mode order (a+, a-, b+, b-): site A is
modes (0, 1) and site B is modes (2, 3).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.linalg import expm
from scipy.special import gammaln
from scipy.stats import poisson

from .hilbert import (DensityOperator, ModeLayout, StateVector, annihilation,
                      permute_modes)

TAIL_TOL = 1e-6
SITE_A = (0, 1)
SITE_B = (2, 3)


@dataclass(frozen=True)
class SqueezeParams:
    r: float

    def __post_init__(self):
        if not self.r >= 0:
            raise ValueError(f"squeeze parameter must be >= 0, got {self.r}")


def _check_tail(tail: float, what: str):
    if tail > TAIL_TOL:
        raise ValueError(f"{what}: probability beyond cutoff {tail:.3e} exceeds {TAIL_TOL:g}; raise the cutoff")


def coherent_amplitudes(alpha: complex, cutoff: int) -> np.ndarray:
    n = np.arange(cutoff + 1)
    if alpha == 0:
        amps = np.zeros(cutoff + 1, dtype=complex)
        amps[0] = 1.0
        return amps
    logmag = n * np.log(abs(alpha)) - 0.5 * gammaln(n + 1) - abs(alpha) ** 2 / 2
    return np.exp(logmag) * np.exp(1j * np.angle(alpha) * n)


def coherent(alpha: complex, cutoff: int) -> StateVector:
    _check_tail(float(poisson.sf(cutoff, abs(alpha) ** 2)), f"coherent alpha={alpha}")
    return StateVector(ModeLayout((cutoff,)), coherent_amplitudes(alpha, cutoff)).normalize()


def _squeezed_amplitudes(r: float, cutoff: int) -> np.ndarray:
    # even-n amplitudes; sign chosen so that Var(x) = e^{2r}, Var(p) = e^{-2r}
    amps = np.zeros(cutoff + 1, dtype=complex)
    t = math.tanh(r)
    for m in range(cutoff // 2 + 1):
        if t == 0 and m > 0:
            break
        log = 0.5 * gammaln(2 * m + 1) - m * math.log(2) - gammaln(m + 1)
        amps[2 * m] = math.exp(log) * t ** m / math.sqrt(math.cosh(r))
    return amps


def squeezed(r: float, cutoff: int) -> StateVector:
    """Single-mode squeezed vacuum with Var(x) = e^{2r} and Var(p) = e^{-2r}."""
    r = SqueezeParams(r).r
    amps = _squeezed_amplitudes(r, cutoff)
    _check_tail(max(0.0, 1 - float(np.sum(np.abs(amps) ** 2))), f"squeezed r={r}")
    return StateVector(ModeLayout((cutoff,)), amps).normalize()


def _tms_matrix(r: float, ca: int, cb: int, sign: float = -1.0) -> np.ndarray:
    t = math.tanh(r)
    c = np.zeros((ca + 1, cb + 1), dtype=complex)
    for n in range(min(ca, cb) + 1):
        c[n, n] = (sign * t) ** n / math.cosh(r)
    return c


def thermal_tail(mean: float, cutoff: int) -> float:
    """P(n > cutoff) for a thermal distribution with the given mean."""
    if mean <= 0:
        return 0.0
    return (mean / (1 + mean)) ** (cutoff + 1)


def recommended_cutoff(r: float, tol: float = 1e-8, kind: str = "two_mode") -> int:
    """Smallest cutoff with per-mode tail probability below tol.

    `two_mode` uses the thermal marginal with mean sinh^2 r; `single` uses the
    squeezed-vacuum photon statistics, whose tail is heavier.
    """
    if r == 0:
        return 1
    if kind == "two_mode":
        p = math.tanh(r) ** 2
        return max(1, math.ceil(math.log(tol) / math.log(p)) - 1)
    if kind == "single":
        cutoff = 2
        while True:
            amps = _squeezed_amplitudes(r, cutoff)
            if 1 - np.sum(np.abs(amps) ** 2) < tol:
                return cutoff
            cutoff += 2
    raise ValueError(f"unknown kind {kind!r}")


def two_mode_squeezed(r: float, cutoffs: Sequence[int]) -> StateVector:
    """sum_n (-tanh r)^n sqrt(1 - tanh^2 r) |n, n>, generated by r(ab - a^dag b^dag)."""
    r = SqueezeParams(r).r
    ca, cb = cutoffs
    _check_tail(thermal_tail(math.sinh(r) ** 2, min(ca, cb)), f"two-mode squeezed r={r}")
    return StateVector(ModeLayout((ca, cb)), _tms_matrix(r, ca, cb)).normalize()


def cat(alpha: float, cutoff: int) -> StateVector:
    """(e^{i pi/4}|-alpha> + e^{-i pi/4}|alpha>)/sqrt(2), normalized on the truncated space."""
    if not alpha > 0:
        raise ValueError("cat amplitude must be real and positive")
    _check_tail(float(poisson.sf(cutoff, alpha ** 2)), f"cat alpha={alpha}")
    amps = (np.exp(1j * np.pi / 4) * coherent_amplitudes(-alpha, cutoff)
            + np.exp(-1j * np.pi / 4) * coherent_amplitudes(alpha, cutoff)) / math.sqrt(2)
    return StateVector(ModeLayout((cutoff,)), amps).normalize()


def spin_singlet(j: float, cutoffs: Sequence[int] | int | None = None) -> StateVector:
    """(a+^dag b-^dag - a-^dag b+^dag)^N |0> / (N! sqrt(N+1)) with N = 2j."""
    n_tot = round(2 * j)
    if n_tot < 1 or abs(2 * j - n_tot) > 1e-12:
        raise ValueError("2j must be a positive integer")
    if cutoffs is None:
        cutoffs = n_tot
    if isinstance(cutoffs, int):
        cutoffs = (cutoffs,) * 4
    if min(cutoffs) < n_tot:
        raise ValueError(f"cutoffs {tuple(cutoffs)} too small for N = {n_tot}")
    layout = ModeLayout(tuple(cutoffs))
    amps = np.zeros(layout.dims, dtype=complex)
    norm = math.factorial(n_tot) * math.sqrt(n_tot + 1)
    for k in range(n_tot + 1):
        # binomial term C(N,k) (a+ b-)^k (-a- b+)^{N-k}; each |m> carries sqrt(m!)
        coeff = math.comb(n_tot, k) * (-1) ** (n_tot - k) * math.factorial(k) * math.factorial(n_tot - k)
        amps[k, n_tot - k, n_tot - k, k] = coeff / norm
    return StateVector(layout, amps.reshape(-1))


def parametric_amp(r: float, cutoffs: Sequence[int] | int, method: str = "closed") -> StateVector:
    """Output of the four-mode parametric amplifier acting on vacuum for time t, r = |kappa| t.

    The interaction pairs (a+, b-) and (a-, b+) with opposite signs, so the
    state is a product of two two-mode squeezed vacua; `method="expm"`
    exponentiates the generator on the truncated space instead.
    """
    r = SqueezeParams(r).r
    if isinstance(cutoffs, int):
        cutoffs = (cutoffs,) * 4
    layout = ModeLayout(tuple(cutoffs))
    _check_tail(thermal_tail(math.sinh(r) ** 2, min(cutoffs)), f"parametric amplifier r={r}")
    if method == "closed":
        ap, am, bp, bm = cutoffs
        pair1 = _tms_matrix(r, ap, bm, sign=+1.0)   # (a+, b-)
        pair2 = _tms_matrix(r, am, bp, sign=-1.0)   # (a-, b+)
        t = np.einsum("ad,bc->abcd", pair1, pair2)
        return StateVector(layout, t.reshape(-1)).normalize()
    if method == "expm":
        a = [annihilation(layout, m) for m in range(4)]
        g = (a[0].dag() @ a[3].dag() - a[1].dag() @ a[2].dag()
             - a[0] @ a[3] + a[1] @ a[2]) * r
        vac = np.zeros(layout.dim, dtype=complex)
        vac[0] = 1.0
        return StateVector(layout, expm(g.matrix) @ vac).normalize()
    raise ValueError(f"unknown method {method!r}")


def cv_bell_state(n: int, c0: complex, c1: complex) -> StateVector:
    """c0|0...0, 1...1> + c1|1...1, 0...0> on n cutoff-1 modes (n/2 photons)."""
    if n < 2 or n % 2:
        raise ValueError("n must be even and >= 2")
    if abs(abs(c0) ** 2 + abs(c1) ** 2 - 1) > 1e-10:
        raise ValueError("|c0|^2 + |c1|^2 must be 1")
    layout = ModeLayout((1,) * n)
    half = n // 2
    amps = np.zeros(layout.dim, dtype=complex)
    amps[layout.flat_index([0] * half + [1] * half)] += c0
    amps[layout.flat_index([1] * half + [0] * half)] += c1
    return StateVector(layout, amps)


def ghz_polarization(n_photons: int, c0: complex = 1 / math.sqrt(2),
                     c1: complex = 1 / math.sqrt(2)) -> StateVector:
    """c0|H...H> + c1|V...V> on modes (H1, V1, H2, V2, ...)."""
    if n_photons < 1:
        raise ValueError("need at least one photon")
    layout = ModeLayout((1,) * (2 * n_photons))
    amps = np.zeros(layout.dim, dtype=complex)
    amps[layout.flat_index([1, 0] * n_photons)] += c0
    amps[layout.flat_index([0, 1] * n_photons)] += c1
    return StateVector(layout, amps).normalize()


def polarizing_split(ghz: StateVector) -> StateVector:
    """Relabel (H1, V1, ..., Hm, Vm) as (V1, ..., Vm, H1, ..., Hm)."""
    m = ghz.layout.n_modes // 2
    order = [2 * k + 1 for k in range(m)] + [2 * k for k in range(m)]
    return permute_modes(ghz, order)


def one_photon_per_site_basis(layout: ModeLayout, sites: Sequence[Sequence[int]]) -> list[int]:
    """Flat indices of kets with exactly one photon on each (plus, minus) site."""
    out = []
    for choice in np.ndindex(*(2,) * len(sites)):
        occ = [0] * layout.n_modes
        for site, c in zip(sites, choice):
            occ[site[c]] = 1
        out.append(layout.flat_index(occ))
    return out


def werner(p_s: float, cutoff: int = 1) -> DensityOperator:
    """(1 - p_s) I/4 + p_s |psi_1/2><psi_1/2| with I/4 on the one-photon-per-site span."""
    if not 0 <= p_s <= 1:
        raise ValueError(f"p_s must lie in [0, 1], got {p_s}")
    bell = spin_singlet(0.5, cutoff)
    layout = bell.layout
    idx = one_photon_per_site_basis(layout, [SITE_A, SITE_B])
    mixed = np.zeros((layout.dim, layout.dim), dtype=complex)
    mixed[idx, idx] = 0.25
    pure = np.outer(bell.amplitudes, bell.amplitudes.conj())
    return DensityOperator(layout, p_s * pure + (1 - p_s) * mixed)
