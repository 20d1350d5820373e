"""Beam-splitter loss, white-noise mixing and three-region outcome binning."""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Sequence

import numpy as np
from scipy.linalg import expm

from .hilbert import (DensityOperator, JointDistribution, ModeLayout, StateVector,
                      _apply_local, as_density)


@dataclass(frozen=True)
class LossChannel:
    eta: float

    def __post_init__(self):
        if not 0 <= self.eta <= 1:
            raise ValueError(f"transmission must lie in [0, 1], got {self.eta}")


@lru_cache(maxsize=64)
def _dilation_unitary(cutoff: int, eta: float) -> np.ndarray:
    """Beam splitter on mode (x) ancilla, both truncated at `cutoff`.

    The coupling conserves total photon number, so exponentiating inside each
    number sector n <= cutoff is exact for an input with the ancilla in vacuum.
    """
    theta = math.acos(math.sqrt(eta))
    d = cutoff + 1
    u = np.zeros((d * d, d * d), dtype=complex)
    for n in range(cutoff + 1):
        # sector basis |n-k> (x) |k>, k = 0..n
        idx = [(n - k) * d + k for k in range(n + 1)]
        g = np.zeros((n + 1, n + 1))
        for k in range(n):
            # a^dag b - a b^dag between |n-k, k> and |n-k-1, k+1>
            amp = math.sqrt((n - k) * (k + 1))
            g[k + 1, k] = -amp
            g[k, k + 1] = amp
        u[np.ix_(idx, idx)] = expm(theta * g)
    # sectors with n > cutoff are never reached from ancilla vacuum
    for i in range(d * d):
        if not u[:, i].any():
            u[i, i] = 1.0
    return u


@lru_cache(maxsize=64)
def loss_kraus(cutoff: int, eta: float) -> tuple[np.ndarray, ...]:
    """Kraus operators <k|_anc U |0>_anc of the dilated loss channel."""
    d = cutoff + 1
    u = _dilation_unitary(cutoff, float(eta)).reshape(d, d, d, d)
    # u[out_mode, out_anc, in_mode, in_anc]
    return tuple(np.ascontiguousarray(u[:, k, :, 0]) for k in range(d))


def apply_loss(rho, mode: int, eta: float) -> DensityOperator:
    """Transmit `mode` through a beam splitter of intensity transmission eta."""
    eta = LossChannel(eta).eta
    rho = as_density(rho)
    layout = rho.layout
    mode = layout.check_mode(mode)
    if eta == 1:
        return rho
    n = layout.n_modes
    d = layout.dims[mode]
    t = rho.as_tensor()
    out = np.zeros_like(t)
    for k_op in loss_kraus(layout.cutoffs[mode], float(eta)):
        if not k_op.any():
            continue
        s = _apply_local(t, k_op, [mode], [d])
        out += _apply_local(s, k_op.conj(), [n + mode], [d])
    return DensityOperator(layout, out.reshape(layout.dim, layout.dim))


def apply_loss_all(rho, eta: float, modes: Sequence[int] | None = None) -> DensityOperator:
    rho = as_density(rho)
    for m in (range(rho.layout.n_modes) if modes is None else modes):
        rho = apply_loss(rho, m, eta)
    return rho


def photon_subspace(layout: ModeLayout, max_per_mode: int = 1) -> list[int]:
    """Flat indices of kets with at most `max_per_mode` photons in every mode."""
    return [i for i in range(layout.dim)
            if max(layout.occupations(i)) <= max_per_mode]


def mix_with_noise(psi, eps: float, subspace: str | Sequence[int] = "photon") -> DensityOperator:
    """eps |psi><psi| + (1 - eps) * (maximally mixed state on a subspace).

    `subspace` is "photon" (at most one photon per mode, dimension 2^n),
    "full" (the whole truncated space) or an explicit list of flat indices.
    """
    if not 0 <= eps <= 1:
        raise ValueError(f"eps must lie in [0, 1], got {eps}")
    rho = as_density(psi)
    layout = rho.layout
    if isinstance(subspace, str):
        if subspace == "photon":
            idx = photon_subspace(layout)
        elif subspace == "full":
            idx = list(range(layout.dim))
        else:
            raise ValueError(f"unknown subspace {subspace!r}")
    else:
        idx = list(subspace)
    mixed = np.zeros((layout.dim, layout.dim), dtype=complex)
    mixed[idx, idx] = 1.0 / len(idx)
    return DensityOperator(layout, eps * rho.matrix + (1 - eps) * mixed)


@dataclass(frozen=True)
class BinnedSummary:
    """Region statistics for the partition x <= -S/2 | central | x >= S/2.

    Conditional moments of an empty outer region are None (undefined).
    """

    p_minus: float
    p_zero: float
    p_plus: float
    mu_minus: float | None
    mu_plus: float | None
    var_minus: float | None
    var_plus: float | None
    mu_zero: float | None
    var_zero: float | None
    S: float

    @property
    def defined(self) -> bool:
        return self.mu_minus is not None and self.mu_plus is not None


def _slice_moments(x: np.ndarray, p: np.ndarray, tiny: float = 1e-300):
    w = p.sum()
    if w <= tiny:
        return float(w), None, None
    mu = float(np.dot(p, x) / w)
    var = float(max(0.0, np.dot(p, (x - mu) ** 2) / w))
    return float(w), mu, var


def bin(dist: JointDistribution, S: float, boundary_tol: float = 1e-12) -> BinnedSummary:
    """Three-region summary; outcomes on a boundary count as central."""
    if not S > 0:
        raise ValueError("bin separation S must be positive")
    if dist.ndim != 1:
        raise ValueError("bin expects a single-axis distribution")
    x = dist.outcomes[0]
    p = dist.probs
    half = S / 2
    minus = x < -half - boundary_tol
    plus = x > half + boundary_tol
    zero = ~(minus | plus)
    pm, mm, vm = _slice_moments(x[minus], p[minus])
    pp, mp, vp = _slice_moments(x[plus], p[plus])
    p0, m0, v0 = _slice_moments(x[zero], p[zero])
    return BinnedSummary(pm, p0, pp, mm, mp, vm, vp, m0, v0, float(S))
