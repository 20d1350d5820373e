"""Truncated multimode Fock-space linear algebra.

Operators are stored on their local support (the modes they act on
non-trivially) and only embedded into the full layout on request, so
products of many single-mode factors never build a dense matrix over the
whole space.

Quadrature convention: x = a + a^dag, p = -i(a - a^dag), [x, p] = 2i, and
the vacuum has unit variance in every quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

HERMITIAN_TOL = 1e-10
TRACE_TOL = 1e-10
DEGENERACY_GAP = 1e-9
IMAG_TOL = 1e-8
NEG_PROB_TOL = 1e-10
SUM_TOL = 1e-8
COMMUTE_TOL = 1e-8
CONDITION_MIN_PROB = 1e-12


@dataclass(frozen=True)
class ModeLayout:
    """Per-mode Fock cutoffs; mode k has basis |0>, ..., |cutoffs[k]>."""

    cutoffs: tuple[int, ...]

    def __post_init__(self):
        cutoffs = tuple(int(c) for c in self.cutoffs)
        if not cutoffs:
            raise ValueError("a layout needs at least one mode")
        if any(c < 1 for c in cutoffs):
            raise ValueError(f"every cutoff must be >= 1, got {cutoffs}")
        object.__setattr__(self, "cutoffs", cutoffs)

    @property
    def n_modes(self) -> int:
        return len(self.cutoffs)

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(c + 1 for c in self.cutoffs)

    @property
    def dim(self) -> int:
        return math.prod(self.dims)

    def sub_dim(self, modes: Iterable[int]) -> int:
        return math.prod(self.dims[m] for m in modes)

    def check_mode(self, mode: int) -> int:
        if not 0 <= mode < self.n_modes:
            raise IndexError(f"mode {mode} out of range for {self.n_modes} modes")
        return int(mode)

    def flat_index(self, occupations: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(occupations), self.dims))

    def occupations(self, index: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(index, self.dims))

    def concat(self, other: "ModeLayout") -> "ModeLayout":
        return ModeLayout(self.cutoffs + other.cutoffs)

    def sub(self, modes: Sequence[int]) -> "ModeLayout":
        return ModeLayout(tuple(self.cutoffs[m] for m in modes))


def _embed(local: np.ndarray, src: Sequence[int], dst: Sequence[int],
           dims: tuple[int, ...]) -> np.ndarray:
    """Extend a matrix acting on modes `src` (any order) to the sorted superset `dst`."""
    src, dst = tuple(src), tuple(dst)
    if src == dst:
        return local
    extra = [m for m in dst if m not in src]
    if extra:
        local = np.kron(local, np.eye(math.prod(dims[m] for m in extra)))
    order = list(src) + extra
    if order == list(dst):
        return local
    perm = [order.index(m) for m in dst]
    k = len(dst)
    shape = [dims[m] for m in order]
    d = math.prod(shape)
    return local.reshape(shape + shape).transpose(perm + [k + p for p in perm]).reshape(d, d)


class Operator:
    """Linear operator stored as a matrix on a sorted tuple of modes."""

    __array_priority__ = 1000

    def __init__(self, layout: ModeLayout, modes: Iterable[int], local):
        modes = tuple(int(m) for m in modes)
        if list(modes) != sorted(set(modes)):
            raise ValueError("operator modes must be sorted and distinct")
        for m in modes:
            layout.check_mode(m)
        local = np.asarray(local, dtype=complex)
        d = layout.sub_dim(modes)
        if local.shape != (d, d):
            raise ValueError(f"local matrix shape {local.shape} does not match support dim {d}")
        self.layout = layout
        self.modes = modes
        self.local = local

    def local_on(self, modes: tuple[int, ...]) -> np.ndarray:
        return _embed(self.local, self.modes, modes, self.layout.dims)

    @cached_property
    def matrix(self) -> np.ndarray:
        return self.local_on(tuple(range(self.layout.n_modes)))

    def dag(self) -> "Operator":
        return Operator(self.layout, self.modes, self.local.conj().T)

    def _union(self, other: "Operator") -> tuple[int, ...]:
        if other.layout != self.layout:
            raise ValueError("operators live on different layouts")
        return tuple(sorted(set(self.modes) | set(other.modes)))

    def __add__(self, other):
        if not isinstance(other, Operator):
            other = identity(self.layout) * other
        u = self._union(other)
        return Operator(self.layout, u, self.local_on(u) + other.local_on(u))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-1.0) * other

    def __rsub__(self, other):
        return (-1.0) * self + other

    def __neg__(self):
        return (-1.0) * self

    def __mul__(self, scalar):
        if isinstance(scalar, Operator):
            return NotImplemented
        return Operator(self.layout, self.modes, self.local * complex(scalar))

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / complex(scalar))

    def __matmul__(self, other: "Operator") -> "Operator":
        u = self._union(other)
        if not set(self.modes) & set(other.modes):
            # disjoint supports: product is a Kronecker product up to ordering
            local = np.kron(self.local, other.local)
            return Operator(self.layout, u, _embed(local, self.modes + other.modes, u, self.layout.dims))
        return Operator(self.layout, u, self.local_on(u) @ other.local_on(u))

    def is_hermitian(self, tol: float = HERMITIAN_TOL) -> bool:
        return bool(np.max(np.abs(self.local - self.local.conj().T), initial=0.0) <= tol)

    def __repr__(self):
        return f"Operator(modes={self.modes}, dim={self.local.shape[0]})"


def commutator(a: Operator, b: Operator) -> Operator:
    return a @ b - b @ a


def identity(layout: ModeLayout) -> Operator:
    return Operator(layout, (), np.eye(1))


@dataclass(frozen=True)
class Spectrum:
    """Merged spectral decomposition of an observable on its support."""

    outcomes: np.ndarray
    eigvecs: np.ndarray   # columns are eigenvectors on the support
    labels: np.ndarray    # outcome index of each eigenvector
    modes: tuple[int, ...]

    def local_projector(self, k: int) -> np.ndarray:
        v = self.eigvecs[:, self.labels == k]
        return v @ v.conj().T

    def projectors(self) -> list[np.ndarray]:
        return [self.local_projector(k) for k in range(len(self.outcomes))]


def _merge_eigenvalues(vals: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Group sorted eigenvalues closer than the degeneracy gap."""
    labels = np.zeros(len(vals), dtype=int)
    groups = [[vals[0]]]
    for i in range(1, len(vals)):
        if vals[i] - vals[i - 1] < DEGENERACY_GAP:
            groups[-1].append(vals[i])
        else:
            groups.append([vals[i]])
        labels[i] = len(groups) - 1
    outcomes = np.array([np.mean(g) for g in groups])
    return outcomes, labels


class Observable(Operator):
    """Hermitian operator with a lazily cached spectral decomposition."""

    def __init__(self, layout: ModeLayout, modes: Iterable[int], local):
        super().__init__(layout, modes, local)
        if not self.is_hermitian():
            raise ValueError("observable matrix is not Hermitian")
        self.local = 0.5 * (self.local + self.local.conj().T)

    @classmethod
    def from_operator(cls, op: Operator) -> "Observable":
        return cls(op.layout, op.modes, op.local)

    @cached_property
    def spectrum(self) -> Spectrum:
        vals, vecs = np.linalg.eigh(self.local)
        outcomes, labels = _merge_eigenvalues(vals)
        return Spectrum(outcomes, vecs, labels, self.modes)

    def __repr__(self):
        return f"Observable(modes={self.modes}, dim={self.local.shape[0]})"


def as_observable(op: Operator) -> Observable:
    return op if isinstance(op, Observable) else Observable.from_operator(op)


def spectral(obs: Operator) -> tuple[np.ndarray, list[np.ndarray]]:
    """Sorted outcomes and the matching projectors (embedded in the full layout)."""
    sp = as_observable(obs).spectrum
    full = tuple(range(obs.layout.n_modes))
    return sp.outcomes.copy(), [_embed(p, obs.modes, full, obs.layout.dims)
                                  for p in sp.projectors()]


# ---------------------------------------------------------------- primitives

def _ladder(cutoff: int) -> np.ndarray:
    return np.diag(np.sqrt(np.arange(1, cutoff + 1, dtype=float)), k=1)


def annihilation(layout: ModeLayout, mode: int) -> Operator:
    mode = layout.check_mode(mode)
    return Operator(layout, (mode,), _ladder(layout.cutoffs[mode]))


def creation(layout: ModeLayout, mode: int) -> Operator:
    return annihilation(layout, mode).dag()


def number(layout: ModeLayout, mode: int) -> Observable:
    mode = layout.check_mode(mode)
    return Observable(layout, (mode,), np.diag(np.arange(layout.cutoffs[mode] + 1, dtype=float)))


def quadrature(layout: ModeLayout, mode: int, theta: float = 0.0) -> Observable:
    """X(theta) = a e^{-i theta} + a^dag e^{i theta}."""
    a = _ladder(layout.cutoffs[layout.check_mode(mode)]) * np.exp(-1j * theta)
    return Observable(layout, (mode,), a + a.conj().T)


def _site_pair(layout: ModeLayout, site_modes: Sequence[int]) -> tuple[int, int]:
    plus, minus = (layout.check_mode(m) for m in site_modes)
    if plus == minus:
        raise ValueError("site modes must be distinct")
    return plus, minus


def schwinger_spin(layout: ModeLayout, site_modes: Sequence[int], component: str) -> Observable:
    """Schwinger spin component on the (plus, minus) mode pair."""
    plus, minus = _site_pair(layout, site_modes)
    ap, am = annihilation(layout, plus), annihilation(layout, minus)
    if component == "x":
        op = (am @ ap.dag() + am.dag() @ ap) * 0.5
    elif component == "y":
        op = (am @ ap.dag() - am.dag() @ ap) / 2j
    elif component == "z":
        op = (ap.dag() @ ap - am.dag() @ am) * 0.5
    else:
        raise ValueError(f"unknown spin component {component!r}")
    return Observable.from_operator(op)


def site_number(layout: ModeLayout, site_modes: Sequence[int]) -> Observable:
    plus, minus = _site_pair(layout, site_modes)
    return Observable.from_operator(number(layout, plus) + number(layout, minus))


# -------------------------------------------------------------------- states

class StateVector:
    def __init__(self, layout: ModeLayout, amplitudes):
        amplitudes = np.asarray(amplitudes, dtype=complex).reshape(-1)
        if amplitudes.shape != (layout.dim,):
            raise ValueError(f"expected {layout.dim} amplitudes, got {amplitudes.shape[0]}")
        self.layout = layout
        self.amplitudes = amplitudes

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        n = self.norm
        if n == 0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.layout, self.amplitudes / n)

    def as_tensor(self) -> np.ndarray:
        return self.amplitudes.reshape(self.layout.dims)

    def density(self) -> "DensityOperator":
        return DensityOperator(self.layout, np.outer(self.amplitudes, self.amplitudes.conj()))

    @classmethod
    def basis(cls, layout: ModeLayout, occupations: Sequence[int]) -> "StateVector":
        amps = np.zeros(layout.dim, dtype=complex)
        amps[layout.flat_index(occupations)] = 1.0
        return cls(layout, amps)

    @classmethod
    def vacuum(cls, layout: ModeLayout) -> "StateVector":
        return cls.basis(layout, [0] * layout.n_modes)


class DensityOperator:
    def __init__(self, layout: ModeLayout, matrix, check: bool = True):
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.shape != (layout.dim, layout.dim):
            raise ValueError(f"density matrix shape {matrix.shape} does not match dim {layout.dim}")
        if check:
            if np.max(np.abs(matrix - matrix.conj().T), initial=0.0) > HERMITIAN_TOL:
                raise ValueError("density matrix is not Hermitian")
            if abs(np.trace(matrix) - 1) > TRACE_TOL:
                raise ValueError(f"density matrix trace {np.trace(matrix).real} != 1")
        self.layout = layout
        self.matrix = 0.5 * (matrix + matrix.conj().T)

    def validate(self, tol: float = 1e-10) -> "DensityOperator":
        """Check positivity (eigenvalues >= -tol); returns self."""
        w = np.linalg.eigvalsh(self.matrix)
        if w[0] < -tol:
            raise ValueError(f"density matrix has negative eigenvalue {w[0]:.3e}")
        return self

    @property
    def purity(self) -> float:
        return float(np.real(np.vdot(self.matrix, self.matrix)))

    def as_tensor(self) -> np.ndarray:
        return self.matrix.reshape(self.layout.dims * 2)


State = StateVector | DensityOperator


def as_density(state: State) -> DensityOperator:
    return state.density() if isinstance(state, StateVector) else state


def _check_layout(state: State, op: Operator):
    if state.layout != op.layout:
        raise ValueError("state and operator layouts differ")


def reduced(state: State, modes: Sequence[int]) -> np.ndarray:
    """Reduced density matrix on the sorted modes (empty tuple gives [[1]])."""
    layout = state.layout
    modes = tuple(modes)
    rest = [m for m in range(layout.n_modes) if m not in modes]
    dk = layout.sub_dim(modes)
    if isinstance(state, StateVector):
        t = state.as_tensor().transpose(list(modes) + rest).reshape(dk, -1)
        return t @ t.conj().T
    n = layout.n_modes
    t = state.as_tensor()
    if not rest:
        perm = list(modes)
        return t.transpose(perm + [n + m for m in perm]).reshape(dk, dk)
    letters = [chr(ord("a") + i) for i in range(2 * n)]
    rows = letters[:n]
    cols = letters[n:]
    for m in rest:
        cols[m] = rows[m]
    out = [rows[m] for m in modes] + [cols[m] for m in modes]
    subs = "".join(rows) + "".join(cols) + "->" + "".join(out)
    return np.einsum(subs, t).reshape(dk, dk)


def partial_trace(rho: State, keep_modes: Sequence[int]) -> DensityOperator:
    keep = tuple(sorted(set(int(m) for m in keep_modes)))
    if not keep:
        raise ValueError("keep set must be non-empty")
    for m in keep:
        rho.layout.check_mode(m)
    return DensityOperator(rho.layout.sub(keep), reduced(rho, keep))


def tensor(a, b):
    """Kronecker composition of two states or two operators on disjoint layouts."""
    if isinstance(a, StateVector) and isinstance(b, StateVector):
        return StateVector(a.layout.concat(b.layout), np.kron(a.amplitudes, b.amplitudes))
    if isinstance(a, (StateVector, DensityOperator)) and isinstance(b, (StateVector, DensityOperator)):
        ra, rb = as_density(a), as_density(b)
        return DensityOperator(ra.layout.concat(rb.layout), np.kron(ra.matrix, rb.matrix))
    if isinstance(a, Operator) and isinstance(b, Operator):
        layout = a.layout.concat(b.layout)
        shift = a.layout.n_modes
        local = np.kron(a.local, b.local)
        modes = a.modes + tuple(m + shift for m in b.modes)
        cls = Observable if isinstance(a, Observable) and isinstance(b, Observable) else Operator
        return cls(layout, modes, local)
    raise TypeError("tensor expects two states or two operators")


def permute_modes(state: State, order: Sequence[int]) -> State:
    """Reorder modes: new mode k is old mode order[k]."""
    order = list(order)
    if sorted(order) != list(range(state.layout.n_modes)):
        raise ValueError("order must be a permutation of the modes")
    layout = state.layout.sub(order)
    if isinstance(state, StateVector):
        return StateVector(layout, state.as_tensor().transpose(order).reshape(-1))
    n = state.layout.n_modes
    t = state.as_tensor().transpose(order + [n + m for m in order])
    return DensityOperator(layout, t.reshape(layout.dim, layout.dim))


def _apply_local(t: np.ndarray, local: np.ndarray, axes: Sequence[int],
                 shape: Sequence[int]) -> np.ndarray:
    k = len(axes)
    op = local.reshape(list(shape) + list(shape))
    out = np.tensordot(op, t, axes=(list(range(k, 2 * k)), list(axes)))
    return np.moveaxis(out, list(range(k)), list(axes))


def apply_operator(op: Operator, state: StateVector) -> StateVector:
    _check_layout(state, op)
    if not op.modes:
        return StateVector(state.layout, op.local[0, 0] * state.amplitudes)
    shape = [state.layout.dims[m] for m in op.modes]
    out = _apply_local(state.as_tensor(), op.local, op.modes, shape)
    return StateVector(state.layout, out.reshape(-1))


def expect(state: State, op: Operator) -> complex:
    """Raw (possibly complex) expectation value Tr[rho O]."""
    _check_layout(state, op)
    rho = reduced(state, op.modes)
    return complex(np.sum(rho.T * op.local))


def expectation(state: State, obs: Operator) -> float:
    value = expect(state, obs)
    if abs(value.imag) > IMAG_TOL:
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}; operator not Hermitian?")
    return value.real


def variance(state: State, obs: Operator) -> float:
    _check_layout(state, obs)
    rho = reduced(state, obs.modes)
    m1 = np.sum(rho.T * obs.local)
    m2 = np.sum(rho.T * (obs.local @ obs.local))
    if max(abs(m1.imag), abs(m2.imag)) > IMAG_TOL:
        raise ValueError("variance of a non-Hermitian operator")
    return float(m2.real - m1.real ** 2)


def expect_product(state: State, ops: Sequence[Operator]) -> complex:
    """<prod_k O_k> for operators on pairwise disjoint supports."""
    seen: set[int] = set()
    for op in ops:
        _check_layout(state, op)
        if seen & set(op.modes):
            raise ValueError("expect_product needs disjoint supports")
        seen |= set(op.modes)
    dims = state.layout.dims
    if isinstance(state, StateVector):
        t = state.as_tensor()
        for op in ops:
            t = _apply_local(t, op.local, op.modes, [dims[m] for m in op.modes])
        return complex(np.vdot(state.amplitudes, t.reshape(-1)))
    t = state.as_tensor()
    for op in ops:
        t = _apply_local(t, op.local, op.modes, [dims[m] for m in op.modes])
    d = state.layout.dim
    return complex(np.trace(t.reshape(d, d)))


# ------------------------------------------------------ joint distributions

class JointDistribution:
    """Probability table over tuples of outcomes; one axis per observable."""

    def __init__(self, outcomes: Sequence[np.ndarray], probs, labels: Sequence[str] | None = None):
        outcomes = tuple(np.asarray(o, dtype=float).reshape(-1) for o in outcomes)
        probs = np.array(probs, dtype=float)
        if probs.shape != tuple(len(o) for o in outcomes):
            raise ValueError(f"probability shape {probs.shape} does not match outcome axes")
        if probs.size and probs.min() < -NEG_PROB_TOL:
            raise ValueError(f"negative probability {probs.min():.3e}")
        probs[probs < 0] = 0.0
        total = probs.sum()
        if abs(total - 1) > SUM_TOL:
            raise ValueError(f"probabilities sum to {total!r}, not 1")
        self.outcomes = outcomes
        self.probs = probs
        self.labels = tuple(labels) if labels else tuple(f"axis{i}" for i in range(len(outcomes)))

    @property
    def ndim(self) -> int:
        return len(self.outcomes)

    def marginal(self, axes: int | Sequence[int]) -> "JointDistribution":
        axes = [axes] if isinstance(axes, (int, np.integer)) else list(axes)
        drop = tuple(i for i in range(self.ndim) if i not in axes)
        p = self.probs.sum(axis=drop)
        # keep the requested order
        kept = [i for i in range(self.ndim) if i in axes]
        p = np.moveaxis(p, list(range(len(kept))), [kept.index(a) for a in axes]) if len(axes) > 1 else p
        return JointDistribution([self.outcomes[a] for a in axes], p, [self.labels[a] for a in axes])

    def moment(self, axis: int, k: int = 1) -> float:
        m = self.marginal(axis)
        return float(np.dot(m.probs, m.outcomes[0] ** k))

    def mean(self, axis: int = 0) -> float:
        return self.moment(axis, 1)

    def variance(self, axis: int = 0) -> float:
        m = self.marginal(axis)
        mu = np.dot(m.probs, m.outcomes[0])
        return float(np.dot(m.probs, (m.outcomes[0] - mu) ** 2))

    def expect(self, fn) -> float:
        grids = np.meshgrid(*self.outcomes, indexing="ij")
        return float(np.sum(self.probs * fn(*grids)))

    def index_of(self, axis: int, value: float, tol: float = 1e-7) -> int:
        o = self.outcomes[axis]
        i = int(np.argmin(np.abs(o - value)))
        if abs(o[i] - value) > tol * max(1.0, abs(value)):
            raise KeyError(f"{value} is not an outcome of axis {axis}")
        return i

    def condition(self, axis: int, value: float) -> "JointDistribution":
        """Distribution of the remaining axes given outcome `value` on `axis`."""
        if self.ndim < 2:
            raise ValueError("conditioning needs at least two axes")
        i = self.index_of(axis, value)
        sl = np.take(self.probs, i, axis=axis)
        total = sl.sum()
        if total < CONDITION_MIN_PROB:
            raise ValueError(f"conditioning outcome has probability {total:.3e}")
        keep = [k for k in range(self.ndim) if k != axis]
        return JointDistribution([self.outcomes[k] for k in keep], sl / total,
                                 [self.labels[k] for k in keep])

    def derived(self, fn, label: str = "derived", decimals: int = 10) -> "JointDistribution":
        """Single-axis distribution of fn(outcomes...), merging coincident values."""
        grids = np.meshgrid(*self.outcomes, indexing="ij")
        vals = np.asarray(fn(*grids), dtype=float).reshape(-1)
        keys = np.round(vals, decimals)
        uniq, inv = np.unique(keys, return_inverse=True)
        probs = np.zeros(len(uniq))
        np.add.at(probs, inv, self.probs.reshape(-1))
        return JointDistribution([uniq], probs, [label])

    def __repr__(self):
        return f"JointDistribution(labels={self.labels}, shape={self.probs.shape})"


def _components(observables: Sequence[Observable]) -> list[list[int]]:
    """Group observable indices whose supports overlap (transitively)."""
    groups: list[tuple[set[int], list[int]]] = []
    for i, obs in enumerate(observables):
        modes = set(obs.modes)
        merged = [g for g in groups if g[0] & modes]
        for g in merged:
            groups.remove(g)
            modes |= g[0]
        members = sorted([i] + [j for g in merged for j in g[1]])
        groups.append((modes, members))
    return [g[1] for g in sorted(groups, key=lambda g: min(g[0]) if g[0] else -1)]


def _common_basis(obs_list: Sequence[Observable], modes: tuple[int, ...]):
    """Joint eigenbasis of commuting observables on `modes`; returns (V, labels[k, i])."""
    dims = obs_list[0].layout.dims
    mats = [_embed(o.local, o.modes, modes, dims) for o in obs_list]
    d = mats[0].shape[0]
    blocks = [np.eye(d, dtype=complex)]
    block_labels: list[list[int]] = [[]]
    for o, m in zip(obs_list, mats):
        outcomes = as_observable(o).spectrum.outcomes
        new_blocks, new_labels = [], []
        for basis, lab in zip(blocks, block_labels):
            sub = basis.conj().T @ m @ basis
            vals, vecs = np.linalg.eigh(0.5 * (sub + sub.conj().T))
            idx = np.array([int(np.argmin(np.abs(outcomes - v))) for v in vals])
            for k in np.unique(idx):
                new_blocks.append(basis @ vecs[:, idx == k])
                new_labels.append(lab + [int(k)])
        blocks, block_labels = new_blocks, new_labels
    v = np.concatenate(blocks, axis=1)
    labels = np.concatenate([np.tile(np.array(lab)[:, None], (1, b.shape[1]))
                             for b, lab in zip(blocks, block_labels)], axis=1)
    return v, labels


def check_commuting(observables: Sequence[Operator]):
    for i in range(len(observables)):
        for j in range(i + 1, len(observables)):
            a, b = observables[i], observables[j]
            if set(a.modes) & set(b.modes):
                c = commutator(a, b).local
                if np.max(np.abs(c), initial=0.0) > COMMUTE_TOL:
                    raise ValueError(f"observables {i} and {j} do not commute")


def joint_distribution(state: State, *observables: Operator,
                       labels: Sequence[str] | None = None) -> JointDistribution:
    """P(o_1, ..., o_k) = Tr[rho prod_i Pi_i] for pairwise commuting observables."""
    if not observables:
        raise ValueError("need at least one observable")
    obs = [as_observable(o) for o in observables]
    for o in obs:
        _check_layout(state, o)
    check_commuting(obs)
    comps = _components(obs)
    support = tuple(sorted(set().union(*(o.modes for o in obs))))
    dims = state.layout.dims
    bases = []
    for comp in comps:
        modes = tuple(sorted(set().union(*(obs[i].modes for i in comp))))
        v, lab = _common_basis([obs[i] for i in comp], modes)
        bases.append((comp, modes, v, lab))
    order = [m for _, modes, _, _ in bases for m in modes]
    comp_dims = [v.shape[0] for _, _, v, _ in bases]

    if isinstance(state, StateVector):
        rest = [m for m in range(state.layout.n_modes) if m not in support]
        t = state.as_tensor().transpose(order + rest).reshape(comp_dims + [-1])
        for k, (_, _, v, _) in enumerate(bases):
            t = np.moveaxis(np.tensordot(v.conj().T, t, axes=([1], [k])), 0, k)
        p = np.sum(np.abs(t) ** 2, axis=-1)
    else:
        rho = reduced(state, support)
        perm = [support.index(m) for m in order]
        sdims = [dims[m] for m in support]
        ns = len(support)
        t = rho.reshape(sdims + sdims).transpose(perm + [ns + q for q in perm])
        t = t.reshape(comp_dims + comp_dims)
        nc = len(bases)
        for k, (_, _, v, _) in enumerate(bases):
            t = np.moveaxis(np.tensordot(v.conj().T, t, axes=([1], [k])), 0, k)
            t = np.moveaxis(np.tensordot(v.T, t, axes=([1], [nc + k])), 0, nc + k)
        d = math.prod(comp_dims)
        p = np.real(np.diagonal(t.reshape(d, d))).reshape(comp_dims)

    shape = [len(o.spectrum.outcomes) for o in obs]
    table = np.zeros(shape)
    index_grids = []
    for k, (comp, _, _, lab) in enumerate(bases):
        index_grids.append([lab[j] for j in range(len(comp))])
    # accumulate eigenvector-tuple probabilities into outcome-tuple cells
    mesh = np.meshgrid(*[np.arange(dd) for dd in comp_dims], indexing="ij")
    target = [None] * len(obs)
    for k, (comp, _, _, lab) in enumerate(bases):
        for j, i in enumerate(comp):
            target[i] = lab[j][mesh[k]]
    np.add.at(table, tuple(t_.reshape(-1) for t_ in target), p.reshape(-1))
    return JointDistribution([o.spectrum.outcomes for o in obs], table, labels)


# --------------------------------------------- continuous quadrature densities

def hermite_functions(n_max: int, q: np.ndarray) -> np.ndarray:
    """Normalized Hermite functions phi_0..phi_n_max at q (rows = n)."""
    q = np.asarray(q, dtype=float)
    out = np.empty((n_max + 1,) + q.shape)
    out[0] = np.pi ** -0.25 * np.exp(-q ** 2 / 2)
    if n_max >= 1:
        out[1] = np.sqrt(2.0) * q * out[0]
    for n in range(1, n_max):
        out[n + 1] = np.sqrt(2.0 / (n + 1)) * q * out[n] - np.sqrt(n / (n + 1)) * out[n - 1]
    return out


def quadrature_basis(cutoff: int, x: np.ndarray) -> np.ndarray:
    """<x|n> in the x = a + a^dag convention (rows = n)."""
    return hermite_functions(cutoff, np.asarray(x) / np.sqrt(2.0)) * 2 ** -0.25


def _rotated(rho_local: np.ndarray, cutoffs: Sequence[int], thetas: Sequence[float]) -> np.ndarray:
    phase = np.ones(1, dtype=complex)
    for c, th in zip(cutoffs, thetas):
        phase = np.kron(phase, np.exp(-1j * th * np.arange(c + 1)))
    return phase[:, None] * rho_local * phase.conj()[None, :]


def quadrature_moments(state: State, mode: int, theta: float = 0.0) -> tuple[float, float]:
    x = quadrature(state.layout, mode, theta)
    return expectation(state, x), variance(state, x)


def default_grid(state: State, mode: int, theta: float = 0.0, spacing: float | None = None,
                 width: float = 9.0) -> np.ndarray:
    mu, var = quadrature_moments(state, mode, theta)
    sd = math.sqrt(max(var, 1e-12))
    half = abs(mu) + width * max(sd, 1.0) + 2.0
    if spacing is None:
        spacing = min(0.001, sd / 200)
    n = int(math.ceil(half / spacing))
    return (np.arange(-n, n + 1) * spacing) + 0.0


def _grid_weights(grid: np.ndarray) -> np.ndarray:
    if len(grid) < 2:
        raise ValueError("grid needs at least two points")
    diffs = np.diff(grid)
    if np.any(diffs <= 0):
        raise ValueError("grid must be strictly increasing")
    w = np.empty_like(grid)
    w[1:-1] = 0.5 * (grid[2:] - grid[:-2])
    w[0], w[-1] = 0.5 * diffs[0], 0.5 * diffs[-1]
    return w


def _finish_density(grids, dens, labels, mass_tol=1e-6):
    weights = [_grid_weights(g) for g in grids]
    p = dens
    for k, w in enumerate(weights):
        shape = [1] * len(grids)
        shape[k] = len(w)
        p = p * w.reshape(shape)
    p = np.clip(p, 0.0, None)
    total = p.sum()
    if abs(total - 1) > mass_tol:
        raise ValueError(f"grid captures probability {total:.6g}; widen or refine the grid")
    return JointDistribution(grids, p / total, labels)


def quadrature_density(state: State, mode: int, theta: float = 0.0,
                       grid: np.ndarray | None = None) -> JointDistribution:
    """Continuous X(theta) distribution of one mode sampled on a grid.

    Probabilities are density times quadrature weights, so sums over the grid
    approximate integrals of the untruncated density of the truncated state.
    """
    mode = state.layout.check_mode(mode)
    if grid is None:
        grid = default_grid(state, mode, theta)
    grid = np.asarray(grid, dtype=float)
    cutoff = state.layout.cutoffs[mode]
    rho = _rotated(reduced(state, (mode,)), [cutoff], [theta])
    phi = quadrature_basis(cutoff, grid)
    dens = np.real(np.einsum("mx,mn,nx->x", phi, rho, phi, optimize=True))
    return _finish_density([grid], dens, [f"X{mode}({theta:g})"])


def quadrature_joint_density(state: State, modes: Sequence[int], thetas: Sequence[float],
                             grids: Sequence[np.ndarray], rank_tol: float = 1e-14) -> JointDistribution:
    """Continuous joint density of two quadratures on two distinct modes."""
    ma, mb = (state.layout.check_mode(m) for m in modes)
    if ma == mb:
        raise ValueError("joint quadrature density needs two distinct modes")
    ca, cb = state.layout.cutoffs[ma], state.layout.cutoffs[mb]
    pair = (ma, mb) if ma < mb else (mb, ma)
    rho = reduced(state, pair)
    if ma > mb:
        rho = _embed(rho, (mb, ma), (ma, mb), state.layout.dims)
    rho = _rotated(rho, [ca, cb], thetas)
    ga, gb = (np.asarray(g, dtype=float) for g in grids)
    pa, pb = quadrature_basis(ca, ga), quadrature_basis(cb, gb)
    w, v = np.linalg.eigh(rho)
    dens = np.zeros((len(ga), len(gb)))
    for k in np.nonzero(w > rank_tol)[0]:
        c = v[:, k].reshape(ca + 1, cb + 1)
        psi = pa.T @ c @ pb
        dens += w[k] * np.abs(psi) ** 2
    return _finish_density([ga, gb], dens, [f"X{ma}({thetas[0]:g})", f"X{mb}({thetas[1]:g})"])
