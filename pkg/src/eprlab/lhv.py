"""Hidden-variable constructions over finite atom lists.

A phenomenon is a table of relative frequencies f(A, B | a, b) for one
preparation. Ensembles hold weighted atoms; each atom fixes the outcome of
every (site, setting) pair, or, for nonlocal models, of every setting pair.
"""

from __future__ import annotations

import csv
import io
import itertools
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np

from .bell import mabk_build
from .hilbert import joint_distribution

FREQ_TOL = 1e-9
WEIGHT_TOL = 1e-12


@dataclass
class Phenomenon:
    """Relative frequencies f(A, B | a, b) for a fixed preparation c.

    `outcomes_a[a]` lists Alice's possible outcomes for setting a, and
    `freq[(a, b)][i, j]` is the frequency of (outcomes_a[a][i], outcomes_b[b][j]).
    """

    settings_a: tuple
    settings_b: tuple
    outcomes_a: dict
    outcomes_b: dict
    freq: dict
    preparation: str = "c"

    def __post_init__(self):
        self.settings_a = tuple(self.settings_a)
        self.settings_b = tuple(self.settings_b)
        self.outcomes_a = {a: tuple(self.outcomes_a[a]) for a in self.settings_a}
        self.outcomes_b = {b: tuple(self.outcomes_b[b]) for b in self.settings_b}
        table = {}
        for a in self.settings_a:
            for b in self.settings_b:
                if (a, b) not in self.freq:
                    raise ValueError(f"missing frequency table for settings ({a}, {b})")
                f = np.asarray(self.freq[(a, b)], dtype=float)
                shape = (len(self.outcomes_a[a]), len(self.outcomes_b[b]))
                if f.shape != shape:
                    raise ValueError(f"table ({a}, {b}) has shape {f.shape}, expected {shape}")
                if np.any(f < 0):
                    raise ValueError(f"negative frequency in table ({a}, {b})")
                if abs(f.sum() - 1) > FREQ_TOL:
                    raise ValueError(f"table ({a}, {b}) sums to {f.sum()}, not 1")
                table[(a, b)] = f
        self.freq = table

    def marginal_a(self, a, b) -> np.ndarray:
        return self.freq[(a, b)].sum(axis=1)

    def marginal_b(self, a, b) -> np.ndarray:
        return self.freq[(a, b)].sum(axis=0)

    def correlation(self, a, b) -> float:
        """<AB> for the setting pair (a, b)."""
        xa = np.asarray(self.outcomes_a[a], dtype=float)
        xb = np.asarray(self.outcomes_b[b], dtype=float)
        return float(xa @ self.freq[(a, b)] @ xb)

    def rows(self):
        """(a, b, A, B, f) in setting order, then outcome order."""
        for a in self.settings_a:
            for b in self.settings_b:
                f = self.freq[(a, b)]
                for i, xa in enumerate(self.outcomes_a[a]):
                    for j, xb in enumerate(self.outcomes_b[b]):
                        yield a, b, xa, xb, float(f[i, j])

    def to_csv(self, target=None) -> str | None:
        """Write columns a, b, A, B, f; returns the text when no target is given."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["a", "b", "A", "B", "f"])
        for a, b, xa, xb, f in self.rows():
            w.writerow([a, b, repr(float(xa)), repr(float(xb)), repr(f)])
        text = buf.getvalue()
        if target is None:
            return text
        if hasattr(target, "write"):
            target.write(text)
        else:
            with open(target, "w", newline="") as fh:
                fh.write(text)
        return None

    @classmethod
    def from_csv(cls, source, preparation: str = "c") -> "Phenomenon":
        """Read the layout written by `to_csv` (a path, file object or CSV text).

        Settings are kept as strings; outcomes are parsed as floats.
        """
        if hasattr(source, "read"):
            text = source.read()
        elif isinstance(source, str) and "\n" in source:
            text = source
        else:
            with open(source, newline="") as fh:
                text = fh.read()
        reader = csv.DictReader(io.StringIO(text))
        if reader.fieldnames is None or [c.strip() for c in reader.fieldnames] != ["a", "b", "A", "B", "f"]:
            raise ValueError("expected columns a, b, A, B, f")
        entries = []
        sa, sb, oa, ob = [], [], {}, {}
        for row in reader:
            a, b = row["a"], row["b"]
            xa, xb, f = float(row["A"]), float(row["B"]), float(row["f"])
            entries.append((a, b, xa, xb, f))
            for lst, key in ((sa, a), (sb, b)):
                if key not in lst:
                    lst.append(key)
            oa.setdefault(a, [])
            ob.setdefault(b, [])
            if xa not in oa[a]:
                oa[a].append(xa)
            if xb not in ob[b]:
                ob[b].append(xb)
        freq = {(a, b): np.zeros((len(oa[a]), len(ob[b]))) for a in sa for b in sb}
        for a, b, xa, xb, f in entries:
            freq[(a, b)][oa[a].index(xa), ob[b].index(xb)] += f
        return cls(tuple(sa), tuple(sb), oa, ob, freq, preparation)


@dataclass(frozen=True)
class SignalLocalityReport:
    max_discrepancy_a: float
    max_discrepancy_b: float

    @property
    def max_discrepancy(self) -> float:
        return max(self.max_discrepancy_a, self.max_discrepancy_b)

    @property
    def satisfied(self) -> bool:
        return self.max_discrepancy < FREQ_TOL


def signal_locality_check(ph: Phenomenon) -> SignalLocalityReport:
    """Largest change of one party's marginal under a change of the other's setting."""
    da = 0.0
    for a in ph.settings_a:
        margs = [ph.marginal_a(a, b) for b in ph.settings_b]
        for m1, m2 in itertools.combinations(margs, 2):
            da = max(da, float(np.max(np.abs(m1 - m2))))
    db = 0.0
    for b in ph.settings_b:
        margs = [ph.marginal_b(a, b) for a in ph.settings_a]
        for m1, m2 in itertools.combinations(margs, 2):
            db = max(db, float(np.max(np.abs(m1 - m2))))
    return SignalLocalityReport(da, db)


@dataclass
class LhvEnsemble:
    """Weighted deterministic atoms.

    Local ensembles give `responses[k]`, an array of shape (atoms, settings
    of site k) with the outcome each atom assigns. Nonlocal two-site
    ensembles give `joint[(a, b)]`, an array of shape (atoms, 2) holding the
    outcome pair assigned for that setting pair. Float or Fraction entries.
    """

    weights: np.ndarray
    settings: tuple
    responses: tuple | None = None
    joint: dict | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        w = np.asarray(self.weights)
        if w.ndim != 1 or len(w) == 0:
            raise ValueError("weights must be a non-empty 1-d array")
        exact = w.dtype == object
        if exact:
            if any(x < 0 for x in w) or sum(w) != 1:
                raise ValueError("exact weights must be non-negative and sum to 1")
        else:
            w = w.astype(float)
            if np.any(w < 0) or abs(w.sum() - 1) > WEIGHT_TOL:
                raise ValueError(f"weights must be non-negative and sum to 1, got sum {w.sum()}")
        self.weights = w
        self.settings = tuple(tuple(s) for s in self.settings)
        if (self.responses is None) == (self.joint is None):
            raise ValueError("give exactly one of responses (local) or joint (nonlocal)")
        k = len(w)
        if self.responses is not None:
            if len(self.responses) != len(self.settings):
                raise ValueError("one response array per site")
            resp = []
            for site, (r, labels) in enumerate(zip(self.responses, self.settings)):
                r = np.asarray(r, dtype=object if exact or np.asarray(r).dtype == object else float)
                if r.shape != (k, len(labels)):
                    raise ValueError(f"site {site}: responses shape {r.shape}, expected {(k, len(labels))}")
                resp.append(r)
            self.responses = tuple(resp)
        else:
            if len(self.settings) != 2:
                raise ValueError("nonlocal ensembles are two-site")
            joint = {}
            for a in self.settings[0]:
                for b in self.settings[1]:
                    if (a, b) not in self.joint:
                        raise ValueError(f"missing joint assignment for ({a}, {b})")
                    r = np.asarray(self.joint[(a, b)])
                    if r.shape != (k, 2):
                        raise ValueError(f"joint ({a}, {b}) has shape {r.shape}, expected {(k, 2)}")
                    joint[(a, b)] = r
            self.joint = joint

    @property
    def n_atoms(self) -> int:
        return len(self.weights)

    @property
    def n_sites(self) -> int:
        return len(self.settings)

    @property
    def local(self) -> bool:
        return self.responses is not None

    def value(self, site: int, setting) -> np.ndarray:
        """Outcome of (site, setting) on every atom."""
        if not self.local:
            raise ValueError("nonlocal ensembles assign outcomes per setting pair")
        labels = self.settings[site]
        if setting not in labels:
            raise KeyError(f"site {site} has no setting {setting!r}")
        return self.responses[site][:, labels.index(setting)]

    def moment(self, choice: Mapping[int, Hashable]):
        """<prod_k V_k(choice[k])> over the sites in `choice`; empty choice gives 1."""
        prod = np.ones(self.n_atoms, dtype=self.weights.dtype)
        if prod.dtype == object:
            prod = np.array([Fraction(1)] * self.n_atoms, dtype=object)
        for site, s in choice.items():
            prod = prod * self.value(site, s)
        total = sum((w * p for w, p in zip(self.weights, prod)), start=0 * self.weights[0])
        return total if self.weights.dtype == object else float(total)

    def bell_arrays(self, x_setting=0, y_setting=1):
        """(weights, X, Y) shaped (atoms,), (atoms, n), (atoms, n) for BellFunctional.evaluate."""
        x = np.stack([self.value(k, self.settings[k][x_setting] if isinstance(x_setting, int) else x_setting)
                      for k in range(self.n_sites)], axis=1).astype(float)
        y = np.stack([self.value(k, self.settings[k][y_setting] if isinstance(y_setting, int) else y_setting)
                      for k in range(self.n_sites)], axis=1).astype(float)
        return self.weights.astype(float), x, y


def _points(ens: LhvEnsemble, a, b):
    if ens.local:
        return ens.value(0, a), ens.value(1, b)
    pair = ens.joint[(a, b)]
    return pair[:, 0], pair[:, 1]


def lhv_frequencies(ens: LhvEnsemble, settings_a=None, settings_b=None,
                    outcomes_a=None, outcomes_b=None, preparation: str = "lhv") -> Phenomenon:
    """Exact weighted frequency table of a two-site ensemble.

    Outcome lists default to the sorted values the atoms actually assign.
    """
    if ens.n_sites != 2:
        raise ValueError("frequency tables are defined for two sites")
    settings_a = tuple(settings_a) if settings_a is not None else ens.settings[0]
    settings_b = tuple(settings_b) if settings_b is not None else ens.settings[1]
    for s, labels, side in ((settings_a, ens.settings[0], "A"), (settings_b, ens.settings[1], "B")):
        missing = [x for x in s if x not in labels]
        if missing:
            raise KeyError(f"site {side} has no assignment for settings {missing}")
    w = ens.weights.astype(float)
    pts = {(a, b): tuple(np.asarray(v, dtype=float) for v in _points(ens, a, b))
           for a in settings_a for b in settings_b}
    if outcomes_a is None:
        outcomes_a = {a: sorted({float(v) for b in settings_b for v in pts[(a, b)][0]}) for a in settings_a}
    if outcomes_b is None:
        outcomes_b = {b: sorted({float(v) for a in settings_a for v in pts[(a, b)][1]}) for b in settings_b}
    freq = {}
    for (a, b), (va, vb) in pts.items():
        ia = {v: i for i, v in enumerate(outcomes_a[a])}
        ib = {v: i for i, v in enumerate(outcomes_b[b])}
        table = np.zeros((len(outcomes_a[a]), len(outcomes_b[b])))
        for wk, xa, xb in zip(w, va, vb):
            try:
                table[ia[float(xa)], ib[float(xb)]] += wk
            except KeyError as exc:
                raise ValueError(f"atom outcome {exc} not in the outcome list for ({a}, {b})") from None
        freq[(a, b)] = table
    return Phenomenon(settings_a, settings_b, outcomes_a, outcomes_b, freq, preparation)


def phenomenon_from_state(state, observables_a: Mapping, observables_b: Mapping,
                          preparation: str = "quantum") -> Phenomenon:
    """Frequencies of commuting observable pairs (one per setting) measured on a state."""
    oa, ob, freq = {}, {}, {}
    for a, obs_a in observables_a.items():
        for b, obs_b in observables_b.items():
            jd = joint_distribution(state, obs_a, obs_b)
            oa.setdefault(a, tuple(float(v) for v in jd.outcomes[0]))
            ob.setdefault(b, tuple(float(v) for v in jd.outcomes[1]))
            freq[(a, b)] = jd.probs
    return Phenomenon(tuple(observables_a), tuple(observables_b), oa, ob, freq, preparation)


# ---------------------------------------------------------------- deterministic

def deterministic_model(ph: Phenomenon, merge_tol: float = 1e-15) -> LhvEnsemble:
    """Deterministic, setting-pair dependent ensemble reproducing `ph`.

    For each setting pair the outcome pairs are laid out in lexicographic
    order on [0, 1) with lengths equal to their frequencies. Cutting [0, 1)
    at every breakpoint of every pair gives the atoms; each atom answers
    every setting pair with the outcome pair whose interval contains it. For
    a single setting pair this is one atom per outcome pair, weighted by its
    frequency. Atoms may depend on both settings.
    """
    pairs = [(a, b) for a in ph.settings_a for b in ph.settings_b]
    cums = {}
    breaks = [0.0, 1.0]
    for key in pairs:
        c = np.cumsum(ph.freq[key].ravel())
        c = c / c[-1]
        cums[key] = c
        breaks.extend(c.tolist())
    pts = np.unique(np.clip(breaks, 0.0, 1.0))
    keep = [pts[0]]
    for p in pts[1:]:
        if p - keep[-1] > merge_tol:
            keep.append(p)
    keep[-1] = 1.0
    edges = np.array(keep)
    weights = np.diff(edges)
    mids = 0.5 * (edges[:-1] + edges[1:])
    joint = {}
    for key in pairs:
        a, b = key
        nb = len(ph.outcomes_b[b])
        flat = np.searchsorted(cums[key], mids, side="right")
        flat = np.minimum(flat, cums[key].size - 1)
        xa = np.array(ph.outcomes_a[a], dtype=float)[flat // nb]
        xb = np.array(ph.outcomes_b[b], dtype=float)[flat % nb]
        joint[key] = np.stack([xa, xb], axis=1)
    return LhvEnsemble(weights / weights.sum(), (ph.settings_a, ph.settings_b), joint=joint,
                       meta={"construction": "deterministic"})


# ---------------------------------------------------------- locally causal

@dataclass
class LocalCausalModel:
    """Finite stochastic locally causal model.

    p_lambda has shape (L,); resp_a[a] has shape (L, len(outcomes_a[a])) with
    rows P(A | a, lambda), and likewise for B.
    """

    p_lambda: np.ndarray
    settings_a: tuple
    settings_b: tuple
    outcomes_a: dict
    outcomes_b: dict
    resp_a: dict
    resp_b: dict

    def __post_init__(self):
        p = np.asarray(self.p_lambda, dtype=float)
        if p.ndim != 1 or np.any(p < 0) or abs(p.sum() - 1) > WEIGHT_TOL:
            raise ValueError("P(lambda) must be a non-negative vector summing to 1")
        self.p_lambda = p
        self.settings_a = tuple(self.settings_a)
        self.settings_b = tuple(self.settings_b)
        for side, settings, outs, resp in (("A", self.settings_a, self.outcomes_a, self.resp_a),
                                           ("B", self.settings_b, self.outcomes_b, self.resp_b)):
            for s in settings:
                if s not in resp or s not in outs:
                    raise ValueError(f"side {side}: no response table for setting {s!r}")
                r = np.asarray(resp[s], dtype=float)
                if r.shape != (len(p), len(outs[s])):
                    raise ValueError(f"side {side}, setting {s!r}: table shape {r.shape}, "
                                     f"expected {(len(p), len(outs[s]))}")
                if np.any(r < 0) or np.any(np.abs(r.sum(axis=1) - 1) > WEIGHT_TOL):
                    raise ValueError(f"side {side}, setting {s!r}: rows must be distributions")
                resp[s] = r

    def frequencies(self) -> Phenomenon:
        freq = {(a, b): np.einsum("l,li,lj->ij", self.p_lambda, self.resp_a[a], self.resp_b[b])
                for a in self.settings_a for b in self.settings_b}
        return Phenomenon(self.settings_a, self.settings_b, self.outcomes_a, self.outcomes_b,
                          freq, "lc-model")


def fine_construction(model: LocalCausalModel, prune: float = 0.0) -> LhvEnsemble:
    """Locally deterministic ensemble over lambda' = (lambda, f_A, f_B).

    f_A picks an outcome for each of Alice's settings, f_B for each of Bob's;
    the weight is P(lambda) prod_a P(f_A(a) | a, lambda) prod_b P(f_B(b) | b, lambda).
    Atoms of weight <= prune are dropped. Summing over the f_A(a') for a' != a
    returns P(A | a, lambda), which is why the frequencies are unchanged.
    """
    sa, sb = model.settings_a, model.settings_b
    choices_a = list(itertools.product(*(range(len(model.outcomes_a[a])) for a in sa)))
    choices_b = list(itertools.product(*(range(len(model.outcomes_b[b])) for b in sb)))
    weights, ra, rb, lam = [], [], [], []
    for li, pl in enumerate(model.p_lambda):
        if pl <= prune:
            continue
        wa = [math.prod(model.resp_a[a][li, c] for a, c in zip(sa, ch)) for ch in choices_a]
        wb = [math.prod(model.resp_b[b][li, c] for b, c in zip(sb, ch)) for ch in choices_b]
        for cha, pa in zip(choices_a, wa):
            if pa <= prune:
                continue
            for chb, pb in zip(choices_b, wb):
                w = pl * pa * pb
                if w <= prune:
                    continue
                weights.append(w)
                ra.append([model.outcomes_a[a][c] for a, c in zip(sa, cha)])
                rb.append([model.outcomes_b[b][c] for b, c in zip(sb, chb)])
                lam.append(li)
    w = np.array(weights)
    return LhvEnsemble(w / w.sum(), (sa, sb),
                       responses=(np.array(ra, dtype=float).reshape(len(w), len(sa)),
                                  np.array(rb, dtype=float).reshape(len(w), len(sb))),
                       meta={"construction": "fine", "lambda": lam})


# ------------------------------------------------------------- first moments

def _normalize_key(key) -> tuple:
    items = key.items() if isinstance(key, Mapping) else key
    norm = tuple(sorted((int(site), setting) for site, setting in items))
    sites = [s for s, _ in norm]
    if len(set(sites)) != len(sites):
        raise ValueError(f"correlation {key!r} names a site twice")
    if not norm:
        raise ValueError("empty correlation key")
    return norm


def first_moment_model(targets: Mapping, settings: Sequence[Sequence] | None = None,
                       exact: bool = False) -> LhvEnsemble:
    """Equal-weight ensemble reproducing prescribed first-moment correlations.

    `targets` maps a key, a tuple of (site, setting) pairs with distinct
    sites, to the value of <prod V_site(setting)>. Every listed correlation is
    reproduced; unlisted ones are left uncontrolled. With M listed
    correlations each gets one atom of weight 1/M that is nonzero only on its
    own variables, whose values multiply to M times the residual. An atom
    changes only correlations over subsets of its variables, so handling keys
    in order of decreasing size fixes each after all atoms that touch it.
    Floating point uses equal values M^(1/|T|) with the residual on the last
    variable; `exact=True` uses Fractions, with value 1 on all but the last.
    """
    keyed = {}
    for key, value in targets.items():
        k = _normalize_key(key)
        if k in keyed:
            raise ValueError(f"duplicate correlation {k}")
        v = Fraction(value) if exact else float(value)
        if not exact and not math.isfinite(v):
            raise ValueError(f"target {k} is not finite")
        keyed[k] = v
    if not keyed:
        raise ValueError("no targets")
    n_sites = 1 + max(site for k in keyed for site, _ in k)
    if settings is None:
        found = [[] for _ in range(n_sites)]
        for k in keyed:
            for site, s in k:
                if s not in found[site]:
                    found[site].append(s)
        settings = [tuple(sorted(f, key=repr)) or (0,) for f in found]
    settings = tuple(tuple(s) for s in settings)
    for k in keyed:
        for site, s in k:
            if site >= len(settings) or s not in settings[site]:
                raise ValueError(f"correlation {k} uses an unknown setting")
    zero = Fraction(0) if exact else 0.0
    dtype = object if exact else float

    def blank(rows):
        return [np.full((rows, len(s)), zero, dtype=dtype) for s in settings]

    if all(v == 0 for v in keyed.values()):
        w = np.array([Fraction(1)], dtype=object) if exact else np.ones(1)
        return LhvEnsemble(w, settings, responses=tuple(blank(1)),
                           meta={"construction": "first-moment", "keys": []})
    order = sorted(keyed, key=lambda k: (-len(k), repr(k)))
    m = len(order)
    resp = blank(m)
    weight = Fraction(1, m) if exact else 1.0 / m
    for row, key in enumerate(order):
        # contribution of earlier atoms to this correlation
        current = zero
        for prev in range(row):
            prod = Fraction(1) if exact else 1.0
            for site, s in key:
                prod = prod * resp[site][prev, settings[site].index(s)]
            current = current + weight * prod
        residual = keyed[key] - current
        if exact:
            scales = [Fraction(1)] * (len(key) - 1) + [m * residual]
        else:
            base = m ** (1.0 / len(key))
            scales = [base] * (len(key) - 1) + [base * residual]
        for (site, s), val in zip(key, scales):
            resp[site][row, settings[site].index(s)] = val
    w = np.array([weight] * m, dtype=object) if exact else np.full(m, weight)
    return LhvEnsemble(w, settings, responses=tuple(resp),
                       meta={"construction": "first-moment", "keys": order})


def ensemble_moments(ens: LhvEnsemble, keys) -> dict:
    """<prod V> of an ensemble for each correlation key."""
    return {k: ens.moment(dict(_normalize_key(k))) for k in keys}


def chsh_strategy_ensemble() -> LhvEnsemble:
    """Uniform mixture of the four +-1 strategies at which F_2 = 1."""
    f2, _ = mabk_build(2)
    good = []
    for xs in itertools.product((-1.0, 1.0), repeat=4):
        x, y = np.array(xs[:2]), np.array(xs[2:])
        if abs(float(f2.evaluate(x, y)) - 1.0) < 1e-12:
            good.append(xs)
    good = good[:4]
    ra = np.array([[g[0], g[2]] for g in good])
    rb = np.array([[g[1], g[3]] for g in good])
    return LhvEnsemble(np.full(len(good), 1 / len(good)), (("X", "Y"), ("X", "Y")),
                       responses=(ra, rb), meta={"construction": "chsh-strategies"})
