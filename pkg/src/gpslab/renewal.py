"""Bivariate renewal substrate: inter-arrival law, sampling, mass function.

The inter-arrival distribution is K(a+b) = c * L(a+b) / (a+b)^(2+alpha) for
jumps (a, b) with a, b >= 1.  Persistence fixes c: summing over the t-1 ways
to split a total jump t gives sum_{t>=2} (t-1) K(t) = 1.  The normalization
is evaluated from the full series (closed form in the Hurwitz zeta for
constant and tabulated L, partial sum plus Euler-Maclaurin tail otherwise),
so the tabulation horizon only limits which individual masses are stored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate
from scipy.special import zeta

from . import _dp
from .errors import HorizonError, ParameterError, RejectionBudgetError
from .rng import generator, substreams

DEFAULT_TAIL_TOL = 0.05
REJECTION_BUDGET = 1_000_000
_ENUM_BOX = 8


# ---------------------------------------------------------------------------
# slowly varying modulations

@dataclass(frozen=True)
class SlowVary:
    """Descriptor of L(.): constant, (log(1+t))^kappa, or a user table.

    A user table covers t = 0 .. len(table)-1 and is extended by its last
    value beyond that, which keeps tail sums summable in closed form.
    """

    kind: str = "const"
    value: float = 1.0
    kappa: float = 0.0
    table: tuple[float, ...] | None = None

    @classmethod
    def const(cls, value: float = 1.0) -> "SlowVary":
        return cls(kind="const", value=float(value))

    @classmethod
    def logpow(cls, kappa: float, value: float = 1.0) -> "SlowVary":
        return cls(kind="logpow", value=float(value), kappa=float(kappa))

    @classmethod
    def from_table(cls, table) -> "SlowVary":
        tab = tuple(float(x) for x in table)
        if len(tab) < 3 or any(x <= 0 for x in tab[2:]):
            raise ParameterError("L table must be positive on t >= 2")
        return cls(kind="table", table=tab)

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "const":
            return np.full_like(t, self.value, dtype=float)
        if self.kind == "logpow":
            return self.value * np.log1p(t) ** self.kappa
        idx = np.minimum(t.astype(int), len(self.table) - 1)
        return np.asarray(self.table, dtype=float)[idx]


def _coerce_slow_vary(slow_vary) -> SlowVary:
    if isinstance(slow_vary, SlowVary):
        return slow_vary
    if slow_vary is None:
        return SlowVary.const()
    if isinstance(slow_vary, (int, float)):
        return SlowVary.const(float(slow_vary))
    raise ParameterError(f"cannot interpret slow_vary={slow_vary!r}")


# ---------------------------------------------------------------------------
# series sums  sum_{t>=m} L(t) t^(-s)  and their (t-1)-weighted variants

def _hurwitz_tail(s: float, m: int) -> float:
    # sum_{t >= m} t^(-s), s > 1
    return float(zeta(s, m))


def _em_tail(f, fprime, t0: float) -> float:
    """Euler-Maclaurin tail sum_{t >= t0} f(t) for smooth decaying f."""
    def transformed(u):
        x = t0 / u
        return f(x) * t0 / u ** 2

    integral, _ = integrate.quad(transformed, 0.0, 1.0, limit=200)
    return integral + 0.5 * f(t0) - fprime(t0) / 12.0


def _logpow_tail(alpha: float, kappa: float, m: int, pair_weighted: bool) -> float:
    # sum_{t>=m} (t-1 if pair_weighted else 1) * log(1+t)^kappa * t^-(2+alpha)
    def f(x):
        base = np.log1p(x) ** kappa * x ** -(2.0 + alpha)
        return (x - 1.0) * base if pair_weighted else base

    def fprime(x, h=1e-3):
        return (f(x * (1 + h)) - f(x * (1 - h))) / (2 * x * h)

    return _em_tail(f, fprime, float(m))


def _unnormalized_tail(alpha: float, lv: SlowVary, m: int, pair_weighted: bool) -> float:
    """sum_{t >= m} (t-1)^[pair] L(t) t^-(2+alpha), without the norm constant."""
    m = max(int(m), 2)
    if lv.kind == "const":
        if pair_weighted:
            return lv.value * (_hurwitz_tail(1 + alpha, m) - _hurwitz_tail(2 + alpha, m))
        return lv.value * _hurwitz_tail(2 + alpha, m)
    if lv.kind == "logpow":
        return lv.value * _logpow_tail(alpha, lv.kappa, m, pair_weighted)
    # table: exact over the tabulated range, constant extension beyond
    t_end = len(lv.table) - 1
    t = np.arange(m, max(t_end, m - 1) + 1, dtype=float)
    vals = lv(t) * t ** -(2.0 + alpha)
    if pair_weighted:
        vals = vals * (t - 1.0)
    head = float(vals.sum())
    m_ext = max(t_end + 1, m)
    last = lv.table[-1]
    if pair_weighted:
        ext = last * (_hurwitz_tail(1 + alpha, m_ext) - _hurwitz_tail(2 + alpha, m_ext))
    else:
        ext = last * _hurwitz_tail(2 + alpha, m_ext)
    return head + ext


def _unnormalized_total(alpha: float, lv: SlowVary) -> float:
    """Full persistence series sum_{t>=2} (t-1) L(t) t^-(2+alpha)."""
    if lv.kind == "logpow":
        m_direct = 200_000
        t = np.arange(2, m_direct, dtype=float)
        head = float(((t - 1.0) * lv(t) * t ** -(2.0 + alpha)).sum())
        return head + _unnormalized_tail(alpha, lv, m_direct, pair_weighted=True)
    return _unnormalized_tail(alpha, lv, 2, pair_weighted=True)


# ---------------------------------------------------------------------------
# the law

@dataclass(frozen=True)
class RenewalLaw:
    alpha: float
    slow_vary: SlowVary
    norm_const: float
    horizon: int
    tail_tol: float = DEFAULT_TAIL_TOL
    mass_table: np.ndarray = field(repr=False, compare=False, default=None)
    _suffix_k: np.ndarray = field(repr=False, compare=False, default=None)
    _suffix_pair: np.ndarray = field(repr=False, compare=False, default=None)
    _pair_cdf: np.ndarray = field(repr=False, compare=False, default=None)

    @property
    def tail_mass(self) -> float:
        """P(|tau_1| > horizon), the lump beyond the tabulated range."""
        return float(self._suffix_pair[self.horizon + 1])

    def mass(self, t):
        """K(t) for totals t <= horizon (vectorized)."""
        t = np.asarray(t)
        if np.any(t > self.horizon):
            raise HorizonError(
                f"total jump beyond horizon {self.horizon}",
                required=int(np.max(t)),
            )
        return self.mass_table[t]

    def tail_sum(self, m) -> float:
        """sum_{t >= m} K(t) for any m (analytic beyond the horizon)."""
        m = int(m)
        if m <= self.horizon + 1:
            return float(self._suffix_k[max(m, 0)])
        return self.norm_const * _unnormalized_tail(self.alpha, self.slow_vary, m, False)

    def pair_tail_sum(self, m) -> float:
        """P(|tau_1| >= m) = sum_{t >= m} (t-1) K(t)."""
        m = int(m)
        if m <= self.horizon + 1:
            return float(self._suffix_pair[max(m, 0)])
        return self.norm_const * _unnormalized_tail(self.alpha, self.slow_vary, m, True)


def required_horizon(alpha: float, slow_vary=None, tail_tol: float = DEFAULT_TAIL_TOL) -> int:
    """Smallest horizon whose analytic residual tail is below tail_tol."""
    lv = _coerce_slow_vary(slow_vary)
    c = 1.0 / _unnormalized_total(alpha, lv)
    lo, hi = 2, 4
    while c * _unnormalized_tail(alpha, lv, hi + 1, True) >= tail_tol:
        lo, hi = hi, hi * 2
        if hi > 2 ** 48:
            raise ParameterError("tail tolerance unreachable for this law")
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if c * _unnormalized_tail(alpha, lv, mid + 1, True) < tail_tol:
            hi = mid
        else:
            lo = mid
    return hi


def normalize(alpha: float, slow_vary=None, horizon: int = None,
              tail_tol: float = DEFAULT_TAIL_TOL) -> float:
    """Persistence constant c with sum_{t>=2} (t-1) c L(t) t^-(2+alpha) = 1.

    Refuses when the given horizon truncates more than tail_tol of the mass,
    reporting the minimum admissible horizon.
    """
    if alpha <= 0:
        raise ParameterError("alpha must be positive")
    lv = _coerce_slow_vary(slow_vary)
    c = 1.0 / _unnormalized_total(alpha, lv)
    if horizon is not None:
        tail = c * _unnormalized_tail(alpha, lv, int(horizon) + 1, True)
        if tail >= tail_tol:
            raise HorizonError(
                f"horizon {horizon} leaves tail mass {tail:.3g} >= tail_tol {tail_tol:g}",
                required=required_horizon(alpha, lv, tail_tol),
            )
    return c


def renewal_law(alpha: float, slow_vary=None, horizon: int = 4096,
                tail_tol: float = DEFAULT_TAIL_TOL) -> RenewalLaw:
    """Build a RenewalLaw with tabulated masses up to ``horizon``."""
    lv = _coerce_slow_vary(slow_vary)
    horizon = int(horizon)
    if horizon < 2:
        raise ParameterError("horizon must be >= 2")
    c = normalize(alpha, lv, horizon=horizon, tail_tol=tail_tol)

    t = np.arange(horizon + 1, dtype=float)
    mass = np.zeros(horizon + 1)
    tt = t[2:]
    mass[2:] = c * lv(tt) * tt ** -(2.0 + alpha)

    pair = mass * np.maximum(t - 1.0, 0.0)
    tail_k = c * _unnormalized_tail(alpha, lv, horizon + 1, False)
    tail_pair = c * _unnormalized_tail(alpha, lv, horizon + 1, True)

    suffix_k = np.zeros(horizon + 2)
    suffix_k[horizon + 1] = tail_k
    suffix_k[:horizon + 1] = np.cumsum(mass[::-1])[::-1] + tail_k
    suffix_pair = np.zeros(horizon + 2)
    suffix_pair[horizon + 1] = tail_pair
    suffix_pair[:horizon + 1] = np.cumsum(pair[::-1])[::-1] + tail_pair

    pair_cdf = np.cumsum(pair)
    return RenewalLaw(alpha=float(alpha), slow_vary=lv, norm_const=c,
                      horizon=horizon, tail_tol=tail_tol, mass_table=mass,
                      _suffix_k=suffix_k, _suffix_pair=suffix_pair,
                      _pair_cdf=pair_cdf)


# ---------------------------------------------------------------------------
# point operations

def interarrival_mass(law: RenewalLaw, a: int, b: int) -> float:
    """P(tau_1 = (a, b)) = K(a+b); depends on (a, b) only through a+b."""
    if a < 1 or b < 1:
        raise ParameterError("jump coordinates must be >= 1")
    return float(law.mass(a + b))


def projection_interarrival(law: RenewalLaw, a: int) -> float:
    """Marginal P(tau_1^(1) = a) = sum_{b>=1} K(a+b)."""
    if a < 1:
        raise ParameterError("a must be >= 1")
    return law.tail_sum(a + 1)


def truncated_mean(law: RenewalLaw, n: int) -> float:
    """mu(n) = E[tau_1^(1) 1{tau_1^(1) <= n}]."""
    n = int(n)
    if n < 1:
        return 0.0
    cap = min(n, law.horizon)
    a = np.arange(1, cap + 1)
    total = float((a * law._suffix_k[a + 1]).sum())
    if n > law.horizon:
        # beyond the table the marginal is evaluated with L frozen at its
        # local value (exact for constant and tabulated L); diagnostics only
        a = np.arange(law.horizon + 1, n + 1, dtype=float)
        lvals = law.slow_vary(a)
        total += float((a * law.norm_const * lvals * zeta(2.0 + law.alpha, a + 1)).sum())
    return total


# ---------------------------------------------------------------------------
# trajectories

@dataclass(frozen=True)
class Trajectory:
    """Finite renewal epoch set, strictly increasing in both coordinates."""

    points: tuple[tuple[int, int], ...]

    def __post_init__(self):
        prev = (0, 0)
        for p in self.points:
            if not (p[0] > prev[0] and p[1] > prev[1]):
                raise ParameterError(f"trajectory not strictly bi-increasing at {p}")
            prev = p

    def __len__(self):
        return len(self.points)

    def restrict(self, box) -> "Trajectory":
        n1, n2 = box
        return Trajectory(tuple(p for p in self.points if p[0] <= n1 and p[1] <= n2))


def _sample_jump(law: RenewalLaw, rng) -> tuple[int, int] | None:
    """One inter-arrival; None encodes a jump beyond the horizon."""
    total = law._pair_cdf[-1]
    u = rng.random() * (total + law.tail_mass)
    if u >= total:
        return None
    t = int(np.searchsorted(law._pair_cdf, u, side="right"))
    a = int(rng.integers(1, t))
    return a, t - a


def _walk_free(law: RenewalLaw, rng, box) -> Trajectory:
    n1, n2 = box
    i = j = 0
    pts = []
    while True:
        jump = _sample_jump(law, rng)
        if jump is None:
            break
        i2, j2 = i + jump[0], j + jump[1]
        if i2 > n1 or j2 > n2:
            break
        pts.append((i2, j2))
        i, j = i2, j2
    return Trajectory(tuple(pts))


def _enumerate_constrained(box):
    """All strictly bi-increasing paths from (0,0) ending at the box corner."""
    n1, n2 = box
    paths = []

    def rec(i, j, acc):
        if i == n1 and j == n2:
            paths.append(tuple(acc))
            return
        for a in range(i + 1, n1 + 1):
            for b in range(j + 1, n2 + 1):
                acc.append((a, b))
                rec(a, b, acc)
                acc.pop()

    rec(0, 0, [])
    return paths


def sample_trajectory(law: RenewalLaw, rng, box, mode: str = "free") -> Trajectory:
    """Draw a renewal trajectory restricted to ``box``.

    free:         run the renewal until the next epoch leaves the box.
    constrained:  condition on the box corner being an epoch; exact
                  enumeration for boxes up to (8, 8), otherwise rejection
                  from the free walk with a fixed attempt budget.
    """
    rng = generator(rng)
    n1, n2 = box
    if n1 < 1 or n2 < 1:
        raise ParameterError("box coordinates must be >= 1")
    if n1 + n2 > law.horizon:
        raise HorizonError("box diameter exceeds horizon", required=n1 + n2)
    if mode == "free":
        return _walk_free(law, rng, box)
    if mode != "constrained":
        raise ParameterError(f"unknown mode {mode!r}")

    if n1 <= _ENUM_BOX and n2 <= _ENUM_BOX:
        paths = _enumerate_constrained(box)
        weights = np.empty(len(paths))
        for idx, path in enumerate(paths):
            prev = (0, 0)
            w = 1.0
            for p in path:
                w *= law.mass_table[(p[0] - prev[0]) + (p[1] - prev[1])]
                prev = p
            weights[idx] = w
        weights /= weights.sum()
        choice = rng.choice(len(paths), p=weights)
        return Trajectory(paths[choice])

    for attempt in range(1, REJECTION_BUDGET + 1):
        traj = _walk_free(law, rng, box)
        if traj.points and traj.points[-1] == (n1, n2):
            return traj
    raise RejectionBudgetError(
        f"no constrained hit of {box} in {REJECTION_BUDGET} attempts",
        attempts=REJECTION_BUDGET,
    )


# ---------------------------------------------------------------------------
# renewal mass function

def renewal_mass_grid(law: RenewalLaw, n) -> np.ndarray:
    """Grid of P((i,j) in tau) for 0 <= i <= n1, 0 <= j <= n2, by exact DP."""
    n1, n2 = int(n[0]), int(n[1])
    if n1 + n2 > law.horizon:
        raise HorizonError("box diameter exceeds horizon", required=n1 + n2)
    logw = np.zeros((n1 + 1, n2 + 1))
    grid = _dp.run_dp(law.mass_table[:n1 + n2 + 1], logw)
    diag = np.arange(n1 + 1)[:, None] + np.arange(n2 + 1)[None, :]
    return grid.mantissa * np.exp(grid.diag_log_scale[diag])


# ---------------------------------------------------------------------------
# intersections of two independent copies

def _projection_sets(traj: Trajectory):
    return {p[0] for p in traj.points}, {p[1] for p in traj.points}


def intersection_stats(law: RenewalLaw, box, samples: int, rng) -> dict:
    """Monte Carlo counters for tau, tau' intersections inside ``box``.

    Returns per-counter means with standard errors, the raw count arrays,
    and a fitted geometric parameter for |tau cap tau'| (success = stop).
    """
    if samples < 1:
        return {"samples": 0, "empty": True}
    streams = substreams(rng, 2 * samples)
    both = np.empty(samples)
    proj1 = np.empty(samples)
    proj2 = np.empty(samples)
    for k in range(samples):
        t1 = _walk_free(law, streams[2 * k], box)
        t2 = _walk_free(law, streams[2 * k + 1], box)
        s1 = set(t1.points)
        s2 = set(t2.points)
        both[k] = len(s1 & s2)
        a1, b1 = _projection_sets(t1)
        a2, b2 = _projection_sets(t2)
        proj1[k] = len(a1 & a2)
        proj2[k] = len(b1 & b2)

    def summary(arr):
        se = arr.std(ddof=1) / math.sqrt(samples) if samples > 1 else 0.0
        return {"mean": float(arr.mean()), "std_err": float(se),
                "var": float(arr.var(ddof=1)) if samples > 1 else 0.0}

    geom_p = 1.0 / (1.0 + both.mean())
    return {
        "samples": samples,
        "empty": False,
        "both": summary(both),
        "proj1": summary(proj1),
        "proj2": summary(proj2),
        "geometric_p": float(geom_p),
        "counts": {"both": both, "proj1": proj1, "proj2": proj2},
    }


# ---------------------------------------------------------------------------
# stable-law scaling sequences (diagnostics only)

@dataclass(frozen=True)
class ScalingSeq:
    a_n: float
    b_n: float
    mu_n: float


def scaling_sequences(law: RenewalLaw, n: int) -> ScalingSeq:
    """Scaling a_n, recentering b_n, truncated mean mu(n).

    a_n is the canonical stable-scaling quantile P(|tau_1| > a_n) ~ 1/n for
    alpha < 2 and a variance-matched sqrt(n) for alpha >= 2; used only in
    diagnostics.
    """
    n = int(n)
    if n < 1:
        raise ParameterError("n must be >= 1")
    alpha = law.alpha
    mu_n = truncated_mean(law, n)
    if alpha < 2.0:
        target = 1.0 / n
        lo, hi = 2, 4
        while law.pair_tail_sum(hi) > target and hi < 2 ** 60:
            lo, hi = hi, hi * 2
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if law.pair_tail_sum(mid) > target:
                lo = mid
            else:
                hi = mid
        a_n = float(hi)
    else:
        t = np.arange(2, law.horizon + 1, dtype=float)
        pair = law.mass_table[2:] * (t - 1.0)
        m1 = float((t * pair).sum())
        m2 = float((t * t * pair).sum())
        a_n = math.sqrt(max(m2 - m1 * m1, 1e-12) * n)

    if alpha < 1.0:
        b_n = 0.0
    elif alpha == 1.0:
        b_n = n * truncated_mean(law, int(a_n))
    else:
        b_n = n * _mean_first_coordinate(law)
    return ScalingSeq(a_n=a_n, b_n=b_n, mu_n=mu_n)


def _mean_first_coordinate(law: RenewalLaw) -> float:
    """E tau_1^(1) = (1/2) sum_t t (t-1) K(t); finite for alpha > 1."""
    if law.alpha <= 1.0:
        raise ParameterError("mean is infinite for alpha <= 1")
    t = np.arange(2, law.horizon + 1, dtype=float)
    head = float((t * (t - 1.0) * law.mass_table[2:]).sum())
    lv = law.slow_vary
    alpha = law.alpha
    m = law.horizon + 1
    if lv.kind == "const":
        tail = lv.value * (_hurwitz_tail(alpha, m) - _hurwitz_tail(1 + alpha, m))
    elif lv.kind == "table":
        last = lv.table[-1]
        m_ext = max(len(lv.table), m)
        tt = np.arange(m, m_ext, dtype=float)
        tail = float((tt * (tt - 1.0) * lv(tt) * tt ** -(2.0 + alpha)).sum())
        tail += last * (_hurwitz_tail(alpha, m_ext) - _hurwitz_tail(1 + alpha, m_ext))
    else:
        def f(x):
            return x * (x - 1.0) * lv(x) * x ** -(2.0 + alpha)

        def fprime(x, h=1e-3):
            return (f(x * (1 + h)) - f(x * (1 - h))) / (2 * x * h)

        tail = _em_tail(f, fprime, float(m))
    return 0.5 * (head + law.norm_const * tail)
