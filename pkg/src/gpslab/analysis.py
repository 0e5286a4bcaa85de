"""Free-energy estimation, critical-point location, and change-of-measure probes.

Finite-size estimates lean on two facts: E log Z over constrained boxes is
super-additive, so per-site values are certified lower bounds of the free
energy; and F(beta, 0) = 0 exactly (Z at h = 0 is a probability, and the
annealed bound pins it from above), so subtracting the h = 0 baseline from
E log Z removes the critical finite-size background common to both.  The
localization statistics below are slopes of the baseline-subtracted values
across a box schedule; they vanish at h = 0 and converge to F(beta, h).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import zeta

from . import _dp
from .disorder import StrandLaw, log_mgf, sample_strands, taylor_residual
from .errors import (DivergenceError, FitRangeError, ParameterError,
                     SearchError)
from .partition import homogeneous_partition, quenched_grid, quenched_partition
from .renewal import RenewalLaw, renewal_mass_grid
from .replica import second_moment_mc
from .rng import substreams


@dataclass(frozen=True)
class Estimate:
    value: float
    std_err: float
    samples: int
    box: tuple[int, int]


def _estimate(values, box) -> Estimate:
    arr = np.asarray(values, dtype=float)
    n = len(arr)
    se = float(arr.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return Estimate(value=float(arr.mean()), std_err=se, samples=n,
                    box=(int(box[0]), int(box[1])))


# ---------------------------------------------------------------------------
# free energy

def free_energy_estimate(rlaw: RenewalLaw, slaw: StrandLaw, beta: float,
                         h: float, box, samples: int, rng,
                         mode: str = "constrained") -> Estimate:
    """Mean of (1/n) log Z over disorder samples, with standard error.

    beta = 0 is deterministic and evaluated once.
    """
    n1, n2 = int(box[0]), int(box[1])
    if n1 != n2:
        raise ParameterError("free energy estimates use square boxes")
    if beta == 0.0:
        value = homogeneous_partition(rlaw, h, box, mode).log_value / n1
        return Estimate(value=float(value), std_err=0.0, samples=1, box=(n1, n2))
    vals = np.empty(samples)
    for k, stream in enumerate(substreams(rng, samples)):
        s = sample_strands(slaw, box, stream)
        vals[k] = quenched_partition(rlaw, s, slaw, beta, h, box,
                                     mode).log_value / n1
    return _estimate(vals, box)


def _nested_corner_logz(rlaw, slaw, beta, h, boxes, sample):
    """log Z_(n,n),h for every n in ``boxes`` from one DP at the largest."""
    n_max = max(boxes)
    if beta == 0.0:
        logw = np.zeros((n_max + 1, n_max + 1))
        logw[1:, 1:] = h
        grid = _dp.run_dp(rlaw.mass_table[:2 * n_max + 1], logw)
    else:
        grid = quenched_grid(rlaw, sample, slaw, beta, h, (n_max, n_max))
    return {n: grid.log_value(n, n) for n in boxes}


class _LocalizationProbe:
    """Baseline-subtracted log Z across a nested box schedule.

    One disorder realization per sample index serves every box (restriction
    couples the boxes) and every h (the h = 0 baseline is cached), so the
    statistic is a smooth deterministic function of h for a fixed seed.
    """

    def __init__(self, rlaw, slaw, beta, box_schedule, samples, rng):
        self.rlaw = rlaw
        self.slaw = slaw
        self.beta = beta
        self.boxes = sorted(int(n) for n in box_schedule)
        if len(self.boxes) < 2:
            raise ParameterError("box schedule needs at least two sizes")
        n_max = self.boxes[-1]
        if beta == 0.0:
            self.samples = [None]
        else:
            self.samples = [sample_strands(slaw, (n_max, n_max), stream)
                            for stream in substreams(rng, samples)]
        self.baseline = self._evaluate_raw(0.0)

    def _evaluate_raw(self, h):
        rows = []
        for s in self.samples:
            logz = _nested_corner_logz(self.rlaw, self.slaw, self.beta, h,
                                       self.boxes, s)
            rows.append([logz[n] for n in self.boxes])
        return np.asarray(rows)  # (samples, boxes)

    def subtracted(self, h):
        """Per-sample D_n(h) = log Z_(n,n),h - log Z_(n,n),0."""
        return self._evaluate_raw(h) - self.baseline

    def slope(self, h):
        """Least-squares slope of D_n(h) in n across the schedule.

        Converges to F(beta, h); vanishes identically at h = 0.
        """
        d = self.subtracted(h)
        n_arr = np.array(self.boxes, dtype=float)
        w = n_arr - n_arr.mean()
        w /= (w * w).sum()
        per_sample = d @ w
        mean = float(per_sample.mean())
        se = (float(per_sample.std(ddof=1) / math.sqrt(len(per_sample)))
              if len(per_sample) > 1 else 0.0)
        return mean, se

    def certified_max(self, h):
        """max_n (1/n) E log Z, the plain super-additive lower bound."""
        raw = self._evaluate_raw(h).mean(axis=0)
        return float(max(raw[k] / n for k, n in enumerate(self.boxes)))


def critical_point_bisect(rlaw: RenewalLaw, slaw: StrandLaw, beta: float,
                          box_schedule, threshold: float = 0.0, rng=0,
                          samples: int = 32, tol: float = 1e-3,
                          h_min: float = -1.0) -> dict:
    """Bisection for h_c(beta) on the localization indicator.

    A value h counts as localized when the schedule slope of the
    baseline-subtracted log Z exceeds ``threshold`` plus three standard
    errors.  The slope vanishes at h = 0 by construction and grows to
    F(beta, h), so the flip point tracks the critical point without the
    O(log n / n) boundary bias of the raw per-site values.
    """
    if beta >= slaw.beta0:
        raise DivergenceError("beta outside the finite-MGF region")
    probe = _LocalizationProbe(rlaw, slaw, beta, box_schedule, samples, rng)
    h_max = log_mgf(slaw, beta) + 1.0
    evals = []

    def localized(h):
        mean, se = probe.slope(h)
        evals.append({"h": h, "slope": mean, "std_err": se})
        return mean > threshold + 3.0 * se

    if localized(h_min):
        raise SearchError(f"indicator already localized at h = {h_min}")
    if not localized(h_max):
        raise SearchError(f"indicator not localized at h = {h_max}")
    lo, hi = h_min, h_max
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if localized(mid):
            hi = mid
        else:
            lo = mid
    return {"hc": 0.5 * (lo + hi), "bracket": (lo, hi), "beta": beta,
            "evaluations": evals}


# ---------------------------------------------------------------------------
# homogeneous criticality

def homogeneous_free_energy_root(rlaw: RenewalLaw, h: float) -> float:
    """F(0, h) from the renewal characterization at aspect ratio one.

    The localized rate solves sum_t (t-1) K(t) exp(-F t / 2) = exp(-h);
    diagnostics and window calibration only.
    """
    from scipy.optimize import brentq

    t = np.arange(2, rlaw.horizon + 1, dtype=float)
    q = rlaw.mass_table[2:] * (t - 1.0)
    tail = rlaw.tail_mass

    def g(f):
        return (float((q * np.exp(-f * t / 2.0)).sum())
                + tail * math.exp(-f * (rlaw.horizon + 1) / 2.0)
                - math.exp(-h))

    if g(0.0) <= 0.0:
        return 0.0
    hi = 1.0
    while g(hi) > 0.0:
        hi *= 2.0
        if hi > 1e6:
            raise SearchError("free-energy root out of range")
    return float(brentq(g, 0.0, hi, xtol=1e-14))


def richardson_free_energy(rlaw: RenewalLaw, h: float, box_cap: int,
                           baseline: dict = None) -> float:
    """Finite-size F(0, h) with the log-n boundary term cancelled.

    Uses baseline-subtracted corner values at box_cap/4, box_cap/2, box_cap
    and extrapolates the two doubling slopes: 2 s(n/2, n) - s(n/4, n/2).
    """
    boxes = (box_cap // 4, box_cap // 2, box_cap)
    if baseline is None:
        baseline = _nested_corner_logz(rlaw, None, 0.0, 0.0, boxes, None)
    logz = _nested_corner_logz(rlaw, None, 0.0, h, boxes, None)
    d = {n: logz[n] - baseline[n] for n in boxes}
    s_hi = (d[boxes[2]] - d[boxes[1]]) / (boxes[2] - boxes[1])
    s_lo = (d[boxes[1]] - d[boxes[0]]) / (boxes[1] - boxes[0])
    return 2.0 * s_hi - s_lo


def homogeneous_exponent_fit(rlaw: RenewalLaw, h_grid, box_cap: int,
                             r2_min: float = 0.95) -> dict:
    """Least-squares slope of log F-hat(0, h) against log h.

    F-hat is the Richardson-extrapolated finite-size estimate; the grid must
    produce positive values throughout and a fit quality of at least r2_min.
    """
    h_grid = np.asarray(sorted(h_grid), dtype=float)
    if h_grid[0] <= 0:
        raise ParameterError("h grid must be positive")
    boxes = (box_cap // 4, box_cap // 2, box_cap)
    baseline = _nested_corner_logz(rlaw, None, 0.0, 0.0, boxes, None)
    f_hat = np.array([richardson_free_energy(rlaw, h, box_cap, baseline)
                      for h in h_grid])
    if np.any(f_hat <= 0.0):
        raise FitRangeError("finite-size free energy not positive on the grid; "
                            "raise the h grid or the box cap")
    x = np.log(h_grid)
    y = np.log(f_hat)
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    r2 = 1.0 - float((resid ** 2).sum() / ((y - y.mean()) ** 2).sum())
    if r2 < r2_min:
        raise FitRangeError(f"fit quality r2 = {r2:.4f} below {r2_min}")
    return {"exponent": float(coef[0]), "r2": r2,
            "h": h_grid, "f_hat": f_hat}


# ---------------------------------------------------------------------------
# second-moment growth

def n_beta_estimate(rlaw: RenewalLaw, slaw: StrandLaw, beta: float, C: float,
                    box_schedule, samples: int, rng) -> dict:
    """Largest scheduled box whose replica second moment stays at or below C."""
    if C <= 1.0:
        raise ParameterError("C must exceed 1")
    table = []
    best = None
    unbounded = True
    for n in sorted(int(b) for b in box_schedule):
        est = second_moment_mc(rlaw, slaw, beta, (n, n), samples, rng)
        table.append({"box": n, **est})
        if est["estimate"] <= C:
            best = n
        else:
            unbounded = False
            break
    return {"n_beta": best, "unbounded_within_schedule": unbounded,
            "C": C, "table": table}


# ---------------------------------------------------------------------------
# fractional moments and coarse graining

def fractional_moment(rlaw: RenewalLaw, slaw: StrandLaw, beta: float, h: float,
                      eta: float, box, samples: int, rng) -> Estimate:
    """A_n = E[(Z^q_n)^eta] by Monte Carlo over the disorder."""
    if not 0.0 < eta < 1.0:
        raise ParameterError("eta must lie in (0, 1)")
    n1, n2 = int(box[0]), int(box[1])
    if beta == 0.0:
        z = homogeneous_partition(rlaw, h, box).log_value
        return Estimate(value=math.exp(eta * z), std_err=0.0, samples=1,
                        box=(n1, n2))
    vals = np.empty(samples)
    for k, stream in enumerate(substreams(rng, samples)):
        s = sample_strands(slaw, box, stream)
        grid = quenched_grid(rlaw, s, slaw, beta, h, box)
        vals[k] = math.exp(eta * grid.log_value(n1, n2))
    return _estimate(vals, box)


@dataclass(frozen=True)
class FracMomentTable:
    """A-hat values on the sub-corner lattice i < (k, k) for one eta."""

    eta: float
    k: int
    entries: np.ndarray  # (k, k); entries[i1, i2] = A_(i1, i2)

    def value(self, i) -> float:
        return float(self.entries[i[0], i[1]])


def jensen_fracmoment_table(rlaw: RenewalLaw, h: float, eta: float,
                            k: int) -> FracMomentTable:
    """Annealed (Jensen) bound table: A_i <= Z_hom(i, h)^eta, exact DP."""
    logw = np.zeros((k, k))
    logw[1:, 1:] = h
    grid = _dp.run_dp(rlaw.mass_table[:2 * k - 1], logw)
    dense = grid.dense_log()
    return FracMomentTable(eta=eta, k=k, entries=np.exp(eta * dense))


def _k_eta_suffixes(rlaw: RenewalLaw, eta: float):
    """Suffix sums of K^eta and of (t - m + 1) K^eta with analytic tails."""
    alpha = rlaw.alpha
    s = (2.0 + alpha) * eta
    if s <= 2.0:
        raise ParameterError("(2 + alpha) * eta must exceed 2 for convergence")
    k_eta = rlaw.mass_table ** eta
    k_eta[:2] = 0.0
    h = rlaw.horizon
    if rlaw.slow_vary.kind == "logpow":
        # frozen-L analytic extension beyond the horizon
        lval = float(rlaw.slow_vary(np.array([h])))
    else:
        lval = (rlaw.slow_vary.table[-1] if rlaw.slow_vary.kind == "table"
                else rlaw.slow_vary.value)
    c_eta = (rlaw.norm_const * lval) ** eta
    tail1 = c_eta * float(zeta(s, h + 1))               # sum_{t>h} K^eta
    tail_t = c_eta * float(zeta(s - 1.0, h + 1))        # sum_{t>h} t K^eta
    suf1 = np.zeros(h + 2)
    suf1[h + 1] = tail1
    suf1[:h + 1] = np.cumsum(k_eta[::-1])[::-1] + tail1
    t_arr = np.arange(h + 1, dtype=float)
    suf_t = np.zeros(h + 2)
    suf_t[h + 1] = tail_t
    suf_t[:h + 1] = np.cumsum((k_eta * t_arr)[::-1])[::-1] + tail_t

    def s_eta(m):
        m = min(max(int(m), 2), h + 1)
        return float(suf1[m])

    def pair_eta(m):
        # sum_{j >= (m1,m2)} K(|j|)^eta = sum_{t>=m} (t - m + 1) K(t)^eta
        m = min(max(int(m), 2), h + 1)
        return float(suf_t[m] - (m - 1) * suf1[m])

    return s_eta, pair_eta


def coarse_grain_rho(rlaw: RenewalLaw, k: int, eta: float,
                     A_table: FracMomentTable, c_const: float) -> dict:
    """The three coarse-graining sums rho_s over the block decomposition.

    rho_1 collects jump targets beyond the k-block in both coordinates,
    rho_2 / rho_3 those beyond in exactly one.  Tail sums over the jump are
    evaluated in closed form, so no truncation radius enters.
    """
    if A_table.k < k:
        raise ParameterError("A table does not cover the k-block")
    if 2 * k > rlaw.horizon:
        raise ParameterError("horizon must cover twice the block size")
    s_eta, pair_eta = _k_eta_suffixes(rlaw, eta)
    a = A_table.entries[:k, :k]
    rho1 = rho2 = rho3 = 0.0
    for i1 in range(k):
        for i2 in range(k):
            a_val = a[i1, i2]
            if a_val == 0.0:
                continue
            rho1 += a_val * pair_eta((k - i1) + (k - i2))
            acc2 = 0.0
            for j1 in range(1, k - i1):
                acc2 += s_eta(j1 + k - i2)
            rho2 += a_val * acc2
            acc3 = 0.0
            for j2 in range(1, k - i2):
                acc3 += s_eta(j2 + k - i1)
            rho3 += a_val * acc3
    rho = (c_const * rho1, c_const * rho2, c_const * rho3)
    return {"rho1": rho[0], "rho2": rho[1], "rho3": rho[2],
            "sum": sum(rho), "contraction": sum(rho) <= 1.0}


# ---------------------------------------------------------------------------
# homogeneous negative-h bound

def zhom_negative_check(rlaw: RenewalLaw, u: float, box,
                        alpha_minus: float = None) -> dict:
    """Compare Z_(n, -u) with its kernel and hitting-probability bound terms.

    Returns the exact left side, the two candidate bound terms, and the
    ratio lhs / (term_kernel + term_hitting); callers fit the smallest
    stable constant over a (u, box) grid.
    """
    if u <= 0:
        raise ParameterError("u must be positive")
    n1, n2 = int(box[0]), int(box[1])
    norm = n1 + n2
    if alpha_minus is None:
        alpha_minus = 0.95 * rlaw.alpha
    expo = min(alpha_minus, 1.0)
    lhs = math.exp(homogeneous_partition(rlaw, -u, box).log_value)
    term_kernel = float(rlaw.mass(norm)) / (u * u)
    hit = renewal_mass_grid(rlaw, box)[n1, n2]
    term_hit = hit * math.exp(-u * norm ** expo)
    total = term_kernel + term_hit
    return {"lhs": lhs, "term_kernel": term_kernel, "term_hitting": term_hit,
            "hit_prob": float(hit), "ratio": lhs / total,
            "alpha_minus": alpha_minus}


# ---------------------------------------------------------------------------
# tilted annealed identities

def tilted_annealed(rlaw: RenewalLaw, slaw: StrandLaw, delta: float,
                    beta: float, h: float, box, kind: str = "linear") -> float:
    """log E_tilted[Z^q], reduced exactly to a homogeneous evaluation.

    Tilting both charge sequences multiplies every contact weight by the
    normalized ratio Frac (linear tilt) or Frac2 (quadratic tilt), so the
    tilted annealed partition function is homogeneous with h shifted by
    log Frac.
    """
    res = taylor_residual("Q-frac" if kind == "linear" else "R-frac",
                          slaw, delta, beta)
    h_eff = h + math.log(res["value"])
    return homogeneous_partition(rlaw, h_eff, box).log_value


# ---------------------------------------------------------------------------
# extended-diagonal tilt (section-6 regime)

def extended_diagonal_width(rlaw: RenewalLaw, n1: int, eps_sq: float = 0.01,
                            width_const: float = 2.0) -> int:
    """Band half-width l_n: n^((1+eps^2)/alpha) for 1 < alpha <= 2,
    C sqrt(n log n) above."""
    if rlaw.alpha <= 1.0:
        raise ParameterError("extended diagonal requires alpha > 1")
    if rlaw.alpha <= 2.0:
        return max(1, int(round(n1 ** ((1.0 + eps_sq) / rlaw.alpha))))
    return max(1, int(round(width_const * math.sqrt(n1 * math.log(n1)))))


def diagonal_tilt(rlaw: RenewalLaw, box, delta: float, samples: int, rng,
                  eps_sq: float = 0.01, width_const: float = 2.0) -> dict:
    """Monte Carlo for the band-restricted tilt normalizer Q-bar.

    Conditioning on one strand turns the normalizer into a product of
    cosh(delta * sigma_i) over rows, sigma_i the band sum of the other
    strand's signs; valid in the symmetric two-point regime.
    """
    n1, n2 = int(box[0]), int(box[1])
    ell = extended_diagonal_width(rlaw, n1, eps_sq, width_const)
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    rows_lo = np.maximum(1, np.arange(1, n1 + 1) - 2 * ell)
    rows_hi = np.minimum(n2, np.arange(1, n1 + 1) + 2 * ell)
    widths = rows_hi - rows_lo + 1
    vals = np.empty(samples)
    max_sigma = 0
    for k, stream in enumerate(substreams(rng, samples)):
        signs = 2.0 * stream.integers(0, 2, size=n2 + 1) - 1.0
        signs[0] = 0.0
        prefix = np.cumsum(signs)
        sigma = prefix[rows_hi] - prefix[rows_lo - 1]
        max_sigma = max(max_sigma, int(np.abs(sigma).max()))
        vals[k] = math.exp(np.log(np.cosh(delta * sigma)).sum())
    est = _estimate(vals, box)
    return {"q_bar": est.value, "std_err": est.std_err, "samples": samples,
            "ell": ell, "max_abs_sigma": max_sigma,
            "max_window": int(widths.max()),
            "tilt_scale": delta * delta * n1 * ell}


# ---------------------------------------------------------------------------
# exploratory smoothing curve

def smoothing_curve(rlaw: RenewalLaw, slaw: StrandLaw, beta: float, t_grid,
                    box_schedule, samples: int, rng, hc: float = None) -> dict:
    """Table of finite-size F(beta, hc + t) for a positive t grid.

    Exploratory: desk-scale boxes cannot certify the near-critical
    quadratic bound, so the fitted local exponent is labelled accordingly.
    The statistic is the largest-box baseline-subtracted per-site value,
    which is matched-seed monotone in t.
    """
    t_grid = sorted(float(t) for t in t_grid)
    if t_grid[0] <= 0:
        raise ParameterError("t grid must be positive")
    if hc is None:
        hc = critical_point_bisect(rlaw, slaw, beta, box_schedule,
                                   rng=rng, samples=samples)["hc"]
    boxes = sorted(int(n) for n in box_schedule)
    n_max = boxes[-1]
    if beta == 0.0:
        strands = [None]
    else:
        strands = [sample_strands(slaw, (n_max, n_max), stream)
                   for stream in substreams(rng, samples)]
    base = np.array([_nested_corner_logz(rlaw, slaw, beta, hc, [n_max], s)[n_max]
                     for s in strands])
    rows = []
    for t in t_grid:
        cur = np.array([_nested_corner_logz(rlaw, slaw, beta, hc + t,
                                            [n_max], s)[n_max]
                        for s in strands])
        d = (cur - base) / n_max
        est = _estimate(d, (n_max, n_max))
        rows.append({"t": t, "f_hat": est.value, "std_err": est.std_err})
    pos = [(r["t"], r["f_hat"]) for r in rows if r["f_hat"] > 0]
    exponent = None
    if len(pos) >= 3:
        x = np.log([p[0] for p in pos])
        y = np.log([p[1] for p in pos])
        design = np.vstack([x, np.ones_like(x)]).T
        coef, *_ = np.linalg.lstsq(design, y, rcond=None)
        exponent = float(coef[0])
    return {"hc": hc, "rows": rows, "local_exponent": exponent,
            "exploratory": True}
