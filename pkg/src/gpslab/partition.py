"""Exact partition functions of the pinning model by stable O(n^3) DP.

The quenched weight of an epoch at (i, j) is exp(beta*omega_ij - lambda(beta)
+ h); the constrained partition function sums over paths ending at the box
corner, the free one removes the endpoint constraint (each in-box trajectory
is weighted by the probability that the next jump leaves the box).  A
companion pass propagates path-weighted contact counts, giving the Gibbs
contact fraction exactly rather than by finite differences.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _dp
from .disorder import StrandLaw, StrandSample, log_mgf
from .errors import HorizonError, ParameterError
from .renewal import RenewalLaw

ScaledGrid = _dp.ScaledGrid


@dataclass(frozen=True)
class PartitionResult:
    log_value: float
    mode: str
    box: tuple[int, int]


def exit_mass_grid(law: RenewalLaw, box) -> np.ndarray:
    """E(i,j) = P(next jump from (i,j) leaves the box), for all grid points.

    With G(p, q) the mass of jumps landing in a p x q rectangle,
    E(i,j) = 1 - G(n1-i, n2-j); G satisfies G(p,q) = G(p-1,q) + CK(p+q) - CK(p)
    where CK is the cumulative jump-total mass.
    """
    n1, n2 = int(box[0]), int(box[1])
    if n1 + n2 > law.horizon:
        raise HorizonError("box diameter exceeds horizon", required=n1 + n2)
    ck = np.cumsum(law.mass_table[:n1 + n2 + 1])
    g = np.zeros((n1 + 1, n2 + 1))
    q = np.arange(n2 + 1)
    for p in range(1, n1 + 1):
        g[p, :] = g[p - 1, :] + ck[p + q] - ck[p]
    return 1.0 - g[::-1, ::-1]


def _check_box(law: RenewalLaw, box):
    n1, n2 = int(box[0]), int(box[1])
    if n1 < 1 or n2 < 1:
        raise ParameterError("box coordinates must be >= 1")
    if n1 + n2 > law.horizon:
        raise HorizonError("box diameter exceeds horizon", required=n1 + n2)
    return n1, n2


def _log_weights(sample, slaw, beta, h, box):
    n1, n2 = box
    logw = np.zeros((n1 + 1, n2 + 1))
    if beta != 0.0:
        if sample.box[0] < n1 or sample.box[1] < n2:
            raise ParameterError("strand sample shorter than the box")
        lam = log_mgf(slaw, beta)
        logw[1:, 1:] = beta * np.outer(sample.hat[:n1], sample.bar[:n2]) - lam
    logw[1:, 1:] += h
    return logw


def _result_from_grid(law, grid: ScaledGrid, box, mode: str) -> PartitionResult:
    n1, n2 = box
    if mode == "constrained":
        logz = grid.log_value(n1, n2)
    elif mode == "free":
        logz = grid.log_weighted_total(exit_mass_grid(law, box))
    else:
        raise ParameterError(f"unknown mode {mode!r}")
    return PartitionResult(log_value=logz, mode=mode, box=(n1, n2))


def quenched_grid(rlaw: RenewalLaw, sample: StrandSample, slaw: StrandLaw,
                  beta: float, h: float, box, with_contacts: bool = False,
                  m_cap: float = _dp.DEFAULT_M_CAP) -> ScaledGrid:
    """Scaled DP grid of all constrained sub-partition functions Z(i, j)."""
    box = _check_box(rlaw, box)
    logw = _log_weights(sample, slaw, beta, h, box)
    kernel = rlaw.mass_table[:box[0] + box[1] + 1]
    return _dp.run_dp(kernel, logw, with_contacts=with_contacts, m_cap=m_cap)


def quenched_partition(rlaw: RenewalLaw, sample: StrandSample, slaw: StrandLaw,
                       beta: float, h: float, box, mode: str = "constrained",
                       m_cap: float = _dp.DEFAULT_M_CAP) -> PartitionResult:
    """log Z for one disorder realization."""
    box = _check_box(rlaw, box)
    grid = quenched_grid(rlaw, sample, slaw, beta, h, box, m_cap=m_cap)
    return _result_from_grid(rlaw, grid, box, mode)


def homogeneous_partition(rlaw: RenewalLaw, h: float, box,
                          mode: str = "constrained") -> PartitionResult:
    """log Z of the homogeneous (= annealed) model: every weight is e^h."""
    box = _check_box(rlaw, box)
    logw = np.zeros((box[0] + 1, box[1] + 1))
    logw[1:, 1:] = h
    kernel = rlaw.mass_table[:box[0] + box[1] + 1]
    grid = _dp.run_dp(kernel, logw)
    return _result_from_grid(rlaw, grid, box, mode)


def conditioned_partition(rlaw: RenewalLaw, sample: StrandSample, slaw: StrandLaw,
                          beta: float, h: float, a, b) -> PartitionResult:
    """log Z on the window from a (exclusive) to b, given an epoch at a.

    Returns the -inf sentinel when a does not strictly precede b, so sums
    over decompositions skip impossible blocks naturally.
    """
    a = (int(a[0]), int(a[1]))
    b = (int(b[0]), int(b[1]))
    if not (a[0] < b[0] and a[1] < b[1]):
        return PartitionResult(log_value=-math.inf, mode="constrained",
                               box=(b[0] - a[0], b[1] - a[1]))
    window = sample.window(a, b) if beta != 0.0 else sample
    return quenched_partition(rlaw, window, slaw, beta, h,
                              (b[0] - a[0], b[1] - a[1]), mode="constrained")


def contact_fraction(rlaw: RenewalLaw, sample: StrandSample, slaw: StrandLaw,
                     beta: float, h: float, box, mode: str = "constrained") -> float:
    """(1/n1) * Gibbs-expected number of contacts in the box, exactly."""
    box = _check_box(rlaw, box)
    grid = quenched_grid(rlaw, sample, slaw, beta, h, box, with_contacts=True)
    n1, n2 = box
    if mode == "constrained":
        z = grid.mantissa[n1, n2]
        c = grid.companion[n1, n2]
        if z <= 0.0:
            raise ParameterError("constrained partition function vanished")
        return float(c / z / n1)
    weights = exit_mass_grid(rlaw, box)
    log_z = _dp._log_weighted_total(grid.mantissa, grid.diag_log_scale, weights)
    log_c = _dp._log_weighted_total(grid.companion, grid.diag_log_scale, weights)
    if log_c == -math.inf:
        return 0.0
    return float(math.exp(log_c - log_z) / n1)


def quenched_partition_naive(rlaw: RenewalLaw, sample: StrandSample, slaw: StrandLaw,
                             beta: float, h: float, box,
                             mode: str = "constrained") -> PartitionResult:
    """Reference O(n^4) evaluation in log domain, for equivalence tests."""
    box = _check_box(rlaw, box)
    n1, n2 = box
    logw = _log_weights(sample, slaw, beta, h, box)
    logz = _dp.run_dp_naive(rlaw.mass_table[:n1 + n2 + 1], logw)
    if mode == "constrained":
        return PartitionResult(log_value=float(logz[n1, n2]), mode=mode, box=box)
    weights = exit_mass_grid(rlaw, box)
    with np.errstate(divide="ignore"):
        terms = logz + np.log(weights)
    mx = terms.max()
    total = mx + math.log(np.exp(terms - mx).sum())
    return PartitionResult(log_value=float(total), mode="free", box=box)
