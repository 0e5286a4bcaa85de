"""Chain decomposition of two renewal trajectories and replica second moments.

Two strictly bi-increasing point sets tie their disorder together only where
they share a row or a column.  Partitioning their union into double points,
isolated points, and maximal alternating chains factorizes the disorder
expectation of the replicated weight exactly: doubles contribute
exp(lambda(2b) - 2 lambda(b)) each, isolated points contribute 1, and each
chain contributes a transfer product along its alternating shared
coordinates (identically 1 for symmetric two-point charges, a ratio of the
xi-recursion for Gaussian charges).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .disorder import StrandLaw, log_mgf
from .errors import DivergenceError, ParameterError
from .renewal import RenewalLaw, Trajectory, _walk_free
from .rng import substreams

Point = tuple


@dataclass(frozen=True)
class ChainDecomposition:
    doubles: frozenset
    isolated: frozenset
    chains: tuple

    @property
    def chained_count(self) -> int:
        return sum(len(c) for c in self.chains)

    def point_classes(self):
        return self.doubles, self.isolated, self.chains


def _restrict(points, box):
    if box is None:
        return set(points)
    n1, n2 = box
    return {p for p in points if p[0] <= n1 and p[1] <= n2}


def decompose(t1: Trajectory, t2: Trajectory, box=None) -> ChainDecomposition:
    """Partition (t1 union t2) restricted to ``box``.

    Chains are grown from the first unassigned chained point in lexical
    order; that point is always an endpoint of its alternating path, so the
    walk reproduces the canonical construction.
    """
    s1 = _restrict(t1.points, box)
    s2 = _restrict(t2.points, box)
    doubles = s1 & s2
    only1 = s1 - doubles
    only2 = s2 - doubles

    row1 = {p[0]: p for p in only1}
    col1 = {p[1]: p for p in only1}
    row2 = {p[0]: p for p in only2}
    col2 = {p[1]: p for p in only2}

    def neighbors(p, mine_only):
        rows, cols = (row2, col2) if mine_only else (row1, col1)
        out = []
        q = rows.get(p[0])
        if q is not None:
            out.append(q)
        q = cols.get(p[1])
        if q is not None:
            out.append(q)
        return out

    chained = []
    isolated = set()
    for p in only1:
        if neighbors(p, True):
            chained.append((p, True))
        else:
            isolated.add(p)
    for p in only2:
        if neighbors(p, False):
            chained.append((p, False))
        else:
            isolated.add(p)

    chains = []
    visited = set()
    for p, in_first in sorted(chained):
        if p in visited:
            continue
        chain = [p]
        visited.add(p)
        side = in_first
        cur = p
        while True:
            nxt = [q for q in neighbors(cur, side) if q not in visited]
            if not nxt:
                break
            if len(nxt) > 1:
                raise ParameterError("chain walk found a branching point; "
                                     "inputs are not strictly bi-increasing")
            cur = nxt[0]
            visited.add(cur)
            chain.append(cur)
            side = not side
        chains.append(tuple(chain))

    return ChainDecomposition(doubles=frozenset(doubles),
                              isolated=frozenset(isolated),
                              chains=tuple(chains))


# ---------------------------------------------------------------------------
# chain weights

def xi_sequence(beta: float, length: int) -> np.ndarray:
    """xi_1 .. xi_length with xi_{k+1} = (1 - beta^2 xi_k^2)^(-1/2), xi_0 = 1."""
    if beta < 0 or beta > 0.5:
        raise DivergenceError("xi recursion requires 0 <= beta <= 1/2")
    out = np.empty(length)
    x = 1.0
    for k in range(length):
        x = (1.0 - beta * beta * x * x) ** -0.5
        out[k] = x
    return out


def xi_limit(beta: float) -> float:
    """Fixed point of the xi recursion for beta <= 1/2."""
    if beta == 0.0:
        return 1.0
    if beta < 0 or beta > 0.5:
        raise DivergenceError("xi recursion requires 0 <= beta <= 1/2")
    return math.sqrt(1.0 - math.sqrt(1.0 - 4.0 * beta * beta)) / (beta * math.sqrt(2.0))


def chain_weight(slaw: StrandLaw, beta: float, length: int) -> float:
    """E[prod over an ell-point chain of exp(beta*omega - lambda(beta))].

    rademacher: exactly 1 (the conditional cosh telescopes).
    gaussian:   prod_{k<=ell} xi_k / xi_1^ell with the recursion evaluated at
                beta*sigma^2 (which must be <= 1/2).
    discrete:   transfer product over the support, O(ell * s^2).
    """
    if length < 1:
        raise ParameterError("chain length must be >= 1")
    if beta < 0:
        raise ParameterError("beta must be >= 0")
    if slaw.kind == "rademacher":
        return 1.0
    if slaw.kind == "gaussian":
        b = beta * slaw.sigma ** 2
        if b > 0.5:
            raise DivergenceError(
                "gaussian chain weight needs beta*sigma^2 <= 1/2 for the recursion")
        xi = xi_sequence(b, length)
        return float(np.exp(np.log(xi).sum() - length * np.log(xi[0])))
    v = slaw.support
    p = slaw.support_probs
    lam = log_mgf(slaw, beta)
    transfer = np.exp(beta * np.outer(v, v))  # transfer[x, y] = e^{beta x y}
    f = p @ transfer                          # f_1(y) = sum_x p(x) e^{beta x y}
    log_norm = 0.0
    for _ in range(length - 1):
        f = (f * p) @ transfer
        peak = f.max()
        f /= peak
        log_norm += math.log(peak)
    return float(math.exp(math.log(f @ p) + log_norm - length * lam))


def chain_weight_quadratic_form(slaw: StrandLaw, beta: float, length: int) -> float:
    """Gaussian chain weight via the determinant of I - beta*A (path graph).

    Independent of the xi recursion; used as a cross-check.
    """
    if slaw.kind != "gaussian":
        raise ParameterError("determinant route applies to gaussian laws")
    b = beta * slaw.sigma ** 2
    n = length + 1
    a = np.zeros((n, n))
    idx = np.arange(n - 1)
    a[idx, idx + 1] = b
    a[idx + 1, idx] = b
    eig = np.linalg.eigvalsh(a)
    if np.any(eig >= 1.0):
        raise DivergenceError("chain expectation diverges: beta beyond path spectrum")
    lam = log_mgf(slaw, beta)
    return float(np.exp(-0.5 * np.log1p(-eig).sum() - length * lam))


def pair_second_moment_weight(dec: ChainDecomposition, slaw: StrandLaw,
                              beta: float) -> float:
    """Disorder factor of a trajectory pair: doubles, isolated, chains."""
    if beta >= slaw.beta0 / 2.0:
        raise DivergenceError("second moment needs beta < beta0 / 2")
    gap = log_mgf(slaw, 2.0 * beta) - 2.0 * log_mgf(slaw, beta)
    w = math.exp(gap * len(dec.doubles))
    for chain in dec.chains:
        w *= chain_weight(slaw, beta, len(chain))
    return w


# ---------------------------------------------------------------------------
# Monte Carlo over free trajectory pairs

def _pair_statistics(rlaw: RenewalLaw, box, samples: int, rng):
    """Per-sample decompositions and projection-intersection counts."""
    streams = substreams(rng, 2 * samples)
    stats = []
    for k in range(samples):
        t1 = _walk_free(rlaw, streams[2 * k], box)
        t2 = _walk_free(rlaw, streams[2 * k + 1], box)
        dec = decompose(t1, t2, box)
        a1 = {p[0] for p in t1.points}
        a2 = {p[0] for p in t2.points}
        b1 = {p[1] for p in t1.points}
        b2 = {p[1] for p in t2.points}
        stats.append((dec, len(a1 & a2), len(b1 & b2)))
    return stats


def second_moment_pair_values(rlaw: RenewalLaw, slaw: StrandLaw, beta: float,
                              box, samples: int, rng) -> dict:
    """Per-sample exact replica weights and their Cauchy-Schwarz bounds.

    Matched by construction: every statistic is a function of the same
    sampled trajectory pair, so bound >= exact holds sample by sample.
    """
    if samples < 1:
        raise ParameterError("samples must be >= 1")
    gap = log_mgf(slaw, 2.0 * beta) - 2.0 * log_mgf(slaw, beta)
    exact = np.empty(samples)
    bound_split = np.empty(samples)
    bound_single = np.empty(samples)
    doubles = np.empty(samples, dtype=int)
    chain_pts = np.empty(samples, dtype=int)
    proj = np.empty((samples, 2), dtype=int)
    for k, (dec, p1, p2) in enumerate(_pair_statistics(rlaw, box, samples, rng)):
        exact[k] = pair_second_moment_weight(dec, slaw, beta)
        bound_split[k] = math.exp(1.5 * gap * (p1 + p2))
        bound_single[k] = math.exp(3.0 * gap * p1)
        doubles[k] = len(dec.doubles)
        chain_pts[k] = dec.chained_count
        proj[k] = (p1, p2)
    return {
        "exact": exact,
        "bound_split": bound_split,
        "bound_single": bound_single,
        "doubles": doubles,
        "chain_points": chain_pts,
        "projections": proj,
    }


def _estimate(arr: np.ndarray) -> dict:
    n = len(arr)
    se = arr.std(ddof=1) / math.sqrt(n) if n > 1 else 0.0
    return {"estimate": float(arr.mean()), "std_err": float(se), "samples": n}


def second_moment_mc(rlaw: RenewalLaw, slaw: StrandLaw, beta: float, box,
                     samples: int, rng) -> dict:
    """MC estimate of E[(Z_free at h=0)^2] via the replica factorization."""
    vals = second_moment_pair_values(rlaw, slaw, beta, box, samples, rng)
    return _estimate(vals["exact"])


def second_moment_cs_bound(rlaw: RenewalLaw, slaw: StrandLaw, beta: float, box,
                           samples: int, rng) -> dict:
    """MC estimates of the two Cauchy-Schwarz upper bounds (split / single)."""
    vals = second_moment_pair_values(rlaw, slaw, beta, box, samples, rng)
    out = _estimate(vals["bound_split"])
    single = _estimate(vals["bound_single"])
    out["single_projection_estimate"] = single["estimate"]
    out["single_projection_std_err"] = single["std_err"]
    return out
