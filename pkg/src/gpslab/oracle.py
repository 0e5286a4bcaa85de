"""Brute-force ground truth on tiny instances.

Everything here is an exhaustive finite sum: trajectories by explicit
enumeration, disorder by iterating the full product support.  Caps are hard
errors; an oracle must never approximate.  Test-time only.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .disorder import StrandLaw, StrandSample, log_mgf
from .errors import EnumerationCapError, ParameterError
from .partition import exit_mass_grid
from .renewal import RenewalLaw, Trajectory

ENUM_CELL_CAP = 36
DISORDER_CAP = 10_000_000


@dataclass(frozen=True)
class PathEnumeration:
    box: tuple[int, int]
    mode: str
    paths: tuple[tuple[tuple[int, int], ...], ...]


def path_count(box) -> int:
    """Recursive count: c(i,j) = 1 + sum_{a<i, b<j} c(a,b) over positive (a,b)."""
    n1, n2 = box
    c = np.zeros((n1 + 1, n2 + 1), dtype=object)
    for i in range(1, n1 + 1):
        for j in range(1, n2 + 1):
            c[i, j] = 1 + c[1:i, 1:j].sum()
    return int(c[n1, n2])


def enumerate_trajectories(box, mode: str = "constrained") -> PathEnumeration:
    """All strictly bi-increasing epoch sequences in the box.

    constrained: sequences ending exactly at the corner.
    free: every such sequence anywhere in the box, including the empty one.
    """
    n1, n2 = int(box[0]), int(box[1])
    if n1 * n2 > ENUM_CELL_CAP:
        raise EnumerationCapError(f"box {box} exceeds enumeration cap "
                                  f"({n1 * n2} > {ENUM_CELL_CAP} cells)")
    if mode not in ("constrained", "free"):
        raise ParameterError(f"unknown mode {mode!r}")

    paths = []

    def rec(i, j, acc):
        if mode == "free":
            paths.append(tuple(acc))
        elif i == n1 and j == n2:
            paths.append(tuple(acc))
            return
        for a in range(i + 1, n1 + 1):
            for b in range(j + 1, n2 + 1):
                acc.append((a, b))
                rec(a, b, acc)
                acc.pop()

    rec(0, 0, [])
    return PathEnumeration(box=(n1, n2), mode=mode, paths=tuple(paths))


def _path_prob(law: RenewalLaw, path) -> float:
    prev = (0, 0)
    w = 1.0
    for p in path:
        w *= law.mass_table[(p[0] - prev[0]) + (p[1] - prev[1])]
        prev = p
    return w


def exact_partition_brute(rlaw: RenewalLaw, field: np.ndarray, beta: float,
                          h: float, box, mode: str = "constrained",
                          lam: float = None, slaw: StrandLaw = None) -> float:
    """Literal sum over enumerated paths of prod K * prod exp(beta*w - lam + h).

    ``field`` holds the disorder values omega_(i,j) as a (n1, n2) array
    (ignored when beta = 0).  In free mode each path carries its exit mass,
    including the empty path with weight ExitMass(0, 0).
    """
    n1, n2 = int(box[0]), int(box[1])
    if lam is None:
        lam = log_mgf(slaw, beta) if (slaw is not None and beta != 0.0) else 0.0
    enum = enumerate_trajectories((n1, n2), mode)
    exits = exit_mass_grid(rlaw, (n1, n2)) if mode == "free" else None
    total = 0.0
    for path in enum.paths:
        w = _path_prob(rlaw, path)
        for (i, j) in path:
            omega = field[i - 1, j - 1] if beta != 0.0 else 0.0
            w *= math.exp(beta * omega - lam + h)
        if mode == "free":
            last = path[-1] if path else (0, 0)
            w *= exits[last[0], last[1]]
        total += w
    return total


def iter_disorder(slaw: StrandLaw, box):
    """Yield (probability, StrandSample) over the full discrete product space."""
    n1, n2 = int(box[0]), int(box[1])
    support = slaw.support
    probs = slaw.support_probs
    size = len(support) ** (n1 + n2)
    if size > DISORDER_CAP:
        raise EnumerationCapError(f"disorder space {size} exceeds cap {DISORDER_CAP}")
    idx = range(len(support))
    for hat_idx in itertools.product(idx, repeat=n1):
        p_hat = math.prod(probs[k] for k in hat_idx)
        hat = support[list(hat_idx)]
        for bar_idx in itertools.product(idx, repeat=n2):
            p = p_hat * math.prod(probs[k] for k in bar_idx)
            yield p, StrandSample(hat=hat, bar=support[list(bar_idx)])


def exact_second_moment_brute(rlaw: RenewalLaw, slaw: StrandLaw, beta: float,
                              box) -> float:
    """E[(Z_free at h=0)^2] by full disorder enumeration times exact Z."""
    lam = log_mgf(slaw, beta)
    total = 0.0
    for p, sample in iter_disorder(slaw, box):
        z = exact_partition_brute(rlaw, sample.field_grid(), beta, 0.0, box,
                                  mode="free", lam=lam)
        total += p * z * z
    return total


def exact_annealed_brute(rlaw: RenewalLaw, slaw: StrandLaw, beta: float,
                         h: float, box, mode: str = "constrained") -> float:
    """Disorder-average of the exact quenched partition function."""
    lam = log_mgf(slaw, beta)
    total = 0.0
    for p, sample in iter_disorder(slaw, box):
        total += p * exact_partition_brute(rlaw, sample.field_grid(), beta, h,
                                           box, mode=mode, lam=lam)
    return total


def exact_pair_second_moment(rlaw: RenewalLaw, slaw: StrandLaw, beta: float,
                             box, weight_fn=None) -> float:
    """Replica route: sum over enumerated free pairs of the disorder factor.

    weight_fn maps a (traj, traj') pair to E[prod exp(beta*omega - lambda)]
    over the two overlapping paths; the default is the chain-decomposition
    factorization from the replica module.
    """
    if weight_fn is None:
        from .replica import decompose, pair_second_moment_weight

        def weight_fn(p1, p2):
            dec = decompose(Trajectory(p1), Trajectory(p2), box)
            return pair_second_moment_weight(dec, slaw, beta)

    enum = enumerate_trajectories(box, "free")
    exits = exit_mass_grid(rlaw, box)
    probs = []
    for path in enum.paths:
        last = path[-1] if path else (0, 0)
        probs.append(_path_prob(rlaw, path) * exits[last[0], last[1]])
    total = 0.0
    for p1, w1 in zip(enum.paths, probs):
        for p2, w2 in zip(enum.paths, probs):
            total += w1 * w2 * weight_fn(p1, p2)
    return total


def exact_tilted_average(rlaw: RenewalLaw, slaw: StrandLaw, delta: float,
                         beta: float, h: float, box, kind: str = "linear") -> float:
    """E_{n,delta}[Z^q] by enumerating tilted discrete disorder exactly.

    linear: weights exp(delta*(sum hat + sum bar)) / Q(delta,0)^(|n|/2);
    quadratic: exp(-delta*(sum hat^2 + sum bar^2)) / R(delta,0)^(|n|/2).
    """
    from .disorder import tilt_q, tilt_r

    n1, n2 = int(box[0]), int(box[1])
    lam = log_mgf(slaw, beta)
    if kind == "linear":
        norm = tilt_q(slaw, delta, 0.0) ** ((n1 + n2) / 2.0)
    elif kind == "quadratic":
        norm = tilt_r(slaw, delta, 0.0) ** ((n1 + n2) / 2.0)
    else:
        raise ParameterError(f"unknown tilt kind {kind!r}")
    total = 0.0
    for p, sample in iter_disorder(slaw, box):
        if kind == "linear":
            tilt = math.exp(delta * (sample.hat.sum() + sample.bar.sum()))
        else:
            tilt = math.exp(-delta * ((sample.hat ** 2).sum() + (sample.bar ** 2).sum()))
        z = exact_partition_brute(rlaw, sample.field_grid(), beta, h, box, lam=lam)
        total += p * tilt * z / norm
    return total
