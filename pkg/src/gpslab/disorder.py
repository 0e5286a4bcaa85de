"""Strand charge laws and the rank-one product disorder field.

The binding energy at (i, j) is the product of the i-th charge on one strand
and the j-th charge on the other.  Everything here is an exact expectation
over the charge law: the log-MGF of the product, mixed linear (Q) and
quadratic (R) exponential tilts, their Taylor-residual diagnostics, and the
relative entropy of a dilation of Gaussian charges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DivergenceError, ParameterError, UnsupportedLawError
from .rng import generator


@dataclass(frozen=True)
class StrandLaw:
    """Charge law for a single strand; both strands share the same law.

    kind is one of gaussian / rademacher / discrete.  beta0 is the largest
    disorder strength with a finite product MGF: 1/sigma^2 for Gaussian
    charges, infinity for bounded laws.
    """

    kind: str
    sigma: float = 1.0
    x: float = 1.0
    values: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        if self.kind not in ("gaussian", "rademacher", "discrete"):
            raise ParameterError(f"unknown strand law kind {self.kind!r}")
        if self.kind == "gaussian" and self.sigma <= 0:
            raise ParameterError("gaussian sigma must be positive")
        if self.kind == "rademacher" and self.x <= 0:
            raise ParameterError("rademacher magnitude must be positive")
        if self.kind == "discrete":
            if len(self.values) == 0 or len(self.values) != len(self.probs):
                raise ParameterError("discrete law needs matching values/probs")
            if len(self.values) > 8:
                raise ParameterError("discrete support capped at 8 for enumerability")
            if abs(sum(self.probs) - 1.0) > 1e-12 or min(self.probs) < 0:
                raise ParameterError("discrete probabilities must sum to 1")

    @property
    def beta0(self) -> float:
        if self.kind == "gaussian":
            return 1.0 / self.sigma ** 2
        return math.inf

    @property
    def support(self) -> np.ndarray:
        """Finite support (discrete and rademacher laws only)."""
        if self.kind == "rademacher":
            return np.array([-self.x, self.x])
        if self.kind == "discrete":
            return np.asarray(self.values, dtype=float)
        raise UnsupportedLawError("gaussian law has no finite support")

    @property
    def support_probs(self) -> np.ndarray:
        if self.kind == "rademacher":
            return np.array([0.5, 0.5])
        if self.kind == "discrete":
            return np.asarray(self.probs, dtype=float)
        raise UnsupportedLawError("gaussian law has no finite support")

    def to_json(self) -> dict:
        if self.kind == "gaussian":
            return {"kind": "gaussian", "sigma": self.sigma}
        if self.kind == "rademacher":
            return {"kind": "rademacher", "x": self.x}
        return {"kind": "discrete", "values": list(self.values), "probs": list(self.probs)}

    @classmethod
    def from_json(cls, obj: dict) -> "StrandLaw":
        kind = obj.get("kind")
        if kind == "gaussian":
            return gaussian(obj.get("sigma", 1.0))
        if kind == "rademacher":
            return rademacher(obj.get("x", 1.0))
        if kind == "discrete":
            return discrete(obj["values"], obj["probs"])
        raise ParameterError(f"unknown strand law kind {kind!r}")


def gaussian(sigma: float = 1.0) -> StrandLaw:
    return StrandLaw(kind="gaussian", sigma=float(sigma))


def rademacher(x: float = 1.0) -> StrandLaw:
    return StrandLaw(kind="rademacher", x=float(x))


def discrete(values, probs) -> StrandLaw:
    return StrandLaw(kind="discrete", values=tuple(float(v) for v in values),
                     probs=tuple(float(p) for p in probs))


@dataclass(frozen=True)
class StrandSample:
    """One realization of the two charge sequences for a given box."""

    hat: np.ndarray
    bar: np.ndarray

    @property
    def box(self):
        return len(self.hat), len(self.bar)

    def field_grid(self) -> np.ndarray:
        """Full (n1, n2) product field, hat_i * bar_j."""
        return np.outer(self.hat, self.bar)

    def window(self, a, b) -> "StrandSample":
        """Charges indexed by the rectangle from a (exclusive) to b."""
        return StrandSample(hat=self.hat[a[0]:b[0]], bar=self.bar[a[1]:b[1]])


def sample_strands(law: StrandLaw, box, rng) -> StrandSample:
    n1, n2 = int(box[0]), int(box[1])
    if n1 < 1 or n2 < 1:
        raise ParameterError("box coordinates must be >= 1")
    rng = generator(rng)

    def draw(n):
        if law.kind == "gaussian":
            return law.sigma * rng.standard_normal(n)
        if law.kind == "rademacher":
            return law.x * (2.0 * rng.integers(0, 2, size=n) - 1.0)
        return rng.choice(law.support, size=n, p=law.support_probs)

    return StrandSample(hat=draw(n1), bar=draw(n2))


def field_value(sample: StrandSample, i: int, j: int) -> float:
    """omega_(i,j) = hat_i * bar_j, with 1-based strand indices."""
    n1, n2 = sample.box
    if not (1 <= i <= n1 and 1 <= j <= n2):
        raise ParameterError(f"({i},{j}) outside sampled box {sample.box}")
    return float(sample.hat[i - 1] * sample.bar[j - 1])


# ---------------------------------------------------------------------------
# moments and expectations

def moments(law: StrandLaw, k: int) -> float:
    """m_k, the k-th moment of a single strand charge."""
    if k < 0:
        raise ParameterError("moment order must be >= 0")
    if law.kind == "gaussian":
        if k % 2 == 1:
            return 0.0
        # (k-1)!! sigma^k
        return float(math.prod(range(k - 1, 0, -2)) * law.sigma ** k) if k else 1.0
    if law.kind == "rademacher":
        return float(law.x ** k) if k % 2 == 0 else 0.0
    v = law.support
    p = law.support_probs
    return float((p * v ** k).sum())


def _check_beta(law: StrandLaw, beta: float):
    if beta < 0:
        raise ParameterError("beta must be >= 0")
    if beta >= law.beta0:
        raise DivergenceError(
            f"E[exp(beta*omega)] diverges: beta={beta} >= beta0={law.beta0}")


def log_mgf(law: StrandLaw, beta: float) -> float:
    """lambda(beta) = log E[exp(beta * hat*bar)]."""
    _check_beta(law, beta)
    if law.kind == "gaussian":
        u = beta * law.sigma ** 2
        return -0.5 * math.log1p(-u * u)
    if law.kind == "rademacher":
        return float(np.log(np.cosh(beta * law.x ** 2)))
    v = law.support
    p = law.support_probs
    grid = np.exp(beta * np.outer(v, v))
    return float(np.log(p @ grid @ p))


def tilt_q(law: StrandLaw, delta: float, beta: float) -> float:
    """Q(delta, beta) = E[exp(beta*hat*bar + delta*hat + delta*bar)]."""
    _check_beta(law, beta)
    if law.kind == "gaussian":
        s2 = law.sigma ** 2
        u = beta * s2
        return math.exp(s2 * delta * delta / (1.0 - u)) / math.sqrt(1.0 - u * u)
    v = law.support
    p = law.support_probs
    grid = np.exp(beta * np.outer(v, v) + delta * v[:, None] + delta * v[None, :])
    return float(p @ grid @ p)


def tilt_r(law: StrandLaw, delta: float, beta: float) -> float:
    """R(delta, beta) = E[exp(beta*hat*bar - delta*hat^2 - delta*bar^2)]."""
    _check_beta(law, beta)
    if law.kind == "gaussian":
        s2 = law.sigma ** 2
        a = 1.0 + 2.0 * delta * s2
        disc = a * a - (beta * s2) ** 2
        if a <= 0 or disc <= 0:
            raise DivergenceError("quadratic tilt outside the finiteness region")
        return 1.0 / math.sqrt(disc)
    v = law.support
    p = law.support_probs
    grid = np.exp(beta * np.outer(v, v) - delta * (v ** 2)[:, None] - delta * (v ** 2)[None, :])
    return float(p @ grid @ p)


def taylor_residual(kind: str, law: StrandLaw, delta: float, beta: float) -> dict:
    """Normalized tilt ratio, its quoted leading correction, and the residual.

    kind "Q-frac": Frac  = Q(d,b) / (Q(d,0) Q(0,b)), leading d*b*m1*(m2-m1^2).
    kind "R-frac": Frac2 = R(d,b) / (R(d,0) R(0,b)), leading -d*b^2*m2*(m4-m2^2).
    Both ratios equal 1 on each axis, so the residual value - 1 - leading is
    higher order in the mixed variables.
    """
    m1 = moments(law, 1)
    m2 = moments(law, 2)
    if kind == "Q-frac":
        value = tilt_q(law, delta, beta) / (tilt_q(law, delta, 0.0) * tilt_q(law, 0.0, beta))
        leading = delta * beta * m1 * (m2 - m1 * m1)
    elif kind == "R-frac":
        m4 = moments(law, 4)
        value = tilt_r(law, delta, beta) / (tilt_r(law, delta, 0.0) * tilt_r(law, 0.0, beta))
        leading = -delta * beta * beta * m2 * (m4 - m2 * m2)
    else:
        raise ParameterError(f"unknown residual kind {kind!r}")
    return {"value": value, "leading_term": leading, "residual": value - 1.0 - leading}


def dilation_entropy(law: StrandLaw, delta: float) -> float:
    """Per-charge relative entropy of (1+delta)*hat against hat.

    Only absolutely continuous dilations qualify; bounded laws shift their
    support and the entropy is infinite, so they are rejected.
    """
    if law.kind != "gaussian":
        raise UnsupportedLawError(
            "dilation entropy requires an absolutely continuous (gaussian) law")
    if abs(delta) >= 1.0:
        raise ParameterError("dilation requires |delta| < 1")
    s = 1.0 + delta
    return 0.5 * (s * s - 1.0) - math.log(s)


# ---------------------------------------------------------------------------
# Monte Carlo cross-checks (test support)

def mc_expectation(law: StrandLaw, func, samples: int, rng, chunk: int = 1_000_000):
    """Mean and standard error of func(hat, bar) over i.i.d. charge pairs."""
    rng = generator(rng)
    total = 0.0
    total_sq = 0.0
    left = int(samples)
    while left > 0:
        n = min(chunk, left)
        pair = sample_strands(law, (n, n), rng)
        vals = func(pair.hat, pair.bar)
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        left -= n
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / samples)
