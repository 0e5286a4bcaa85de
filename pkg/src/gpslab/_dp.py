"""Anti-diagonal prefix-sum dynamic programming kernel.

Computes grids obeying the bivariate renewal recursion

    Z(i, j) = w(i, j) * sum_{(a,b) <= (i-1,j-1)} Z(a, b) * K((i-a) + (j-b)),

with Z(0, 0) = 1.  Because the jump kernel depends on the predecessor only
through its anti-diagonal s = a + b, the predecessor sum collapses to a sum
over diagonals of K(D - s) times a contiguous segment sum along diagonal s,
which per-diagonal prefix arrays provide in O(1).  Total cost is O(n^3)
instead of the naive O(n^4).

Values span e^{+-c n}, so each anti-diagonal D carries a log-scale offset:
the stored mantissa m(i,j) represents m(i,j) * exp(scale[i+j]).  Diagonals
are combined at the maximum offset of their contributors and renormalized
whenever the mantissa leaves [1/m_cap, m_cap].
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

DEFAULT_M_CAP = 1e100


@dataclass
class ScaledGrid:
    """Nonnegative grid stored as mantissas plus per-anti-diagonal log offsets."""

    mantissa: np.ndarray          # (n1+1, n2+1)
    diag_log_scale: np.ndarray    # (n1+n2+1,)
    m_cap: float = DEFAULT_M_CAP
    companion: np.ndarray | None = field(default=None, repr=False)

    @property
    def box(self):
        return self.mantissa.shape[0] - 1, self.mantissa.shape[1] - 1

    def log_value(self, i: int, j: int) -> float:
        m = self.mantissa[i, j]
        if m <= 0.0:
            return -np.inf
        return float(np.log(m) + self.diag_log_scale[i + j])

    def value(self, i: int, j: int) -> float:
        return float(np.exp(self.log_value(i, j)))

    def log_weighted_total(self, weights: np.ndarray) -> float:
        """log of sum_{i,j} Z(i,j) * weights(i,j), combined stably by diagonal."""
        return _log_weighted_total(self.mantissa, self.diag_log_scale, weights)

    def dense_log(self) -> np.ndarray:
        """Full grid of log values (-inf where zero)."""
        n1, n2 = self.box
        with np.errstate(divide="ignore"):
            out = np.log(self.mantissa)
        diag = np.arange(n1 + 1)[:, None] + np.arange(n2 + 1)[None, :]
        return out + self.diag_log_scale[diag]


def _log_weighted_total(mant, scale, weights):
    n1 = mant.shape[0] - 1
    n2 = mant.shape[1] - 1
    prod = mant * weights
    best = -np.inf
    per_diag = np.full(n1 + n2 + 1, -np.inf)
    for d in range(n1 + n2 + 1):
        i_lo = max(0, d - n2)
        i_hi = min(n1, d)
        idx = np.arange(i_lo, i_hi + 1)
        tot = prod[idx, d - idx].sum()
        if tot > 0.0:
            per_diag[d] = np.log(tot) + scale[d]
            best = max(best, per_diag[d])
    if best == -np.inf:
        return -np.inf
    return float(best + np.log(np.exp(per_diag - best).sum()))


def run_dp(kernel: np.ndarray, logw: np.ndarray, with_contacts: bool = False,
           m_cap: float = DEFAULT_M_CAP) -> ScaledGrid:
    """Run the scaled DP.

    kernel: 1-d array, kernel[d] = K(d) for total jump d (zero for d < 2),
            covering d = 0 .. n1+n2.
    logw:   (n1+1, n2+1) log-weights; only entries with i, j >= 1 are read.
    with_contacts: also propagate C(i,j) = sum_paths weight(path) * |path|,
            returned in ``companion`` (same mantissa scale as the main grid).
    """
    n1 = logw.shape[0] - 1
    n2 = logw.shape[1] - 1
    dmax = n1 + n2
    if kernel.shape[0] < dmax + 1:
        raise ValueError("kernel table shorter than box diameter")

    mant = np.zeros((n1 + 1, n2 + 1))
    mant[0, 0] = 1.0
    scale = np.zeros(dmax + 1)
    nonempty = np.zeros(dmax + 1, dtype=bool)
    nonempty[0] = True
    pre = np.zeros((dmax + 1, n1 + 2))
    pre[0, 1:] = 1.0
    if with_contacts:
        mantc = np.zeros((n1 + 1, n2 + 1))
        prec = np.zeros((dmax + 1, n1 + 2))

    lo_floor = np.maximum(0, np.arange(dmax + 1) - n2)
    hi_ceil = np.minimum(np.arange(dmax + 1), n1)

    for d in range(2, dmax + 1):
        i_lo = max(1, d - n2)
        i_hi = min(n1, d - 1)
        cells_i = np.arange(i_lo, i_hi + 1)
        cells_j = d - cells_i
        s_list = np.flatnonzero(nonempty[:d - 1])
        if s_list.size == 0:
            continue
        c_ref = scale[s_list].max()
        with np.errstate(under="ignore"):
            coef = kernel[d - s_list] * np.exp(scale[s_list] - c_ref)

        s_col = s_list[:, None]
        lo = np.maximum(s_col - cells_j[None, :] + 1, lo_floor[s_list][:, None])
        hi = np.minimum(cells_i[None, :] - 1, hi_ceil[s_list][:, None])
        lo_idx = np.clip(lo, 0, n1 + 1)
        hi_idx = np.clip(hi + 1, 0, n1 + 1)
        np.maximum(hi_idx, lo_idx, out=hi_idx)

        rows = pre[s_list]
        seg = np.take_along_axis(rows, hi_idx, axis=1)
        seg -= np.take_along_axis(rows, lo_idx, axis=1)
        np.maximum(seg, 0.0, out=seg)
        t_vals = coef @ seg
        w = np.exp(logw[cells_i, cells_j])
        vals = w * t_vals

        if with_contacts:
            rows_c = prec[s_list]
            seg_c = np.take_along_axis(rows_c, hi_idx, axis=1)
            seg_c -= np.take_along_axis(rows_c, lo_idx, axis=1)
            np.maximum(seg_c, 0.0, out=seg_c)
            vals_c = w * (coef @ seg_c) + vals
        else:
            vals_c = None

        mx = vals.max() if vals.size else 0.0
        scale[d] = c_ref
        if mx > 0.0:
            peak = mx if vals_c is None else max(mx, vals_c.max())
            if peak > m_cap or peak < 1.0 / m_cap:
                vals = vals / peak
                if vals_c is not None:
                    vals_c = vals_c / peak
                scale[d] = c_ref + np.log(peak)
            nonempty[d] = True

        mant[cells_i, cells_j] = vals
        row = np.zeros(n1 + 1)
        row[cells_i] = vals
        pre[d, 1:] = np.cumsum(row)
        if with_contacts:
            mantc[cells_i, cells_j] = vals_c
            row[cells_i] = vals_c
            prec[d, 1:] = np.cumsum(row)

    return ScaledGrid(mantissa=mant, diag_log_scale=scale, m_cap=m_cap,
                      companion=mantc if with_contacts else None)


def run_dp_naive(kernel: np.ndarray, logw: np.ndarray) -> np.ndarray:
    """Reference O(n^4) recursion in log domain; returns dense log grid."""
    n1 = logw.shape[0] - 1
    n2 = logw.shape[1] - 1
    with np.errstate(divide="ignore"):
        logk = np.log(kernel)
    logz = np.full((n1 + 1, n2 + 1), -np.inf)
    logz[0, 0] = 0.0
    for i in range(1, n1 + 1):
        for j in range(1, n2 + 1):
            pred = logz[:i, :j]
            dist = (i - np.arange(i))[:, None] + (j - np.arange(j))[None, :]
            terms = (pred + logk[dist]).ravel()
            mx = terms.max()
            if mx == -np.inf:
                continue
            logz[i, j] = logw[i, j] + mx + np.log(np.exp(terms - mx).sum())
    return logz
