"""Kernel (Newey-West-type) long-run covariance of a vector moment series.

For a centered d x T series D the estimator is

    Upsilon = sum_{|l| < T} K(l/h) M_l,   M_l = (1/T) sum_{t=l+1}^T D_t D_{t-l}'

with M_{-l} = M_l'.  Compact-support kernels let the sum stop at the
kernel support; for the Bartlett kernel with integer bandwidth the whole
sum collapses to a scaled Gram matrix of rolling window sums, which is
both O(d^2 (T+h)) and PSD by construction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

KERNELS = ("bartlett", "parzen", "qs")


@dataclass(frozen=True)
class KernelSpec:
    """Kernel family and bandwidth h > 0.

    All three kernels satisfy K(0) = 1, K(x) = K(-x), |K| <= 1.
    """

    kind: str = "bartlett"
    bandwidth: float = 1.0

    def __post_init__(self):
        if self.kind not in KERNELS:
            raise ValueError(f"unknown kernel {self.kind!r}; choose from {KERNELS}")
        if not self.bandwidth > 0:
            raise ValueError(f"bandwidth must be positive, got {self.bandwidth}")


@dataclass(frozen=True)
class HacEstimate:
    upsilon: np.ndarray            # (d, d), symmetric PSD
    psd_adjusted: bool
    min_eigenvalue_before: float


def kernel_weight(spec: KernelSpec, u) -> np.ndarray | float:
    """Evaluate the kernel at u (scalar or array)."""
    u = np.abs(np.asarray(u, dtype=float))
    scalar = u.ndim == 0
    u = np.atleast_1d(u)
    if spec.kind == "bartlett":
        w = np.maximum(0.0, 1.0 - u)
    elif spec.kind == "parzen":
        w = np.where(
            u <= 0.5,
            1.0 - 6.0 * u**2 + 6.0 * u**3,
            np.where(u <= 1.0, 2.0 * (1.0 - u) ** 3, 0.0),
        )
    else:  # quadratic spectral
        x = 6.0 * np.pi * u / 5.0
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(
                u < 1e-12,
                1.0,
                25.0 / (12.0 * np.pi**2 * u**2) * (np.sin(x) / x - np.cos(x)),
            )
    return float(w[0]) if scalar else w


def default_bandwidth(t_len: int) -> int:
    """floor(T/3), the fixed rule used throughout."""
    if t_len < 3:
        raise ValueError(f"need T >= 3 for the bandwidth rule, got {t_len}")
    return t_len // 3


def _max_lag(spec: KernelSpec, t_len: int) -> int:
    if spec.kind in ("bartlett", "parzen"):
        # Weight is exactly zero for |l| >= h.
        support = int(np.ceil(spec.bandwidth)) - 1
        return max(0, min(t_len - 1, support))
    # QS decays like u^-2; cut where |K| < 1e-12.
    lag = t_len - 1
    lags = np.arange(1, t_len)
    w = np.abs(kernel_weight(spec, lags / spec.bandwidth))
    alive = np.nonzero(w >= 1e-12)[0]
    return int(lags[alive[-1]]) if len(alive) else 0


def _bartlett_rolling(D: np.ndarray, h: int) -> np.ndarray:
    """Bartlett sum as Gram of rolling window sums (exact for integer h).

    Each pair (s, t) with |s - t| = l < h lies in exactly h - l of the
    zero-padded length-h windows, so (1/Th) sum_j W_j W_j' equals
    sum_{|l|<h} (1 - |l|/h) M_l.
    """
    d, t_len = D.shape
    padded = np.zeros((d, t_len + 1))
    np.cumsum(D, axis=1, out=padded[:, 1:])
    # Window j covers times [j, j+h-1] (1-based), j = 2-h .. T.
    starts = np.arange(2 - h, t_len + 1)
    lo = np.clip(starts - 1, 0, t_len)
    hi = np.clip(starts + h - 1, 0, t_len)
    W = padded[:, hi] - padded[:, lo]
    return (W @ W.T) / (t_len * h)


def hac_long_run_cov(D: np.ndarray, spec: KernelSpec) -> HacEstimate:
    """Long-run covariance of the rows of D (d x T, caller-centered).

    Rows are recentered defensively (a no-op for correctly centered
    input).  The result is symmetrized and, if any eigenvalue is
    negative, clipped to the PSD cone; ``min_eigenvalue_before`` records
    the smallest eigenvalue before clipping.
    """
    D = np.asarray(D, dtype=float)
    if D.ndim == 1:
        D = D[None, :]
    if not np.all(np.isfinite(D)):
        raise ValueError("non-finite values in moment series")
    d, t_len = D.shape
    if t_len < 2:
        raise ValueError(f"need T >= 2, got {t_len}")
    D = D - D.mean(axis=1, keepdims=True)

    h = spec.bandwidth
    if spec.kind == "bartlett" and float(h).is_integer() and 1 <= int(h) <= t_len:
        upsilon = _bartlett_rolling(D, int(h))
    else:
        upsilon = (D @ D.T) / t_len
        for lag in range(1, _max_lag(spec, t_len) + 1):
            w = kernel_weight(spec, lag / h)
            m_l = (D[:, lag:] @ D[:, :t_len - lag].T) / t_len
            upsilon += w * (m_l + m_l.T)
    upsilon = 0.5 * (upsilon + upsilon.T)

    eigval, eigvec = np.linalg.eigh(upsilon)
    min_before = float(eigval[0])
    adjusted = min_before < 0.0
    if adjusted:
        upsilon = (eigvec * np.maximum(eigval, 0.0)) @ eigvec.T
        upsilon = 0.5 * (upsilon + upsilon.T)
    return HacEstimate(upsilon=upsilon, psd_adjusted=adjusted, min_eigenvalue_before=min_before)
