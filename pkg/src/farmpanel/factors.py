"""Principal-component factor estimation and factor-count selection.

Factors are normalized so that F'F/T = I_r: the factor matrix is sqrt(T)
times the leading eigenvectors of the T x T Gram matrix R'R, and the
loadings are L = R F / T.  The eigendecomposition is always done on the
smaller of the two Gram matrices (T x T or n x n) and mapped across via
the SVD correspondence.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

SELECTION_METHODS = ("er", "ic1", "ic2", "ic3", "ic4", "fixed")


@dataclass(frozen=True)
class FactorEstimate:
    factors: np.ndarray       # (T, r), F'F/T = I_r
    loadings: np.ndarray      # (n, r)
    eigenvalues: np.ndarray   # (r,), top eigenvalues of R'R/T, descending
    residuals: np.ndarray     # (n, T), R - loadings @ factors.T
    r: int


@dataclass(frozen=True)
class FactorSelection:
    """Outcome of a factor-count rule ("er", "ic1".."ic4", or "fixed")."""

    method: str
    kmax: int
    chosen_r: int
    criterion_values: tuple[float, ...]

    def __post_init__(self):
        if self.method not in SELECTION_METHODS:
            raise ValueError(f"unknown selection method {self.method!r}")
        if not 0 <= self.chosen_r <= max(self.kmax, self.chosen_r):
            raise ValueError(f"chosen_r = {self.chosen_r} out of range")


def default_kmax(n: int, t_len: int) -> int:
    return max(1, min(20, min(n, t_len) // 2))


def pca_factors(residual_panel: np.ndarray, r: int) -> FactorEstimate:
    """Extract r principal-component factors from an (n, T) panel.

    Sign convention: in each loading column the entry of largest absolute
    value is made positive, which pins the eigenvector signs without
    affecting the common component loadings @ factors'.
    """
    panel = np.asarray(residual_panel, dtype=float)
    if panel.ndim != 2:
        raise ValueError("residual panel must be 2-D")
    n, t_len = panel.shape
    if not 1 <= r <= min(n, t_len):
        raise ValueError(f"r = {r} out of range 1..{min(n, t_len)}")
    if not np.all(np.isfinite(panel)):
        raise ValueError("residual panel contains non-finite values")

    if t_len <= n:
        gram = panel.T @ panel                     # (T, T)
        w, v = np.linalg.eigh(gram)
        order = np.argsort(w)[::-1][:r]
        eigvecs = v[:, order]                      # (T, r)
        eigvals = w[order] / t_len
        factors = np.sqrt(t_len) * eigvecs
    else:
        gram = panel @ panel.T                     # (n, n)
        w, v = np.linalg.eigh(gram)
        order = np.argsort(w)[::-1][:r]
        left = v[:, order]                         # (n, r)
        eigvals = w[order] / t_len
        # SVD correspondence: right singular vectors = R' u / sigma.
        sigma = np.sqrt(np.maximum(w[order], 0.0))
        safe = np.where(sigma > 0, sigma, 1.0)
        eigvecs = (panel.T @ left) / safe
        factors = np.sqrt(t_len) * eigvecs

    loadings = panel @ factors / t_len
    # Sign convention: largest-|loading| entry positive per column.
    for j in range(r):
        col = loadings[:, j]
        pivot = np.argmax(np.abs(col))
        if col[pivot] < 0:
            loadings[:, j] = -col
            factors[:, j] = -factors[:, j]
    residuals = panel - loadings @ factors.T
    return FactorEstimate(
        factors=factors,
        loadings=loadings,
        eigenvalues=eigvals,
        residuals=residuals,
        r=r,
    )


def eigenvalue_ratio_select(eigenvalues: np.ndarray, kmax: int) -> int:
    """argmax over k = 1..kmax of eigenvalue_k / eigenvalue_{k+1}.

    Ties break toward the smallest k.  Needs kmax + 1 positive
    eigenvalues.
    """
    eig = np.asarray(eigenvalues, dtype=float).ravel()
    if eig.size == 0:
        raise ValueError("empty eigenvalue sequence")
    if kmax < 1 or kmax + 1 > eig.size:
        raise ValueError(f"kmax = {kmax} needs {kmax + 1} eigenvalues, have {eig.size}")
    if np.any(eig[: kmax + 1] <= 0):
        raise ValueError("eigenvalues must be positive over 1..kmax+1")
    ratios = eig[:kmax] / eig[1 : kmax + 1]
    return int(np.argmax(ratios)) + 1


def _reconstruction_errors(panel: np.ndarray, kmax: int) -> np.ndarray:
    """S(r) = ||R - L_r F_r'||_F^2 / (nT) for r = 1..kmax, via one eigh."""
    n, t_len = panel.shape
    if t_len <= n:
        w = np.linalg.eigvalsh(panel.T @ panel)
    else:
        w = np.linalg.eigvalsh(panel @ panel.T)
    w = np.sort(w)[::-1]
    total = float(np.sum(panel * panel))
    # Dropping the top-r eigenvalues of R'R leaves the residual sum of squares.
    cum = np.cumsum(w[:kmax])
    return (total - cum) / (n * t_len)


def ic_select(residual_panel: np.ndarray, kmax: int, criterion: str) -> FactorSelection:
    """Information-criterion factor count over r = 1..kmax.

    Penalties, with S(r) the mean squared reconstruction error and
    C = sqrt(min(n, T)):

      ic1: r * ((n+T)/(nT)) * log(nT/(n+T))
      ic2: r * ((n+T)/(nT)) * log(C^2)
      ic3: r * log(C^2) / C^2
      ic4: r * ((n+T-r) * log(nT)) / (nT)

    The criterion is log S(r) plus the penalty; ties go to the smaller r.
    """
    criterion = criterion.lower()
    if criterion not in ("ic1", "ic2", "ic3", "ic4"):
        raise ValueError(f"unknown criterion {criterion!r}")
    panel = np.asarray(residual_panel, dtype=float)
    n, t_len = panel.shape
    if not 1 <= kmax <= min(n, t_len):
        raise ValueError(f"kmax = {kmax} out of range 1..{min(n, t_len)}")
    s = _reconstruction_errors(panel, kmax)
    # Relative floor: reconstructions that are zero up to float error tie,
    # letting the strictly increasing penalty pick the smallest r.
    s = np.maximum(s, np.mean(panel * panel) * 1e-12)
    nt = n * t_len
    c2 = min(n, t_len)
    r_grid = np.arange(1, kmax + 1)
    if criterion == "ic1":
        penalty = r_grid * ((n + t_len) / nt) * np.log(nt / (n + t_len))
    elif criterion == "ic2":
        penalty = r_grid * ((n + t_len) / nt) * np.log(c2)
    elif criterion == "ic3":
        penalty = r_grid * np.log(c2) / c2
    else:
        penalty = r_grid * ((n + t_len - r_grid) * np.log(nt)) / nt
    with np.errstate(divide="ignore"):
        values = np.where(s > 0, np.log(np.maximum(s, np.finfo(float).tiny)), -np.inf) + penalty
    chosen = int(np.argmin(values)) + 1
    return FactorSelection(
        method=criterion,
        kmax=kmax,
        chosen_r=chosen,
        criterion_values=tuple(float(v) for v in values),
    )


def select_factor_count(residual_panel: np.ndarray, method: str, kmax: int | None = None,
                        fixed_r: int | None = None) -> FactorSelection:
    """Dispatch a factor-count rule by name ("er", "ic1".."ic4", "fixed")."""
    panel = np.asarray(residual_panel, dtype=float)
    n, t_len = panel.shape
    method = method.lower()
    if kmax is None:
        kmax = default_kmax(n, t_len)
    if method == "fixed":
        if fixed_r is None:
            raise ValueError("fixed selection needs fixed_r")
        return FactorSelection(method="fixed", kmax=max(kmax, fixed_r), chosen_r=fixed_r,
                               criterion_values=())
    if method == "er":
        need = min(kmax + 1, min(n, t_len))
        kmax_er = need - 1
        if t_len <= n:
            w = np.linalg.eigvalsh(panel.T @ panel)
        else:
            w = np.linalg.eigvalsh(panel @ panel.T)
        eig = np.sort(w)[::-1][:need] / t_len
        eig = np.maximum(eig, np.finfo(float).tiny)
        chosen = eigenvalue_ratio_select(eig, kmax_er)
        ratios = tuple(float(v) for v in eig[:kmax_er] / eig[1 : kmax_er + 1])
        return FactorSelection(method="er", kmax=kmax_er, chosen_r=chosen,
                               criterion_values=ratios)
    return ic_select(panel, kmax, method)


def rotation_matrix(factors_hat: np.ndarray, true_factors: np.ndarray,
                    true_loadings: np.ndarray, eigenvalues: np.ndarray) -> np.ndarray:
    """Rotation H mapping true factors onto the estimated ones.

    H = V^{-1} (F_hat' F / T) (Lam' Lam), with V the diagonal matrix of
    the leading eigenvalues of R'R/T.  Only meaningful in simulations
    where the truth is available; used for convergence diagnostics of the
    form max_t ||F_hat_t - H F_t||.
    """
    f_hat = np.asarray(factors_hat, dtype=float)
    f_true = np.asarray(true_factors, dtype=float)
    lam = np.asarray(true_loadings, dtype=float)
    eig = np.asarray(eigenvalues, dtype=float).ravel()
    t_len, r = f_hat.shape
    if f_true.shape != (t_len, r) or lam.shape[1] != r or eig.shape != (r,):
        raise ValueError("shape mismatch between estimate and truth")
    if np.any(eig <= 0):
        raise np.linalg.LinAlgError("singular eigenvalue matrix V")
    return (1.0 / t_len) * np.diag(1.0 / eig) @ f_hat.T @ f_true @ lam.T @ lam
