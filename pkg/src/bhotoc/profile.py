"""Ergodic averages of an observable as a function of the constants of motion."""
from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted


class ErgodicProfile(BaseEstimator):
    """Binned profile of long-time averages over the constants of motion.

    ``fit(C, a)`` takes the constants ``C`` (n_traj, K) at which each
    trajectory was launched and its time average ``a``.  Cells on a regular
    grid collect ``abar`` and its standard error; a cell is valid when at
    least ``min_count`` trajectories contribute to it.

    The partial derivatives of the profile are estimated per cell either by
    central finite differences between valid neighbouring cells (one-sided
    at the edges), or by a Gaussian-weighted local linear fit centred on
    the cell (``gradient="local_linear"``).  For the local fit the
    contributing trajectories are those within two bandwidths of the cell
    centre, the bandwidth being ``bandwidth`` times the spread of the
    launch constants along each axis.

    Parameters
    ----------
    bins : int or tuple of int
        Cells per constant.
    min_count : int
        Minimum number of contributing trajectories for a valid cell.
    gradient : {"finite_difference", "local_linear"}
    bandwidth : float
        Kernel width in units of the standard deviation of each constant.
    """

    def __init__(self, bins=16, min_count=8, gradient="local_linear", bandwidth=0.5):
        self.bins = bins
        self.min_count = min_count
        self.gradient = gradient
        self.bandwidth = bandwidth

    def fit(self, C, a):
        C = check_array(C, ensure_2d=False, dtype=float)
        if C.ndim == 1:
            C = C[:, None]
        a = check_array(np.asarray(a, dtype=float), ensure_2d=False)
        if a.shape[0] != C.shape[0]:
            raise ValueError(f"C has {C.shape[0]} rows but a has {a.shape[0]}")
        if self.gradient not in ("finite_difference", "local_linear"):
            raise ValueError(f"unknown gradient method {self.gradient!r}")
        n, K = C.shape
        bins = (self.bins,) * K if np.isscalar(self.bins) else tuple(self.bins)
        if len(bins) != K:
            raise ValueError(f"bins has {len(bins)} entries for {K} constants")
        self.n_constants_ = K
        self.edges_ = []
        for k in range(K):
            lo, hi = C[:, k].min(), C[:, k].max()
            if hi <= lo:
                pad = max(abs(lo), 1.0) * 1e-6
                lo, hi = lo - pad, hi + pad
            self.edges_.append(np.linspace(lo, hi, bins[k] + 1))
        self.centers_ = [0.5 * (e[1:] + e[:-1]) for e in self.edges_]
        self.scale_ = np.maximum(C.std(axis=0), 1e-12)
        cell = self._cells(C)
        flat = np.ravel_multi_index(cell.T, bins)
        ncell = int(np.prod(bins))
        counts = np.bincount(flat, minlength=ncell)
        s1 = np.bincount(flat, weights=a, minlength=ncell)
        s2 = np.bincount(flat, weights=a * a, minlength=ncell)
        with np.errstate(invalid="ignore", divide="ignore"):
            mean = s1 / counts
            var = (s2 - counts * mean**2) / (counts - 1)
            err = np.sqrt(np.maximum(var, 0.0) / counts)
        self.counts_ = counts.reshape(bins)
        self.abar_ = np.where(counts > 0, mean, np.nan).reshape(bins)
        self.abar_err_ = np.where(counts > 1, err, np.nan).reshape(bins)
        self.valid_ = self.counts_ >= self.min_count
        if self.gradient == "finite_difference":
            self.dA_dc_ = self._finite_difference(bins)
        else:
            self.dA_dc_ = self._local_linear(C, a, bins)
        self.grad_valid_ = np.all(np.isfinite(self.dA_dc_), axis=-1)
        self.n_samples_fit_ = n
        return self

    def _cells(self, C) -> np.ndarray:
        idx = np.empty(C.shape, dtype=np.int64)
        for k, e in enumerate(self.edges_):
            idx[:, k] = np.clip(np.searchsorted(e, C[:, k], side="right") - 1, 0, e.size - 2)
        return idx

    def _inside(self, C) -> np.ndarray:
        ok = np.ones(C.shape[0], dtype=bool)
        for k, e in enumerate(self.edges_):
            ok &= (C[:, k] >= e[0]) & (C[:, k] <= e[-1])
        return ok

    def _finite_difference(self, bins):
        K = len(bins)
        grad = np.full(bins + (K,), np.nan)
        A = np.where(self.valid_, self.abar_, np.nan)
        for k in range(K):
            h = self.centers_[k][1] - self.centers_[k][0] if bins[k] > 1 else np.nan
            Am = np.moveaxis(A, k, 0)
            g = np.full_like(Am, np.nan)
            if bins[k] > 2:
                g[1:-1] = (Am[2:] - Am[:-2]) / (2 * h)
            if bins[k] > 1:
                fwd = (Am[1:] - Am[:-1]) / h
                # one-sided where the central stencil is unavailable
                g[:-1] = np.where(np.isfinite(g[:-1]), g[:-1], fwd)
                g[1:] = np.where(np.isfinite(g[1:]), g[1:], fwd)
            g = np.where(np.isfinite(np.moveaxis(A, k, 0)), g, np.nan)
            grad[..., k] = np.moveaxis(g, 0, k)
        return grad

    def _local_linear(self, C, a, bins):
        K = len(bins)
        h = self.bandwidth * self.scale_
        grid = np.stack(np.meshgrid(*self.centers_, indexing="ij"), axis=-1).reshape(-1, K)
        grad = np.full((grid.shape[0], K), np.nan)
        contributing = np.zeros(grid.shape[0], dtype=np.int64)
        for i, c0 in enumerate(grid):
            z = (C - c0) / h
            r2 = np.sum(z * z, axis=1)
            near = r2 <= 4.0
            contributing[i] = int(np.count_nonzero(near))
            if contributing[i] < max(self.min_count, K + 2):
                continue
            w = np.exp(-0.5 * r2[near])
            D = np.column_stack([np.ones(contributing[i]), z[near]])
            sw = np.sqrt(w)
            coef, *_ = np.linalg.lstsq(D * sw[:, None], a[near] * sw, rcond=None)
            grad[i] = coef[1:] / h
        self.contributing_ = contributing.reshape(bins)
        self.valid_ = self.contributing_ >= self.min_count
        return grad.reshape(bins + (K,))

    def _as_constants(self, C):
        check_is_fitted(self, "dA_dc_")
        C = np.asarray(C, dtype=float)
        if C.ndim == 1:
            C = C[:, None] if self.n_constants_ == 1 else C[None, :]
        if C.shape[1] != self.n_constants_:
            raise ValueError(f"expected {self.n_constants_} constants, got {C.shape[1]}")
        return C

    def predict(self, C) -> np.ndarray:
        """Profile value of the cell containing each row; nan outside or invalid."""
        C = self._as_constants(C)
        cell = tuple(self._cells(C).T)
        out = np.where(self.valid_[cell], self.abar_[cell], np.nan)
        return np.where(self._inside(C), out, np.nan)

    def predict_gradient(self, C) -> np.ndarray:
        """d abar / d c_k at the cell of each row, shape (n, K); nan if invalid."""
        C = self._as_constants(C)
        cell = tuple(self._cells(C).T)
        g = self.dA_dc_[cell]
        ok = self._inside(C) & self.valid_[cell] & self.grad_valid_[cell]
        g[~ok] = np.nan
        return g

    def rows(self):
        """(c1, c2, abar, abar_err, valid) per cell; c2 is nan for one constant."""
        check_is_fitted(self, "dA_dc_")
        grid = np.meshgrid(*self.centers_, indexing="ij")
        c1 = grid[0].ravel()
        c2 = grid[1].ravel() if self.n_constants_ > 1 else np.full(c1.size, np.nan)
        return list(zip(c1, c2, self.abar_.ravel(), self.abar_err_.ravel(),
                        self.valid_.ravel().astype(int)))
