"""Exact Gaussian-process regression with an ARD squared-exponential kernel.

Inputs and outputs are standardized internally. Hyperparameters (per-feature
lengthscales, signal variance, noise variance) maximize the log marginal
likelihood with multi-start L-BFGS-B on log-parameters and analytic gradients.
"""

from __future__ import annotations

import numpy as np
from scipy.linalg import cho_solve, solve_triangular
from scipy.optimize import minimize

LOG_2PI = np.log(2.0 * np.pi)


class GPFitError(np.linalg.LinAlgError):
    pass


def _chol(K: np.ndarray, max_tries: int = 6) -> tuple[np.ndarray, float]:
    """Cholesky with escalating diagonal jitter; returns (L, jitter used)."""
    scale = float(np.mean(np.diag(K)))
    jitter = 0.0
    for i in range(max_tries):
        try:
            return np.linalg.cholesky(K + jitter * np.eye(len(K))), jitter
        except np.linalg.LinAlgError:
            jitter = scale * 10.0 ** (-9 + i)
    raise GPFitError("kernel matrix is not positive definite even with jitter")


def _sqdist_per_dim(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    return (A[:, None, :] - B[None, :, :]) ** 2  # (n, m, D)


class GPSurrogate:
    """A fitted GP. Use :func:`gp_fit` or :meth:`from_params` to build one."""

    def __init__(self, X, y, lengthscales, signal_var, noise_var, *, standardize=True):
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        if standardize:
            self.x_mean = X.mean(axis=0)
            sd = X.std(axis=0)
            self.x_scale = np.where(sd > 0, sd, 1.0)
            self.y_mean = float(y.mean())
            ys = float(y.std())
            self.y_scale = ys if ys > 0 else 1.0
        else:
            self.x_mean = np.zeros(X.shape[1])
            self.x_scale = np.ones(X.shape[1])
            self.y_mean, self.y_scale = 0.0, 1.0
        self.X_raw, self.y_raw = X, y
        self.Z = (X - self.x_mean) / self.x_scale
        self.t = (y - self.y_mean) / self.y_scale
        self.lengthscales = np.broadcast_to(np.asarray(lengthscales, dtype=float), (X.shape[1],)).copy()
        self.signal_var = float(signal_var)
        self.noise_var = float(noise_var)
        if np.any(self.lengthscales <= 0) or self.signal_var <= 0 or self.noise_var <= 0:
            raise ValueError("lengthscales and variances must be positive")
        K = self._k(self.Z, self.Z) + self.noise_var * np.eye(len(self.Z))
        self.L, self.jitter = _chol(K)
        self.alpha = cho_solve((self.L, True), self.t)

    @classmethod
    def from_params(cls, X, y, lengthscales, signal_var, noise_var, standardize=False):
        return cls(X, y, lengthscales, signal_var, noise_var, standardize=standardize)

    def _k(self, A, B):
        d2 = np.sum(_sqdist_per_dim(A / self.lengthscales, B / self.lengthscales), axis=-1)
        return self.signal_var * np.exp(-0.5 * d2)

    def _z(self, X):
        return (np.atleast_2d(np.asarray(X, dtype=float)) - self.x_mean) / self.x_scale

    def predict(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and latent (noise-free) variance at each row of ``X``."""
        Zs = self._z(X)
        Ks = self._k(Zs, self.Z)
        mean = Ks @ self.alpha
        v = solve_triangular(self.L, Ks.T, lower=True)
        var = np.maximum(self.signal_var - np.sum(v * v, axis=0), 0.0)
        return self.y_mean + self.y_scale * mean, self.y_scale ** 2 * var

    def predict_joint(self, X) -> tuple[np.ndarray, np.ndarray]:
        """Posterior mean and full latent covariance over the rows of ``X``."""
        Zs = self._z(X)
        Ks = self._k(Zs, self.Z)
        v = solve_triangular(self.L, Ks.T, lower=True)
        cov = self._k(Zs, Zs) - v.T @ v
        cov = 0.5 * (cov + cov.T)
        return self.y_mean + self.y_scale * (Ks @ self.alpha), self.y_scale ** 2 * cov

    def log_marginal_likelihood(self) -> float:
        """In standardized output units."""
        n = len(self.t)
        return float(-0.5 * self.t @ self.alpha - np.sum(np.log(np.diag(self.L))) - 0.5 * n * LOG_2PI)


def _neg_lml_and_grad(theta, Z, t, D2):
    """theta = (log lengthscales..., log signal var, log noise var)."""
    d = Z.shape[1]
    ls = np.exp(theta[:d])
    sf2 = np.exp(theta[d])
    sn2 = np.exp(theta[d + 1])
    scaled = D2 / (ls ** 2)  # (n, n, D)
    Kf = sf2 * np.exp(-0.5 * scaled.sum(axis=-1))
    K = Kf + sn2 * np.eye(len(Z))
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return 1e25, np.zeros_like(theta)
    alpha = cho_solve((L, True), t)
    nll = 0.5 * t @ alpha + np.sum(np.log(np.diag(L))) + 0.5 * len(t) * LOG_2PI
    W = np.outer(alpha, alpha) - cho_solve((L, True), np.eye(len(t)))
    WK = W * Kf
    grad = np.empty_like(theta)
    grad[:d] = -0.5 * np.einsum("ij,ijd->d", WK, scaled)
    grad[d] = -0.5 * np.sum(WK)
    grad[d + 1] = -0.5 * sn2 * np.trace(W)
    return float(nll), grad


def gp_fit(X, y, *, n_restarts: int = 4, seed: int = 0, noise_floor: float = 1e-6,
           lengthscale_bounds=(1e-2, 1e2), signal_bounds=(1e-2, 1e2), noise_max: float = 1.0) -> GPSurrogate:
    """Fit hyperparameters by maximizing the log marginal likelihood."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if len(X) < 2 or len(X) != len(y):
        raise ValueError("need at least two (x, y) pairs of matching length")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
        raise ValueError("non-finite training data")
    probe = GPSurrogate(X, y, 1.0, 1.0, 1.0)
    Z, t = probe.Z, probe.t
    D2 = _sqdist_per_dim(Z, Z)
    d = X.shape[1]
    bounds = ([tuple(np.log(lengthscale_bounds))] * d
              + [tuple(np.log(signal_bounds)), (np.log(noise_floor), np.log(noise_max))])
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    rng = np.random.default_rng(seed)
    starts = [np.concatenate([np.zeros(d), [0.0, np.log(1e-2)]])]
    for _ in range(n_restarts):
        s = rng.uniform(lo, hi)
        s[:d] = rng.uniform(np.log(0.2), np.log(5.0), size=d)
        s[d] = rng.uniform(np.log(0.5), np.log(2.0))
        starts.append(s)
    best = None
    for s in starts:
        res = minimize(_neg_lml_and_grad, np.clip(s, lo, hi), args=(Z, t, D2), jac=True,
                       method="L-BFGS-B", bounds=bounds)
        if best is None or res.fun < best.fun:
            best = res
    th = best.x
    return GPSurrogate(X, y, np.exp(th[:d]), np.exp(th[d]), np.exp(th[d + 1]))


def r2_score(y, y_pred) -> float:
    y = np.asarray(y, dtype=float)
    y_pred = np.asarray(y_pred, dtype=float)
    sst = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum((y - y_pred) ** 2) / sst)


def cross_val_r2(X, y, folds: int = 5, *, fit=None, seed: int = 0) -> float:
    """Out-of-fold R^2 = 1 - SSE/SST over a seeded k-fold split.

    ``fit(X, y)`` must return an object with ``predict(X) -> (mean, var)``;
    the default is :func:`gp_fit`.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if folds < 2 or len(X) < folds:
        raise ValueError("need folds >= 2 and at least one sample per fold")
    fit = fit or gp_fit
    order = np.random.default_rng(seed).permutation(len(X))
    pred = np.empty_like(y)
    for held in np.array_split(order, folds):
        train = np.setdiff1d(order, held)
        model = fit(X[train], y[train])
        pred[held] = model.predict(X[held])[0]
    return r2_score(y, pred)
