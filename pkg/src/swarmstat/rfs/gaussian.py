"""Gaussians, Gaussian mixtures and the linear Kalman recursions used by the tracks."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Gaussian:
    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        m = np.atleast_1d(np.asarray(self.mean, dtype=float))
        P = np.atleast_2d(np.asarray(self.cov, dtype=float))
        if P.shape != (m.size, m.size):
            raise ValueError(f"covariance shape {P.shape} does not match mean of size {m.size}")
        if not np.allclose(P, P.T, rtol=0.0, atol=1e-12):
            raise ValueError("covariance is not symmetric")
        object.__setattr__(self, "mean", m)
        object.__setattr__(self, "cov", P)

    @property
    def dim(self) -> int:
        return self.mean.size


class GaussianMixture:
    """Weighted sum of Gaussians stored as stacked arrays.

    weights: (N,), means: (N, d), covs: (N, d, d). Weights are non-negative
    and sum to one.
    """

    __slots__ = ("weights", "means", "covs")

    def __init__(self, weights, means, covs, *, check: bool = True):
        self.weights = np.asarray(weights, dtype=float).reshape(-1)
        self.means = np.asarray(means, dtype=float).reshape(self.weights.size, -1)
        d = self.means.shape[1]
        self.covs = np.asarray(covs, dtype=float).reshape(self.weights.size, d, d)
        if check:
            if self.weights.size == 0:
                raise ValueError("mixture needs at least one component")
            if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
                raise ValueError("mixture weights must be non-negative and sum to one")
            if not np.allclose(self.covs, np.swapaxes(self.covs, 1, 2), rtol=0.0, atol=1e-12):
                raise ValueError("component covariance is not symmetric")

    @classmethod
    def from_components(cls, components) -> "GaussianMixture":
        ws, ms, Ps = zip(*((w, g.mean, g.cov) for w, g in components))
        return cls(ws, np.stack(ms), np.stack(Ps))

    @classmethod
    def single(cls, mean, cov) -> "GaussianMixture":
        g = Gaussian(mean, cov)
        return cls([1.0], g.mean[None, :], g.cov[None, :, :])

    @property
    def components(self) -> list[tuple[float, Gaussian]]:
        return [(float(w), Gaussian(m, P)) for w, m, P in zip(self.weights, self.means, self.covs)]

    @property
    def dim(self) -> int:
        return self.means.shape[1]

    def __len__(self) -> int:
        return self.weights.size

    def top_mean(self) -> np.ndarray:
        return self.means[int(np.argmax(self.weights))]

    def __repr__(self) -> str:
        return f"GaussianMixture(n={len(self)}, dim={self.dim})"


def _log_normal(x: np.ndarray, mean: np.ndarray, cov: np.ndarray) -> float:
    L = np.linalg.cholesky(cov)
    sol = np.linalg.solve(L, x - mean)
    return -0.5 * (sol @ sol) - np.log(np.diag(L)).sum() - 0.5 * x.size * math.log(2 * math.pi)


def gm_eval(gm: GaussianMixture, x) -> float:
    """Mixture density sum_i w_i N(x; m_i, P_i)."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size != gm.dim:
        raise ValueError(f"state of size {x.size} does not match mixture dimension {gm.dim}")
    total = 0.0
    for w, m, P in zip(gm.weights, gm.means, gm.covs):
        if w > 0:
            total += w * math.exp(_log_normal(x, m, P))
    return total


def kalman_predict(g: Gaussian, F, Q) -> Gaussian:
    F = np.atleast_2d(np.asarray(F, dtype=float))
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    P = F @ g.cov @ F.T + Q
    return Gaussian(F @ g.mean, 0.5 * (P + P.T))


def kalman_update(g: Gaussian, z, H, R) -> tuple[Gaussian, float]:
    """Measurement update; also returns the marginal likelihood N(z; Hm, HPH' + R)."""
    z = np.atleast_1d(np.asarray(z, dtype=float))
    H = np.atleast_2d(np.asarray(H, dtype=float))
    R = np.atleast_2d(np.asarray(R, dtype=float))
    S = H @ g.cov @ H.T + R
    S = 0.5 * (S + S.T)
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        raise ValueError("innovation covariance is not positive definite") from None
    nu = z - H @ g.mean
    PHt = g.cov @ H.T
    K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
    mean = g.mean + K @ nu
    I_KH = np.eye(g.dim) - K @ H
    P = I_KH @ g.cov @ I_KH.T + K @ R @ K.T
    sol = np.linalg.solve(L, nu)
    loglik = -0.5 * (sol @ sol) - np.log(np.diag(L)).sum() - 0.5 * z.size * math.log(2 * math.pi)
    return Gaussian(mean, 0.5 * (P + P.T)), math.exp(loglik)


def gm_predict(gm: GaussianMixture, F: np.ndarray, Q: np.ndarray) -> GaussianMixture:
    means = gm.means @ F.T
    covs = F @ gm.covs @ F.T + Q
    covs = 0.5 * (covs + np.swapaxes(covs, 1, 2))
    return GaussianMixture(gm.weights.copy(), means, covs, check=False)


@dataclass
class GmUpdate:
    """Result of updating one mixture against every measurement of a scan.

    ``log_q[j]`` is the log measurement likelihood of z_j (-inf when gated
    out). ``posterior(j)`` builds the conditional mixture for that
    association.
    """

    log_q: np.ndarray
    log_post_w: np.ndarray  # (N, m) unnormalized log component weights
    post_means: np.ndarray  # (N, m, d)
    post_covs: np.ndarray  # (N, d, d)

    def posterior(self, j: int) -> GaussianMixture:
        lw = self.log_post_w[:, j]
        w = np.exp(lw - self.log_q[j])
        w = w / w.sum()
        return GaussianMixture(w, self.post_means[:, j, :], self.post_covs, check=False)


def gm_update_scan(gm: GaussianMixture, Z: np.ndarray, H: np.ndarray, R: np.ndarray,
                   gate: float = math.inf) -> GmUpdate:
    """Kalman-update every component against every measurement at once.

    ``gate`` is a squared Mahalanobis distance; component/measurement pairs
    beyond it contribute zero likelihood.
    """
    N, d = gm.means.shape
    Z = np.asarray(Z, dtype=float).reshape(-1, H.shape[0])
    m = Z.shape[0]
    zdim = H.shape[0]
    log_post_w = np.full((N, m), -np.inf)
    post_means = np.empty((N, m, d))
    post_covs = np.empty((N, d, d))
    with np.errstate(divide="ignore"):
        log_w = np.log(gm.weights)
    for i in range(N):
        P = gm.covs[i]
        S = H @ P @ H.T + R
        S = 0.5 * (S + S.T)
        try:
            L = np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise ValueError("innovation covariance is not positive definite") from None
        PHt = P @ H.T
        K = np.linalg.solve(L.T, np.linalg.solve(L, PHt.T)).T
        I_KH = np.eye(d) - K @ H
        Pp = I_KH @ P @ I_KH.T + K @ R @ K.T
        post_covs[i] = 0.5 * (Pp + Pp.T)
        if m == 0:
            continue
        nu = Z - H @ gm.means[i]  # (m, zdim)
        sol = np.linalg.solve(L, nu.T)  # (zdim, m)
        d2 = np.einsum("ij,ij->j", sol, sol)
        ll = -0.5 * d2 - np.log(np.diag(L)).sum() - 0.5 * zdim * math.log(2 * math.pi)
        ll = np.where(d2 <= gate, ll, -np.inf)
        log_post_w[i] = log_w[i] + ll
        post_means[i] = gm.means[i] + nu @ K.T
    if m:
        mx = log_post_w.max(axis=0)
        finite = np.isfinite(mx)
        safe = np.where(finite, mx, 0.0)
        with np.errstate(divide="ignore"):
            log_q = np.where(finite, safe + np.log(np.exp(log_post_w - safe).sum(axis=0)), -np.inf)
    else:
        log_q = np.empty(0)
    return GmUpdate(log_q, log_post_w, post_means, post_covs)


def gm_combine(parts: list[tuple[float, GaussianMixture]]) -> GaussianMixture:
    """Mixture of mixtures; outer weights need not be normalized."""
    total = sum(w for w, _ in parts)
    ws = np.concatenate([w / total * g.weights for w, g in parts])
    ms = np.concatenate([g.means for _, g in parts])
    Ps = np.concatenate([g.covs for _, g in parts])
    ws = ws / ws.sum()
    return GaussianMixture(ws, ms, Ps, check=False)


def gm_prune(gm: GaussianMixture, threshold: float, cap: int) -> GaussianMixture:
    """Drop components below ``threshold``, keep the ``cap`` heaviest, renormalize.

    The heaviest component always survives.
    """
    order = np.argsort(-gm.weights, kind="stable")
    keep = [i for i in order if gm.weights[i] >= threshold][:cap]
    if not keep:
        keep = [int(order[0])]
    keep = np.array(keep)
    w = gm.weights[keep]
    return GaussianMixture(w / w.sum(), gm.means[keep], gm.covs[keep], check=False)
