"""Epsilon-insensitive support vector regression with an RBF kernel.

The dual is solved in its 2n-variable form

    min  1/2 b'Qb + p'b   s.t.  s'b = 0,  0 <= b <= C

with b = [alpha; alpha*], s = [+1..; -1..], p = [eps - y; eps + y] and
Q_ij = s_i s_j K(x_i, x_j). Each step optimises one pair chosen by
second-order working-set selection (Fan, Chen & Lin, JMLR 2005) and stops when
the maximal KKT violation drops below ``tol``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..errors import ConfigError, ConvergenceError
from .tree import check_xy

log = logging.getLogger(__name__)

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


@dataclass
class SvrModel:
    support_vectors: np.ndarray
    dual_coef: np.ndarray  # alpha - alpha*, one per support vector
    bias: float
    C: float
    epsilon: float
    gamma: float
    support: np.ndarray  # indices into the training set
    iterations: int = 0
    objective: float = float("nan")
    feature_names: list[str] = field(default_factory=list)

    kind = "svr"

    def decision(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if len(X) == 0:
            return np.empty(0)
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.bias)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.bias

    predict = decision

    def params(self) -> dict:
        return {"C": self.C, "epsilon": self.epsilon, "gamma": self.gamma, "kernel": "rbf"}

    def to_dict(self) -> dict:
        return {
            "params": self.params(),
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "support": self.support.tolist(),
            "bias": self.bias,
            "iterations": self.iterations,
            "objective": self.objective,
        }

    @classmethod
    def from_dict(cls, d: dict, feature_names=()) -> "SvrModel":
        p = d["params"]
        return cls(
            np.array(d["support_vectors"], dtype=np.float64).reshape(len(d["dual_coef"]), -1),
            np.array(d["dual_coef"], dtype=np.float64),
            d["bias"],
            p["C"],
            p["epsilon"],
            p["gamma"],
            np.array(d["support"], dtype=np.int64),
            d.get("iterations", 0),
            d.get("objective", float("nan")),
            list(feature_names),
        )


def dual_objective(coef: np.ndarray, K: np.ndarray, y: np.ndarray, epsilon: float) -> float:
    """1/2 c'Kc - y'c + eps * |c|_1 for c = alpha - alpha* (minimisation form)."""
    return float(0.5 * coef @ K @ coef - y @ coef + epsilon * np.abs(coef).sum())


def fit_svr(
    X,
    y,
    C: float = 100.0,
    epsilon: float = 0.1,
    gamma: float | None = None,
    tol: float = 1e-3,
    max_iter: int = 1_000_000,
    feature_names=(),
) -> SvrModel:
    X, y = check_xy(X, y)
    if C <= 0:
        raise ConfigError("C must be > 0")
    if epsilon < 0:
        raise ConfigError("epsilon must be >= 0")
    n, d = X.shape
    gamma = 1.0 / d if gamma is None else float(gamma)
    if gamma <= 0:
        raise ConfigError("gamma must be > 0")
    std = X.std(axis=0)
    if n > 1 and np.any((std > 10) | ((std < 0.1) & (std > 0))):
        log.warning("SVR features look unscaled (std range %.3g..%.3g)", std.min(), std.max())

    K = rbf_kernel(X, X, gamma)
    diag = np.diag(K).copy()
    s = np.r_[np.ones(n), -np.ones(n)]
    p = np.r_[epsilon - y, epsilon + y]
    beta = np.zeros(2 * n)
    G = p.copy()
    mod = np.r_[np.arange(n), np.arange(n)]

    def q_row(i: int) -> np.ndarray:
        return s[i] * s * np.tile(K[mod[i]], 2)

    it = 0
    gap = np.inf
    while it < max_iter:
        minus_sG = -s * G
        up = ((beta < C) & (s > 0)) | ((beta > 0) & (s < 0))
        low = ((beta < C) & (s < 0)) | ((beta > 0) & (s > 0))
        if not up.any() or not low.any():
            gap = 0.0
            break
        cand = np.where(up, minus_sG, -np.inf)
        i = int(np.argmax(cand))
        g_max = cand[i]
        g_min = np.where(low, minus_sG, np.inf).min()
        gap = g_max - g_min
        if gap < tol:
            break
        Qi = q_row(i)
        b = g_max - minus_sG
        a = diag[mod[i]] + diag[mod] - 2.0 * s[i] * s * Qi
        a = np.where(a > 0, a, TAU)
        score = np.where(low & (b > 0), -(b * b) / a, np.inf)
        j = int(np.argmin(score))
        Qj = q_row(j)
        old_i, old_j = beta[i], beta[j]
        if s[i] != s[j]:
            quad = diag[mod[i]] + diag[mod[j]] + 2.0 * Qi[j]
            quad = quad if quad > 0 else TAU
            delta = (-G[i] - G[j]) / quad
            diff = beta[i] - beta[j]
            beta[i] += delta
            beta[j] += delta
            if diff > 0:
                if beta[j] < 0:
                    beta[j], beta[i] = 0.0, diff
            elif beta[i] < 0:
                beta[i], beta[j] = 0.0, -diff
            if diff > 0:
                if beta[i] > C:
                    beta[i], beta[j] = C, C - diff
            elif beta[j] > C:
                beta[j], beta[i] = C, C + diff
        else:
            quad = diag[mod[i]] + diag[mod[j]] - 2.0 * Qi[j]
            quad = quad if quad > 0 else TAU
            delta = (G[i] - G[j]) / quad
            total = beta[i] + beta[j]
            beta[i] -= delta
            beta[j] += delta
            if total > C:
                if beta[i] > C:
                    beta[i], beta[j] = C, total - C
            elif beta[j] < 0:
                beta[j], beta[i] = 0.0, total
            if total > C:
                if beta[j] > C:
                    beta[j], beta[i] = C, total - C
            elif beta[i] < 0:
                beta[i], beta[j] = 0.0, total
        G += Qi * (beta[i] - old_i) + Qj * (beta[j] - old_j)
        it += 1
    else:
        raise ConvergenceError(
            f"SVR solver did not reach KKT tolerance {tol} in {max_iter} iterations (gap {gap:.3g})",
            violation=float(gap),
        )

    # bias: average over free variables, else midpoint of the feasible interval
    sG = s * G
    at_upper = beta >= C
    at_lower = beta <= 0
    free = ~at_upper & ~at_lower
    if free.any():
        rho = float(sG[free].mean())
    else:
        ub_mask = (at_upper & (s < 0)) | (at_lower & (s > 0))
        lb_mask = (at_upper & (s > 0)) | (at_lower & (s < 0))
        ub = sG[ub_mask].min() if ub_mask.any() else np.inf
        lb = sG[lb_mask].max() if lb_mask.any() else -np.inf
        rho = float((ub + lb) / 2) if np.isfinite(ub) and np.isfinite(lb) else float(ub if np.isfinite(ub) else lb)
    coef = beta[:n] - beta[n:]
    support = np.flatnonzero(coef != 0)
    return SvrModel(
        X[support].copy(),
        coef[support].copy(),
        -rho,
        float(C),
        float(epsilon),
        gamma,
        support,
        it,
        dual_objective(coef, K, y, epsilon),
        list(feature_names),
    )


def kkt_violations(model: SvrModel, X, y) -> np.ndarray:
    """Per-point complementary-slackness violation of a fitted model.

    With r = y - f(x) and c = alpha - alpha*: c = 0 needs |r| <= eps,
    0 < c < C needs r = eps, c = C needs r >= eps, and symmetrically for
    negative c.
    """
    X, y = check_xy(X, y)
    coef = np.zeros(len(y))
    coef[model.support] = model.dual_coef
    r = y - model.decision(X)
    eps, C = model.epsilon, model.C
    at_bound = np.abs(np.abs(coef) - C) <= 1e-9 * C
    v = np.where(coef == 0, np.maximum(0.0, np.abs(r) - eps), 0.0)
    pos, neg = coef > 0, coef < 0
    v = np.where(pos & ~at_bound, np.abs(r - eps), v)
    v = np.where(pos & at_bound, np.maximum(0.0, eps - r), v)
    v = np.where(neg & ~at_bound, np.abs(r + eps), v)
    v = np.where(neg & at_bound, np.maximum(0.0, r + eps), v)
    return v
