"""Derivative-free minimisation (Nelder-Mead downhill simplex)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigError


@dataclass
class NelderMeadResult:
    x: np.ndarray
    fun: float
    iterations: int
    evaluations: int
    converged: bool


def _safe(f: Callable) -> Callable:
    def wrapped(x):
        v = float(f(x))
        return np.inf if np.isnan(v) else v

    return wrapped


def initial_simplex(x0: np.ndarray, step=None) -> np.ndarray:
    """x0 plus one vertex per coordinate, offset by 5% of |x0_i| (0.1 when x0_i is 0)."""
    n = len(x0)
    if step is None:
        step = np.where(x0 != 0, 0.05 * np.abs(x0), 0.1)
    step = np.broadcast_to(np.asarray(step, dtype=np.float64), (n,))
    simplex = np.tile(x0, (n + 1, 1))
    simplex[1:][np.diag_indices(n)] += step
    return simplex


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    step=None,
    max_iter: int | None = None,
    xatol: float = 1e-8,
    fatol: float = 1e-10,
    reflection: float = 1.0,
    expansion: float = 2.0,
    contraction: float = 0.5,
    shrink: float = 0.5,
) -> NelderMeadResult:
    """Minimise ``objective`` from ``x0``.

    Stops once the simplex diameter (max-norm distance of any vertex from the
    best) is at most ``xatol`` and the spread of vertex values is at most
    ``fatol``, or after ``max_iter`` iterations (``converged=False``). NaN
    values count as +inf, so an objective can reject infeasible points.
    """
    x0 = np.atleast_1d(np.asarray(x0, dtype=np.float64))
    n = len(x0)
    f = _safe(objective)
    if not np.isfinite(f(x0)):
        raise ConfigError("objective must be finite at the starting point")
    max_iter = 1000 * max(n, 1) if max_iter is None else max_iter

    simplex = initial_simplex(x0, step)
    values = np.array([f(v) for v in simplex])
    evals = n + 2
    it = 0
    converged = False
    while True:
        order = np.argsort(values, kind="stable")
        simplex, values = simplex[order], values[order]
        size = np.max(np.abs(simplex[1:] - simplex[0])) if n else 0.0
        spread = values[-1] - values[0] if np.isfinite(values[-1]) else np.inf
        if size <= xatol and spread <= fatol:
            converged = True
            break
        if it >= max_iter:
            break
        it += 1
        centroid = simplex[:-1].mean(axis=0)
        worst = simplex[-1]
        xr = centroid + reflection * (centroid - worst)
        fr = f(xr)
        evals += 1
        if values[0] <= fr < values[-2]:
            simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[0]:
            xe = centroid + expansion * (xr - centroid)
            fe = f(xe)
            evals += 1
            if fe < fr:
                simplex[-1], values[-1] = xe, fe
            else:
                simplex[-1], values[-1] = xr, fr
            continue
        if fr < values[-1]:
            xc = centroid + contraction * (xr - centroid)
            fc = f(xc)
            evals += 1
            if fc <= fr:
                simplex[-1], values[-1] = xc, fc
                continue
        else:
            xc = centroid + contraction * (worst - centroid)
            fc = f(xc)
            evals += 1
            if fc < values[-1]:
                simplex[-1], values[-1] = xc, fc
                continue
        simplex[1:] = simplex[0] + shrink * (simplex[1:] - simplex[0])
        values[1:] = [f(v) for v in simplex[1:]]
        evals += n
    return NelderMeadResult(simplex[0].copy(), float(values[0]), it, evals, converged)
