"""Bounded Levenberg-Marquardt least squares with a finite-difference Jacobian."""

from __future__ import annotations

from collections.abc import Callable, Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalFailureError


@dataclass
class FitResult:
    """Outcome of a least-squares fit.

    Attributes:
        params: fitted values by name.
        residual_norm: RMS of the residual vector at the solution.
        iterations: number of LM iterations performed.
        converged: a gradient or step-size criterion was met before the
            iteration limit.
        param_uncertainties: standard errors from ``sigma^2 (J^T J)^+``.
        termination: ``"gtol"``, ``"xtol"`` or ``"max_iter"``.
        cost_history: ``0.5 * |r|^2`` after every accepted iteration.
        diagnostics: Jacobian rank, condition number, notes added by callers.
    """

    params: dict[str, float]
    residual_norm: float
    iterations: int
    converged: bool
    param_uncertainties: dict[str, float]
    termination: str = ""
    cost_history: list[float] = field(default_factory=list)
    nfev: int = 0
    diagnostics: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "params": dict(self.params),
            "param_uncertainties": dict(self.param_uncertainties),
            "residual_norm": self.residual_norm,
            "iterations": self.iterations,
            "converged": self.converged,
            "termination": self.termination,
            "nfev": self.nfev,
            "diagnostics": self.diagnostics,
        }


def _as_named(init, names):
    if isinstance(init, Mapping):
        names = list(init) if names is None else list(names)
        values = np.array([float(init[k]) for k in names])
    else:
        values = np.asarray(init, dtype=float).ravel()
        names = [f"p{i}" for i in range(values.size)] if names is None else list(names)
    if len(names) != values.size:
        raise InvalidArgumentError("names and initial values differ in length")
    return names, values


def _as_bounds(bounds, names):
    n = len(names)
    lo = np.full(n, -np.inf)
    hi = np.full(n, np.inf)
    if bounds is None:
        return lo, hi
    if isinstance(bounds, Mapping):
        for i, k in enumerate(names):
            if k in bounds:
                lo[i], hi[i] = bounds[k]
    else:
        b = np.asarray(bounds, dtype=float)
        if b.shape == (2, n):
            lo[:], hi[:] = b
        elif b.shape == (n, 2):
            lo[:], hi[:] = b.T
        else:
            raise InvalidArgumentError(f"bounds shape {b.shape} does not match {n} parameters")
    if np.any(lo > hi):
        raise InvalidArgumentError("lower bound above upper bound")
    return lo, hi


def fd_jacobian(residual_fn, p, r0=None, step: float = 1e-7, central: bool = False, upper=None) -> np.ndarray:
    """Finite-difference Jacobian of ``residual_fn`` at ``p``.

    Steps are ``step * max(|p_j|, 1)``. Forward differences flip to backward
    ones where ``p_j + h`` would cross ``upper``.
    """
    p = np.asarray(p, dtype=float)
    if r0 is None:
        r0 = np.asarray(residual_fn(p), dtype=float)
    J = np.empty((r0.size, p.size))
    for j in range(p.size):
        h = step * max(abs(p[j]), 1.0)
        dp = p.copy()
        if central:
            dp[j] += h
            rp = residual_fn(dp)
            dp[j] -= 2 * h
            J[:, j] = (rp - residual_fn(dp)) / (2 * h)
            continue
        if upper is not None and p[j] + h > upper[j]:
            h = -h
        dp[j] += h
        J[:, j] = (residual_fn(dp) - r0) / h
    return J


def least_squares(
    residual_fn: Callable[[np.ndarray], np.ndarray],
    init: Mapping[str, float] | Sequence[float],
    bounds=None,
    *,
    names: Sequence[str] | None = None,
    x_scale: Sequence[float] | None = None,
    gtol: float = 1e-10,
    xtol: float = 1e-10,
    max_iter: int = 500,
    fd_step: float = 1e-7,
    lam0: float = 1e-3,
) -> FitResult:
    """Minimise ``0.5 * |residual_fn(p)|^2`` subject to box bounds.

    Parameters are internally divided by ``x_scale`` (default ``|init|``, or
    1 where ``init`` is zero). Each iteration solves the Marquardt system
    ``(J^T J + lam diag(J^T J)) dx = -J^T r`` in scaled coordinates and
    projects the trial point onto the bounds. Iteration stops when the
    projected gradient's max-norm falls below ``gtol``, when a step is
    smaller than ``xtol * (|x| + xtol)``, or after ``max_iter`` iterations.

    Raises:
        NumericalFailureError: the residual is non-finite at the initial
            point or at any trial point.
    """
    names, p0 = _as_named(init, names)
    lo, hi = _as_bounds(bounds, names)
    if np.any(p0 < lo) or np.any(p0 > hi):
        raise InvalidArgumentError("initial parameters outside bounds")
    if x_scale is None:
        scale = np.where(p0 != 0, np.abs(p0), 1.0)
    else:
        scale = np.asarray(x_scale, dtype=float)
    lo_u, hi_u = lo / scale, hi / scale

    nfev = 0

    def fun(u):
        nonlocal nfev
        nfev += 1
        p = u * scale
        r = np.asarray(residual_fn(p), dtype=float).ravel()
        if not np.all(np.isfinite(r)):
            raise NumericalFailureError(
                f"non-finite residuals at {dict(zip(names, p.tolist()))}", dict(zip(names, p.tolist()))
            )
        return r

    def jac(u, r):
        return fd_jacobian(fun, u, r, fd_step, upper=hi_u)

    def projected_gradient(u, g):
        pg = g.copy()
        pg[(u <= lo_u) & (g > 0)] = 0.0
        pg[(u >= hi_u) & (g < 0)] = 0.0
        return pg

    u = p0 / scale
    r = fun(u)
    cost = 0.5 * float(r @ r)
    history = [cost]
    lam = lam0
    nu = 2.0
    termination = "max_iter"
    it = 0
    J = jac(u, r)
    while it < max_iter:
        g = J.T @ r
        if np.max(np.abs(projected_gradient(u, g)), initial=0.0) <= gtol:
            termination = "gtol"
            break
        A = J.T @ J
        diag = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        it += 1
        accepted = False
        while not accepted:
            try:
                step = np.linalg.solve(A + lam * np.diag(diag), -g)
            except np.linalg.LinAlgError:
                step = np.linalg.lstsq(A + lam * np.diag(diag), -g, rcond=None)[0]
            u_new = np.clip(u + step, lo_u, hi_u)
            step = u_new - u
            small = np.linalg.norm(step) <= xtol * (np.linalg.norm(u) + xtol)
            if small:
                termination = "xtol"
                break
            r_new = fun(u_new)
            cost_new = 0.5 * float(r_new @ r_new)
            predicted = -(g @ step) - 0.5 * step @ A @ step
            rho = (cost - cost_new) / predicted if predicted > 0 else -1.0
            if cost_new < cost and rho > 0:
                accepted = True
                u, r, cost = u_new, r_new, cost_new
                history.append(cost)
                lam *= max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0) ** 3)
                nu = 2.0
            else:
                lam *= nu
                nu *= 2.0
                if lam > 1e20:
                    termination = "xtol"
                    break
        if termination == "xtol":
            break
        J = jac(u, r)

    p = u * scale
    dof = max(r.size - p.size, 1)
    sigma2 = 2.0 * cost / dof
    sv = np.linalg.svd(J, compute_uv=False)
    # forward differences are accurate to ~fd_step; singular values below
    # that level are indistinguishable from an exact degeneracy
    tol_rank = sv.max() * max(10.0 * fd_step, 1e-6) if sv.size else 0.0
    rank = int(np.sum(sv > tol_rank))
    cov_u = sigma2 * np.linalg.pinv(J.T @ J, rcond=(tol_rank / sv.max()) ** 2 if sv.size else 1e-15, hermitian=True)
    unc = np.sqrt(np.clip(np.diag(cov_u), 0.0, None)) * scale
    diagnostics = {
        "jacobian_rank": rank,
        "n_params": int(p.size),
        "condition_number": float(sv.max() / sv.min()) if sv.size and sv.min() > 0 else float("inf"),
        "rank_deficient": rank < p.size,
    }
    return FitResult(
        params=dict(zip(names, p.tolist())),
        residual_norm=float(np.sqrt(np.mean(r**2))) if r.size else 0.0,
        iterations=it,
        converged=termination in ("gtol", "xtol"),
        param_uncertainties=dict(zip(names, unc.tolist())),
        termination=termination,
        cost_history=history,
        nfev=nfev,
        diagnostics=diagnostics,
    )
