"""Slow, independent solvers used to cross-check the message passing solver.

These deliberately avoid the primal-dual structure of the main solver so a
bug there cannot be mirrored here: the quadratic-only problem is solved by a
dense linear solve, the nonsmooth problem by plain subgradient descent with
diminishing steps, and trainer gradients are checked by central finite
differences.  Everything is deterministic given its inputs.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .graphs import NormalizedOperators, as_signal
from .solver import EMPConfig, Penalty

__all__ = [
    "OracleMethod",
    "OracleReport",
    "exact_l2_solution",
    "closed_form_report",
    "subgradient_solve",
    "finite_difference_grad",
]

MAX_DENSE_NODES = 2000
MIN_SUBGRADIENT_ITERS = 100_000


class OracleMethod(str, enum.Enum):
    CLOSED_FORM = "closed_form"
    SUBGRADIENT = "subgradient"


@dataclass(frozen=True)
class OracleReport:
    """Best solution found by an oracle, with its objective value."""

    F_star: np.ndarray
    objective_star: float
    iterations: int
    method: OracleMethod

    def to_dict(self) -> dict:
        return {
            "method": self.method.value,
            "objective_star": self.objective_star,
            "iterations": self.iterations,
            "F_star": self.F_star.tolist(),
        }

    def to_json(self, indent: int | None = None) -> str:
        return json.dumps(self.to_dict(), indent=indent)


def exact_l2_solution(X_in, ops: NormalizedOperators, lambda2: float) -> np.ndarray:
    """Exact minimizer of the quadratic-only problem (lambda1 = 0).

    Solves ``(I + lambda2 * L_tilde) F = X_in`` densely.  The system matrix is
    positive definite for any graph and lambda2 >= 0, so the solve cannot be
    singular.  Guarded to n <= 2000 to keep the dense solve honest.
    """
    if lambda2 < 0:
        raise InputError(f"lambda2 must be >= 0, got {lambda2}")
    if ops.n > MAX_DENSE_NODES:
        raise InputError(
            f"dense oracle limited to n <= {MAX_DENSE_NODES}, got n={ops.n}"
        )
    X_in = as_signal(X_in, rows=ops.n, name="X_in")
    system = np.eye(ops.n) + lambda2 * ops.L_tilde.toarray()
    return np.linalg.solve(system, X_in)


def closed_form_report(X_in, ops: NormalizedOperators, lambda2: float) -> OracleReport:
    """:func:`exact_l2_solution` wrapped in a report with its objective.

    The objective (fidelity + quadratic; lambda1 = 0 so there is no TV term)
    is evaluated densely here, independent of the solver's evaluation.
    """
    F = exact_l2_solution(X_in, ops, lambda2)
    X = as_signal(X_in, rows=ops.n)
    diff = ops.Delta_tilde.toarray() @ F
    obj = 0.5 * float(np.sum((F - X) ** 2)) + 0.5 * lambda2 * float(np.sum(diff * diff))
    return OracleReport(F_star=F, objective_star=obj, iterations=1,
                        method=OracleMethod.CLOSED_FORM)


def _tv_subgradient(diff: np.ndarray, mode: Penalty) -> np.ndarray:
    """A subgradient of TV at ``diff``; zero rows/entries get 0."""
    if mode is Penalty.L1:
        return np.sign(diff)
    norms = np.linalg.norm(diff, axis=1)
    out = np.zeros_like(diff)
    pos = norms > 0
    out[pos] = diff[pos] / norms[pos, None]
    return out


def subgradient_solve(X_in, ops: NormalizedOperators, cfg: EMPConfig,
                      iters: int) -> OracleReport:
    """Subgradient descent on the elastic objective, best iterate kept.

    Steps are ``c / sqrt(t)`` with ``c = 0.1 * ||X_in||_F / sqrt(1 + lambda1
    + lambda2)``, which keeps early iterates bounded across instance scales.
    Slow but structurally unrelated to the predict-correct solver.  Only
    meant for desk-size instances: n <= 50, d <= 4, iters >= 1e5.
    """
    if ops.n > 50:
        raise InputError(f"subgradient oracle limited to n <= 50, got {ops.n}")
    X = as_signal(X_in, rows=ops.n, name="X_in")
    if X.shape[1] > 4:
        raise InputError(f"subgradient oracle limited to d <= 4, got d={X.shape[1]}")
    if iters < MIN_SUBGRADIENT_ITERS:
        raise InputError(
            f"subgradient oracle needs iters >= {MIN_SUBGRADIENT_ITERS}, got {iters}"
        )

    lam1, lam2, mode = cfg.lambda1, cfg.lambda2, cfg.mode
    L = ops.L_tilde.toarray()
    D = ops.Delta_tilde.toarray()
    Dt = D.T.copy()

    def eval_objective(diff, F):
        fid = 0.5 * np.sum((F - X) ** 2)
        quad = 0.5 * lam2 * np.sum(diff * diff)
        if mode is Penalty.L1:
            tv = lam1 * np.sum(np.abs(diff))
        else:
            tv = lam1 * np.sum(np.linalg.norm(diff, axis=1))
        return float(fid + quad + tv)

    c = 0.1 * np.linalg.norm(X) / math.sqrt(1.0 + lam1 + lam2)
    F = X.copy()
    best_obj = math.inf
    best_F = F.copy()
    for t in range(1, iters + 1):
        diff = D @ F
        obj = eval_objective(diff, F)
        if not np.isfinite(obj):
            raise NumericError(f"subgradient oracle hit non-finite objective at t={t}")
        if obj < best_obj:
            best_obj = obj
            best_F = F.copy()
        grad = (F - X) + lam2 * (L @ F)
        if lam1 > 0:
            grad += lam1 * (Dt @ _tv_subgradient(diff, mode))
        F = F - (c / math.sqrt(t)) * grad
    final_obj = eval_objective(D @ F, F)
    if np.isfinite(final_obj) and final_obj < best_obj:
        best_obj, best_F = final_obj, F.copy()
    return OracleReport(F_star=best_F, objective_star=best_obj,
                        iterations=iters, method=OracleMethod.SUBGRADIENT)


def finite_difference_grad(loss_fn, params, h: float = 1e-5) -> np.ndarray:
    """Central-difference gradient ``(f(p + h e_i) - f(p - h e_i)) / 2h``."""
    if not 1e-7 <= h <= 1e-3:
        raise InputError(f"step h must be in [1e-7, 1e-3], got {h}")
    params = np.asarray(params, dtype=np.float64).ravel()
    grad = np.empty_like(params)
    for i in range(params.size):
        bumped = params.copy()
        bumped[i] = params[i] + h
        up = loss_fn(bumped)
        bumped[i] = params[i] - h
        down = loss_fn(bumped)
        grad[i] = (up - down) / (2.0 * h)
    return grad
