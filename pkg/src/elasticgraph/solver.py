"""Elastic graph signal estimator and its message passing solver.

The estimator smooths an input signal ``X_in`` (n x d) over a graph by
minimizing::

    lambda1 * TV(Delta_tilde @ F)
      + (lambda2 / 2) * tr(F.T @ L_tilde @ F)
      + 1/2 * ||F - X_in||_F^2

where ``TV`` is either the entrywise l1 norm (mode ``l1``) or the sum of
row-wise l2 norms (mode ``l21``).  The l1 penalty keeps most degree-scaled
neighbor differences at zero while letting a few stay large; the quadratic
penalty shrinks all of them; the fidelity term anchors the output to the
input.

The solver is a primal-dual predict-correct iteration on the equivalent
saddle-point problem.  Each step costs four sparse matrix products:

    Y    = gamma * X_in + (1 - gamma) * A_tilde @ F        (fast path)
         = ((1-gamma) I - gamma*lambda2*L_tilde) @ F + gamma * X_in
    Fbar = Y - gamma * Delta_tilde.T @ Z
    Zbar = Z + beta * Delta_tilde @ Fbar
    Z'   = projection of Zbar (entrywise linf ball / row-wise l2 ball)
    F'   = Y - gamma * Delta_tilde.T @ Z'

starting from ``F = X_in`` and ``Z = 0``.  The fast path for ``Y`` is an
algebraic simplification valid exactly when ``gamma * (1 + lambda2) = 1``.
Convergence is guaranteed for ``gamma < 2 / (1 + 2*lambda2)`` and
``beta <= 2 / (3*gamma)`` because ``||L_tilde||_2 <= 2``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericError
from .graphs import NormalizedOperators, as_signal

__all__ = [
    "Penalty",
    "EMPConfig",
    "EMPState",
    "ObjectiveBreakdown",
    "default_stepsizes",
    "objective",
    "prox_linf_clip",
    "prox_l2ball_rows",
    "soft_threshold",
    "group_soft_threshold",
    "initial_state",
    "emp_step",
    "emp_run",
    "appnp_reference_step",
    "load_emp_config",
]

THEOREM_SLACK = 1e-12   # float slop for the fast-path identity gamma*(1+lambda2)=1


class Penalty(str, enum.Enum):
    """Total-variation penalty: entrywise l1 or row-coupled l21."""

    L1 = "l1"
    L21 = "l21"


def default_stepsizes(lambda2: float) -> tuple[float, float]:
    """Default stepsizes ``gamma = 1/(1+lambda2)``, ``beta = (1+lambda2)/2``.

    This pair always satisfies the sufficient convergence condition
    ``gamma < 2/(1+2*lambda2)`` and ``beta <= 2/(3*gamma)``, and makes the
    simplified Y update exact (``beta = 1/(2*gamma)``).
    """
    if lambda2 < 0:
        raise InputError(f"lambda2 must be >= 0, got {lambda2}")
    gamma = 1.0 / (1.0 + lambda2)
    beta = (1.0 + lambda2) / 2.0
    return gamma, beta


@dataclass(frozen=True)
class EMPConfig:
    """Hyperparameters of one solver run.

    ``fast_path`` enables the simplified Y update, valid only when
    ``gamma * (1 + lambda2) = 1``.  ``aggregate_only`` replaces the whole step
    with ``F <- A_tilde @ F`` (the formal lambda2 -> infinity limit, where the
    input anchor and the dual correction both vanish).  ``unchecked`` skips
    the sufficient-condition validation for deliberate experiments; the
    condition is sufficient, not necessary, so nothing is asserted about
    behavior beyond it.
    """

    lambda1: float
    lambda2: float
    gamma: float
    beta: float
    k: int
    mode: Penalty = Penalty.L21
    fast_path: bool = False
    aggregate_only: bool = False
    unchecked: bool = False

    def __post_init__(self):
        object.__setattr__(self, "mode", Penalty(self.mode))
        if self.lambda1 < 0 or self.lambda2 < 0:
            raise InputError("lambda1 and lambda2 must be >= 0")
        if self.gamma <= 0 or self.beta <= 0:
            raise InputError("gamma and beta must be > 0")
        if self.k < 0:
            raise InputError(f"iteration count must be >= 0, got {self.k}")
        if self.fast_path and abs(self.gamma * (1.0 + self.lambda2) - 1.0) > THEOREM_SLACK:
            raise InputError(
                "fast_path requires gamma = 1/(1+lambda2); "
                f"got gamma={self.gamma}, lambda2={self.lambda2}"
            )
        if not self.unchecked:
            if not self.gamma < 2.0 / (1.0 + 2.0 * self.lambda2):
                raise InputError(
                    f"gamma={self.gamma} violates gamma < 2/(1+2*lambda2)"
                    f"={2.0 / (1.0 + 2.0 * self.lambda2)}"
                )
            if not self.beta <= 2.0 / (3.0 * self.gamma):
                raise InputError(
                    f"beta={self.beta} violates beta <= 2/(3*gamma)"
                    f"={2.0 / (3.0 * self.gamma)}"
                )

    @classmethod
    def with_default_steps(cls, lambda1: float, lambda2: float, k: int,
                           mode: Penalty | str = Penalty.L21,
                           aggregate_only: bool = False) -> "EMPConfig":
        """Config with the default stepsizes and the fast path enabled."""
        gamma, beta = default_stepsizes(lambda2)
        return cls(lambda1=lambda1, lambda2=lambda2, gamma=gamma, beta=beta,
                   k=k, mode=Penalty(mode), fast_path=True,
                   aggregate_only=aggregate_only)


@dataclass(frozen=True)
class EMPState:
    """Per-iteration solver state: primal ``F`` (n x d), dual ``Z`` (m x d).

    For all states produced by :func:`emp_step` with ``k >= 1`` the dual is
    feasible: ``|Z_ij| <= lambda1`` in l1 mode, ``||Z_i||_2 <= lambda1`` per
    row in l21 mode.
    """

    F: np.ndarray
    Z: np.ndarray
    k: int = 0


@dataclass(frozen=True)
class ObjectiveBreakdown:
    """Objective value split into its three components."""

    fidelity: float     # 1/2 ||F - X_in||_F^2
    quadratic: float    # (lambda2/2) tr(F.T L_tilde F), evaluated as the
                        # squared Frobenius norm of Delta_tilde @ F
    tv: float           # lambda1 * TV(Delta_tilde @ F), mode-dependent
    total: float

    CSV_HEADER = "k,fidelity,quadratic,tv,total"

    def csv_row(self, k: int) -> str:
        return f"{k},{self.fidelity!r},{self.quadratic!r},{self.tv!r},{self.total!r}"


def objective(F, X_in, ops: NormalizedOperators, cfg: EMPConfig) -> ObjectiveBreakdown:
    """Evaluate the elastic objective at ``F``.

    The quadratic term is computed from ``Delta_tilde @ F`` so it is exactly
    nonnegative.
    """
    F = as_signal(F, rows=ops.n, name="F")
    X_in = as_signal(X_in, rows=ops.n, cols=F.shape[1], name="X_in")
    diff = ops.Delta_tilde @ F
    fidelity = 0.5 * float(np.sum((F - X_in) ** 2))
    quadratic = 0.5 * cfg.lambda2 * float(np.sum(diff * diff))
    if cfg.mode is Penalty.L1:
        tv = cfg.lambda1 * float(np.sum(np.abs(diff)))
    else:
        tv = cfg.lambda1 * float(np.sum(np.linalg.norm(diff, axis=1)))
    return ObjectiveBreakdown(fidelity=fidelity, quadratic=quadratic, tv=tv,
                              total=fidelity + quadratic + tv)


def prox_linf_clip(Zbar, lambda1: float) -> np.ndarray:
    """Entrywise projection onto the linf ball of radius ``lambda1``.

    Equals ``sign(z) * min(|z|, lambda1)``; idempotent.
    """
    if lambda1 < 0:
        raise InputError(f"lambda1 must be >= 0, got {lambda1}")
    return np.clip(Zbar, -lambda1, lambda1)


def prox_l2ball_rows(Zbar, lambda1: float) -> np.ndarray:
    """Row-wise projection onto the l2 ball of radius ``lambda1``.

    Rows inside the ball are returned bit-for-bit unchanged; rows outside are
    rescaled to norm ``lambda1``; the zero row maps to the zero row (the limit
    of the projection formula).  Idempotent and direction-preserving.
    """
    if lambda1 < 0:
        raise InputError(f"lambda1 must be >= 0, got {lambda1}")
    Zbar = np.asarray(Zbar, dtype=np.float64)
    norms = np.linalg.norm(Zbar, axis=1)
    scale = np.ones_like(norms)
    over = norms > lambda1
    scale[over] = lambda1 / norms[over]
    return Zbar * scale[:, None]


def soft_threshold(X, t: float) -> np.ndarray:
    """Entrywise soft threshold ``sign(x) * max(|x| - t, 0)``.

    This is the proximal map of ``t * ||.||_1``; together with
    :func:`prox_linf_clip` it reconstructs the identity,
    ``x = clip(x, t) + soft_threshold(x, t)``.
    """
    X = np.asarray(X, dtype=np.float64)
    return np.sign(X) * np.maximum(np.abs(X) - t, 0.0)


def group_soft_threshold(X, t: float) -> np.ndarray:
    """Row-wise shrinkage ``x_i * max(||x_i|| - t, 0) / ||x_i||``, 0 -> 0.

    Proximal map of ``t * sum_i ||x_i||_2`` (the row-coupled analogue of
    :func:`soft_threshold`).
    """
    X = np.asarray(X, dtype=np.float64)
    norms = np.linalg.norm(X, axis=1)
    scale = np.zeros_like(norms)
    pos = norms > 0
    scale[pos] = np.maximum(norms[pos] - t, 0.0) / norms[pos]
    return X * scale[:, None]


def _prox(Zbar, cfg: EMPConfig) -> np.ndarray:
    if cfg.mode is Penalty.L1:
        return prox_linf_clip(Zbar, cfg.lambda1)
    return prox_l2ball_rows(Zbar, cfg.lambda1)


def initial_state(X_in, ops: NormalizedOperators) -> EMPState:
    """Starting state ``F = X_in``, ``Z = 0``."""
    X_in = as_signal(X_in, rows=ops.n, name="X_in")
    return EMPState(F=X_in.copy(), Z=np.zeros((ops.m, X_in.shape[1])), k=0)


def _check_finite(name: str, arr: np.ndarray, k: int) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"non-finite values in {name} at iteration {k}")


def emp_step(state: EMPState, X_in, ops: NormalizedOperators,
             cfg: EMPConfig) -> EMPState:
    """One predict-correct step.  Pure function; returns a fresh state.

    Exactly four sparse matrix products.  With ``lambda1 = 0`` the dual stays
    zero and the step reduces to ``F' = gamma*X_in + (1-gamma)*A_tilde@F``
    (the classic personalized-propagation update with teleport probability
    ``gamma``).
    """
    F, Z = state.F, state.Z
    n, d = F.shape
    if X_in.shape != (n, d):
        raise InputError(f"X_in shape {X_in.shape} does not match state {F.shape}")
    if Z.shape != (ops.m, d):
        raise InputError(f"dual shape {Z.shape} does not match ({ops.m}, {d})")

    if cfg.aggregate_only:
        F_next = ops.A_tilde @ F
        _check_finite("aggregate update", F_next, state.k)
        return EMPState(F=F_next, Z=Z, k=state.k + 1)

    gamma = cfg.gamma
    if cfg.fast_path:
        Y = gamma * X_in + (1.0 - gamma) * (ops.A_tilde @ F)
    else:
        Y = (1.0 - gamma) * F - (gamma * cfg.lambda2) * (ops.L_tilde @ F) \
            + gamma * X_in
    _check_finite("gradient step Y", Y, state.k)

    F_bar = Y - gamma * (ops.Delta_tilde.T @ Z)
    _check_finite("primal prediction", F_bar, state.k)

    Z_bar = Z + cfg.beta * (ops.Delta_tilde @ F_bar)
    _check_finite("dual ascent", Z_bar, state.k)

    Z_next = _prox(Z_bar, cfg)
    F_next = Y - gamma * (ops.Delta_tilde.T @ Z_next)
    _check_finite("primal correction", F_next, state.k)

    return EMPState(F=F_next, Z=Z_next, k=state.k + 1)


def emp_run(X_in, ops: NormalizedOperators, cfg: EMPConfig,
            trace: bool = False, tol: float | None = None):
    """Run up to ``cfg.k`` steps from ``F = X_in``, ``Z = 0``.

    Returns ``(F, breakdowns)`` where ``breakdowns`` lists the objective at
    k = 0 and after every executed step (empty when ``trace`` is off).  With
    ``tol`` set, stops early once
    ``||F_next - F||_F / max(1, ||F||_F) <= tol``.
    """
    state = initial_state(X_in, ops)
    X_in = state.F.copy()
    breakdowns: list[ObjectiveBreakdown] = []
    if trace:
        breakdowns.append(objective(state.F, X_in, ops, cfg))
    for _ in range(cfg.k):
        prev = state.F
        state = emp_step(state, X_in, ops, cfg)
        if trace:
            breakdowns.append(objective(state.F, X_in, ops, cfg))
        if tol is not None:
            change = np.linalg.norm(state.F - prev)
            if change <= tol * max(1.0, np.linalg.norm(prev)):
                break
    return state.F, breakdowns


def appnp_reference_step(F, X_in, A_tilde, alpha: float) -> np.ndarray:
    """Reference propagation ``(1-alpha) * A_tilde @ F + alpha * X_in``.

    Used as an equivalence oracle for the lambda1 = 0 special case
    (``alpha = 1/(1+lambda2)``); not part of the solver path.
    """
    if not 0.0 < alpha <= 1.0:
        raise InputError(f"alpha must be in (0, 1], got {alpha}")
    return (1.0 - alpha) * (A_tilde @ F) + alpha * X_in


_CONFIG_KEYS = {"lambda1", "lambda2", "k", "mode", "gamma", "beta"}


def load_emp_config(path) -> EMPConfig:
    """Read a solver config from key-value text.

    One ``key = value`` (or ``key value``) pair per line; ``#`` starts a
    comment.  Keys: lambda1, lambda2, k, mode, and optional gamma/beta
    overrides.  Defaults: lambda1 = lambda2 = 0, k = 10, mode = l21, and the
    default stepsizes for the given lambda2.  The fast path is enabled
    whenever the final gamma equals 1/(1+lambda2).
    """
    values: dict[str, str] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" in line:
                key, _, val = line.partition("=")
            else:
                parts = line.split(None, 1)
                if len(parts) != 2:
                    raise InputError(f"{path}:{lineno}: expected 'key value'")
                key, val = parts
            key = key.strip().lower()
            if key not in _CONFIG_KEYS:
                raise InputError(f"{path}:{lineno}: unknown key {key!r}")
            values[key] = val.strip()

    try:
        lambda1 = float(values.get("lambda1", "0"))
        lambda2 = float(values.get("lambda2", "0"))
        k = int(values.get("k", "10"))
        mode = Penalty(values.get("mode", "l21").lower())
        gamma_default, beta_default = default_stepsizes(lambda2)
        gamma = float(values["gamma"]) if "gamma" in values else gamma_default
        beta = float(values["beta"]) if "beta" in values else beta_default
    except (ValueError, KeyError) as exc:
        raise InputError(f"{path}: {exc}") from exc
    fast = abs(gamma * (1.0 + lambda2) - 1.0) <= THEOREM_SLACK
    return EMPConfig(lambda1=lambda1, lambda2=lambda2, gamma=gamma, beta=beta,
                     k=k, mode=mode, fast_path=fast)
