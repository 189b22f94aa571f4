"""Losses, subgradients, projections, update rules, and optimum oracles.

Two finite-sum problems are supported. PCA is cast as minimizing

    F(V) = 0.5*||V||_F^2 + sum_i 0.5*(||x_i||^2 - ||x_i V||^2)

over d-by-k iterates kept orthonormal by a Gram-Schmidt projection after
every step; the per-sample term equals the reconstruction error
0.5*||x_i - x_i V V^T||^2 whenever V^T V = I, which holds for every
iterate produced here, and its gradient -x_i^T (x_i V) makes the method
with stepsize 1.0 coincide step-for-step with block power iteration.
Logistic regression minimizes the L2-regularized classification error

    F(V) = 0.5*lambda*||V||^2 + sum_i log(1 + exp(-b_i x_i V)) / n

with the identity projection.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

__all__ = [
    "ProblemSpec",
    "subgradient",
    "loss",
    "regularizer_gradient",
    "apply_update",
    "gram_schmidt",
    "optimum_oracle",
    "initial_iterate",
]

STEPSIZE_GD = 1.0
STEPSIZE_PCA_STOCHASTIC = 0.9
STEPSIZE_LOGREG_STOCHASTIC = 0.25


@dataclass(frozen=True)
class ProblemSpec:
    """Dataset plus loss configuration for one experiment.

    kind: "pca" or "logreg". For pca, ``components`` is the number of
    principal components (iterate columns) and ``projection`` should be
    "gram_schmidt"; for logreg the iterate is a single column (the
    coefficient vector, intercept included in the data) and the projection
    is the identity.
    """

    kind: str
    X: np.ndarray
    labels: np.ndarray | None = None
    reg_lambda: float = 0.0
    stepsize: float = 1.0
    projection: str = "identity"
    components: int = 1

    def __post_init__(self):
        if self.kind not in ("pca", "logreg"):
            raise ValueError(f"unknown problem kind {self.kind!r}")
        if self.X.ndim != 2:
            raise ValueError("X must be a 2-d matrix of row samples")
        if self.kind == "logreg":
            if self.labels is None:
                raise ValueError("logreg requires labels")
            if self.labels.shape != (self.X.shape[0],):
                raise ValueError("labels must have one entry per row of X")
            if not np.all(np.isin(self.labels, (-1, 1))):
                raise ValueError("labels must be -1 or +1")
        if self.reg_lambda < 0:
            raise ValueError("reg_lambda must be nonnegative")
        if self.stepsize <= 0:
            raise ValueError("stepsize must be positive")
        if self.projection not in ("identity", "gram_schmidt"):
            raise ValueError(f"unknown projection {self.projection!r}")
        if self.components < 1:
            raise ValueError("components must be >= 1")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def iterate_shape(self) -> tuple[int, int]:
        k = self.components if self.kind == "pca" else 1
        return (self.d, k)


def _check_range(spec: ProblemSpec, first: int, last: int) -> None:
    if not (1 <= first <= last <= spec.n):
        raise ValueError(f"row range [{first}, {last}] outside [1, {spec.n}]")


def subgradient(spec: ProblemSpec, V: np.ndarray, first: int, last: int) -> np.ndarray:
    """Sum of per-sample loss gradients over rows first..last (1-based).

    The regularizer gradient is not included; the coordinator adds it once
    per update.
    """
    _check_range(spec, first, last)
    Xb = spec.X[first - 1 : last]
    if spec.kind == "pca":
        return -Xb.T @ (Xb @ V)
    b = spec.labels[first - 1 : last]
    z = b * (Xb @ V).ravel()
    coeff = -b * expit(-z) / spec.n
    return (Xb.T @ coeff).reshape(V.shape)


def loss(spec: ProblemSpec, V: np.ndarray) -> float:
    """Full objective F(V) = R(V) + sum_i f_i(V)."""
    if spec.kind == "pca":
        reg = 0.5 * float(np.sum(V * V))
        data = 0.5 * (float(np.sum(spec.X * spec.X)) - float(np.sum((spec.X @ V) ** 2)))
        return reg + data
    z = spec.labels * (spec.X @ V).ravel()
    reg = 0.5 * spec.reg_lambda * float(np.sum(V * V))
    return reg + float(np.sum(np.logaddexp(0.0, -z))) / spec.n


def regularizer_gradient(spec: ProblemSpec, V: np.ndarray) -> np.ndarray:
    if spec.kind == "pca":
        return V
    return spec.reg_lambda * V


def apply_update(spec: ProblemSpec, V: np.ndarray, H: np.ndarray, xi: float) -> np.ndarray:
    """One step: V <- G(V - eta * (H / xi + grad R(V))).

    With xi = 1 and H the exact full subgradient sum this is plain gradient
    descent.
    """
    if not (0 < xi <= 1):
        raise ValueError(f"xi must be in (0, 1], got {xi}")
    step = V - spec.stepsize * (H / xi + regularizer_gradient(spec, V))
    if spec.projection == "gram_schmidt":
        return gram_schmidt(step)
    return step


def gram_schmidt(V: np.ndarray, eps: float = 1e-12) -> np.ndarray:
    """Orthonormalize the columns of V (modified Gram-Schmidt, two passes).

    Raises ValueError if the columns are numerically rank deficient.
    """
    Q = np.array(V, dtype=float, copy=True)
    d, k = Q.shape
    if k > d:
        raise ValueError("more columns than rows cannot be orthonormalized")
    scale = max(float(np.linalg.norm(V)), 1.0)
    for j in range(k):
        for _ in range(2):
            for i in range(j):
                Q[:, j] -= (Q[:, i] @ Q[:, j]) * Q[:, i]
        norm = float(np.linalg.norm(Q[:, j]))
        if norm <= eps * scale:
            raise ValueError(f"column {j} is linearly dependent on earlier columns")
        Q[:, j] /= norm
    return Q


def initial_iterate(spec: ProblemSpec, rng: np.random.Generator) -> np.ndarray:
    """Deterministic-in-seed starting point: zeros for logreg, a random
    orthonormal basis for pca."""
    d, k = spec.iterate_shape
    if spec.kind == "logreg":
        return np.zeros((d, k))
    return gram_schmidt(rng.standard_normal((d, k)))


@dataclass(frozen=True)
class Optimum:
    V: np.ndarray
    value: float
    iterations: int = 0


def optimum_oracle(
    spec: ProblemSpec, max_iterations: int = 200, tol: float = 1e-12
) -> Optimum:
    """Desk-scale reference optimum.

    PCA: top-k right singular vectors via dense SVD. Logistic regression:
    damped Newton run to gradient norm <= tol. Raises RuntimeError if the
    Newton iteration does not converge within the budget.
    """
    if spec.kind == "pca":
        _, _, Vt = np.linalg.svd(spec.X, full_matrices=False)
        Vstar = Vt[: spec.components].T
        return Optimum(V=Vstar, value=loss(spec, Vstar))

    n, d = spec.X.shape
    v = np.zeros(d)
    X, b, lam = spec.X, spec.labels, spec.reg_lambda
    for it in range(1, max_iterations + 1):
        z = b * (X @ v)
        s = expit(-z)
        g = -(X.T @ (b * s)) / n + lam * v
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            V = v.reshape(-1, 1)
            return Optimum(V=V, value=loss(spec, V), iterations=it)
        # Newton direction; s*(1-s) is the per-sample curvature weight.
        W = s * (1.0 - s)
        Hess = (X.T * W) @ X / n + lam * np.eye(d)
        step = np.linalg.solve(Hess, g)
        # Backtrack if the full step does not reduce the gradient norm.
        t = 1.0
        for _ in range(50):
            v_new = v - t * step
            z_new = b * (X @ v_new)
            g_new = -(X.T @ (b * expit(-z_new))) / n + lam * v_new
            if float(np.linalg.norm(g_new)) < gnorm:
                break
            t *= 0.5
        v = v - t * step
    raise RuntimeError(
        f"logreg oracle did not reach gradient norm {tol} in {max_iterations} iterations"
    )
