from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np


class Adam:
    """Adam over a list of parameter arrays, updated in place"""

    def __init__(self, params: Sequence[np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in self.params]
        self.v = [np.zeros_like(p) for p in self.params]

    def step(self, grads: Sequence[np.ndarray]) -> None:
        self.t += 1
        correction1 = 1.0 - self.beta1 ** self.t
        correction2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / correction1) / (np.sqrt(v / correction2) + self.eps)


def clip_gradients(grads: List[np.ndarray], max_norm: float) -> Tuple[List[np.ndarray], float]:
    """Rescale grads so their joint L2 norm is at most max_norm"""
    norm = float(np.sqrt(sum(np.sum(g * g) for g in grads)))
    if norm > max_norm:
        grads = [g * (max_norm / norm) for g in grads]
    return grads, norm


@dataclass
class LineSearchStep:
    x: np.ndarray
    value: float
    step: float


def backtracking_step(
    objective: Callable[[np.ndarray], float],
    x: np.ndarray,
    value: float,
    grad: np.ndarray,
    step: float,
    max_halvings: int = 20,
) -> Optional[LineSearchStep]:
    """Halve the step until the objective decreases; None if it never does"""
    for _ in range(max_halvings + 1):
        trial = x - step * grad
        trial_value = objective(trial)
        if np.isfinite(trial_value) and trial_value < value:
            return LineSearchStep(trial, trial_value, step)
        step *= 0.5
    return None


def gradient_descent(
    objective: Callable[[np.ndarray], float],
    gradient: Callable[[np.ndarray], np.ndarray],
    x0: np.ndarray,
    step_size: float = 1.0,
    max_iters: int = 500,
    grad_tol: float = 1e-12,
    growth: float = 2.0,
    max_step: float = 1e3,
) -> Tuple[np.ndarray, float]:
    """Backtracking gradient descent; the accepted step grows for the next iteration"""
    x = np.asarray(x0, dtype=float).copy()
    value = objective(x)
    step = step_size
    for _ in range(max_iters):
        grad = gradient(x)
        if float(np.linalg.norm(grad)) <= grad_tol:
            break
        accepted = backtracking_step(objective, x, value, grad, step)
        if accepted is None:
            break
        x, value = accepted.x, accepted.value
        step = min(accepted.step * growth, max_step)
    return x, value
