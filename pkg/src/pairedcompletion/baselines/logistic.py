from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def loss_and_grad(w: np.ndarray, b: float, X: np.ndarray, y: np.ndarray, l2_lambda: float) -> tuple[float, np.ndarray, float]:
    """Mean logistic loss plus (lambda/2)||w||^2; the bias is not penalised."""
    n = X.shape[0]
    z = X @ w + b
    loss = float(np.mean(np.logaddexp(0.0, z) - y * z) + 0.5 * l2_lambda * (w @ w))
    r = sigmoid(z) - y
    return loss, X.T @ r / n + l2_lambda * w, float(np.mean(r))


@dataclass
class LogisticModel:
    weights: np.ndarray
    bias: float
    l2_lambda: float
    iterations: int
    final_loss: float
    seed: int
    converged: bool
    loss_history: list[float] = field(default_factory=list, repr=False)

    def decision_function(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X) @ self.weights + self.bias

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return sigmoid(self.decision_function(X))

    def predict(self, X: np.ndarray) -> np.ndarray:
        return (self.decision_function(X) > 0).astype(int)

    def meta(self) -> dict:
        return {
            "l2_lambda": self.l2_lambda,
            "iterations": self.iterations,
            "final_loss": self.final_loss,
            "seed": self.seed,
            "converged": self.converged,
        }


def logistic_train(
    X,
    y,
    l2_lambda: float = 1e-2,
    seed: int = 0,
    *,
    max_iter: int = 5000,
    tol: float = 1e-6,
    step: float = 1.0,
) -> LogisticModel:
    """Full-batch gradient descent from zero weights.

    The ridge term is applied as an exact proximal step, w <- (w - step * g) / (1 + step * lambda),
    so a large lambda does not force a tiny step on the unpenalised bias.
    The step is halved whenever a proposed update would raise the loss, so
    the recorded loss never increases.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValueError(f"X has shape {X.shape} but y has {y.shape[0]} labels")
    if X.shape[0] < 2:
        raise ValueError("need at least two training examples")
    classes = set(np.unique(y).tolist())
    if not classes <= {0.0, 1.0}:
        raise ValueError(f"labels must be 0/1, got {sorted(classes)}")
    if len(classes) < 2:
        raise ValueError(f"training set has a single class ({int(classes.pop())}); both classes are required")

    order = np.random.default_rng(seed).permutation(X.shape[0])
    X, y = X[order], y[order]
    w = np.zeros(X.shape[1])
    b = 0.0
    loss, gw, gb = loss_and_grad(w, b, X, y, l2_lambda)
    history = [loss]
    converged = False
    it = 0
    while it < max_iter:
        if np.sqrt(gw @ gw + gb * gb) < tol:
            converged = True
            break
        while True:
            data_gw = gw - l2_lambda * w
            w_new, b_new = (w - step * data_gw) / (1.0 + step * l2_lambda), b - step * gb
            new_loss, new_gw, new_gb = loss_and_grad(w_new, b_new, X, y, l2_lambda)
            if new_loss <= loss:
                break
            # halve and retry from the same point
            step *= 0.5
            if step < 1e-12:
                break
        if new_loss > loss:
            break
        w, b, loss, gw, gb = w_new, b_new, new_loss, new_gw, new_gb
        history.append(loss)
        it += 1
    return LogisticModel(w, b, l2_lambda, it, loss, seed, converged, history)
