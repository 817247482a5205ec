"""Multilayer perceptron binary classifier with mini-batch training."""
from __future__ import annotations

import numpy as np

from .linear import Standardizer, sigmoid

_ACTIVATIONS = {
    "relu": (lambda z: np.maximum(z, 0.0), lambda a: (a > 0).astype(a.dtype)),
    "logistic": (sigmoid, lambda a: a * (1.0 - a)),
    "tanh": (np.tanh, lambda a: 1.0 - a * a),
    "identity": (lambda z: z, lambda a: np.ones_like(a)),
}


class MLP:
    """Fully connected network with a single sigmoid output unit.

    Inputs are standardized with statistics of the training rows. Training
    minimizes binary cross-entropy plus ``alpha/2 |W|^2 / n_batch`` with Adam
    or momentum SGD. ``max_iter`` counts epochs; training stops early once
    the epoch loss fails to improve by ``tol`` for ``n_iter_no_change`` epochs.
    """

    family = "MLP"

    def __init__(
        self,
        hidden_layer_sizes=(100,),
        activation="relu",
        solver="adam",
        alpha=1e-4,
        batch_size=200,
        learning_rate="constant",
        learning_rate_init=1e-3,
        power_t=0.5,
        momentum=0.9,
        max_iter=200,
        tol=1e-4,
        n_iter_no_change=10,
        random_state=0,
    ):
        if activation not in _ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        if solver not in ("adam", "sgd"):
            raise ValueError(f"unknown solver {solver!r}")
        if learning_rate not in ("constant", "invscaling", "adaptive"):
            raise ValueError(f"unknown learning_rate {learning_rate!r}")
        self.hidden_layer_sizes = tuple(int(h) for h in hidden_layer_sizes)
        self.activation = activation
        self.solver = solver
        self.alpha = alpha
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.learning_rate_init = learning_rate_init
        self.power_t = power_t
        self.momentum = momentum
        self.max_iter = max_iter
        self.tol = tol
        self.n_iter_no_change = n_iter_no_change
        self.random_state = random_state
        self.weights = None
        self.biases = None
        self.scaler = None
        self.loss_curve: list[float] = []

    def get_params(self):
        return {
            "hidden_layer_sizes": list(self.hidden_layer_sizes),
            "activation": self.activation,
            "solver": self.solver,
            "alpha": self.alpha,
            "batch_size": self.batch_size,
            "learning_rate": self.learning_rate,
            "learning_rate_init": self.learning_rate_init,
            "power_t": self.power_t,
            "momentum": self.momentum,
            "max_iter": self.max_iter,
            "tol": self.tol,
            "n_iter_no_change": self.n_iter_no_change,
            "random_state": self.random_state,
        }

    def _forward(self, Z):
        act, _ = _ACTIVATIONS[self.activation]
        outs = [Z]
        a = Z
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            a = act(a @ W + b)
            outs.append(a)
        logit = a @ self.weights[-1] + self.biases[-1]
        return outs, logit[:, 0]

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        rng = np.random.default_rng(self.random_state)
        self.scaler = Standardizer().fit(X)
        Z = self.scaler(X)
        n, d = Z.shape
        sizes = [d, *self.hidden_layer_sizes, 1]
        self.weights, self.biases = [], []
        for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
            factor = 2.0 if self.activation == "logistic" else 6.0
            bound = np.sqrt(factor / (fan_in + fan_out))
            self.weights.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            self.biases.append(rng.uniform(-bound, bound, fan_out))
        params = self.weights + self.biases
        m = [np.zeros_like(p) for p in params]
        v = [np.zeros_like(p) for p in params]
        beta1, beta2, eps = 0.9, 0.999, 1e-8
        _, dact = _ACTIVATIONS[self.activation]
        lr = self.learning_rate_init
        bs = min(self.batch_size, n)
        t = 0
        best, stall = np.inf, 0
        self.loss_curve = []
        nl = len(self.weights)
        for epoch in range(self.max_iter):
            perm = rng.permutation(n)
            total = 0.0
            for s in range(0, n, bs):
                idx = perm[s:s + bs]
                zb, yb = Z[idx], y[idx]
                outs, logit = self._forward(zb)
                p = sigmoid(logit)
                pc = np.clip(p, 1e-12, 1 - 1e-12)
                loss = -np.mean(yb * np.log(pc) + (1 - yb) * np.log(1 - pc))
                loss += 0.5 * self.alpha * sum((W * W).sum() for W in self.weights) / len(idx)
                total += loss * len(idx)
                delta = ((p - yb) / len(idx))[:, None]
                gW = [None] * nl
                gb = [None] * nl
                for k in range(nl - 1, -1, -1):
                    gW[k] = outs[k].T @ delta + self.alpha * self.weights[k] / len(idx)
                    gb[k] = delta.sum(axis=0)
                    if k > 0:
                        delta = (delta @ self.weights[k].T) * dact(outs[k])
                grads = gW + gb
                t += 1
                if self.solver == "adam":
                    lr_t = lr * np.sqrt(1 - beta2**t) / (1 - beta1**t)
                    for i, g in enumerate(grads):
                        m[i] = beta1 * m[i] + (1 - beta1) * g
                        v[i] = beta2 * v[i] + (1 - beta2) * g * g
                        params[i] -= lr_t * m[i] / (np.sqrt(v[i]) + eps)
                else:
                    if self.learning_rate == "invscaling":
                        lr = self.learning_rate_init / (t ** self.power_t)
                    for i, g in enumerate(grads):
                        m[i] = self.momentum * m[i] - lr * g
                        params[i] += m[i]
            epoch_loss = total / n
            self.loss_curve.append(float(epoch_loss))
            if epoch_loss > best - self.tol:
                stall += 1
            else:
                stall = 0
            best = min(best, epoch_loss)
            if stall >= self.n_iter_no_change:
                if self.learning_rate == "adaptive" and lr > 1e-6:
                    lr /= 5.0
                    stall = 0
                else:
                    break
        return self

    def predict_proba(self, X):
        _, logit = self._forward(self.scaler(np.atleast_2d(X)))
        return sigmoid(logit)

    def predict(self, X):
        return (self.predict_proba(X) > 0.5).astype(int)

    def state(self):
        return {
            "weights": [W.tolist() for W in self.weights],
            "biases": [b.tolist() for b in self.biases],
            "scaler": self.scaler.state(),
        }

    def load_state(self, s):
        self.weights = [np.asarray(W, dtype=float) for W in s["weights"]]
        self.biases = [np.asarray(b, dtype=float) for b in s["biases"]]
        self.scaler = Standardizer.from_state(s["scaler"])
