"""Shallow feed-forward network: one sigmoid hidden layer, linear output."""
import numpy as np

from .base import Surrogate


def sigmoid(a):
    return 0.5 * (1.0 + np.tanh(0.5 * a))


def forward(params, Z):
    W1, b1, w2, b2 = params
    H = sigmoid(Z @ W1 + b1)
    return H @ w2 + b2, H


def loss_and_grad(params, Z, t):
    """Half mean squared error and its gradient with respect to all weights."""
    W1, b1, w2, b2 = params
    out, H = forward(params, Z)
    r = out - t
    n = len(t)
    loss = 0.5 * float(np.mean(r ** 2))
    g_out = r / n
    g_w2 = H.T @ g_out
    g_b2 = np.sum(g_out)
    g_H = np.outer(g_out, w2) * H * (1.0 - H)
    g_W1 = Z.T @ g_H
    g_b1 = g_H.sum(axis=0)
    return loss, (g_W1, g_b1, g_w2, g_b2)


def gradient_check(params, Z, t, h=1e-5):
    """Largest relative error between analytic and central-difference gradients."""
    _, grads = loss_and_grad(params, Z, t)
    worst = 0.0
    for p, g in zip(params, grads):
        flat = p.reshape(-1)  # view into the parameter array
        g_flat = np.asarray(g).reshape(-1)
        for i in range(g_flat.size):
            old = flat[i]
            flat[i] = old + h
            lp, _ = loss_and_grad(params, Z, t)
            flat[i] = old - h
            lm, _ = loss_and_grad(params, Z, t)
            flat[i] = old
            num = (lp - lm) / (2 * h)
            denom = max(abs(num) + abs(g_flat[i]), 1e-12)
            worst = max(worst, abs(num - g_flat[i]) / denom)
    return worst


class NeuralSurrogate(Surrogate):
    """Full-batch gradient descent with momentum and early stopping."""

    family = "NN"
    defaults = {"hidden": 16, "epochs": 2000, "learning_rate": 0.05, "momentum": 0.9,
                "holdout": 0.1, "patience": 200}

    def _fit(self, Z, y):
        hp = self.hyper
        rng = np.random.default_rng(self.seed)
        self.y_mean = float(np.mean(y))
        sd = float(np.std(y))
        self.y_scale = sd if sd > 0 else 1.0
        t = (y - self.y_mean) / self.y_scale
        n, p = Z.shape
        idx = rng.permutation(n)
        n_hold = int(round(hp["holdout"] * n)) if n >= 10 else 0
        hold, train = idx[:n_hold], idx[n_hold:]
        h = int(hp["hidden"])
        params = [rng.normal(0.0, 1.0 / np.sqrt(p), (p, h)), np.zeros(h),
                  rng.normal(0.0, 1.0 / np.sqrt(h), h), np.array(0.0)]
        vel = [np.zeros_like(q) for q in params]
        best = (np.inf, [q.copy() for q in params], 0)
        since = 0
        for epoch in range(int(hp["epochs"])):
            _, grads = loss_and_grad(params, Z[train], t[train])
            for q, v, g in zip(params, vel, grads):
                v *= hp["momentum"]
                v -= hp["learning_rate"] * g
                q += v
            if n_hold:
                val, _ = loss_and_grad(params, Z[hold], t[hold])
            else:
                val, _ = loss_and_grad(params, Z[train], t[train])
            if val < best[0]:
                best = (val, [q.copy() for q in params], epoch)
                since = 0
            else:
                since += 1
                if since >= hp["patience"]:
                    break
        self.params = best[1]
        self.stopped_epoch = epoch
        self.best_epoch = best[2]

    def _predict(self, Z):
        out, _ = forward(self.params, Z)
        return self.y_mean + self.y_scale * out

    def _params(self):
        W1, b1, w2, b2 = self.params
        return {"W1": W1.tolist(), "b1": b1.tolist(), "w2": w2.tolist(), "b2": float(b2),
                "y_mean": self.y_mean, "y_scale": self.y_scale}

    def _load_params(self, p):
        self.params = [np.asarray(p["W1"], dtype=float), np.asarray(p["b1"], dtype=float),
                       np.asarray(p["w2"], dtype=float), np.array(float(p["b2"]))]
        self.y_mean = p["y_mean"]
        self.y_scale = p["y_scale"]
