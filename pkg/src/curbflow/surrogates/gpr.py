"""Gaussian-process regression with a squared-exponential kernel.

Zero-mean GP on standardised targets.  Hyperparameters (length-scale,
signal and noise variance, all in log space) maximise the log marginal
likelihood with a Nelder-Mead simplex started from the median-distance
heuristic; inference is an exact Cholesky solve.
"""
import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.optimize import minimize
from scipy.spatial.distance import cdist, pdist

from .base import NumericalError, Surrogate


LOG_BOUND = 50.0      # |log| bound on hyperparameters during the search


def se_kernel(A, B, length, signal_var):
    d2 = cdist(A / length, B / length, "sqeuclidean")
    return signal_var * np.exp(-0.5 * d2)


def robust_cholesky(K, start=1e-10, stop=1e-4):
    """Lower Cholesky factor, adding diagonal jitter from ``start`` up to ``stop``."""
    try:
        return cholesky(K, lower=True, check_finite=False), 0.0
    except np.linalg.LinAlgError:
        pass
    jitter = start
    scale = max(float(np.mean(np.diag(K))), 1e-300)
    while jitter <= stop * (1 + 1e-12):
        try:
            Kj = K + jitter * scale * np.eye(len(K))
            return cholesky(Kj, lower=True, check_finite=False), jitter
        except np.linalg.LinAlgError:
            jitter *= 10.0
    raise NumericalError("Cholesky failed even with jitter 1e-4")


def log_marginal_likelihood(Z, t, length, signal_var, noise_var):
    K = se_kernel(Z, Z, length, signal_var)
    K[np.diag_indices_from(K)] += noise_var
    try:
        Lc, _ = robust_cholesky(K)
    except NumericalError:
        return -np.inf
    alpha = cho_solve((Lc, True), t, check_finite=False)
    return float(-0.5 * t @ alpha - np.sum(np.log(np.diag(Lc)))
                 - 0.5 * len(t) * np.log(2 * np.pi))


class GaussianProcessSurrogate(Surrogate):
    family = "GPR"
    defaults = {"iterations": 50, "noise": None, "ard": False, "max_opt_rows": 1000,
                "initial_noise": 0.01}

    def _unpack(self, theta, p):
        k = p if self.hyper["ard"] else 1
        # the simplex may wander far out; keep exp() finite
        theta = np.clip(theta, -LOG_BOUND, LOG_BOUND)
        length = np.exp(theta[:k])
        signal_var = float(np.exp(2 * theta[k]))
        if self.hyper["noise"] is None:
            noise_var = float(np.exp(2 * theta[k + 1]))
        else:
            noise_var = float(self.hyper["noise"])
        return length, signal_var, noise_var

    def _fit(self, Z, y):
        hp = self.hyper
        self.y_mean = float(np.mean(y))
        sd = float(np.std(y))
        self.y_scale = sd if sd > 0 else 1.0
        t = (y - self.y_mean) / self.y_scale
        n, p = Z.shape
        rng = np.random.default_rng(self.seed)
        if n > hp["max_opt_rows"]:
            sub = np.sort(rng.choice(n, hp["max_opt_rows"], replace=False))
        else:
            sub = np.arange(n)
        Zs, ts = Z[sub], t[sub]
        d = pdist(Zs[:min(len(Zs), 1000)])
        d = d[d > 0]
        ell0 = float(np.median(d)) if d.size else 1.0
        k = p if hp["ard"] else 1
        theta0 = [np.log(ell0)] * k + [0.0]
        if hp["noise"] is None:
            theta0.append(0.5 * np.log(hp["initial_noise"]))
        theta0 = np.array(theta0)

        def nlml(theta):
            length, sv, nv = self._unpack(theta, p)
            v = log_marginal_likelihood(Zs, ts, length, sv, nv)
            return -v if np.isfinite(v) else 1e300

        trace = [-nlml(theta0)]
        res = minimize(nlml, theta0, method="Nelder-Mead",
                       callback=lambda xk: trace.append(-nlml(xk)),
                       options={"maxiter": int(hp["iterations"]), "xatol": 1e-6,
                                "fatol": 1e-9})
        theta = res.x if res.fun <= nlml(theta0) else theta0
        self.lml_trace = trace
        self.length, self.signal_var, self.noise_var = self._unpack(theta, p)
        self._condition(Z, t)

    def _condition(self, Z, t):
        K = se_kernel(Z, Z, self.length, self.signal_var)
        K[np.diag_indices_from(K)] += self.noise_var
        Lc, self.jitter = robust_cholesky(K)
        self.Z_train = Z
        self.alpha = cho_solve((Lc, True), t, check_finite=False)
        self._chol = Lc

    def _predict(self, Z):
        Ks = se_kernel(Z, self.Z_train, self.length, self.signal_var)
        return self.y_mean + self.y_scale * (Ks @ self.alpha)

    def predict_var(self, X):
        """Predictive variance of the latent function (diagnostics only)."""
        X, _ = self._check(X)
        Z = self.normalise(X)
        Ks = se_kernel(Z, self.Z_train, self.length, self.signal_var)
        if getattr(self, "_chol", None) is None:
            K = se_kernel(self.Z_train, self.Z_train, self.length, self.signal_var)
            K[np.diag_indices_from(K)] += self.noise_var
            self._chol, _ = robust_cholesky(K)
        v = solve_triangular(self._chol, Ks.T, lower=True, check_finite=False)
        var = self.signal_var - np.sum(v ** 2, axis=0)
        return np.maximum(var, 0.0) * self.y_scale ** 2

    def _params(self):
        return {"length": np.atleast_1d(self.length).tolist(), "signal_var": self.signal_var,
                "noise_var": self.noise_var, "jitter": self.jitter,
                "Z_train": self.Z_train.tolist(), "alpha": self.alpha.tolist(),
                "y_mean": self.y_mean, "y_scale": self.y_scale,
                "lml_trace": list(self.lml_trace)}

    def _load_params(self, p):
        length = np.asarray(p["length"], dtype=float)
        self.length = length if self.hyper["ard"] else float(length[0])
        self.signal_var = p["signal_var"]
        self.noise_var = p["noise_var"]
        self.jitter = p["jitter"]
        self.Z_train = np.asarray(p["Z_train"], dtype=float)
        self.alpha = np.asarray(p["alpha"], dtype=float)
        self.y_mean = p["y_mean"]
        self.y_scale = p["y_scale"]
        self.lml_trace = p["lml_trace"]
        self._chol = None
