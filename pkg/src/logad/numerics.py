"""Deterministic numeric primitives shared by every model in the package.

All math is done in 64-bit floats on numpy arrays.  Randomness always goes
through an explicit generator created by :func:`make_rng`, so any run is
reproducible from its seed alone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

# Floor for relative-error denominators and for log() arguments.
REL_ERR_FLOOR = 1e-8
LOG_FLOOR = 1e-12


class DivergenceError(RuntimeError):
    """Training loss became non-finite; carries the epoch it happened in."""

    def __init__(self, epoch: int, message: str):
        super().__init__(message)
        self.epoch = epoch


def make_rng(seed: int, *key: int) -> np.random.Generator:
    """Create a PCG64 generator for ``seed``, optionally namespaced by ``key``.

    Distinct keys yield statistically independent streams, so independent
    pipeline stages (shuffling, weight init, dropout, noise) can each derive
    their own generator from the one run seed.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(entropy=seed, spawn_key=key)))


def sigmoid(x):
    """Elementwise logistic function, safe against overflow for large |x|."""
    x = np.asarray(x, dtype=np.float64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def tanh_act(x):
    """Elementwise hyperbolic tangent."""
    return np.tanh(np.asarray(x, dtype=np.float64))


def softmax(x, axis=-1):
    """Numerically stable softmax along ``axis``.

    Raises ValueError on an empty input: softmax of nothing is undefined.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("softmax of an empty vector is undefined")
    shifted = x - np.max(x, axis=axis, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=axis, keepdims=True)


def ensure_finite(name: str, arr) -> None:
    """Raise ValueError if ``arr`` contains NaN or infinity."""
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite values")


def glorot_uniform(rng: np.random.Generator, shape: tuple) -> np.ndarray:
    """Uniform(-s, s) init with s = sqrt(6 / (fan_in + fan_out))."""
    fan_in, fan_out = (shape[0], shape[1]) if len(shape) == 2 else (shape[0], shape[0])
    s = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-s, s, size=shape)


def gaussian_sample(rng: np.random.Generator, mean: float, variance: float, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. normal samples with the given mean and variance."""
    if variance < 0:
        raise ValueError(f"variance must be non-negative, got {variance}")
    if variance == 0:
        return np.full(n, float(mean))
    return rng.normal(mean, np.sqrt(variance), size=n)


def seeded_shuffle(items, rng: np.random.Generator):
    """Return a Fisher-Yates permutation of ``items`` driven by ``rng``.

    Works on lists and on numpy arrays (rows are permuted); the input is
    never mutated.
    """
    n = len(items)
    perm = np.arange(n)
    for i in range(n - 1, 0, -1):
        j = int(rng.integers(0, i + 1))
        perm[i], perm[j] = perm[j], perm[i]
    if isinstance(items, np.ndarray):
        return items[perm]
    return [items[i] for i in perm]


class Adam:
    """ADAM optimizer over a dict of named parameter arrays.

    Standard update with bias correction: m and v track the first and second
    gradient moments per parameter, and each step applies
    ``p -= lr * m_hat / (sqrt(v_hat) + eps)``.
    """

    def __init__(self, lr=0.001, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}

    def step(self, params: dict, grads: dict) -> None:
        """Update ``params`` in place from ``grads`` (same keys and shapes)."""
        for k, p in params.items():
            g = grads[k]
            if g.shape != p.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape} for {k!r}")
        self.t += 1
        bc1 = 1.0 - self.beta1 ** self.t
        bc2 = 1.0 - self.beta2 ** self.t
        for k, p in params.items():
            g = grads[k]
            if k not in self.m:
                self.m[k] = np.zeros_like(p)
                self.v[k] = np.zeros_like(p)
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / bc1
            v_hat = self.v[k] / bc2
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def clip_global_norm(grads: dict, max_norm: float) -> float:
    """Scale all gradients in place so their global L2 norm is <= max_norm.

    Returns the pre-clip norm so callers can log when clipping triggered.
    """
    total = 0.0
    for g in grads.values():
        total += float(np.sum(g * g))
    norm = np.sqrt(total)
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class GradCheckReport:
    """Outcome of comparing analytic gradients against finite differences."""

    rel_tol: float
    max_rel_error: float = 0.0
    per_param: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return self.max_rel_error <= self.rel_tol

    def __str__(self):
        verdict = "PASS" if self.passed else "FAIL"
        worst = ", ".join(f"{k}={v:.3e}" for k, v in self.per_param.items())
        return f"grad check {verdict} (max rel err {self.max_rel_error:.3e}, tol {self.rel_tol:.1e}): {worst}"


def grad_check(loss_fn, analytic: dict, params: dict, step=1e-5, rel_tol=1e-4) -> GradCheckReport:
    """Compare ``analytic`` gradients to central finite differences of ``loss_fn``.

    ``loss_fn`` must be a pure, deterministic function of the parameter dict.
    Each entry is perturbed by +-``step`` in turn; the relative error uses
    denominator max(|analytic|, |numeric|, 1e-8).  The check passes iff the
    max relative error over every entry of every parameter is <= ``rel_tol``.
    """
    if step <= 0:
        raise ValueError("finite-difference step must be positive")
    report = GradCheckReport(rel_tol=rel_tol)
    for name, p in params.items():
        a = analytic[name]
        if a.shape != p.shape:
            raise ValueError(f"analytic gradient shape {a.shape} != parameter shape {p.shape} for {name!r}")
        worst = 0.0
        flat = p.reshape(-1)
        a_flat = a.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = float(loss_fn(params))
            flat[i] = orig - step
            f_minus = float(loss_fn(params))
            flat[i] = orig
            if not (np.isfinite(f_plus) and np.isfinite(f_minus)):
                raise ValueError(f"loss is non-finite while perturbing {name!r}[{i}]")
            numeric = (f_plus - f_minus) / (2.0 * step)
            denom = max(abs(a_flat[i]), abs(numeric), REL_ERR_FLOOR)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
        report.per_param[name] = worst
        report.max_rel_error = max(report.max_rel_error, worst)
    return report
