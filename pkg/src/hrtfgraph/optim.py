"""First-order optimizers and learning-rate schedules.

Both optimizers keep per-parameter first and second moment buffers and use
bias correction.  RAdam additionally rectifies the adaptive term and falls
back to a plain momentum step while the rectification factor is undefined
(rho_t <= 4, which covers the first four steps at beta2 = 0.999).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class TrainConfig:
    """Hyper-parameters for one training loop.

    ``schedule`` follows the format of :func:`make_schedule`:
    ``{"kind": "plateau", "factor": f, "patience": n}``,
    ``{"kind": "exponential", "rate": r}`` or ``{"kind": "none"}``.
    """

    optimizer: str = "adam"
    lr: float = 1e-3
    epochs: int = 1
    schedule: dict = field(default_factory=lambda: {"kind": "none"})

    def validate(self):
        if self.optimizer not in ("adam", "radam"):
            raise ValueError(f"unknown optimizer kind {self.optimizer!r}")
        if not self.lr > 0.0:
            raise ValueError(f"learning rate must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epoch count must be >= 0, got {self.epochs}")
        kind = self.schedule.get("kind")
        if kind == "plateau":
            factor = self.schedule.get("factor")
            patience = self.schedule.get("patience")
            if not (isinstance(factor, float) and 0.0 < factor <= 1.0):
                raise ValueError(f"bad plateau factor: {factor!r}")
            if not (isinstance(patience, int) and patience >= 1):
                raise ValueError(f"bad plateau patience: {patience!r}")
        elif kind == "exponential":
            rate = self.schedule.get("rate")
            if not (isinstance(rate, float) and 0.0 < rate <= 1.0):
                raise ValueError(f"bad decay rate: {rate!r}")
        elif kind not in (None, "none"):
            raise ValueError(f"unknown schedule kind {kind!r}")
        return self


class TrainingDiverged(RuntimeError):
    """Raised when a gradient stops being finite."""

    def __init__(self, name: str):
        super().__init__(f"non-finite gradient in parameter {name!r}")
        self.param_name = name


class _MomentOptimizer:
    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        self.params = [(n, p) for n, p in params]
        if not self.params:
            raise ValueError("optimizer needs at least one parameter")
        self.lr = float(lr)
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for _, p in self.params]
        self.v = [np.zeros_like(p.data) for _, p in self.params]

    def zero_grad(self):
        for _, p in self.params:
            p.grad = None

    def _moments(self, i, name, p):
        g = p.grad
        if g is None:
            g = np.zeros_like(p.data)
        elif not np.all(np.isfinite(g)):
            raise TrainingDiverged(name)
        m = self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
        v = self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
        return m, v


class Adam(_MomentOptimizer):
    def step(self):
        self.t += 1
        bc1 = 1.0 - self.beta1**self.t
        bc2 = 1.0 - self.beta2**self.t
        for i, (name, p) in enumerate(self.params):
            m, v = self._moments(i, name, p)
            p.data -= self.lr * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class RAdam(_MomentOptimizer):
    """Rectified Adam (variance-rectification of the adaptive step size)."""

    def __init__(self, params, lr, beta1=0.9, beta2=0.999, eps=1e-8):
        super().__init__(params, lr, beta1, beta2, eps)
        self.rho_inf = 2.0 / (1.0 - beta2) - 1.0

    def step(self):
        self.t += 1
        t = self.t
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        rho = self.rho_inf - 2.0 * t * self.beta2**t / bc2
        if rho > 4.0:
            rect = np.sqrt(
                ((rho - 4.0) * (rho - 2.0) * self.rho_inf)
                / ((self.rho_inf - 4.0) * (self.rho_inf - 2.0) * rho)
            )
        else:
            rect = None
        for i, (name, p) in enumerate(self.params):
            m, v = self._moments(i, name, p)
            if rect is None:
                # variance not yet tractable: momentum update, no denominator
                p.data -= self.lr * (m / bc1)
            else:
                p.data -= self.lr * rect * (m / bc1) / (np.sqrt(v / bc2) + self.eps)


class PlateauDecay:
    """Multiply lr by ``factor`` after ``patience`` epochs without a new best."""

    def __init__(self, optimizer, factor: float, patience: int):
        if not 0.0 < factor <= 1.0 or patience < 1:
            raise ValueError(f"bad plateau parameters: {factor}/{patience}")
        self.optimizer = optimizer
        self.factor = factor
        self.patience = patience
        self.best = np.inf
        self.stale = 0

    def step(self, metric: float):
        if metric < self.best:
            self.best = metric
            self.stale = 0
        else:
            self.stale += 1
            if self.stale >= self.patience:
                self.optimizer.lr *= self.factor
                self.stale = 0


class ExponentialDecay:
    """Multiply lr by ``rate`` every epoch, regardless of the metric."""

    def __init__(self, optimizer, rate: float):
        if not 0.0 < rate <= 1.0:
            raise ValueError(f"bad decay rate: {rate}")
        self.optimizer = optimizer
        self.rate = rate

    def step(self, metric: float | None = None):
        self.optimizer.lr *= self.rate


def make_optimizer(kind: str, params, lr: float):
    if kind == "adam":
        return Adam(params, lr)
    if kind == "radam":
        return RAdam(params, lr)
    raise ValueError(f"unknown optimizer kind {kind!r}")


def make_schedule(optimizer, spec: dict):
    kind = spec.get("kind")
    if kind == "plateau":
        return PlateauDecay(optimizer, spec["factor"], spec["patience"])
    if kind == "exponential":
        return ExponentialDecay(optimizer, spec["rate"])
    if kind in (None, "none"):
        return None
    raise ValueError(f"unknown schedule kind {kind!r}")
