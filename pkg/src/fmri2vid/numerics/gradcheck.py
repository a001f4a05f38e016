from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import Tensor

FD_STEP = 1e-5


def numeric_grad(f: Callable[[Tensor], Tensor], x: np.ndarray, h: float = FD_STEP,
                 indices: np.ndarray | None = None) -> np.ndarray:
    x = np.array(x, dtype=np.float64)
    flat = x.reshape(-1)
    grad = np.zeros_like(flat)
    idx = range(flat.size) if indices is None else indices
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        fp = f(Tensor(x.copy())).item()
        flat[i] = orig - h
        fm = f(Tensor(x.copy())).item()
        flat[i] = orig
        grad[i] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


def grad_check(f: Callable[[Tensor], Tensor], x, h: float = FD_STEP,
               max_elements: int | None = None, seed: int = 0) -> float:
    """Max relative error between reverse-mode and central-difference gradients.

    The relative error per element is ``|a - b| / max(|a|, |b|, 1e-8)``.
    ``max_elements`` restricts the comparison to a random subset of entries.
    """
    x = np.array(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    xt = Tensor(x.copy(), requires_grad=True)
    out = f(xt)
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    if not np.isfinite(out.data).all():
        raise FloatingPointError("function value is not finite")
    out.backward()
    analytic = np.zeros_like(x) if xt.grad is None else xt.grad
    if not np.isfinite(analytic).all():
        raise FloatingPointError("reverse-mode gradient is not finite")
    indices = None
    if max_elements is not None and x.size > max_elements:
        indices = np.random.default_rng(seed).choice(x.size, size=max_elements, replace=False)
    numeric = numeric_grad(f, x, h, indices)
    if not np.isfinite(numeric).all():
        raise FloatingPointError("finite-difference gradient is not finite")
    a = analytic.reshape(-1)
    b = numeric.reshape(-1)
    if indices is not None:
        a, b = a[indices], b[indices]
    return relative_error(a, b)


def relative_error(a: np.ndarray, b: np.ndarray) -> float:
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if not a.size:
        return 0.0
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)
    return float(np.max(np.abs(a - b) / denom))


def grad_check_params(loss_fn: Callable[[], Tensor], params, h: float = FD_STEP,
                      max_elements: int | None = None, seed: int = 0) -> float:
    """Same comparison as :func:`grad_check`, but over every parameter of a model.

    ``loss_fn`` must be deterministic (fixed masks, no dropout).
    """
    params = list(params)
    for p in params:
        p.grad = None
    out = loss_fn()
    if not np.isfinite(out.data).all():
        raise FloatingPointError("loss is not finite")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p, a in zip(params, analytic):
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_elements is not None and flat.size > max_elements:
            idx = rng.choice(flat.size, size=max_elements, replace=False)
        num = np.empty(idx.size)
        for j, i in enumerate(idx):
            orig = flat[i]
            flat[i] = orig + h
            fp = loss_fn().item()
            flat[i] = orig - h
            fm = loss_fn().item()
            flat[i] = orig
            num[j] = (fp - fm) / (2.0 * h)
        if not np.isfinite(num).all():
            raise FloatingPointError("finite-difference gradient is not finite")
        worst = max(worst, relative_error(a.reshape(-1)[idx], num))
    for p in params:
        p.grad = None
    return worst
