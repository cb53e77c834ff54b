"""Shared test utilities: finite-difference gradient checking."""
from __future__ import annotations

import numpy as np

from clearsea.engine import Tensor


def numeric_grad(build, tensor: Tensor, h: float = 1e-3, coords=None) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient of ``build()`` w.r.t. selected entries.

    ``build`` must re-evaluate the loss from the live ``tensor.data``
    buffer; entries are perturbed in place.  Returns (flat indices,
    estimates).
    """
    flat = tensor.data.reshape(-1)
    if coords is None:
        coords = np.arange(flat.size)
    grads = np.zeros(len(coords), dtype=np.float64)
    for j, i in enumerate(coords):
        orig = flat[i]
        flat[i] = orig + h
        up = float(build().data)
        flat[i] = orig - h
        down = float(build().data)
        flat[i] = orig
        grads[j] = (up - down) / (2.0 * h)
    return np.asarray(coords), grads


def check_gradients(build, tensors, tol: float = 1e-3, h: float = 3e-3,
                    max_coords: int | None = None, seed: int = 0,
                    grad_floor: float = 1e-6) -> float:
    """Analytic vs numeric gradients; returns the worst relative error.

    Only entries with |analytic| above ``grad_floor`` participate, and the
    relative error is |a - n| / max(|a|, |n|).
    """
    rng = np.random.default_rng(seed)
    loss = build()
    if loss.data.size != 1:
        raise AssertionError("gradcheck wants a scalar loss")
    for t in tensors:
        t.zero_grad()
    loss.backward()
    worst = 0.0
    for t in tensors:
        assert t.grad is not None, "no gradient reached a checked tensor"
        analytic = t.grad.reshape(-1).astype(np.float64)
        coords = np.arange(analytic.size)
        if max_coords is not None and analytic.size > max_coords:
            coords = rng.choice(analytic.size, size=max_coords, replace=False)
        coords, numeric = numeric_grad(build, t, h=h, coords=coords)
        for i, n in zip(coords, numeric):
            a = analytic[i]
            if abs(a) <= grad_floor and abs(n) <= grad_floor:
                continue
            rel = abs(a - n) / max(abs(a), abs(n))
            worst = max(worst, rel)
            assert rel < tol, f"grad mismatch at flat index {i}: analytic {a}, numeric {n}, rel {rel}"
    return worst
