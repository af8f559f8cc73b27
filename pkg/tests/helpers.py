"""Shared test utilities: finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from acmsum.autodiff import Tape, Tensor


def fd_gradient(
    build_loss: Callable[[], Tensor],
    param: Tensor,
    h: float = 1e-5,
    coords: np.ndarray | None = None,
) -> np.ndarray:
    """Central finite differences of a scalar loss w.r.t. one parameter.

    ``coords``: optional flat indices to probe; defaults to every entry.
    Unprobed entries are returned as NaN so callers can mask them out.
    """
    flat = param.data.reshape(-1)
    out = np.full(flat.size, np.nan)
    idx = np.arange(flat.size) if coords is None else coords
    for i in idx:
        orig = flat[i]
        flat[i] = orig + h
        up = build_loss().item()
        flat[i] = orig - h
        down = build_loss().item()
        flat[i] = orig
        out[i] = (up - down) / (2.0 * h)
    return out.reshape(param.data.shape)


def gradcheck(
    build_loss: Callable[[], Tensor],
    params: Sequence[Tensor],
    h: float = 1e-5,
    tol: float = 1e-4,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Compare tape gradients against central differences.

    Returns the worst relative error over all checked coordinates; asserts
    it is below ``tol``.  ``build_loss`` must be a pure function of
    ``params``.  With ``max_coords`` set, at most that many randomly chosen
    coordinates are probed per tensor (keeps large models tractable).
    """
    for p in params:
        p.zero_grad()
    with Tape() as tape:
        loss = build_loss()
        tape.backward(loss)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in params:
        assert p.grad is not None, f"no gradient reached parameter {p.name!r}"
        size = p.data.size
        coords = None
        if max_coords is not None and size > max_coords:
            coords = rng.choice(size, size=max_coords, replace=False)
        numeric = fd_gradient(build_loss, p, h=h, coords=coords)
        mask = ~np.isnan(numeric)
        a = p.grad[mask]
        n = numeric[mask]
        denom = max(np.linalg.norm(a), np.linalg.norm(n), 1e-8)
        rel = np.linalg.norm(a - n) / denom
        worst = max(worst, rel)
        assert rel < tol, f"gradient mismatch for {p.name!r}: rel err {rel:.3e}"
    return worst
