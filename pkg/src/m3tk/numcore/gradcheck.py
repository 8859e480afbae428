"""Central finite-difference gradient oracle.

Deliberately independent of the reverse-mode machinery: it only evaluates
the forward function, so it can arbitrate gradient bugs.
"""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .tensor import Tensor


def finite_difference_gradient(f: Callable[[Tensor], "Tensor | float"],
                               x: Tensor, h: float = 1e-5) -> np.ndarray:
    """Per-coordinate central differences (f(x+h e_i) - f(x-h e_i)) / 2h.

    ``f`` must be deterministic and smooth at ``x`` (hard rounding is
    excluded from the oracle's domain).
    """

    def evaluate(values: np.ndarray) -> float:
        out = f(Tensor(values))
        return out.item() if isinstance(out, Tensor) else float(out)

    base = np.array(x.data, dtype=np.float64)
    grad = np.zeros_like(base)
    flat = base.reshape(-1)
    gflat = grad.reshape(-1)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + h
        hi = evaluate(base)
        flat[i] = keep - h
        lo = evaluate(base)
        flat[i] = keep
        gflat[i] = (hi - lo) / (2.0 * h)
    return grad


def sampled_finite_difference(f: Callable[[Tensor], "Tensor | float"],
                              x: Tensor, coords: Sequence[int],
                              h: float = 1e-5) -> np.ndarray:
    """Central differences restricted to ``coords`` (flat indices).

    Used to keep oracle checks of expensive losses (fitting, VAE) fast;
    returns one derivative per requested coordinate.
    """

    def evaluate(values: np.ndarray) -> float:
        out = f(Tensor(values))
        return out.item() if isinstance(out, Tensor) else float(out)

    base = np.array(x.data, dtype=np.float64)
    flat = base.reshape(-1)
    out = np.zeros(len(coords))
    for j, i in enumerate(coords):
        keep = flat[i]
        flat[i] = keep + h
        hi = evaluate(base)
        flat[i] = keep - h
        lo = evaluate(base)
        flat[i] = keep
        out[j] = (hi - lo) / (2.0 * h)
    return out
