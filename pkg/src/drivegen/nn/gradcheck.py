"""Central finite-difference gradient checking."""

from __future__ import annotations

from typing import Callable, Mapping

import numpy as np

from .tape import Tape, Tensor


def grad_check(closure: Callable[[Tape], Tensor], params: Mapping[str, Tensor],
               h: float = 1e-5, max_coords: int | None = 40,
               rng: np.random.Generator | None = None) -> float:
    """Max relative error between tape gradients and central differences.

    ``closure`` builds the scalar loss on the tape it is given.  At most
    ``max_coords`` coordinates per parameter are probed (a random subsample
    when ``rng`` is given, otherwise the first ones).  Relative error is
    ``|a - n| / max(|a| + |n|, 1e-8)``.
    """
    tape = Tape()
    analytic = tape.backward(closure(tape), params)
    worst = 0.0
    for name, p in params.items():
        flat = p.data.reshape(-1)
        idx = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            idx = rng.choice(flat.size, max_coords, replace=False) if rng is not None else idx[:max_coords]
        a_flat = analytic[name].reshape(-1)
        for k in idx:
            orig = p.data
            bumped = orig.copy().reshape(-1)
            bumped[k] += h
            p.data = bumped.reshape(orig.shape)
            up = closure(Tape()).item()
            bumped[k] -= 2 * h
            p.data = bumped.reshape(orig.shape)
            down = closure(Tape()).item()
            p.data = orig
            num = (up - down) / (2 * h)
            err = abs(a_flat[k] - num) / max(abs(a_flat[k]) + abs(num), 1e-8)
            worst = max(worst, err)
    return worst
