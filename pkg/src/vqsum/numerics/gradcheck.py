"""Central-difference gradient checking.

Meant to run on float64 tensors only; 32-bit finite differences drown in
rounding noise long before they say anything useful.
"""

import numpy as np

from ..errors import NonFiniteValue
from .engine import GradTape, freeze_stop_gradients, suppress_finite_checks

DEFAULT_EPS = 1e-6


def grad_check(f, params, eps=DEFAULT_EPS):
    """Max relative error between analytic and central-difference gradients.

    f: nullary callable rebuilding the scalar loss from current parameter
    values; params: leaf tensors to perturb. Relative error is
    |analytic - numeric| / max(1, |analytic|), maximized over every entry of
    every parameter.

    Stop-gradient branches are frozen at the base parameters for the whole
    check: by definition they are constants of the differentiated objective,
    so the finite differences must not see them move.
    """
    for p in params:
        if p.data.dtype != np.float64:
            raise NonFiniteValue(f"grad_check needs float64 params, got {p.data.dtype}")
        p.zero_grad()

    with freeze_stop_gradients() as freeze:
        with GradTape() as tape:
            loss = f()
            tape.backward(loss)
        analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in params]

        worst = 0.0
        with suppress_finite_checks():  # the loss itself is validated below
            for p, an in zip(params, analytic):
                flat = p.data.reshape(-1)
                an_flat = an.reshape(-1)
                for i in range(flat.size):
                    orig = flat[i]
                    flat[i] = orig + eps
                    freeze.start_replay()
                    up = float(f().data)
                    flat[i] = orig - eps
                    freeze.start_replay()
                    down = float(f().data)
                    flat[i] = orig
                    if not (np.isfinite(up) and np.isfinite(down)):
                        raise NonFiniteValue("grad_check: loss not finite near evaluation point")
                    numeric = (up - down) / (2.0 * eps)
                    rel = abs(an_flat[i] - numeric) / max(1.0, abs(an_flat[i]))
                    if rel > worst:
                        worst = rel
    return worst
