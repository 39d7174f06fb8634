"""Grid-based C^j norm estimates for fields on T^2 x (action window).

The C^j norm here is the maximum over all partial derivatives of order <= j
of the sup norm on a sampling grid.  For finite Fourier series the derivatives
are exact (term-wise rotation/differentiation); for plain callables they fall
back to central differences with the step tied to the grid spacing.  These are
estimates from below by construction: refine the grid to tighten them.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fourier import FourierPerturbation
from .systems import ActionWindow


@dataclass(frozen=True)
class NormReport:
    """Measured C^j norm with its per-derivative breakdown.

    per_index maps the multi-index (d_theta1, d_theta2, d_I1, d_I2) to the
    grid sup of that derivative; value is the maximum over all of them.
    """

    order: int
    value: float
    grid_shape: tuple[int, int, int, int]
    per_index: dict = field(default_factory=dict)


def _multi_indices(j: int):
    out = []
    for total in range(j + 1):
        for a1 in range(total + 1):
            for a2 in range(total - a1 + 1):
                for a3 in range(total - a1 - a2 + 1):
                    a4 = total - a1 - a2 - a3
                    out.append((a1, a2, a3, a4))
    return out


def _periodic_derivative(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    """Second-order central difference on a periodic axis."""
    fwd = np.roll(values, -1, axis=axis)
    bwd = np.roll(values, 1, axis=axis)
    return (fwd - bwd) / (2.0 * spacing)


def _bounded_derivative(values: np.ndarray, axis: int, spacing: float) -> np.ndarray:
    return np.gradient(values, spacing, axis=axis)


def estimate_cj_norm(
    field_obj,
    j: int,
    window: ActionWindow,
    n_angle: int = 128,
    n_action: int = 33,
) -> NormReport:
    """Estimate the C^j norm of a field over T^2 x window.

    Parameters
    ----------
    field_obj : FourierPerturbation or callable(theta1, theta2, I1, I2)
        The field to measure.  Fourier series use exact derivatives; callables
        are differenced on the grid.
    j : int
        Derivative order, 0 <= j <= 4.
    window : ActionWindow
        Action box over which to sample.
    n_angle, n_action : int
        Grid points per angle axis / per action axis.
    """
    if not 0 <= j <= 4:
        raise ValueError("derivative order j must be between 0 and 4")
    needed = max(2 * j + 1, 2)
    if n_angle < needed or n_action < needed:
        raise ValueError(
            f"grid too coarse for order {j}: need at least {needed} points per axis"
        )

    th = np.linspace(0.0, 1.0, n_angle, endpoint=False)
    I1 = np.linspace(window.i1_min, window.i1_max, n_action)
    I2 = np.linspace(window.i2_min, window.i2_max, n_action)
    T1, T2, A1, A2 = np.meshgrid(th, th, I1, I2, indexing="ij")
    shape = (n_angle, n_angle, n_action, n_action)
    per_index: dict = {}

    if isinstance(field_obj, FourierPerturbation):
        for alpha in _multi_indices(j):
            deriv = field_obj.partial(*alpha)
            per_index[alpha] = float(np.max(np.abs(deriv(T1, T2, A1, A2))))
    else:
        base = np.asarray(field_obj(T1, T2, A1, A2), dtype=float)
        h_th = 1.0 / n_angle
        h_i1 = (window.i1_max - window.i1_min) / (n_action - 1)
        h_i2 = (window.i2_max - window.i2_min) / (n_action - 1)
        spacings = (h_th, h_th, h_i1, h_i2)
        cache: dict[tuple, np.ndarray] = {(0, 0, 0, 0): base}

        def grid_derivative(alpha):
            if alpha in cache:
                return cache[alpha]
            # peel one derivative off the first active axis
            axis = next(i for i, a in enumerate(alpha) if a > 0)
            lower = tuple(a - (1 if i == axis else 0) for i, a in enumerate(alpha))
            arr = grid_derivative(lower)
            if axis < 2:
                out = _periodic_derivative(arr, axis, spacings[axis])
            else:
                out = _bounded_derivative(arr, axis, spacings[axis])
            cache[alpha] = out
            return out

        for alpha in _multi_indices(j):
            per_index[alpha] = float(np.max(np.abs(grid_derivative(alpha))))

    value = max(per_index.values())
    return NormReport(order=j, value=value, grid_shape=shape, per_index=per_index)
