"""Bundled dictionaries: test functions on the group, Cameron-Martin directions
and the (F, G, h) triples of the integration-by-parts battery.

Functions work in any dimension >= 2 and carry analytic gradients.
"""

from __future__ import annotations

import numpy as np

from .algebra import ContractError
from .group import ScalarField
from .wiener import CameronMartinPath, CylinderFunctional, PathGrid


def _weights(dim: int) -> np.ndarray:
    return 1.0 / 2.0 ** np.arange(dim)


def _poly() -> ScalarField:
    # x_last + x_0 x_1 / 2 + x_0^2 / 4
    def f(g):
        return g[..., -1] + 0.5 * g[..., 0] * g[..., 1] + 0.25 * g[..., 0] ** 2

    def grad(g):
        out = np.zeros(g.shape)
        out[..., -1] += 1.0
        out[..., 0] += 0.5 * g[..., 1] + 0.5 * g[..., 0]
        out[..., 1] += 0.5 * g[..., 0]
        return out

    return ScalarField(f, grad, "poly")


def _gauss() -> ScalarField:
    # (1 + x_0 + x_last) exp(-|x|^2 / 8)
    def f(g):
        return (1.0 + g[..., 0] + g[..., -1]) * np.exp(-np.sum(g * g, axis=-1) / 8.0)

    def grad(g):
        w = np.exp(-np.sum(g * g, axis=-1) / 8.0)
        lin = 1.0 + g[..., 0] + g[..., -1]
        out = -0.25 * g * (lin * w)[..., None]
        out[..., 0] += w
        out[..., -1] += w
        return out

    return ScalarField(f, grad, "gauss")


def _trig() -> ScalarField:
    # sin(<w, x>) + cos(x_last), w_i = 2^-i
    def f(g):
        w = _weights(g.shape[-1])
        return np.sin(g @ w) + np.cos(g[..., -1])

    def grad(g):
        w = _weights(g.shape[-1])
        out = np.cos(g @ w)[..., None] * w
        out[..., -1] -= np.sin(g[..., -1])
        return out

    return ScalarField(f, grad, "trig")


TEST_FUNCTIONS = {"poly": _poly, "gauss": _gauss, "trig": _trig}


def scalar_field(name: str) -> ScalarField:
    try:
        return TEST_FUNCTIONS[name]()
    except KeyError:
        raise ContractError(f"unknown test function {name!r}") from None


def _slopes_line(t, k):
    out = np.zeros((len(t), k))
    out[:, 0] = 1.0
    return out


def _slopes_wave(t, k):
    out = np.zeros((len(t), k))
    out[:, 0] = np.cos(2 * np.pi * t)
    out[:, 1 % k] += t
    return out


def _slopes_late(t, k):
    # zero on [0, 1/2)
    out = np.zeros((len(t), k))
    late = t >= 0.5
    out[late, 0] = 1.0
    out[late, 1 % k] += -0.5
    return out


DIRECTIONS = {"line": _slopes_line, "wave": _slopes_wave, "late": _slopes_late}


def direction(name: str, grid: PathGrid, k: int) -> CameronMartinPath:
    try:
        fn = DIRECTIONS[name]
    except KeyError:
        raise ContractError(f"unknown Cameron-Martin direction {name!r}") from None
    return CameronMartinPath.from_slope_function(grid, lambda t: fn(t, k))


def zero_direction(grid: PathGrid, k: int) -> CameronMartinPath:
    return CameronMartinPath(grid, np.zeros((grid.n_steps, k)))


def _coord(time: float, comp: int, name: str) -> CylinderFunctional:
    def f(x):
        return x[..., 0, comp]

    def grad(x):
        out = np.zeros(x.shape)
        out[..., 0, comp] = 1.0
        return out

    return CylinderFunctional((time,), f, grad, name)


def _one(name: str = "1") -> CylinderFunctional:
    return CylinderFunctional((1.0,), lambda x: np.ones(x.shape[:-2]), lambda x: np.zeros(x.shape), name)


def _sin_half() -> CylinderFunctional:
    return CylinderFunctional(
        (0.5,),
        lambda x: np.sin(x[..., 0, 0]),
        lambda x: np.stack([np.cos(x[..., 0, 0]), np.zeros(x.shape[:-2])], axis=-1)[..., None, :],
        "sin(w1_1/2)",
    )


def _two_time_product() -> CylinderFunctional:
    # w1_{1/4} * w2_{3/4}
    def f(x):
        return x[..., 0, 0] * x[..., 1, 1]

    def grad(x):
        out = np.zeros(x.shape)
        out[..., 0, 0] = x[..., 1, 1]
        out[..., 1, 1] = x[..., 0, 0]
        return out

    return CylinderFunctional((0.25, 0.75), f, grad, "w1_1/4*w2_3/4")


def _cos_mid() -> CylinderFunctional:
    def f(x):
        return np.cos(x[..., 0, 1]) + 0.5 * x[..., 0, 0]

    def grad(x):
        out = np.zeros(x.shape)
        out[..., 0, 1] = -np.sin(x[..., 0, 1])
        out[..., 0, 0] = 0.5
        return out

    return CylinderFunctional((0.5,), f, grad, "cos(w2_1/2)+w1_1/2/2")


def ibp_battery() -> list[tuple[str, CylinderFunctional, CylinderFunctional, str]]:
    """``(label, F, G, h-name)``; the first triple has the closed form ``E = h^1_{1/2}``."""
    return [
        ("closed-form", _coord(0.5, 0, "w1_1/2"), _one(), "line"),
        ("constants", _one(), _one(), "wave"),
        ("sin-vs-endpoint", _sin_half(), _coord(1.0, 0, "w1_1"), "line"),
        ("two-time", _two_time_product(), _cos_mid(), "wave"),
        ("late-direction", _cos_mid(), _two_time_product(), "late"),
    ]
