"""Simply connected nilpotent Lie groups in exponential coordinates of the first kind.

A group point is its exponential coordinate vector, so the identity is the
zero vector, ``g^{-1} = -g`` and the product is the BCH product of the
algebra.  Invariant frames are closed-form polynomials in the coordinates:

    d/de g.exp(eX)  = (I + ad_g/2 + ad_g^2/12) X      (left-invariant X~)
    d/de exp(eX).g  = (I - ad_g/2 + ad_g^2/12) X      (right-invariant X^)

both exact for step <= 4 (the ad^3 coefficient of x/(1 - e^{-x}) vanishes).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import algebra as alg_mod
from .algebra import ContractError, LieAlgebraSpec
from .tolerances import FD_STEP


@dataclass(frozen=True, eq=False)
class GroupModel:
    """A group together with the driving directions ``X_i, i in generators`` (0-based)."""

    alg: LieAlgebraSpec
    label: str
    generators: tuple[int, ...]

    def __post_init__(self):
        gens = tuple(int(i) for i in self.generators)
        if not gens:
            raise ContractError("generator set must be nonempty")
        if len(set(gens)) != len(gens):
            raise ContractError("generator indices must be distinct")
        if any(i < 0 or i >= self.alg.dim for i in gens):
            raise ContractError(f"generator index out of range for dim {self.alg.dim}")
        object.__setattr__(self, "generators", gens)

    @property
    def dim(self) -> int:
        return self.alg.dim

    @property
    def k(self) -> int:
        return len(self.generators)

    @property
    def identity(self) -> np.ndarray:
        return np.zeros(self.dim)

    def embed(self, w) -> np.ndarray:
        """Map ``(..., k)`` driving coefficients to algebra vectors ``sum_i X_i w^i``."""
        w = np.asarray(w, dtype=float)
        out = np.zeros(w.shape[:-1] + (self.dim,))
        out[..., list(self.generators)] = w
        return out


@dataclass(frozen=True, eq=False)
class ScalarField:
    """A test function on the group, vectorised over leading axes.

    ``gradient`` (optional) returns the coordinate gradient; without it the
    gradients below fall back to central differences.
    """

    evaluate: Callable[[np.ndarray], np.ndarray]
    gradient: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = field(default="f")

    def __call__(self, g):
        return self.evaluate(np.asarray(g, dtype=float))


def _conform(model: GroupModel, *gs) -> list[np.ndarray]:
    out = []
    for g in gs:
        g = np.asarray(g, dtype=float)
        if g.shape[-1:] != (model.dim,):
            raise ContractError(f"expected coordinates of length {model.dim}, got shape {g.shape}")
        out.append(g)
    return out


def multiply(model: GroupModel, g, h) -> np.ndarray:
    g, h = _conform(model, g, h)
    return alg_mod.bch_log_product(model.alg, g, h)


def inverse(model: GroupModel, g) -> np.ndarray:
    (g,) = _conform(model, g)
    return -g


def adjoint_of(model: GroupModel, g) -> np.ndarray:
    """``Ad_g = e^{ad_x}`` for ``g = exp(x)``."""
    (g,) = _conform(model, g)
    return alg_mod.exp_ad(model.alg, g)


def left_frame(model: GroupModel, g) -> np.ndarray:
    """Matrix whose column ``i`` is the left-invariant field ``X~_i`` at ``g``."""
    a = alg_mod.ad_matrix(model.alg, g)
    eye = np.eye(model.dim)
    return eye + 0.5 * a + (a @ a) / 12.0


def right_frame(model: GroupModel, g) -> np.ndarray:
    """Matrix whose column ``i`` is the right-invariant field ``X^_i`` at ``g``."""
    a = alg_mod.ad_matrix(model.alg, g)
    eye = np.eye(model.dim)
    return eye - 0.5 * a + (a @ a) / 12.0


def left_invariant_field(model: GroupModel, i: int, g) -> np.ndarray:
    if i not in model.generators:
        raise ContractError(f"{i} is not a generator index of {model.label}")
    return left_frame(model, g)[..., :, i]


def right_invariant_field(model: GroupModel, i: int, g) -> np.ndarray:
    if not 0 <= i < model.dim:
        raise ContractError(f"basis index {i} out of range")
    return right_frame(model, g)[..., :, i]


def coordinate_gradient(f: ScalarField, g, eps: float = FD_STEP) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    if f.gradient is not None:
        return np.asarray(f.gradient(g), dtype=float)
    dim = g.shape[-1]
    out = np.empty(g.shape)
    for i in range(dim):
        step = np.zeros(dim)
        step[i] = eps
        out[..., i] = (f(g + step) - f(g - step)) / (2 * eps)
    return out


def hat_gradient(model: GroupModel, f: ScalarField, g) -> np.ndarray:
    """``<hat_grad f(g), X_i> = (X^_i f)(g)``, basis orthonormal."""
    (g,) = _conform(model, g)
    grad = coordinate_gradient(f, g)
    return (grad[..., None, :] @ right_frame(model, g))[..., 0, :]


def tilde_gradient(model: GroupModel, f: ScalarField, g) -> np.ndarray:
    """``<tilde_grad f(g), X_i> = (X~_i f)(g)``."""
    (g,) = _conform(model, g)
    grad = coordinate_gradient(f, g)
    return (grad[..., None, :] @ left_frame(model, g))[..., 0, :]


def get_model(label: str) -> GroupModel:
    """Resolve a registry label.

    ``abelian:<k>``, ``heisenberg``, ``paper-example``, ``filiform:<n>`` and
    ``custom:<file>``.  Generators are ``X_1, X_2`` except for the abelian
    model, which is driven in every direction.  A custom file may list
    ``"generators"`` (1-based) next to the algebra keys.
    """
    if label.startswith("abelian:"):
        k = int(label.split(":", 1)[1])
        return GroupModel(alg_mod.abelian(k), label, tuple(range(k)))
    if label == "heisenberg":
        return GroupModel(alg_mod.heisenberg(), label, (0, 1))
    if label == "paper-example":
        return GroupModel(alg_mod.engel(), label, (0, 1))
    if label.startswith("filiform:"):
        n = int(label.split(":", 1)[1])
        if n - 1 > alg_mod.MAX_BCH_STEP:
            raise alg_mod.UnsupportedStepError(f"{label} has step {n - 1}; at most {alg_mod.MAX_BCH_STEP} is supported")
        return GroupModel(alg_mod.filiform(n), label, (0, 1))
    if label.startswith("custom:"):
        path = Path(label.split(":", 1)[1])
        data = json.loads(path.read_text())
        gens = data.pop("generators", [1, 2])
        return GroupModel(alg_mod.load_algebra(data), label, tuple(int(i) - 1 for i in gens))
    raise ContractError(f"unknown model label {label!r}")
