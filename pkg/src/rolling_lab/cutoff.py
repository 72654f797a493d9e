"""Cutoff functions on the group and on End(g), and the coefficients built from them.

``phi_m`` is a smooth bump in the exponential-coordinate norm, ``psi`` a
smooth bump in the normalised Frobenius distance ``|x - I|_F / sqrt(dim)``
(under which ``0`` and ``I`` are at distance 1, so ``psi(x / n) -> 1``).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import algebra as alg_mod
from .algebra import ContractError
from .flow import CoefficientField
from .group import GroupModel, left_frame, right_frame
from .tolerances import MIXED_FD_STEP

FLAT_RADIUS = 1.0
ZERO_RADIUS = 2.0
KINDS = ("full", "u_m", "v", "v_n")


def _glue(x: np.ndarray) -> np.ndarray:
    pos = x > 0
    with np.errstate(over="ignore", divide="ignore"):  # subnormal x: exp(-inf) = 0 is right
        return np.where(pos, np.exp(-1.0 / np.where(pos, x, 1.0)), 0.0)


def _glue_prime(x: np.ndarray) -> np.ndarray:
    pos = x > 0
    safe = np.where(pos, x, 1.0)
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        return np.where(pos & (safe > 1e-3), np.exp(-1.0 / safe) / safe**2, 0.0)


def smooth_step(s) -> np.ndarray:
    """C^infinity step: 1 for ``s <= 0``, 0 for ``s >= 1``."""
    s = np.asarray(s, dtype=float)
    a, b = _glue(1.0 - s), _glue(s)
    return a / (a + b)


def smooth_step_prime(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    a, b = _glue(1.0 - s), _glue(s)
    return -(_glue_prime(1.0 - s) * b + a * _glue_prime(s)) / (a + b) ** 2


@dataclass(frozen=True)
class CutoffSpec:
    m: float = 4.0
    n: int = 1
    transition_width: float | None = None

    def __post_init__(self):
        if self.m <= 0:
            raise ContractError("m must be positive")
        if int(self.n) < 1:
            raise ContractError("n must be a positive integer")
        if self.transition_width is not None and not 0 < self.transition_width <= self.m:
            raise ContractError("transition_width must lie in (0, m]")

    @property
    def width(self) -> float:
        return self.m / 2 if self.transition_width is None else float(self.transition_width)


class PhiM:
    """``phi_m(g) = S((|g| - m) / width)`` with ``|g|`` the coordinate norm."""

    def __init__(self, model: GroupModel, m: float, width: float | None = None):
        if m <= 0:
            raise ContractError("m must be positive")
        self.model = model
        self.m = float(m)
        self.width = self.m / 2 if width is None else float(width)

    def _arg(self, g):
        r = np.linalg.norm(g, axis=-1)
        return r, (r - self.m) / self.width

    def __call__(self, g) -> np.ndarray:
        return smooth_step(self._arg(np.asarray(g, dtype=float))[1])

    def coordinate_gradient(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        r, s = self._arg(g)
        slope = smooth_step_prime(s) / self.width
        unit = g / np.where(r > 0, r, 1.0)[..., None]
        return slope[..., None] * unit

    def hat_grad(self, g) -> np.ndarray:
        return (self.coordinate_gradient(g)[..., None, :] @ right_frame(self.model, g))[..., 0, :]

    def tilde_grad(self, g) -> np.ndarray:
        return (self.coordinate_gradient(g)[..., None, :] @ left_frame(self.model, g))[..., 0, :]


def make_phi_m(model: GroupModel, m: float, width: float | None = None) -> PhiM:
    return PhiM(model, m, width)


class Psi:
    """Bump on End(g): 1 within normalised distance 1 of I, 0 beyond 2; ``scale`` rescales the argument."""

    def __init__(self, dim: int, scale: float = 1.0):
        self.dim = dim
        self.scale = float(scale)

    def _arg(self, x):
        y = np.asarray(x, dtype=float) * self.scale - np.eye(self.dim)
        dist = np.sqrt(np.sum(y * y, axis=(-2, -1)) / self.dim)
        return y, dist, (dist - FLAT_RADIUS) / (ZERO_RADIUS - FLAT_RADIUS)

    def __call__(self, x) -> np.ndarray:
        return smooth_step(self._arg(x)[2])

    def gradient(self, x) -> np.ndarray:
        """Matrix ``G`` with ``<psi'(x), A> = sum(G * A)``."""
        y, dist, s = self._arg(x)
        coef = smooth_step_prime(s) / (ZERO_RADIUS - FLAT_RADIUS)
        coef = coef / (self.dim * np.where(dist > 0, dist, 1.0))
        return (coef * self.scale)[..., None, None] * y

    def directional(self, x, A) -> np.ndarray:
        return np.sum(self.gradient(x) * A, axis=(-2, -1))


def make_psi(dim: int, n: int = 1) -> Psi:
    """``psi`` (``n = 1``) or ``psi_n(x) = psi(x / n)``."""
    return Psi(dim, 1.0 / n)


def _mixed_by_differences(model: GroupModel, hat_grad, eps: float = MIXED_FD_STEP):
    dim = model.dim
    eye = np.eye(dim)

    def mixed(g, rows=None):
        g = np.asarray(g, dtype=float)
        dirs = eye if rows is None else eye[list(rows)]
        r = len(dirs)
        pts = alg_mod.bch_log_product(model.alg, g[..., None, :], np.concatenate([dirs, -dirs]) * eps)
        hg = hat_grad(pts)
        return (hg[..., :r, :] - hg[..., r:, :]) / (2 * eps)

    return mixed


def _adjoint_coefficient(model: GroupModel, psi: Psi):
    ads = np.stack([alg_mod.ad_matrix(model.alg, e) for e in np.eye(model.dim)])
    flat_ads = ads.reshape(model.dim, -1).T

    def value(g):
        return psi(alg_mod.exp_ad(model.alg, g))

    def hat_grad(g):
        # <hat_grad v(g), X_i> = <psi'(Ad_g), ad_{X_i} Ad_g>
        Ad = alg_mod.exp_ad(model.alg, g)
        G = psi.gradient(Ad)
        P = G @ np.swapaxes(Ad, -1, -2)
        return P.reshape(P.shape[:-2] + (-1,)) @ flat_ads

    return value, hat_grad


def make_coefficient(model: GroupModel, kind: str, spec: CutoffSpec | None = None) -> CoefficientField:
    spec = spec or CutoffSpec()
    if kind == "full":
        return CoefficientField.full(model.dim)
    if kind == "v":
        u, hg = _adjoint_coefficient(model, make_psi(model.dim))
    elif kind == "v_n":
        u, hg = _adjoint_coefficient(model, make_psi(model.dim, spec.n))
    elif kind == "u_m":
        v, v_hg = _adjoint_coefficient(model, make_psi(model.dim))
        phi = make_phi_m(model, spec.m, spec.width)

        def u(g):
            return phi(g) * v(g)

        def hg(g):
            return v_hg(g) * phi(g)[..., None] + v(g)[..., None] * phi.hat_grad(g)

    else:
        raise ContractError(f"unknown coefficient kind {kind!r}")
    return CoefficientField(u=u, hat_grad=hg, mixed=_mixed_by_differences(model, hg), name=kind)
