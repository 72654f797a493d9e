"""Stratonovich integrators for the rolling map and its variation processes.

All integrators accept batched Brownian increments ``(..., n_steps, k)`` and
return arrays with the same leading axes; a single path is the empty batch.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Callable

import numpy as np

from . import algebra as alg_mod
from .algebra import ContractError
from .group import GroupModel
from .tolerances import BLOWUP_NORM
from .wiener import BrownianPath, CameronMartinPath, PathGrid

SCHEMES = ("geometric-euler", "geometric-heun")
TIME_CHUNK = 256


class IntegrationBlowup(RuntimeError):
    """A path left the finite region; ``step`` is the first offending step."""

    def __init__(self, step: int, paths=None):
        self.step = int(step)
        self.paths = paths
        super().__init__(f"integration blew up at step {step}")


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """Scalar coefficient ``u`` multiplying the driving fields, with derivatives.

    ``hat_grad(g)[..., j] = <hat_grad u(g), X_j>`` and
    ``mixed(g, rows=None)[..., i, j] = X~_i <hat_grad u, X_j>`` (left-invariant
    derivative of the hat gradient), restricted to ``rows`` when given.
    """

    u: Callable[[np.ndarray], np.ndarray]
    hat_grad: Callable[[np.ndarray], np.ndarray]
    mixed: Callable[[np.ndarray], np.ndarray]
    constant: bool = False
    name: str = "u"

    @classmethod
    def full(cls, dim: int) -> "CoefficientField":
        return cls(
            u=lambda g: np.ones(np.shape(g)[:-1]),
            hat_grad=lambda g: np.zeros(np.shape(g)),
            mixed=lambda g, rows=None: np.zeros(np.shape(g)[:-1] + (dim if rows is None else len(rows), dim)),
            constant=True,
            name="full",
        )


@dataclass(frozen=True, eq=False)
class FlowTrajectory:
    grid: PathGrid
    model: GroupModel
    states: np.ndarray
    coeff_values: np.ndarray
    coeff_predictor: np.ndarray
    scheme: str
    blown: np.ndarray = field(default=None)
    first_bad_step: np.ndarray = field(default=None)

    @cached_property
    def adjoints(self) -> np.ndarray:
        """Group route ``W_j = Ad_{xi_j}``."""
        return alg_mod.exp_ad(self.model.alg, self.states)

    @property
    def label(self) -> str:
        return self.model.label


def _blowup_mask(x: np.ndarray) -> np.ndarray:
    with np.errstate(invalid="ignore", over="ignore"):
        norm = np.sqrt(np.sum(x * x, axis=-1))
    return ~np.isfinite(norm) | (norm > BLOWUP_NORM)


def solve_rolling(
    model: GroupModel,
    coeff: CoefficientField,
    omega: BrownianPath,
    scheme: str = "geometric-heun",
    on_blowup: str = "raise",
) -> FlowTrajectory:
    """Integrate ``d eta = u(eta) eta o db`` from the identity.

    Euler: ``eta_{j+1} = eta_j . exp(u(eta_j) db_j)``.  Heun: predictor as
    Euler, corrector with ``(u(eta_j) + u(eta*))/2``.  Updates are BCH
    products, so states never leave the group chart.

    With ``on_blowup="mask"`` offending paths are frozen, flagged in
    ``blown`` and their states from the bad step on are NaN.
    """
    if scheme not in SCHEMES:
        raise ContractError(f"unknown scheme {scheme!r}")
    if omega.k != model.k:
        raise ContractError(f"model {model.label} has k={model.k}, path has k={omega.k}")
    alg = model.alg
    n = omega.grid.n_steps
    batch = omega.batch_shape
    drive = model.embed(omega.increments)
    states = np.empty(batch + (n + 1, model.dim))
    cvals = np.ones(batch + (n,))
    cpred = np.ones(batch + (n,))
    x = np.zeros(batch + (model.dim,))
    states[..., 0, :] = x
    blown = np.zeros(batch, dtype=bool)
    first_bad = np.full(batch, -1)

    with np.errstate(invalid="ignore", over="ignore"):
        for j in range(n):
            d = drive[..., j, :]
            if coeff.constant:
                x = alg_mod.bch_log_product(alg, x, d)
            else:
                c = coeff.u(x)
                x_pred = alg_mod.bch_log_product(alg, x, c[..., None] * d)
                if scheme == "geometric-euler":
                    cs = c
                    x = x_pred
                else:
                    cs = coeff.u(x_pred)
                    x = alg_mod.bch_log_product(alg, x, (0.5 * (c + cs))[..., None] * d)
                cvals[..., j] = c
                cpred[..., j] = cs
            bad = _blowup_mask(x) & ~blown
            if np.any(bad):
                if on_blowup == "raise":
                    raise IntegrationBlowup(j + 1, np.argwhere(bad))
                first_bad[bad] = j + 1
                blown |= bad
                x = np.where(blown[..., None], 0.0, x)
            states[..., j + 1, :] = x

    if np.any(blown):
        steps = np.arange(n + 1)
        dead = blown[..., None] & (steps >= first_bad[..., None])
        states[dead] = np.nan
    return FlowTrajectory(omega.grid, model, states, cvals, cpred, scheme, blown, first_bad)


def solve_adjoint(model: GroupModel, flow: FlowTrajectory, omega: BrownianPath) -> np.ndarray:
    """Matrix route for ``dW = u W o ad_db`` by Heun predictor-corrector.

    ``W* = W_j (I + c_j A_j)``, ``W_{j+1} = W_j + (c_j W_j A_j + c*_j W* A_j)/2``
    with ``A_j = sum_i ad_{X_i} db^i_j`` and the coefficient values cached by
    the flow step.  Returns ``(..., n+1, dim, dim)``.
    """
    if flow.grid.n_steps != omega.grid.n_steps:
        raise ContractError("trajectory and driving path are on different grids")
    n = omega.grid.n_steps
    A = alg_mod.ad_matrix(model.alg, model.embed(omega.increments))
    batch = omega.batch_shape
    out = np.empty(batch + (n + 1, model.dim, model.dim))
    W = np.broadcast_to(np.eye(model.dim), batch + (model.dim, model.dim)).copy()
    out[..., 0, :, :] = W
    c = flow.coeff_values[..., None, None]
    cs = flow.coeff_predictor[..., None, None]
    with np.errstate(invalid="ignore", over="ignore"):
        for j in range(n):
            a = A[..., j, :, :]
            WA = W @ a
            W_pred = W + c[..., j, :, :] * WA
            W = W + 0.5 * (c[..., j, :, :] * WA + cs[..., j, :, :] * (W_pred @ a))
            out[..., j + 1, :, :] = W
    bad = ~np.all(np.isfinite(out[..., -1, :, :]), axis=(-2, -1)) & ~flow.blown
    if np.any(bad):
        raise IntegrationBlowup(n, np.argwhere(bad))
    return out


def _generator_columns(model: GroupModel, W: np.ndarray) -> np.ndarray:
    return W[..., :, list(model.generators)]


def solve_theta(
    model: GroupModel,
    coeff: CoefficientField,
    flow: FlowTrajectory,
    omega: BrownianPath,
    h: CameronMartinPath,
    drift: str = "complete",
) -> np.ndarray:
    """Euler-Maruyama for the Ito form of the variation process ``theta``.

    ``theta_{j+1} = theta_j + <hg, theta_j> W_j db_j + u W_j dh_j
    + 1/2 sum_i [u <mixed_i, theta_j> + <tg, X_i> <hg, theta_j>] W_j X_i dt``
    where ``hg``/``tg`` are the hat/tilde gradients of ``u`` at ``eta_j``.

    ``drift="printed"`` drops the ``u`` factor and the ``tg * hg`` product
    term (kept for comparison; it is not consistent with the flow when ``u``
    varies along the path).
    """
    if drift not in ("complete", "printed"):
        raise ContractError(f"unknown drift variant {drift!r}")
    if flow.grid.n_steps != omega.grid.n_steps or h.grid.n_steps != omega.grid.n_steps:
        raise ContractError("grid mismatch between flow, driving path and h")
    if h.k != model.k:
        raise ContractError("h has the wrong number of components")
    n = omega.grid.n_steps
    dt = omega.grid.dt
    W = flow.adjoints[..., :-1, :, :]
    WX = _generator_columns(model, W)
    forcing = (WX @ h.increments[:, :, None])[..., 0]
    batch = omega.batch_shape
    out = np.zeros(batch + (n + 1, model.dim))
    if coeff.constant:
        out[..., 1:, :] = np.cumsum(forcing, axis=-2)
        return out

    gens = list(model.generators)
    theta = np.zeros(batch + (model.dim,))
    for lo in range(0, n, TIME_CHUNK):
        hi = min(n, lo + TIME_CHUNK)
        eta = flow.states[..., lo:hi, :]
        Wc = W[..., lo:hi, :, :]
        WXc = WX[..., lo:hi, :, :]
        u = coeff.u(eta)
        hg = coeff.hat_grad(eta)
        mixed_rows = coeff.mixed(eta, gens)
        if drift == "complete":
            tg = (hg[..., None, :] @ Wc)[..., 0, gens]
            rows = u[..., None, None] * mixed_rows + tg[..., :, None] * hg[..., None, :]
        else:
            rows = mixed_rows
        M = 0.5 * dt * (WXc @ rows)
        Wdb = (WXc @ omega.increments[..., lo:hi, :, None])[..., 0]
        M = M + Wdb[..., :, None] * hg[..., None, :]
        F = u[..., None] * forcing[..., lo:hi, :]
        with np.errstate(invalid="ignore", over="ignore"):
            for j in range(hi - lo):
                theta = theta + (M[..., j, :, :] @ theta[..., None])[..., 0] + F[..., j, :]
                out[..., lo + j + 1, :] = theta
    return out


def solve_Theta(flow: FlowTrajectory, h: CameronMartinPath) -> np.ndarray:
    """Midpoint sum ``Theta_{j+1} = Theta_j + (W_j + W_{j+1})/2 (sum_i X_i hdot^i_j) dt``."""
    if h.grid.n_steps != flow.grid.n_steps:
        raise ContractError("grid mismatch between flow and h")
    model = flow.model
    W = flow.adjoints
    Wmid = 0.5 * (W[..., :-1, :, :] + W[..., 1:, :, :])
    inc = (_generator_columns(model, Wmid) @ h.increments[:, :, None])[..., 0]
    out = np.zeros(W.shape[:-2] + (model.dim,))
    out[..., 1:, :] = np.cumsum(inc, axis=-2)
    return out


def export_trajectory(
    path: str | Path,
    flow: FlowTrajectory,
    include_adjoints: bool = False,
    variation: np.ndarray | None = None,
) -> None:
    """CSV with ``t``, state coordinates, optional row-major ``W`` entries and ``theta`` coordinates."""
    if flow.states.ndim != 2:
        raise ContractError("export_trajectory takes a single path")
    d = flow.model.dim
    header = ["t"] + [f"xi{i + 1}" for i in range(d)]
    cols = [flow.grid.times[:, None], flow.states]
    if include_adjoints:
        header += [f"W{a + 1}{b + 1}" for a in range(d) for b in range(d)]
        cols.append(flow.adjoints.reshape(-1, d * d))
    if variation is not None:
        header += [f"theta{i + 1}" for i in range(d)]
        cols.append(variation)
    table = np.concatenate(cols, axis=1)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in table:
            w.writerow([repr(float(v)) for v in row])
