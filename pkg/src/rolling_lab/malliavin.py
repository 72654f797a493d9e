"""Cameron-Martin derivatives of ``f(xi_t)``, their finite-difference oracle,
the H-kernel, integration by parts on Wiener space and L^p-sup convergence
tables for the cutoff approximations.

Every estimator couples the compared quantities through the same Brownian
increments.  Monte Carlo work is split into fixed path blocks (see
``parallel``), so results depend on ``(seed, N, config)`` only.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import catalog
from .algebra import ContractError
from .cutoff import CutoffSpec, make_coefficient, make_psi
from .flow import (
    CoefficientField,
    FlowTrajectory,
    IntegrationBlowup,
    solve_adjoint,
    solve_rolling,
    solve_theta,
    solve_Theta,
)
from .group import GroupModel, ScalarField, get_model, hat_gradient
from .parallel import BLOCK_SIZE, blocks, map_blocks
from .tolerances import (
    BLOWUP_FRACTION,
    EXPLOSION_PROXY_NORM,
    FD_STEP,
    IBP_SIGMAS,
    MEDIAN_REL_ERROR,
    P95_REL_ERROR,
)
from .wiener import (
    BrownianPath,
    CameronMartinPath,
    CylinderFunctional,
    PathGrid,
    coarsen,
    cylinder_partial,
    dh_star,
    energy,
    sample_brownian_batch,
    shift_path,
)

STUDY_KINDS = ("eta_m", "adjoint_m", "theta_m", "Theta_n")
DEFAULT_M = (1.0, 2.0, 4.0, 8.0)
DEFAULT_N = (1, 4, 16, 64, 256, 1024)


def _t_index(grid: PathGrid, t_index: int | None) -> int:
    if t_index is None:
        return grid.n_steps
    if not 0 <= t_index <= grid.n_steps:
        raise ContractError(f"t_index {t_index} outside 0..{grid.n_steps}")
    return int(t_index)


def _check_full(flow: FlowTrajectory):
    if not np.all(flow.coeff_values == 1.0):
        raise ContractError("derivative formula needs a flow integrated with u = 1")


# ---------------------------------------------------------------- derivatives


def derivative_formula(
    model: GroupModel, f: ScalarField, flow: FlowTrajectory, h: CameronMartinPath, t_index: int | None = None
) -> np.ndarray:
    """``<hat_grad f(xi_t), Theta_t>`` with the midpoint ``Theta``; batched over paths."""
    if h.grid.n_steps != flow.grid.n_steps:
        raise ContractError("grid mismatch between flow and h")
    _check_full(flow)
    t = _t_index(flow.grid, t_index)
    Theta = solve_Theta(flow, h)[..., t, :]
    return np.sum(hat_gradient(model, f, flow.states[..., t, :]) * Theta, axis=-1)


def derivative_via_theta(
    model: GroupModel,
    f: ScalarField,
    coeff: CoefficientField,
    flow: FlowTrajectory,
    omega: BrownianPath,
    h: CameronMartinPath,
    t_index: int | None = None,
    drift: str = "complete",
) -> np.ndarray:
    """``<hat_grad f(eta_t), theta_t>`` for a flow with a general coefficient."""
    t = _t_index(flow.grid, t_index)
    theta = solve_theta(model, coeff, flow, omega, h, drift=drift)[..., t, :]
    return np.sum(hat_gradient(model, f, flow.states[..., t, :]) * theta, axis=-1)


def _f_at(model, f, coeff, omega, t, scheme):
    fl = solve_rolling(model, coeff, omega, scheme=scheme, on_blowup="raise")
    return f(fl.states[..., t, :])


def derivative_fd_oracle(
    model: GroupModel,
    f: ScalarField,
    coeff: CoefficientField,
    omega: BrownianPath,
    h: CameronMartinPath,
    t_index: int | None = None,
    eps: float = FD_STEP,
    scheme: str = "geometric-heun",
) -> np.ndarray:
    """Central difference of ``f(xi_t)`` under ``omega -> omega +- eps h``, re-integrating both flows."""
    if eps <= 0:
        raise ContractError("eps must be positive")
    t = _t_index(omega.grid, t_index)
    plus = _f_at(model, f, coeff, shift_path(omega, h, eps), t, scheme)
    minus = _f_at(model, f, coeff, shift_path(omega, h, -eps), t, scheme)
    return (plus - minus) / (2 * eps)


def second_derivative_fd(
    model: GroupModel,
    f: ScalarField,
    coeff: CoefficientField,
    omega: BrownianPath,
    h1: CameronMartinPath,
    h2: CameronMartinPath,
    t_index: int | None = None,
    eps: float = 1e-3,
) -> np.ndarray:
    """Nested central differences ``d_{h1} d_{h2} f(xi_t)``."""
    t = _t_index(omega.grid, t_index)
    total = 0.0
    for s1 in (1, -1):
        for s2 in (1, -1):
            shifted = shift_path(shift_path(omega, h1, s1 * eps), h2, s2 * eps)
            total = total + s1 * s2 * _f_at(model, f, coeff, shifted, t, "geometric-heun")
    return total / (4 * eps * eps)


def richardson(d_eps: np.ndarray, d_half: np.ndarray) -> np.ndarray:
    """Eliminates the ``eps^2`` term of two central differences at ``eps`` and ``eps/2``."""
    return (4.0 * d_half - d_eps) / 3.0


def heisenberg_closed_form(omega: BrownianPath, h: CameronMartinPath, t_index: int | None = None) -> np.ndarray:
    """``d_h`` of the area coordinate: ``(b2 h1 - b1 h2)/2 - int b2 dh1 + int b1 dh2`` (trapezoid)."""
    t = _t_index(omega.grid, t_index)
    b = omega.values
    hv = h.values
    bmid = 0.5 * (b[..., :-1, :] + b[..., 1:, :])[..., :t, :]
    dh = h.increments[:t]
    boundary = 0.5 * (b[..., t, 1] * hv[t, 0] - b[..., t, 0] * hv[t, 1])
    return boundary - bmid[..., 1] @ dh[:, 0] + bmid[..., 0] @ dh[:, 1]


def sobolev_surrogate(
    model: GroupModel, f: ScalarField, flow: FlowTrajectory, directions: Sequence[CameronMartinPath], t_index=None
) -> np.ndarray:
    """``max_h |d_h f(xi_t)| / |h|_H`` over a finite dictionary: a lower bound for ``|D f(xi_t)|_H``."""
    vals = [np.abs(derivative_formula(model, f, flow, h, t_index)) / np.sqrt(energy(h)) for h in directions]
    return np.max(np.stack(vals), axis=0)


# --------------------------------------------------------------------- kernel


def kernel_path(model: GroupModel, f: ScalarField, flow: FlowTrajectory, t_index: int | None = None) -> np.ndarray:
    """``K[..., s, i] = <hat_grad f(xi_t), int_0^{s^t} Ad_xi X_i dtau>`` for every grid ``s``."""
    _check_full(flow)
    t = _t_index(flow.grid, t_index)
    W = flow.adjoints[..., :, :, list(model.generators)]
    mid = 0.5 * (W[..., :-1, :, :] + W[..., 1:, :, :]) * flow.grid.dt
    n = flow.grid.n_steps
    mid[..., t:, :, :] = 0.0
    integral = np.zeros(W.shape[:-3] + (n + 1, model.dim, model.k))
    integral[..., 1:, :, :] = np.cumsum(mid, axis=-3)
    grad = hat_gradient(model, f, flow.states[..., t, :])
    return np.einsum("...d,...sdi->...si", grad, integral)


def kernel_D(
    model: GroupModel, f: ScalarField, flow: FlowTrajectory, i: int, s_index: int, t_index: int | None = None
) -> np.ndarray:
    n = flow.grid.n_steps
    if not 0 <= i < model.k:
        raise ContractError(f"generator slot {i} outside 0..{model.k - 1}")
    if not 0 <= s_index <= n:
        raise ContractError(f"s_index {s_index} outside 0..{n}")
    return kernel_path(model, f, flow, t_index)[..., s_index, i]


def reconstruct_derivative(kernel: np.ndarray, h: CameronMartinPath) -> np.ndarray:
    """``sum_j sum_i (K_{j+1} - K_j)^i hdot^i_j``: pairs the kernel's slope with ``hdot`` in H."""
    dK = np.diff(kernel, axis=-2)
    return np.sum(dK * h.slopes, axis=(-2, -1))


# ------------------------------------------------------------------- reports


@dataclass(frozen=True)
class DerivativeReport:
    model: str
    f: str
    h: str
    path: int
    formula_value: float
    oracle_value: float
    rel_error: float
    eps: float
    n_steps: int

    @staticmethod
    def relative(formula, oracle):
        return np.abs(formula - oracle) / np.maximum(1.0, np.abs(oracle))


@dataclass(frozen=True)
class BatterySummary:
    median: float
    p95: float
    worst: float
    count: int
    closed_form_max: float
    passed: bool


def _paths(n_paths: int, seed: int, grid: PathGrid, k: int, threads, fn, block_size: int = BLOCK_SIZE):
    """Runs ``fn(omega_block, indices)`` over fixed blocks; results come back in path order."""
    parts = blocks(n_paths, block_size)

    def run(b):
        return fn(sample_brownian_batch(grid, k, seed, b), b)

    return map_blocks(run, parts, threads)


def verify_derivative_battery(
    models: Sequence[str] = ("abelian:2", "heisenberg", "paper-example"),
    functions: Sequence[str] = tuple(catalog.TEST_FUNCTIONS),
    directions: Sequence[str] = tuple(catalog.DIRECTIONS),
    n_paths: int = 100,
    n_steps: int = 4096,
    seed: int = 0,
    eps: float = FD_STEP,
    threads: int | None = None,
) -> tuple[list[DerivativeReport], dict[str, np.ndarray]]:
    """Formula vs oracle at ``t = 1`` for every (model, f, h); also the Heisenberg closed-form residuals."""
    grid = PathGrid(n_steps)
    reports: list[DerivativeReport] = []
    closed: dict[str, np.ndarray] = {}
    for label in models:
        model = get_model(label)
        coeff = make_coefficient(model, "full")
        fs = [catalog.scalar_field(name) for name in functions]
        hs = [catalog.direction(name, grid, model.k) for name in directions]

        def work(omega, idx, model=model, coeff=coeff, fs=fs, hs=hs):
            flow = solve_rolling(model, coeff, omega)
            out = []
            for hname, h in zip(directions, hs):
                form = [derivative_formula(model, f, flow, h) for f in fs]
                orac = []
                for sign in (1, -1):
                    fl = solve_rolling(model, coeff, shift_path(omega, h, sign * eps))
                    orac.append([f(fl.states[..., -1, :]) for f in fs])
                orac = [(p - m) / (2 * eps) for p, m in zip(*orac)]
                cf = None
                if model.label == "heisenberg":
                    area = ScalarField(lambda g: g[..., 2], lambda g: np.eye(3)[2] + 0 * g, "area")
                    cf = np.abs(derivative_formula(model, area, flow, h) - heisenberg_closed_form(omega, h))
                out.append((hname, form, orac, cf))
            return list(idx), out

        for idx, per_h in _paths(n_paths, seed, grid, model.k, threads, work):
            for hname, form, orac, cf in per_h:
                for fname, fv, ov in zip(functions, form, orac):
                    rel = DerivativeReport.relative(fv, ov)
                    for r, p in enumerate(idx):
                        reports.append(
                            DerivativeReport(label, fname, hname, p, float(fv[r]), float(ov[r]), float(rel[r]), eps, n_steps)
                        )
                if cf is not None:
                    closed[hname] = np.concatenate([closed.get(hname, np.empty(0)), cf])
    return reports, closed


def summarize_battery(reports: Sequence[DerivativeReport], closed: dict[str, np.ndarray] | None = None,
                      closed_tol: float = 1e-10) -> BatterySummary:
    rel = np.array([r.rel_error for r in reports])
    cf = max((float(np.max(v)) for v in (closed or {}).values()), default=0.0)
    median = float(np.median(rel))
    p95 = float(np.quantile(rel, 0.95))
    ok = median <= MEDIAN_REL_ERROR and p95 <= P95_REL_ERROR and cf <= closed_tol
    return BatterySummary(median, p95, float(np.max(rel)), len(rel), cf, bool(ok))


# ----------------------------------------------------------------------- IBP


@dataclass(frozen=True)
class IBPReport:
    label: str
    lhs_mean: float
    lhs_stderr: float
    rhs_mean: float
    rhs_stderr: float
    difference: float
    combined_stderr: float
    n_paths: int
    expected: float | None = None
    passed: bool = False

    @property
    def z_score(self) -> float:
        if self.combined_stderr == 0:
            return 0.0 if self.difference == 0 else float("inf")
        return self.difference / self.combined_stderr


def _mean_se(x: np.ndarray) -> tuple[float, float]:
    n = len(x)
    return float(np.mean(x)), float(np.std(x, ddof=1) / np.sqrt(n)) if n > 1 else 0.0


def ibp_statistic(
    F: CylinderFunctional,
    G: CylinderFunctional,
    h: CameronMartinPath,
    n_paths: int,
    seed: int,
    label: str = "",
    expected: float | None = None,
    threads: int | None = None,
) -> IBPReport:
    """Monte Carlo ``E[(d_h F) G]`` against ``E[F d_h^* G]``.

    The combined standard error is that of the per-path difference, which
    is the right yardstick since both sides are evaluated on the same paths.
    """
    if n_paths < 1000:
        raise ContractError("ibp_statistic needs at least 1000 paths")

    def work(omega, idx):
        return cylinder_partial(F, h, omega) * G(omega), F(omega) * dh_star(G, h, omega)

    res = _paths(n_paths, seed, h.grid, h.k, threads, work)
    lhs = np.concatenate([r[0] for r in res])
    rhs = np.concatenate([r[1] for r in res])
    lm, ls = _mean_se(lhs)
    rm, rs = _mean_se(rhs)
    dm, ds = _mean_se(lhs - rhs)
    ok = abs(dm) <= IBP_SIGMAS * ds
    if expected is not None:
        ok = ok and abs(lm - expected) <= IBP_SIGMAS * ls and abs(rm - expected) <= IBP_SIGMAS * rs
    return IBPReport(label, lm, ls, rm, rs, dm, ds, n_paths, expected, bool(ok))


def ibp_battery_reports(n_paths: int = 100_000, seed: int = 0, n_steps: int = 256, threads=None) -> list[IBPReport]:
    grid = PathGrid(n_steps)
    out = []
    for label, F, G, hname in catalog.ibp_battery():
        h = catalog.direction(hname, grid, 2)
        expected = None
        if label == "closed-form":
            expected = float(h.values[grid.index_of(F.times[0]), 0])
        out.append(ibp_statistic(F, G, h, n_paths, seed, label, expected, threads))
    return out


# ------------------------------------------------------- convergence tables


@dataclass(frozen=True)
class ConvergenceRow:
    parameter: float
    estimate: float
    stderr: float
    n_paths: int
    excluded: int


@dataclass
class ConvergenceTable:
    kind: str
    model: str
    p: int
    seed: int
    rows: list[ConvergenceRow] = field(default_factory=list)

    @property
    def parameters(self) -> list[float]:
        return [r.parameter for r in self.rows]

    def records(self) -> list[dict]:
        return [
            {"kind": self.kind, "model": self.model, "p": self.p, **asdict(r), "N": r.n_paths, "seed": self.seed}
            for r in self.rows
        ]

    def decreasing(self) -> bool:
        """Last estimate below the first by two combined standard errors, when the first is resolved."""
        first, last = self.rows[0], self.rows[-1]
        if first.estimate <= 5 * first.stderr:
            return True
        return last.estimate <= first.estimate - 2 * np.hypot(first.stderr, last.stderr)

    def vanishes(self) -> bool:
        last = self.rows[-1]
        return last.estimate <= 3 * last.stderr

    def excluded_fraction(self) -> float:
        return max((r.excluded / max(1, r.n_paths + r.excluded) for r in self.rows), default=0.0)


def sup_distance(A: np.ndarray, B: np.ndarray, time_axis: int = 1) -> np.ndarray:
    """Per-path ``max_j |A_j - B_j|`` (Euclidean/Frobenius over trailing axes); NaN marks excluded paths."""
    diff = np.asarray(A, dtype=float) - np.asarray(B, dtype=float)
    diff = np.moveaxis(diff, time_axis, 1)
    per_t = np.sqrt(np.sum(diff.reshape(diff.shape[:2] + (-1,)) ** 2, axis=-1))
    with np.errstate(invalid="ignore"):
        return np.where(np.any(np.isnan(per_t), axis=1), np.nan, np.max(per_t, axis=1))


def lp_row(sups: np.ndarray, p: int, parameter: float) -> ConvergenceRow:
    if p not in (2, 4):
        raise ContractError("p must be 2 or 4")
    ok = np.isfinite(sups)
    vals = sups[ok] ** p
    mean, se = _mean_se(vals) if len(vals) else (float("nan"), float("nan"))
    return ConvergenceRow(float(parameter), mean, se, int(ok.sum()), int((~ok).sum()))


def lp_sup_distance(
    pair: Callable[[BrownianPath], tuple[np.ndarray, np.ndarray]],
    p: int,
    n_paths: int,
    seed: int,
    grid: PathGrid,
    k: int,
    parameter: float = 0.0,
    threads: int | None = None,
) -> ConvergenceRow:
    """``E sup_j |A_j - B_j|^p`` for processes ``pair(omega) -> (A, B)`` of shape ``(paths, n+1, ...)``."""
    res = _paths(n_paths, seed, grid, k, threads, lambda om, idx: sup_distance(*pair(om)))
    return lp_row(np.concatenate(res), p, parameter)


def _mask_blown(x: np.ndarray, flow: FlowTrajectory) -> np.ndarray:
    if not np.any(flow.blown):
        return x
    x = np.array(x, dtype=float)
    x[flow.blown] = np.nan
    return x


# Margin, in cutoff-argument units, by which every reference state must sit
# inside a flat region before a block is declared inactive.
FLAT_MARGIN = 0.05


def _inactive_m(ref_flow: FlowTrajectory, m: float) -> bool:
    """``phi_m == 1`` with margin on every state of every path in the block."""
    with np.errstate(invalid="ignore"):
        r = np.linalg.norm(ref_flow.states, axis=-1)
    return bool(np.all(np.isfinite(r)) and np.max(r) <= m - FLAT_MARGIN)


def _inactive_n(model: GroupModel, ref_flow: FlowTrajectory, n: int) -> bool:
    """``v_n == 1`` with margin on every state of every path in the block."""
    if not np.all(np.isfinite(ref_flow.states)):
        return False
    s = make_psi(model.dim, n)._arg(ref_flow.adjoints)[2]
    return bool(np.max(s) <= -FLAT_MARGIN)


def _study_block(kind, model, params, spec, f, h, omega, shortcut=True):
    """Per-path sup distances ``(len(params), paths)`` for one block.

    With ``shortcut`` a parameter whose cutoff is flat along every
    reference path is not re-integrated: the coupled flow would reproduce
    the reference bit for bit, so its distances are exactly zero.
    """
    mask = "mask"
    paths = omega.batch_shape[0]
    if kind == "Theta_n":
        full = make_coefficient(model, "full")
        ref_flow = solve_rolling(model, full, omega, on_blowup=mask)
        ref = solve_theta(model, full, ref_flow, omega, h)
        out = []
        for n in params:
            if shortcut and _inactive_n(model, ref_flow, int(n)):
                out.append(np.zeros(paths))
                continue
            coeff = make_coefficient(model, "v_n", CutoffSpec(m=spec.m, n=int(n), transition_width=spec.transition_width))
            fl = solve_rolling(model, coeff, omega, on_blowup=mask)
            out.append(sup_distance(_mask_blown(solve_theta(model, coeff, fl, omega, h), fl), ref))
        return np.stack(out)

    v = make_coefficient(model, "v")
    ref_flow = solve_rolling(model, v, omega, on_blowup=mask)
    ref = _mask_blown(_study_process(kind, model, v, ref_flow, omega, f, h), ref_flow)
    out = []
    for m in params:
        if shortcut and _inactive_m(ref_flow, float(m)):
            out.append(np.zeros(paths))
            continue
        width = spec.transition_width if spec.transition_width is not None and spec.transition_width <= m else None
        coeff = make_coefficient(model, "u_m", CutoffSpec(m=float(m), n=spec.n, transition_width=width))
        fl = solve_rolling(model, coeff, omega, on_blowup=mask)
        out.append(sup_distance(_mask_blown(_study_process(kind, model, coeff, fl, omega, f, h), fl), ref))
    return np.stack(out)


def _study_process(kind, model, coeff, flow, omega, f, h):
    if kind == "eta_m":
        return f(flow.states)
    if kind == "adjoint_m":
        return solve_adjoint(model, flow, omega)
    return solve_theta(model, coeff, flow, omega, h)


def run_convergence_study(
    kind: str,
    model: GroupModel | str,
    p_list: Sequence[int] = (2, 4),
    parameters: Sequence[float] | None = None,
    n_paths: int = 2000,
    seed: int = 0,
    n_steps: int = 2048,
    spec: CutoffSpec | None = None,
    f: str = "poly",
    h: str = "wave",
    threads: int | None = None,
    zero_h: bool = False,
    shortcut: bool = True,
) -> dict[int, ConvergenceTable]:
    """One ``ConvergenceTable`` per ``p`` for the coupled pair selected by ``kind``.

    ``eta_m``: ``f(eta^m)`` vs ``f(eta)``; ``adjoint_m``: matrix routes with
    ``u_m`` vs ``v``; ``theta_m``: ``theta`` with ``u_m`` vs ``v``;
    ``Theta_n``: ``theta`` with ``v_n`` vs the ``u = 1`` variation.
    """
    if kind not in STUDY_KINDS:
        raise ContractError(f"unknown study kind {kind!r}")
    model = get_model(model) if isinstance(model, str) else model
    if parameters is None:
        parameters = DEFAULT_N if kind == "Theta_n" else DEFAULT_M
    parameters = list(parameters)
    if parameters != sorted(parameters) or not parameters:
        raise ContractError("parameters must be non-empty and sorted ascending")
    for p in p_list:
        if p not in (2, 4):
            raise ContractError("p must be 2 or 4")
    spec = spec or CutoffSpec()
    grid = PathGrid(n_steps)
    fn = catalog.scalar_field(f)
    hp = catalog.zero_direction(grid, model.k) if zero_h else catalog.direction(h, grid, model.k)
    res = _paths(n_paths, seed, grid, model.k, threads,
                 lambda om, idx: _study_block(kind, model, parameters, spec, fn, hp, om, shortcut))
    sups = np.concatenate(res, axis=1)
    tables = {}
    for p in p_list:
        tables[p] = ConvergenceTable(kind, model.label, p, seed, [lp_row(s, p, q) for s, q in zip(sups, parameters)])
    return tables


def blowup_exceeds_tolerance(tables: Sequence[ConvergenceTable]) -> bool:
    return any(t.excluded_fraction() > BLOWUP_FRACTION for t in tables)


# -------------------------------------------------- adjoint two-route study


@dataclass(frozen=True)
class RateStudy:
    label: str
    n_steps: list[int]
    errors: list[float]
    rate: float

    @property
    def ratios(self) -> list[float]:
        return [a / b for a, b in zip(self.errors, self.errors[1:])]


def fitted_rate(n_steps: Sequence[int], errors: Sequence[float]) -> float:
    """Least-squares slope of ``-log2 error`` against ``log2 n``."""
    slope = np.polyfit(np.log2(n_steps), np.log2(errors), 1)[0]
    return float(-slope)


def adjoint_crosscheck(
    model: GroupModel | str,
    kind: str = "full",
    n_list: Sequence[int] = (1024, 2048, 4096, 8192),
    n_paths: int = 64,
    seed: int = 0,
    spec: CutoffSpec | None = None,
    threads: int | None = None,
) -> RateStudy:
    """RMS over grid and paths of ``|W_j - Ad(xi_j)|_F`` on dyadically coupled grids."""
    model = get_model(model) if isinstance(model, str) else model
    n_list = sorted(n_list)
    coeff = make_coefficient(model, kind, spec)
    finest = PathGrid(n_list[-1])

    def work(omega, idx):
        out = []
        for n in n_list:
            om = coarsen(omega, n_list[-1] // n)
            fl = solve_rolling(model, coeff, om)
            W = solve_adjoint(model, fl, om)
            err = np.sum((W - fl.adjoints) ** 2, axis=(-2, -1))
            out.append(np.sum(np.mean(err, axis=-1)))
        return np.array(out)

    sq = np.sum(np.stack(_paths(n_paths, seed, finest, model.k, threads, work)), axis=0)
    errors = [float(np.sqrt(s / n_paths)) for s in sq]
    rate = fitted_rate(n_list, errors) if all(e > 0 for e in errors) else float("inf")
    return RateStudy(f"{model.label}/{kind}", list(n_list), errors, rate)


def theta_sup_moment(
    model: GroupModel | str, p_list: Sequence[int] = (2, 4), n_list: Sequence[int] = (2048, 4096),
    n_paths: int = 1000, seed: int = 0, h: str = "wave", threads: int | None = None,
) -> dict[int, list[ConvergenceRow]]:
    """``E sup |Theta|^p`` on coupled grids: for each ``p`` one row per grid size."""
    model = get_model(model) if isinstance(model, str) else model
    n_list = sorted(n_list)
    coeff = make_coefficient(model, "full")

    def work(omega, idx):
        out = []
        for n in n_list:
            om = coarsen(omega, n_list[-1] // n)
            fl = solve_rolling(model, coeff, om)
            Th = solve_Theta(fl, catalog.direction(h, om.grid, model.k))
            out.append(sup_distance(Th, np.zeros_like(Th)))
        return np.stack(out)

    sups = np.concatenate(_paths(n_paths, seed, PathGrid(n_list[-1]), model.k, threads, work), axis=1)
    return {p: [lp_row(s, p, n) for s, n in zip(sups, n_list)] for p in p_list}


def explosion_count(
    model: GroupModel | str, kind: str = "full", n_paths: int = 10_000, n_steps: int = 4096, seed: int = 0,
    threshold: float = EXPLOSION_PROXY_NORM, spec: CutoffSpec | None = None, threads: int | None = None,
    block_size: int = 1024,
) -> int:
    """Paths whose coordinate norm ever exceeds ``threshold`` (blown paths count as exceeding)."""
    model = get_model(model) if isinstance(model, str) else model
    coeff = make_coefficient(model, kind, spec)

    def work(omega, idx):
        try:
            fl = solve_rolling(model, coeff, omega, on_blowup="mask")
        except IntegrationBlowup:
            return len(idx)
        with np.errstate(invalid="ignore"):
            norms = np.linalg.norm(fl.states, axis=-1)
        return int(np.sum(fl.blown | np.any(norms > threshold, axis=-1)))

    return int(sum(_paths(n_paths, seed, PathGrid(n_steps), model.k, threads, work, block_size)))
