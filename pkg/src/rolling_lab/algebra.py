"""Finite-dimensional nilpotent Lie algebras in a fixed basis.

Vectors are plain numpy arrays of coefficients in the basis ``X_1..X_dim``;
every operation broadcasts over leading axes, so a batch of paths can be
pushed through in one call.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from math import factorial
from pathlib import Path
from typing import Any

import numpy as np

from .tolerances import EXACT_TOL

MAX_BCH_STEP = 4


class ContractError(ValueError):
    """Raised when an argument does not conform to the algebra."""


class UnsupportedStepError(ValueError):
    """Raised when a BCH product is requested for an algebra of step > 4."""


@dataclass(frozen=True, eq=False)
class LieAlgebraSpec:
    """Structure constants ``structure[i, j, k]`` with ``[X_i, X_j] = sum_k c_ij^k X_k``."""

    dim: int
    structure: np.ndarray
    step: int
    name: str = ""

    def __post_init__(self):
        c = np.asarray(self.structure, dtype=float)
        if c.shape != (self.dim, self.dim, self.dim):
            raise ContractError(f"structure tensor must have shape {(self.dim,) * 3}, got {c.shape}")
        if self.step < 1:
            raise ContractError("nilpotency step must be positive")
        c.setflags(write=False)
        object.__setattr__(self, "structure", c)
        # nonzero c_ij^k paired as (i <= j), grouped by k: brackets of batched
        # vectors cost a handful of elementwise products instead of a matmul
        terms = {}
        for i, j, k in sorted({(min(a, b), max(a, b), k) for a, b, k in zip(*np.nonzero(c))}):
            cji = float(c[j, i, k]) if i != j else 0.0
            terms.setdefault(int(k), []).append((int(i), int(j), float(c[i, j, k]), cji))
        object.__setattr__(self, "_terms", terms)

    @property
    def basis(self) -> np.ndarray:
        return np.eye(self.dim)


def _check(alg: LieAlgebraSpec, *xs: np.ndarray) -> list[np.ndarray]:
    out = []
    for x in xs:
        x = np.asarray(x, dtype=float)
        if x.shape[-1:] != (alg.dim,):
            raise ContractError(f"expected trailing dimension {alg.dim}, got shape {x.shape}")
        out.append(x)
    return out


def bracket(alg: LieAlgebraSpec, x, y) -> np.ndarray:
    x, y = np.broadcast_arrays(*_check(alg, x, y))
    out = np.zeros(x.shape)
    for k, entries in alg._terms.items():
        acc = out[..., k]
        for i, j, cij, cji in entries:
            acc += cij * (x[..., i] * y[..., j]) + cji * (x[..., j] * y[..., i])
    return out


def ad_matrix(alg: LieAlgebraSpec, x) -> np.ndarray:
    """Matrix of ``ad_x``; column ``j`` is ``[x, X_j]``."""
    (x,) = _check(alg, x)
    d = alg.dim
    return np.swapaxes((x @ alg.structure.reshape(d, d * d)).reshape(x.shape + (d,)), -1, -2)


def exp_ad(alg: LieAlgebraSpec, x) -> np.ndarray:
    """``e^{ad_x}`` as the finite sum ``sum_{j<=step} ad_x^j / j!``."""
    a = ad_matrix(alg, x)
    out = np.broadcast_to(np.eye(alg.dim), a.shape).copy()
    term = out.copy()
    for j in range(1, alg.step + 1):
        term = term @ a
        out += term / factorial(j)
    return out


def bch_log_product(alg: LieAlgebraSpec, x, y) -> np.ndarray:
    """``z`` with ``exp(z) = exp(x) exp(y)``, BCH truncated at order 4 (exact for step <= 4)."""
    if alg.step > MAX_BCH_STEP:
        raise UnsupportedStepError(f"BCH truncation supports step <= {MAX_BCH_STEP}, got {alg.step}")
    x, y = _check(alg, x, y)
    z = x + y
    if alg.step == 1:
        return z
    xy = bracket(alg, x, y)
    z = z + 0.5 * xy
    if alg.step == 2:
        return z
    x_xy = bracket(alg, x, xy)
    y_xy = bracket(alg, y, xy)
    z = z + (x_xy - y_xy) / 12.0
    if alg.step == 3:
        return z
    return z - bracket(alg, y, x_xy) / 24.0


@dataclass(frozen=True)
class StructureReport:
    antisymmetry: float
    jacobi: float
    declared_step: int
    verified_step: int | None
    passed: bool


def lower_central_step(alg: LieAlgebraSpec, tol: float = EXACT_TOL) -> int | None:
    """Smallest ``s`` with ``g^{(s+1)} = 0`` in the lower central series, or None if not nilpotent."""
    ads = [ad_matrix(alg, e) for e in alg.basis]
    span = np.eye(alg.dim)
    for s in range(1, alg.dim + 1):
        images = np.concatenate([a @ span for a in ads], axis=1)
        if images.size == 0 or np.max(np.abs(images), initial=0.0) <= tol:
            return s
        u, sv, _ = np.linalg.svd(images, full_matrices=False)
        rank = int(np.sum(sv > tol * max(1.0, sv[0])))
        span = u[:, :rank]
    return None


def structure_check(alg: LieAlgebraSpec) -> StructureReport:
    c = alg.structure
    anti = float(np.max(np.abs(c + c.transpose(1, 0, 2)), initial=0.0))
    # sum_m c_ij^m c_mk^l + cyclic(i, j, k)
    t = np.einsum("ijm,mkl->ijkl", c, c)
    jac = t + t.transpose(1, 2, 0, 3) + t.transpose(2, 0, 1, 3)
    jacobi = float(np.max(np.abs(jac), initial=0.0))
    verified = lower_central_step(alg)
    ok = (
        anti <= EXACT_TOL
        and jacobi <= EXACT_TOL
        and verified is not None
        and verified <= alg.step
    )
    return StructureReport(anti, jacobi, alg.step, verified, ok)


def from_brackets(dim: int, step: int, brackets, name: str = "") -> LieAlgebraSpec:
    """Build an algebra from ``(i, j, k, c)`` entries (1-based, ``i < j``) with antisymmetric completion."""
    c = np.zeros((dim, dim, dim))
    for i, j, k, val in brackets:
        if not (1 <= i < j <= dim and 1 <= k <= dim):
            raise ContractError(f"bad bracket index ({i}, {j}, {k}) for dim {dim}")
        c[i - 1, j - 1, k - 1] += val
        c[j - 1, i - 1, k - 1] -= val
    return LieAlgebraSpec(dim, c, step, name)


def load_algebra(source: str | Path | dict[str, Any]) -> LieAlgebraSpec:
    """Load ``{"dim": n, "step": s, "brackets": [{"i":1,"j":2,"k":3,"c":1.0}, ...]}``."""
    if isinstance(source, dict):
        data = source
        name = data.get("name", "custom")
    else:
        path = Path(source)
        data = json.loads(path.read_text())
        name = data.get("name", path.stem)
    unknown = set(data) - {"dim", "step", "brackets", "name"}
    if unknown:
        raise ContractError(f"unknown keys in algebra file: {sorted(unknown)}")
    entries = [(int(b["i"]), int(b["j"]), int(b["k"]), float(b["c"])) for b in data["brackets"]]
    return from_brackets(int(data["dim"]), int(data["step"]), entries, name)


def abelian(dim: int) -> LieAlgebraSpec:
    return LieAlgebraSpec(dim, np.zeros((dim, dim, dim)), 1, f"abelian:{dim}")


def filiform(dim: int) -> LieAlgebraSpec:
    """Standard filiform algebra ``[X_1, X_j] = X_{j+1}``; dim 3 is Heisenberg, dim 4 the Engel algebra."""
    if dim < 3:
        raise ContractError("filiform algebras need dim >= 3")
    entries = [(1, j, j + 1, 1.0) for j in range(2, dim)]
    return from_brackets(dim, dim - 1, entries, f"filiform:{dim}")


def heisenberg() -> LieAlgebraSpec:
    return from_brackets(3, 2, [(1, 2, 3, 1.0)], "heisenberg")


def engel() -> LieAlgebraSpec:
    """``[X_1, X_2] = X_3``, ``[X_1, X_3] = X_4``."""
    return from_brackets(4, 3, [(1, 2, 3, 1.0), (1, 3, 4, 1.0)], "paper-example")
