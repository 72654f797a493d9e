"""Batch experiment runner: ``rolling-lab <command> [--config FILE] [overrides]``.

Exit codes: 0 all checks pass, 2 configuration error, 3 statistical
failure, 4 integration blowup on more than 1% of paths.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__, catalog
from . import malliavin as ml
from .algebra import ContractError
from .cutoff import KINDS, CutoffSpec, make_coefficient
from .flow import SCHEMES, IntegrationBlowup, export_trajectory, solve_rolling, solve_theta
from .group import get_model
from .parallel import blocks, map_blocks
from .tolerances import BLOWUP_FRACTION, FD_STEP
from .wiener import PathGrid, sample_brownian_batch

EXIT_OK, EXIT_CONFIG, EXIT_STAT, EXIT_BLOWUP = 0, 2, 3, 4
COMMANDS = ("simulate", "verify-derivative", "cutoff-study", "ibp", "adjoint-crosscheck")

# Per-command defaults for the path count and grid when the config leaves them unset.
DEFAULT_PATHS = {"simulate": 4, "verify-derivative": 100, "cutoff-study": 2000, "ibp": 100_000, "adjoint-crosscheck": 64}
DEFAULT_STEPS = {"simulate": 1024, "verify-derivative": 4096, "cutoff-study": 2048, "ibp": 256, "adjoint-crosscheck": 8192}
RATE_BAND = (0.6, 1.4)


class ConfigError(ContractError):
    pass


@dataclass
class ExperimentConfig:
    model: str = "heisenberg"
    coefficient: str = "full"
    cutoff: dict = field(default_factory=lambda: {"m": 4.0, "n": 1, "transition_width": None})
    scheme: str = "geometric-heun"
    n_steps: int | None = None
    seed: int = 0
    paths: int | None = None
    p_list: list = field(default_factory=lambda: [2, 4])
    kinds: list = field(default_factory=lambda: list(ml.STUDY_KINDS))
    m_list: list = field(default_factory=lambda: list(ml.DEFAULT_M))
    n_list: list = field(default_factory=lambda: list(ml.DEFAULT_N))
    f: str = "poly"
    h: str = "wave"
    battery_models: list = field(default_factory=lambda: ["abelian:2", "heisenberg", "paper-example"])
    functions: list = field(default_factory=lambda: list(catalog.TEST_FUNCTIONS))
    directions: list = field(default_factory=lambda: list(catalog.DIRECTIONS))
    eps: float = FD_STEP
    grids: list = field(default_factory=lambda: [1024, 2048, 4096, 8192])
    out: str = "out"

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        return cls(**data)

    def resolve(self, command: str) -> "ExperimentConfig":
        """Materialise command defaults and validate everything before any simulation."""
        cfg = ExperimentConfig(**asdict(self))
        if cfg.paths is None:
            cfg.paths = DEFAULT_PATHS[command]
        if cfg.n_steps is None:
            cfg.n_steps = DEFAULT_STEPS[command]
        cfg.cutoff = {"m": 4.0, "n": 1, "transition_width": None, **cfg.cutoff}
        cfg.validate(command)
        return cfg

    def cutoff_spec(self) -> CutoffSpec:
        c = self.cutoff
        return CutoffSpec(m=float(c["m"]), n=int(c["n"]), transition_width=c["transition_width"])

    def validate(self, command: str):
        try:
            extra = set(self.cutoff) - {"m", "n", "transition_width"}
            if extra:
                raise ConfigError(f"unknown cutoff keys: {', '.join(sorted(extra))}")
            self.cutoff_spec()
            PathGrid(self.n_steps)
            if int(self.paths) < 0:
                raise ConfigError("paths must be >= 0")
            if int(self.seed) < 0 or int(self.seed) >= 2**64:
                raise ConfigError("seed must be an unsigned 64-bit integer")
            for label in [self.model] + list(self.battery_models):
                get_model(label)
            if self.coefficient not in KINDS:
                raise ConfigError(f"unknown coefficient kind {self.coefficient!r}")
            if self.scheme not in SCHEMES:
                raise ConfigError(f"unknown scheme {self.scheme!r}")
            for p in self.p_list:
                if p not in (2, 4):
                    raise ConfigError("p_list entries must be 2 or 4")
            for k in self.kinds:
                if k not in ml.STUDY_KINDS:
                    raise ConfigError(f"unknown study kind {k!r}")
            for lst, name in ((self.m_list, "m_list"), (self.n_list, "n_list"), (self.grids, "grids")):
                if not lst or list(lst) != sorted(lst):
                    raise ConfigError(f"{name} must be non-empty and ascending")
            for n in self.grids:
                PathGrid(int(n))
            for name in [self.f] + list(self.functions):
                catalog.scalar_field(name)
            for name in [self.h] + list(self.directions):
                if name not in catalog.DIRECTIONS:
                    raise ConfigError(f"unknown direction {name!r}")
            if not self.eps > 0:
                raise ConfigError("eps must be positive")
            if command == "ibp" and self.paths < 1000:
                raise ConfigError("ibp needs at least 1000 paths")
        except (ContractError, ValueError, TypeError, KeyError) as exc:
            raise ConfigError(str(exc)) from exc


# ------------------------------------------------------------------ output


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if v is None:
        return ""
    return str(v)


def write_table(out: Path, name: str, records: list[dict], columns: list[str] | None = None):
    """``name.csv`` plus a ``name.json`` mirror with the same records."""
    columns = columns or (list(records[0]) if records else [])
    with open(out / f"{name}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in records:
            w.writerow([_cell(r.get(c)) for c in columns])
    clean = [{c: (float(r[c]) if isinstance(r.get(c), np.floating) else r.get(c)) for c in columns} for r in records]
    with open(out / f"{name}.json", "w") as fh:
        json.dump(clean, fh, indent=1)
        fh.write("\n")


def write_manifest(out: Path, cfg: ExperimentConfig, command: str, extra: dict | None = None):
    resolved = asdict(cfg)
    with open(out / "config.json", "w") as fh:
        json.dump(resolved, fh, indent=1, sort_keys=True)
        fh.write("\n")
    manifest = {"command": command, "version": __version__, "seed": cfg.seed, "config": resolved, **(extra or {})}
    with open(out / "manifest.json", "w") as fh:
        json.dump(manifest, fh, indent=1, sort_keys=True)
        fh.write("\n")


# ---------------------------------------------------------------- commands


def cmd_simulate(cfg: ExperimentConfig, out: Path, threads=None) -> int:
    model = get_model(cfg.model)
    coeff = make_coefficient(model, cfg.coefficient, cfg.cutoff_spec())
    grid = PathGrid(cfg.n_steps)
    h = catalog.direction(cfg.h, grid, model.k)
    errors: list[dict] = []
    if cfg.paths:
        (out / "paths").mkdir(exist_ok=True)

    def work(b):
        omega = sample_brownian_batch(grid, model.k, cfg.seed, b)
        fl = solve_rolling(model, coeff, omega, scheme=cfg.scheme, on_blowup="mask")
        theta = solve_theta(model, coeff, fl, omega, h)
        return b, fl, theta

    for b, fl, theta in map_blocks(work, blocks(cfg.paths), threads):
        for r, idx in enumerate(b):
            if fl.blown[r]:
                errors.append({"path": idx, "error": "integration-blowup", "step": int(fl.first_bad_step[r])})
                continue
            single = type(fl)(fl.grid, model, fl.states[r], fl.coeff_values[r], fl.coeff_predictor[r], fl.scheme,
                              np.zeros((), bool), np.full((), -1))
            export_trajectory(out / "paths" / f"path_{idx:06d}.csv", single, include_adjoints=True, variation=theta[r])
    write_table(out, "errors", errors, ["path", "error", "step"])
    write_manifest(out, cfg, "simulate", {"paths_written": cfg.paths - len(errors), "blown": len(errors)})
    if cfg.paths and len(errors) / cfg.paths > BLOWUP_FRACTION:
        return EXIT_BLOWUP
    return EXIT_OK


def cmd_verify_derivative(cfg: ExperimentConfig, out: Path, threads=None) -> int:
    reports, closed = ml.verify_derivative_battery(
        cfg.battery_models, cfg.functions, cfg.directions, cfg.paths, cfg.n_steps, cfg.seed, cfg.eps, threads
    )
    write_table(out, "derivative_reports", [asdict(r) for r in reports],
                ["model", "f", "h", "path", "formula_value", "oracle_value", "rel_error", "eps", "n_steps"])
    summary = ml.summarize_battery(reports, closed)
    write_table(out, "derivative_summary", [asdict(summary)])
    write_manifest(out, cfg, "verify-derivative")
    return EXIT_OK if summary.passed else EXIT_STAT


def cmd_cutoff_study(cfg: ExperimentConfig, out: Path, threads=None) -> int:
    model = get_model(cfg.model)
    tables = []
    for kind in cfg.kinds:
        params = cfg.n_list if kind == "Theta_n" else cfg.m_list
        res = ml.run_convergence_study(kind, model, cfg.p_list, params, cfg.paths, cfg.seed, cfg.n_steps,
                                       cfg.cutoff_spec(), cfg.f, cfg.h, threads)
        for p, table in res.items():
            tables.append(table)
            recs = [
                {"kind": kind, "model": model.label, "p": p, "parameter": r.parameter, "estimate": r.estimate,
                 "stderr": r.stderr, "N": r.n_paths, "excluded_paths": r.excluded}
                for r in table.rows
            ]
            write_table(out, f"cutoff_{kind}_p{p}", recs,
                        ["kind", "model", "p", "parameter", "estimate", "stderr", "N", "excluded_paths"])
    checks = [{"kind": t.kind, "p": t.p, "decreasing": t.decreasing(), "vanishes": t.vanishes()} for t in tables]
    write_table(out, "cutoff_checks", checks)
    write_manifest(out, cfg, "cutoff-study")
    if ml.blowup_exceeds_tolerance(tables):
        return EXIT_BLOWUP
    return EXIT_OK if all(c["decreasing"] and c["vanishes"] for c in checks) else EXIT_STAT


def cmd_ibp(cfg: ExperimentConfig, out: Path, threads=None) -> int:
    reports = ml.ibp_battery_reports(cfg.paths, cfg.seed, cfg.n_steps, threads)
    recs = [{**asdict(r), "z_score": r.z_score} for r in reports]
    write_table(out, "ibp", recs)
    write_manifest(out, cfg, "ibp")
    return EXIT_OK if all(r.passed for r in reports) else EXIT_STAT


def cmd_adjoint_crosscheck(cfg: ExperimentConfig, out: Path, threads=None) -> int:
    grids = [n for n in cfg.grids if n <= cfg.n_steps] or [cfg.n_steps]
    study = ml.adjoint_crosscheck(cfg.model, cfg.coefficient, grids, cfg.paths, cfg.seed, cfg.cutoff_spec(), threads)
    recs = [{"model": study.label, "n_steps": n, "rms_error": e} for n, e in zip(study.n_steps, study.errors)]
    write_table(out, "adjoint_crosscheck", recs)
    ok = RATE_BAND[0] <= study.rate <= RATE_BAND[1]
    write_table(out, "adjoint_rate", [{"model": study.label, "rate": study.rate, "passed": ok}])
    write_manifest(out, cfg, "adjoint-crosscheck")
    return EXIT_OK if ok else EXIT_STAT


HANDLERS = {
    "simulate": cmd_simulate,
    "verify-derivative": cmd_verify_derivative,
    "cutoff-study": cmd_cutoff_study,
    "ibp": cmd_ibp,
    "adjoint-crosscheck": cmd_adjoint_crosscheck,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rolling-lab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON experiment config")
        p.add_argument("--seed", type=int)
        p.add_argument("--paths", type=int)
        p.add_argument("--steps", type=int, dest="n_steps")
        p.add_argument("--out", type=Path)
        p.add_argument("--threads", type=int, default=None, help="0 = auto; never changes results")
    return parser


def load_config(args) -> ExperimentConfig:
    data = {}
    if args.config is not None:
        try:
            data = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
    for key in ("seed", "paths", "n_steps"):
        if getattr(args, key) is not None:
            data[key] = getattr(args, key)
    if args.out is not None:
        data["out"] = str(args.out)
    try:
        cfg = ExperimentConfig.from_dict(data)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg.resolve(args.command)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args)
        if args.threads is not None and args.threads < 0:
            raise ConfigError("--threads must be >= 0")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    try:
        code = HANDLERS[args.command](cfg, out, args.threads)
    except IntegrationBlowup as exc:
        print(f"integration blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    print(f"{args.command}: exit {code} -> {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
