"""Command line front end: config parsing, study execution, artifacts.

A run reads an optional YAML config, applies flag overrides, executes one
convergence study, and writes results.csv, results.md, and run.log to the
output directory.  Exit codes: 0 clean, 1 any failed row or runtime error,
2 bad configuration.
"""

from __future__ import annotations

import argparse
import sys
import time
from dataclasses import dataclass, fields as dc_fields
from pathlib import Path

import numpy as np
import yaml

from .assembly import SchemeParameters
from .exceptions import ConfigError
from .harness import MODES, _MODE_EPSILON, convergence_study
from .problems import BUILTIN_NAMES, builtin_problem, plane_problem

_CONFIG_KEYS = {
    "problem",
    "n",
    "beta_minus",
    "beta_plus",
    "mode",
    "epsilon",
    "sigma0_factor",
    "wrong_plane",
    "deterministic",
    "seed",
    "out",
    "solver_tol",
    "solver_max_iter",
}


@dataclass(frozen=True)
class RunConfig:
    problem: object = "sphere"      # builtin name or {"kind": "plane", ...}
    n: tuple = (10, 20, 30, 40)
    beta_minus: float = 1.0
    beta_plus: float = 100.0
    mode: str = "sppife"
    epsilon: int = -1
    sigma0_factor: float = 10.0
    wrong_plane: bool = False
    deterministic: bool = True
    seed: int = 42
    out: str = "results"
    solver_tol: float = 1e-10
    solver_max_iter: int = None

    def __post_init__(self):
        ns = tuple(int(v) for v in self.n)
        if not ns:
            raise ConfigError("n: mesh ladder is empty")
        if any(b <= a for a, b in zip(ns, ns[1:])):
            raise ConfigError(f"n: ladder must be strictly increasing, got {ns}")
        if any(v < 1 for v in ns):
            raise ConfigError(f"n: entries must be positive, got {ns}")
        object.__setattr__(self, "n", ns)
        if self.mode not in MODES:
            raise ConfigError(f"mode: {self.mode!r} not in {MODES}")
        if self.epsilon not in (-1, 0, 1):
            raise ConfigError(f"epsilon: must be -1, 0, or 1, got {self.epsilon}")
        if self.mode in _MODE_EPSILON and self.epsilon != _MODE_EPSILON[self.mode]:
            raise ConfigError(
                f"epsilon: {self.epsilon} conflicts with mode {self.mode!r} "
                f"(implies {_MODE_EPSILON[self.mode]})"
            )
        if not self.sigma0_factor > 0:
            raise ConfigError(f"sigma0_factor: must be > 0, got {self.sigma0_factor}")
        if not (self.beta_minus > 0 and self.beta_plus > 0):
            raise ConfigError("beta_minus/beta_plus must be positive")
        if not self.solver_tol > 0:
            raise ConfigError(f"solver_tol: must be > 0, got {self.solver_tol}")


def _resolve(raw: dict) -> RunConfig:
    unknown = set(raw) - _CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    raw = dict(raw)
    mode = raw.get("mode", "sppife")
    if raw.get("epsilon") is None:
        raw["epsilon"] = _MODE_EPSILON.get(mode, -1)
    raw.setdefault("mode", mode)
    try:
        return RunConfig(**{k: v for k, v in raw.items() if v is not None})
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def parse_config(text) -> RunConfig:
    raw = yaml.safe_load(text)
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of keys to values")
    return _resolve(raw)


def _build_problem(config: RunConfig):
    spec = config.problem
    if isinstance(spec, str):
        if spec not in BUILTIN_NAMES:
            raise ConfigError(f"problem: {spec!r} not in {sorted(BUILTIN_NAMES)}")
        return builtin_problem(
            spec, beta_minus=config.beta_minus, beta_plus=config.beta_plus
        )
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "plane":
            try:
                normal = [float(v) for v in spec["normal"]]
                offset = float(spec["offset"])
            except (KeyError, TypeError, ValueError) as exc:
                raise ConfigError(
                    "plane problem needs 'normal' (3 floats) and 'offset'"
                ) from exc
            if len(normal) != 3 or not np.linalg.norm(normal) > 0:
                raise ConfigError("plane normal must be a nonzero 3-vector")
            return plane_problem(
                normal, offset, config.beta_minus, config.beta_plus
            )
        raise ConfigError(f"problem: unknown custom kind {kind!r}")
    raise ConfigError("problem must be a builtin name or a custom mapping")


def run(config: RunConfig) -> int:
    out_dir = Path(config.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    lines = []

    def log(msg):
        lines.append(msg)

    log("config:")
    for f in dc_fields(RunConfig):
        log(f"  {f.name}: {getattr(config, f.name)}")
    problem = _build_problem(config)
    log(f"problem notes for {problem.name}:")
    log(f"  allow_boundary_interface: {problem.allow_boundary_interface}")
    for note in problem.notes:
        log(f"  note: {note}")

    scheme = None
    if config.mode != "interpolation":
        scheme = SchemeParameters(
            epsilon=config.epsilon, sigma0_factor=config.sigma0_factor
        )
        log(f"sigma0: {scheme.sigma0(config.beta_minus, config.beta_plus)}")

    t0 = time.perf_counter()
    study = convergence_study(
        problem,
        config.n,
        config.mode,
        scheme=scheme,
        wrong_plane=config.wrong_plane,
        seed=config.seed,
        solver_tol=config.solver_tol,
        solver_max_iter=config.solver_max_iter,
        log=log,
    )
    log(f"total seconds: {time.perf_counter() - t0:.1f}")
    for row in study.rows:
        log(f"mesh {row.label}:")
        for key in sorted(row.meta):
            log(f"  {key}: {row.meta[key]}")
        if row.error:
            log(f"  error: {row.error}")

    (out_dir / "results.csv").write_text(study.to_csv())
    title = f"# {study.problem_name} {study.mode}"
    if config.wrong_plane:
        title += " (wrong-plane triangles)"
    (out_dir / "results.md").write_text(title + "\n\n" + study.to_markdown())
    (out_dir / "run.log").write_text("\n".join(lines) + "\n")
    return 1 if any(r.error for r in study.rows) else 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ife3d",
        description="Convergence studies for trilinear immersed finite elements.",
    )
    parser.add_argument("--config", help="YAML config file")
    parser.add_argument("--problem", help="builtin problem name")
    parser.add_argument("--n", help="comma-separated mesh ladder, e.g. 20,30,40")
    parser.add_argument("--beta-minus", type=float, dest="beta_minus")
    parser.add_argument("--beta-plus", type=float, dest="beta_plus")
    parser.add_argument("--epsilon", type=int, choices=(-1, 0, 1))
    parser.add_argument("--sigma0-factor", type=float, dest="sigma0_factor")
    parser.add_argument("--mode", choices=MODES)
    parser.add_argument("--wrong-plane", action="store_true", default=None,
                        dest="wrong_plane")
    parser.add_argument("--deterministic", action="store_true", default=None)
    parser.add_argument("--out", help="output directory")
    args = parser.parse_args(argv)

    try:
        raw = {}
        if args.config:
            text = Path(args.config).read_text()
            loaded = yaml.safe_load(text) or {}
            if not isinstance(loaded, dict):
                raise ConfigError("config must be a mapping of keys to values")
            raw.update(loaded)
        for key in ("problem", "beta_minus", "beta_plus", "epsilon",
                    "sigma0_factor", "mode", "wrong_plane", "deterministic",
                    "out"):
            val = getattr(args, key)
            if val is not None:
                raw[key] = val
        if args.n is not None:
            try:
                raw["n"] = [int(v) for v in args.n.split(",") if v.strip()]
            except ValueError as exc:
                raise ConfigError(f"--n: {exc}") from exc
        config = _resolve(raw)
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    try:
        return run(config)
    except Exception as exc:  # noqa: BLE001 - single reporting point
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
