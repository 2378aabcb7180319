"""Command-line pipeline: analyze, spectrum, basins, connections, complex, correlate, model-check.

Every subcommand reads the same TOML configuration (``--config``) or falls back
to defaults; ``run`` executes the configured task list in order and writes one
file per stage into ``output_dir``.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import sys
import warnings
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, Mapping, Optional, Sequence

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from . import correlation as corr
from . import morse_complex as mc
from . import spectrum as sp
from .critical import CriticalPointRecord, check_hypotheses, find_critical_points
from .errors import ArtifactError
from .expr import SPHERE_VARS, TORUS_VARS, compile_expression
from .flowsim import basin_map, count_connections
from .manifold import BuiltinKind, ManifoldModel, box_grid, model_from_config, sphere_mercator_grid, torus_grid
from .model_currents import LinearModelSpec, dump, generator, property_suite

log = logging.getLogger("morse_ruelle")

STAGES = ("analyze", "spectrum", "basins", "connections", "complex", "correlate", "model-check")


class ConfigError(ArtifactError):
    """Malformed or inconsistent configuration."""


class StageError(ArtifactError):
    def __init__(self, stage: str, exc: BaseException):
        super().__init__(f"stage {stage!r} failed: {type(exc).__name__}: {exc}")
        self.stage = stage
        self.cause = exc


# ---------------------------------------------------------------------------
# configuration
# ---------------------------------------------------------------------------

@dataclass
class Tolerances:
    newton_tol: float = 1e-12
    rtol: float = 1e-10
    merge_tol: float = 1e-9
    capture_radius: float = 1e-4


@dataclass
class Grids:
    critical_density: int = 16
    basin_density: int = 128
    n_shoot: int = 360
    correlation_nodes: list = field(default_factory=list)


@dataclass
class SpectrumSettings:
    degrees: list = field(default_factory=lambda: [0])
    cutoff: float = 3.0


@dataclass
class CorrelateSettings:
    psi1: str = ""
    psi2: str = "1"
    tmax: float = 25.0
    samples: int = 251
    rates: int = 3
    degree: int = 0
    limit_rtol: float = 1e-3


@dataclass
class RunConfig:
    model: dict = field(default_factory=lambda: {"kind": "torus"})
    tolerances: Tolerances = field(default_factory=Tolerances)
    grids: Grids = field(default_factory=Grids)
    spectrum: SpectrumSettings = field(default_factory=SpectrumSettings)
    correlate: CorrelateSettings = field(default_factory=CorrelateSettings)
    tasks: list = field(default_factory=lambda: list(STAGES))
    output_dir: str = "out"
    jobs: int = 1

    @classmethod
    def from_mapping(cls, data: Mapping[str, Any]) -> "RunConfig":
        data = dict(data)
        sections = {"tolerances": Tolerances, "grids": Grids, "spectrum": SpectrumSettings,
                    "correlate": CorrelateSettings}
        kwargs: dict[str, Any] = {}
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown top-level keys {sorted(unknown)}")
        for name, value in data.items():
            if name in sections:
                if not isinstance(value, Mapping):
                    raise ConfigError(f"[{name}] must be a table")
                sub = sections[name]
                allowed = {f.name for f in fields(sub)}
                bad = set(value) - allowed
                if bad:
                    raise ConfigError(f"unknown keys in [{name}]: {sorted(bad)}")
                kwargs[name] = sub(**value)
            else:
                kwargs[name] = value
        cfg = cls(**kwargs)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path: str | Path) -> "RunConfig":
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except (OSError, tomllib.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from None
        return cls.from_mapping(data)

    def validate(self) -> None:
        if not isinstance(self.model, Mapping) or "kind" not in self.model:
            raise ConfigError("[model] needs a 'kind'")
        for f in fields(self.tolerances):
            if not getattr(self.tolerances, f.name) > 0:
                raise ConfigError(f"tolerance {f.name} must be positive")
        for name in ("critical_density", "basin_density", "n_shoot"):
            if int(getattr(self.grids, name)) < 1:
                raise ConfigError(f"grids.{name} must be positive")
        bad = [t for t in self.tasks if t not in STAGES]
        if bad:
            raise ConfigError(f"unknown tasks {bad}; choose from {list(STAGES)}")
        if self.jobs < 1:
            raise ConfigError("jobs must be at least 1")
        if self.spectrum.cutoff <= 0:
            raise ConfigError("spectrum.cutoff must be positive")
        if self.correlate.tmax <= 0 or self.correlate.samples < 2:
            raise ConfigError("correlate.tmax must be positive and samples >= 2")


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------

def _clean(v):
    if isinstance(v, dict):
        return {str(k): _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if isinstance(v, np.ndarray):
        return _clean(v.tolist())
    if isinstance(v, (np.floating, np.integer, np.bool_)):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def write_json(path: Path, obj) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(_clean(obj), fh, sort_keys=True, indent=2)
        fh.write("\n")


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\r\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# ---------------------------------------------------------------------------
# pipeline
# ---------------------------------------------------------------------------

class Pipeline:
    """Holds the model and the results of completed stages."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = Path(cfg.output_dir)
        self.model: ManifoldModel = model_from_config(cfg.model)
        self._records: Optional[list[CriticalPointRecord]] = None
        self._connections = None

    @property
    def records(self) -> list[CriticalPointRecord]:
        if self._records is None:
            self._records = find_critical_points(self.model, self.cfg.grids.critical_density,
                                                 self.cfg.tolerances.newton_tol)
        return self._records

    def variables(self) -> tuple[str, ...]:
        if self.model.builtin_kind is BuiltinKind.FLAT_TORUS2:
            return TORUS_VARS
        if self.model.is_sphere:
            return SPHERE_VARS
        return tuple(f"x{i + 1}" for i in range(self.model.dim))

    def grid(self):
        nodes = list(self.cfg.grids.correlation_nodes)
        if self.model.builtin_kind is BuiltinKind.FLAT_TORUS2:
            n1, n2 = (nodes + [256, 256])[:2] if len(nodes) != 1 else (nodes[0], nodes[0])
            return torus_grid(int(n1), int(n2))
        if self.model.is_sphere:
            neta, nphi = (nodes + [3201, 64])[:2] if nodes else (3201, 64)
            return sphere_mercator_grid(int(neta), int(nphi))
        return box_grid(self.model, int(nodes[0]) if nodes else 64)

    # stages ------------------------------------------------------------

    def analyze(self) -> dict:
        rep = check_hypotheses(self.records)
        obj = {"model": self.model.name, "critical_points": [r.to_json() for r in self.records],
               "hypotheses": rep.to_json()}
        write_json(self.out / "critical.json", obj)
        return obj

    def spectrum(self, degrees=None, cutoff=None) -> dict:
        degrees = self.cfg.spectrum.degrees if degrees is None else degrees
        cutoff = self.cfg.spectrum.cutoff if cutoff is None else cutoff
        res = {}
        for k in degrees:
            table = sp.enumerate_resonances(self.records, int(k), float(cutoff), self.cfg.tolerances.merge_tol)
            write_json(self.out / f"spectrum_k{k}.json", table.to_json())
            res[k] = table
        return res

    def basins(self, density=None) -> None:
        density = self.cfg.grids.basin_density if density is None else density
        bm = basin_map(self.model, self.records, int(density), jobs=self.cfg.jobs,
                       capture_radius=self.cfg.tolerances.capture_radius, rtol=self.cfg.tolerances.rtol)
        coords = [f"x{i + 1}" for i in range(bm.grid.shape[1])]
        write_csv(self.out / "basins.csv", [*coords, "alpha_id", "omega_id"], bm.to_rows())

    def connections(self, n_shoot=None) -> list:
        n_shoot = self.cfg.grids.n_shoot if n_shoot is None else n_shoot
        recs = self.records
        cons = [count_connections(self.model, recs, a, b, n_shoot=int(n_shoot), rtol=self.cfg.tolerances.rtol,
                                  capture_radius=self.cfg.tolerances.capture_radius)
                for a in recs for b in recs if b.index == a.index + 1]
        self._connections = cons
        write_json(self.out / "connections.json", [c.to_json() for c in cons])
        return cons

    def complex(self) -> dict:
        if self._connections is None:
            self.connections()
        data = mc.build(self.records, self._connections)
        times = [0.1, 1.0, 10.0]
        obj = {**data.to_json(), "morse_inequalities": mc.morse_inequalities(data),
               "poincare_duality": mc.poincare_duality(data),
               "lefschetz": mc.lefschetz(self.records, times).to_json(),
               "koszul": mc.koszul_homology(data)}
        write_json(self.out / "complex.json", obj)
        return obj

    def correlate(self, settings: Optional[CorrelateSettings] = None) -> dict:
        s = settings or self.cfg.correlate
        if not s.psi1:
            raise ConfigError("correlate needs psi1")
        names = self.variables()
        psi1 = compile_expression(s.psi1, names)
        psi2 = compile_expression(s.psi2, names)
        grid = self.grid()
        times = np.linspace(0.0, float(s.tmax), int(s.samples))
        if s.degree == 0:
            trace = corr.trace_k0(self.model, psi1, psi2, times, grid)
        elif s.degree == self.model.dim:
            trace = corr.trace_kn(self.model, psi1, psi2, times, grid)
        else:
            raise ConfigError("correlate.degree must be 0 or the dimension")
        write_csv(self.out / "correlation.csv", ["t", "C"], trace.rows())
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always", corr.IllConditioned)
            fit = corr.fit_decay(trace, n_rates=int(s.rates))
        report = {"fit": fit.to_json(), "limit": trace.limit,
                  "warnings": [str(w.message) for w in caught]}
        if s.degree == 0:
            lead = corr.leading_term(self.model, self.records, psi1, psi2, grid)
            scale = max(abs(lead), float(np.max(np.abs(trace.values))) * 1e-3)
            report["leading_term"] = lead
            report["limit_consistent"] = bool(abs(trace.limit - lead) <= s.limit_rtol * scale)
        table = sp.enumerate_resonances(self.records, int(s.degree), max(fit.rates + [1.0]) * 1.5 + 1.0,
                                        self.cfg.tolerances.merge_tol)
        try:
            report["comparison"] = corr.compare_to_spectrum(fit, table)
        except corr.UnmatchedRate as exc:
            report["comparison"] = exc.report
        write_json(self.out / "fit.json", report)
        if report.get("limit_consistent") is False:
            raise ArtifactError(f"empirical limit {trace.limit} disagrees with leading term {report['leading_term']}")
        return report

    def model_check(self, n_random: int = 500, dump_spec: Optional[tuple[int, int]] = None) -> dict:
        rows = property_suite(n_random=n_random)
        obj = {"rows": [{"name": r.name, "cases": r.cases, "failures": r.failures} for r in rows],
               "passed": all(r.passed for r in rows)}
        if dump_spec is not None:
            n, rr = dump_spec
            spec = LinearModelSpec.rational([-1] * rr + [1] * (n - rr))
            obj["dump"] = dump(generator(spec, (1,) * n, (), ()))
        write_json(self.out / "model_check.json", obj)
        return obj

    def run_stage(self, name: str):
        fn = {"analyze": self.analyze, "spectrum": self.spectrum, "basins": self.basins,
              "connections": self.connections, "complex": self.complex, "correlate": self.correlate,
              "model-check": self.model_check}[name]
        try:
            return fn()
        except Exception as exc:
            raise StageError(name, exc) from exc


def run(config_path: str | Path, jobs: Optional[int] = None, output_dir: Optional[str] = None) -> int:
    """Execute the configured tasks; returns a process exit status."""
    cfg = RunConfig.load(config_path)
    if jobs is not None:
        cfg.jobs = jobs
    if output_dir is not None:
        cfg.output_dir = output_dir
    pipe = Pipeline(cfg)
    for stage in cfg.tasks:
        log.info("stage %s", stage)
        try:
            pipe.run_stage(stage)
        except StageError as exc:
            write_json(pipe.out / "failure.json", {"stage": exc.stage, "error": type(exc.cause).__name__,
                                                   "message": str(exc.cause)})
            print(str(exc), file=sys.stderr)
            return 1
    return 0


# ---------------------------------------------------------------------------
# argument parsing
# ---------------------------------------------------------------------------

def _config_from_args(args) -> RunConfig:
    cfg = RunConfig.load(args.config) if args.config else RunConfig()
    if args.model:
        cfg.model = {"kind": args.model, "params": dict(cfg.model.get("params", {})) if cfg.model.get("kind") == args.model else {}}
    for item in args.param or []:
        key, _, val = item.partition("=")
        if not _:
            raise ConfigError(f"--param expects key=value, got {item!r}")
        cfg.model.setdefault("params", {})[key] = float(val)
    if args.out:
        cfg.output_dir = args.out
    if args.jobs:
        cfg.jobs = args.jobs
    cfg.validate()
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="morse-ruelle", description=__doc__.splitlines()[0])
    p.add_argument("--verify", action="store_true", help="run the acceptance table and exit")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command")

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration")
    common.add_argument("--model", help="torus, sphere or custom (overrides the config)")
    common.add_argument("--param", action="append", help="model parameter key=value (repeatable)")
    common.add_argument("--out", help="output directory")
    common.add_argument("--jobs", type=int, help="worker processes")

    sub.add_parser("analyze", parents=[common], help="critical points and hypotheses")
    s = sub.add_parser("spectrum", parents=[common], help="resonance tables")
    s.add_argument("--degree", type=int, action="append")
    s.add_argument("--cutoff", type=float)
    s = sub.add_parser("basins", parents=[common], help="basin map CSV")
    s.add_argument("--density", type=int)
    s = sub.add_parser("connections", parents=[common], help="signed connection counts")
    s.add_argument("--n-shoot", type=int)
    sub.add_parser("complex", parents=[common], help="Morse complex and topology checks")
    s = sub.add_parser("correlate", parents=[common], help="correlation trace and decay fit")
    s.add_argument("--psi1")
    s.add_argument("--psi2")
    s.add_argument("--tmax", type=float)
    s.add_argument("--samples", type=int)
    s.add_argument("--rates", type=int)
    s.add_argument("--degree", type=int)
    s = sub.add_parser("model-check", parents=[common], help="symbolic eigencurrent suite")
    s.add_argument("--random", type=int, default=500)
    s.add_argument("--dump", nargs=2, type=int, metavar=("N", "R"), help="print a sample generator")
    s = sub.add_parser("run", help="execute a configuration")
    s.add_argument("config")
    s.add_argument("--jobs", type=int)
    s.add_argument("--out")
    s = sub.add_parser("verify", help="acceptance table")
    s.add_argument("--criteria", help="comma-separated criterion numbers")
    s.add_argument("--json", help="write results to this file")
    return p


def _verify(criteria: Optional[str] = None, json_path: Optional[str] = None) -> int:
    from .acceptance import run_all

    select = [int(c) for c in criteria.split(",")] if criteria else None
    results = run_all(select)
    if json_path:
        write_json(Path(json_path), [r.to_json() for r in results])
    return 0 if all(r.passed for r in results) else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.verify or args.command == "verify":
        return _verify(getattr(args, "criteria", None), getattr(args, "json", None))
    if args.command is None:
        build_parser().print_help()
        return 2
    try:
        if args.command == "run":
            return run(args.config, args.jobs, args.out)
        cfg = _config_from_args(args)
        pipe = Pipeline(cfg)
        cmd = args.command
        if cmd == "analyze":
            obj = pipe.analyze()
            print(json.dumps(_clean(obj["hypotheses"]), sort_keys=True, indent=2))
        elif cmd == "spectrum":
            for k, table in pipe.spectrum(args.degree, args.cutoff).items():
                print(f"k={k}: " + ", ".join(f"{e.lam:.6g}(x{e.multiplicity})" for e in table.entries))
        elif cmd == "basins":
            pipe.basins(args.density)
        elif cmd == "connections":
            for c in pipe.connections(args.n_shoot):
                print(json.dumps(_clean(c.to_json()), sort_keys=True))
        elif cmd == "complex":
            obj = pipe.complex()
            print(f"c={obj['c']} betti={obj['betti']} euler={obj['euler']}")
        elif cmd == "correlate":
            s = cfg.correlate
            for name in ("psi1", "psi2", "tmax", "samples", "rates", "degree"):
                val = getattr(args, name)
                if val is not None:
                    setattr(s, name, val)
            rep = pipe.correlate(s)
            print(json.dumps(_clean({"rates": rep["fit"]["rates"],
                                     "polynomial_degree": rep["fit"]["polynomial_degree"],
                                     "limit": rep["limit"]}), sort_keys=True))
        elif cmd == "model-check":
            obj = pipe.model_check(args.random, tuple(args.dump) if args.dump else None)
            for row in obj["rows"]:
                tag = "PASS" if row["failures"] == 0 else "FAIL"
                print(f"[{tag}] {row['name']}: {row['cases']} cases, {row['failures']} failures")
            if "dump" in obj:
                print(obj["dump"])
            return 0 if obj["passed"] else 1
    except ArtifactError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
