"""Command-line interface: ``qgt field|chern|fs-sweep|holonomy|validate``.

Settings come from built-in defaults, then an optional ``--config`` file
(TOML, or the JSON summary of an earlier run), then command-line flags; later
sources win. Exit codes: 0 success, 2 usage error, 3 compute error, 4 failed
validation.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import warnings
from dataclasses import asdict, dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from . import __version__
from .errors import CriticalRegionWarning, QGTError
from .measure import (
    SweepResult,
    chern_scan,
    detect_critical_points,
    integrated_metric_scan,
    plateaus,
    sweep_values,
)
from .models import MODEL_NAMES, DVectorFamily, HamiltonianFamily, ParameterPoint, make_family
from .qgt import DEFAULT_STEP, GridSpec, Subspace, qgt_grid
from .topology import small_loop_check
from .validate import format_table, run_checks

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover - exercised on 3.10 only
    import tomli as tomllib

SCHEMA_VERSION = 1
EXIT_OK, EXIT_USAGE, EXIT_COMPUTE, EXIT_VALIDATION = 0, 2, 3, 4
METHODS = ("direct", "lattice", "analytic", "projector")
VALUE_FLAGS = ("--sweep", "--center", "--plane", "--band-range", "--grid")

DEFAULTS: dict[str, Any] = {
    "model": "qwz",
    "mix": "default",
    "table": None,
    "m": [1.0],
    "grid": "32x32",
    "band_range": None,
    "gap_tol": 1e-8,
    "step": DEFAULT_STEP,
    "sweep": None,
    "method": None,
    "out": "qgt-out",
    "format": "csv",
    "workers": 1,
    "center": None,
    "sides": [1e-1, 1e-2, 1e-3],
    "plane": "0,1",
    "points_per_side": 8,
}


class UsageError(ValueError):
    """Invalid configuration; maps to exit code 2."""


# --- configuration -------------------------------------------------------------------


def parse_grid(text) -> tuple[int, int]:
    if isinstance(text, (list, tuple)) and len(text) == 2:
        nx, ny = text
    else:
        parts = str(text).lower().split("x")
        if len(parts) != 2:
            raise UsageError(f"grid must look like NxN, got {text!r}")
        nx, ny = parts
    try:
        nx, ny = int(nx), int(ny)
    except ValueError:
        raise UsageError(f"grid must look like NxN, got {text!r}") from None
    if nx < 4 or ny < 4:
        raise UsageError(f"grid sizes must be >= 4, got {nx}x{ny}")
    return nx, ny


def parse_band_range(text) -> tuple[int, int]:
    """``"a..b"`` selects bands ``a <= i < b`` of the ascending spectrum."""
    if isinstance(text, (list, tuple)) and len(text) == 2:
        a, b = text
    else:
        parts = str(text).split("..")
        if len(parts) != 2:
            raise UsageError(f"band range must look like a..b, got {text!r}")
        a, b = parts
    try:
        a, b = int(a), int(b)
    except ValueError:
        raise UsageError(f"band range must look like a..b, got {text!r}") from None
    if not 0 <= a < b:
        raise UsageError(f"band range {a}..{b} is empty")
    return a, b


def parse_sweep(text) -> tuple[float, float, float]:
    if isinstance(text, (list, tuple)):
        parts = list(text)
    elif isinstance(text, dict):
        parts = [text.get("start"), text.get("stop"), text.get("step")]
    else:
        parts = str(text).split(":")
    if len(parts) != 3:
        raise UsageError(f"sweep must look like start:stop:step, got {text!r}")
    try:
        start, stop, step = (float(p) for p in parts)
    except (TypeError, ValueError):
        raise UsageError(f"sweep must look like start:stop:step, got {text!r}") from None
    try:
        sweep_values(start, stop, step)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return start, stop, step


def _floats(value, name: str, count: int | None = None) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.replace(",", " ").split() if v]
    elif not isinstance(value, (list, tuple)):
        value = [value]
    try:
        out = tuple(float(v) for v in value)
    except (TypeError, ValueError):
        raise UsageError(f"{name} must be numbers, got {value!r}") from None
    if count is not None and len(out) != count:
        raise UsageError(f"{name} needs {count} values, got {len(out)}")
    if not all(math.isfinite(v) for v in out):
        raise UsageError(f"{name} must be finite")
    return out


@dataclass(frozen=True)
class RunConfig:
    model: str
    mix: str
    table: str | None
    m: tuple[float, ...]
    grid: tuple[int, int]
    band_range: tuple[int, int] | None
    gap_tol: float
    step: float
    sweep: tuple[float, float, float] | None
    method: str | None
    out: str
    format: str
    workers: int
    center: tuple[float, ...] | None
    sides: tuple[float, ...]
    plane: tuple[int, int]
    points_per_side: int

    @classmethod
    def from_mapping(cls, raw: dict[str, Any]) -> "RunConfig":
        raw = {key.replace("-", "_"): value for key, value in raw.items()}
        unknown = set(raw) - set(DEFAULTS)
        if unknown:
            raise UsageError(f"unknown config keys: {', '.join(sorted(unknown))}")
        merged = {**DEFAULTS, **{k: v for k, v in raw.items() if v is not None}}
        if merged["model"] not in MODEL_NAMES:
            raise UsageError(f"unknown model {merged['model']!r}; choose from {', '.join(MODEL_NAMES)}")
        method = merged["method"]
        if method is not None and method not in METHODS:
            raise UsageError(f"unknown method {method!r}; choose from {', '.join(METHODS)}")
        if merged["format"] not in ("csv", "json"):
            raise UsageError(f"format must be csv or json, got {merged['format']!r}")
        try:
            workers = int(merged["workers"])
            points_per_side = int(merged["points_per_side"])
        except (TypeError, ValueError):
            raise UsageError("workers and points_per_side must be integers") from None
        if workers < 1 or points_per_side < 2:
            raise UsageError("workers must be >= 1 and points_per_side >= 2")
        gap_tol, step = _floats(merged["gap_tol"], "gap_tol", 1)[0], _floats(merged["step"], "step", 1)[0]
        if gap_tol <= 0 or step <= 0:
            raise UsageError("gap_tol and step must be positive")
        sides = _floats(merged["sides"], "sides")
        if not sides or min(sides) <= 0:
            raise UsageError("sides must be positive")
        plane = tuple(int(p) for p in _floats(merged["plane"], "plane", 2))
        if plane[0] == plane[1] or min(plane) < 0:
            raise UsageError(f"plane must name two distinct coordinates, got {plane}")
        m = _floats(merged["m"], "m")
        if not m:
            raise UsageError("at least one m value is needed")
        return cls(
            model=str(merged["model"]),
            mix=str(merged["mix"]),
            table=None if merged["table"] is None else str(merged["table"]),
            m=m,
            grid=parse_grid(merged["grid"]),
            band_range=None if merged["band_range"] is None else parse_band_range(merged["band_range"]),
            gap_tol=gap_tol,
            step=step,
            sweep=None if merged["sweep"] is None else parse_sweep(merged["sweep"]),
            method=method,
            out=str(merged["out"]),
            format=str(merged["format"]),
            workers=workers,
            center=None if merged["center"] is None else _floats(merged["center"], "center"),
            sides=sides,
            plane=plane,
            points_per_side=points_per_side,
        )

    def to_dict(self) -> dict[str, Any]:
        """Config echo in the same syntax the flags and config files accept."""
        d = asdict(self)
        d["m"] = list(self.m)
        d["grid"] = f"{self.grid[0]}x{self.grid[1]}"
        d["band_range"] = None if self.band_range is None else f"{self.band_range[0]}..{self.band_range[1]}"
        d["sweep"] = None if self.sweep is None else ":".join(repr(v) for v in self.sweep)
        d["center"] = None if self.center is None else list(self.center)
        d["sides"] = list(self.sides)
        d["plane"] = f"{self.plane[0]},{self.plane[1]}"
        return d


def load_config_file(path: str | Path) -> dict[str, Any]:
    """Read a TOML config, or the ``config`` block of an earlier JSON summary."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    if path.suffix == ".json":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise UsageError(f"invalid JSON in {path}: {exc}") from None
        return dict(data.get("config", data))
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise UsageError(f"invalid TOML in {path}: {exc}") from None
    return dict(data)


def resolve_config(args: argparse.Namespace) -> RunConfig:
    raw: dict[str, Any] = {}
    if args.config:
        raw.update(load_config_file(args.config))
    for key in DEFAULTS:
        value = getattr(args, key, None)
        if value is not None:
            raw[key] = value
    return RunConfig.from_mapping(raw)


def build_family(cfg: RunConfig) -> HamiltonianFamily:
    try:
        family = make_family(cfg.model, mix=cfg.mix, table=cfg.table)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from None
    if cfg.method == "analytic" and not (isinstance(family, DVectorFamily) and family.dim == 2):
        raise UsageError(f"method 'analytic' needs a two-band d-vector model, not {cfg.model!r}")
    return family


def build_subspace(cfg: RunConfig, family: HamiltonianFamily) -> Subspace:
    if cfg.band_range is None:
        sub = Subspace.lower_half(family, gap_tol=cfg.gap_tol)
    else:
        sub = Subspace(*cfg.band_range, gap_tol=cfg.gap_tol)
    try:
        sub.validate_for(family)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    return sub


def _require_method(cfg: RunConfig, allowed: Sequence[str], default: str) -> str:
    method = cfg.method or default
    if method not in allowed:
        raise UsageError(f"method {method!r} is not available here; choose from {', '.join(allowed)}")
    return method


def _parameters(cfg: RunConfig) -> np.ndarray:
    if cfg.sweep is not None:
        return sweep_values(*cfg.sweep)
    values = np.unique(np.asarray(cfg.m, dtype=float))
    return values


# --- output --------------------------------------------------------------------------


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return "%.17g" % float(value)


def write_csv(path: Path, header: Sequence[str], rows: Sequence[Sequence]) -> None:
    """CSV with a header line; floats carry 17 significant digits."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def read_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header and float table of a file written by :func:`write_csv`."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        rows = [[float(v) for v in row] for row in reader]
    return header, np.array(rows, dtype=float).reshape(len(rows), len(header))


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def summary(command: str, cfg: RunConfig, results: dict, critical_points=(), warning_list=()) -> dict:
    return {
        "schema_version": SCHEMA_VERSION,
        "meta": {
            "command": command,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
            "code_version": __version__,
        },
        "config": cfg.to_dict(),
        "results": results,
        "critical_points": [
            {"location": c.location, "peak_value": c.peak_value, "resolution": c.resolution, "kind": c.kind}
            for c in critical_points
        ],
        "warnings": list(warning_list),
    }


def write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(_jsonable(payload), indent=2, allow_nan=False) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _tag(m: float) -> str:
    return format(m, "g")


def _emit(cfg: RunConfig, name: str, header, rows, doc: dict) -> list[Path]:
    out = _out_dir(cfg)
    written = []
    if cfg.format == "csv":
        path = out / f"{name}.csv"
        write_csv(path, header, rows)
        doc["results"].setdefault("files", []).append(path.name)
        written.append(path)
    else:
        doc["results"]["columns"] = list(header)
        doc["results"]["rows"] = [list(r) for r in rows]
    return written


# --- commands ------------------------------------------------------------------------


def cmd_field(cfg: RunConfig) -> int:
    family = build_family(cfg)
    sub = build_subspace(cfg, family)
    method = _require_method(cfg, ("projector", "analytic"), "projector")
    grid = GridSpec(*cfg.grid)
    header = ["kx", "ky", "tr_g", "g_xx", "g_xy", "g_yy", "F_xy", "singular_flag"]
    externals = [(f"field_m{_tag(m)}", (m,)) for m in cfg.m] if family.n_external else [("field", ())]
    warn_list, per_m, out = [], [], _out_dir(cfg)
    doc = summary("field", cfg, {})
    tables = []
    for name, ext in externals:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", CriticalRegionWarning)
            fg = qgt_grid(family, grid, sub, ext, cfg.step, (0, 1), method=method, workers=cfg.workers)
        warn_list.extend(f"{name}: {w}" for w in fg.warnings)
        tr_g, tr_f = fg.trace_g(), fg.trace_f()
        k = grid.points()
        rows = []
        for i in range(grid.nx):
            for j in range(grid.ny):
                gxx, gxy, gyy = tr_g[i, j, 0, 0], tr_g[i, j, 0, 1], tr_g[i, j, 1, 1]
                rows.append((k[i, j, 0], k[i, j, 1], gxx + gyy, gxx, gxy, gyy, tr_f[i, j, 0, 1], fg.singular_mask[i, j]))
        if fg.singular_count:
            warn_list.append(f"{name}: {fg.singular_count} singular cells flagged")
        per_m.append({"name": name, "external": list(ext), "singular_cells": fg.singular_count,
                      "max_tr_g": float(np.nanmax(tr_g[..., 0, 0] + tr_g[..., 1, 1]))})
        if cfg.format == "csv":
            write_csv(out / f"{name}.csv", header, rows)
        else:
            tables.append({"name": name, "columns": header, "rows": [list(r) for r in rows]})
    doc["results"] = {"fields": per_m}
    if cfg.format == "csv":
        doc["results"]["files"] = [f"{p['name']}.csv" for p in per_m]
    else:
        doc["results"]["tables"] = tables
    doc["warnings"] = warn_list
    write_json(out / "field.json", doc)
    print(f"field: wrote {len(per_m)} grid(s) to {out} ({len(warn_list)} warnings)")
    return EXIT_OK


def _sweep_rows(sweep: SweepResult) -> list[str]:
    return [f"m={sweep.parameters[i]:g}: {msg}" for i, msg in sorted(sweep.errors.items())]


def cmd_chern(cfg: RunConfig) -> int:
    family = build_family(cfg)
    sub = build_subspace(cfg, family)
    primary = _require_method(cfg, ("lattice", "direct"), "lattice")
    if family.n_external == 0:
        raise UsageError("chern sweeps need a model with an external parameter m")
    params = _parameters(cfg)
    grid = GridSpec(*cfg.grid)
    lat = chern_scan(family, params, grid, sub, "lattice", h=cfg.step, workers=cfg.workers)
    dire = chern_scan(family, params, grid, sub, "direct", h=cfg.step, workers=cfg.workers)
    rows = [
        (m, a, b, max(sa, sb))
        for m, a, b, sa, sb in zip(params, lat.values, dire.values, lat.singular_counts, dire.singular_counts)
    ]
    chosen = lat if primary == "lattice" else dire
    crit = detect_critical_points(chosen) if len(chosen) >= 5 else []
    doc = summary(
        "chern",
        cfg,
        {
            "method": primary,
            "plateaus": [{"start": a, "stop": b, "c1": c} for a, b, c in plateaus(chosen)],
            "c1_lattice": lat.values,
            "c1_direct": dire.values,
        },
        crit,
        _sweep_rows(lat) + [f"direct {w}" for w in _sweep_rows(dire)],
    )
    _emit(cfg, "chern", ["m", "c1_lattice", "c1_direct", "singular_cells"], rows, doc)
    write_json(_out_dir(cfg) / "chern.json", doc)
    text = ", ".join(f"{a:g}..{b:g}: {c:+d}" for a, b, c in plateaus(chosen)) or "none"
    print(f"chern: plateaus {text}")
    return EXIT_OK


def cmd_fs_sweep(cfg: RunConfig) -> int:
    family = build_family(cfg)
    sub = build_subspace(cfg, family)
    method = _require_method(cfg, ("projector", "analytic"), "projector")
    if cfg.sweep is None:
        raise UsageError("fs-sweep needs --sweep start:stop:step")
    if family.n_external == 0:
        raise UsageError("fs-sweep needs a model with an external parameter m")
    params = sweep_values(*cfg.sweep)
    sweep = integrated_metric_scan(
        family, params, GridSpec(*cfg.grid), sub, h=cfg.step, method=method, workers=cfg.workers
    )
    crit = detect_critical_points(sweep) if len(sweep) >= 5 else []
    rows = list(zip(params, sweep.values, sweep.singular_counts))
    doc = summary("fs-sweep", cfg, {"points": len(sweep)}, crit, _sweep_rows(sweep))
    _emit(cfg, "fs_sweep", ["m", "integrated_tr_g", "singular_cells"], rows, doc)
    write_json(_out_dir(cfg) / "fs_sweep.json", doc)
    print("fs-sweep: critical points " + (", ".join(f"{c.location:g}" for c in crit) or "none"))
    return EXIT_OK


def cmd_holonomy(cfg: RunConfig) -> int:
    family = build_family(cfg)
    sub = build_subspace(cfg, family)
    if cfg.center is None:
        raise UsageError("holonomy needs --center kx,ky")
    if len(cfg.center) != family.n_periodic:
        raise UsageError(f"center needs {family.n_periodic} momentum components")
    if family.n_external and len(cfg.m) != 1:
        raise UsageError("holonomy takes a single --m value")
    center = ParameterPoint(cfg.center, cfg.m[: family.n_external])
    if max(cfg.plane) >= center.n_directions:
        raise UsageError(f"plane {cfg.plane} exceeds the {center.n_directions} parameter coordinates")
    sides = sorted(cfg.sides, reverse=True)
    residuals = [
        small_loop_check(family, center, sub, s, cfg.plane, h=cfg.step, points_per_side=cfg.points_per_side)
        for s in sides
    ]
    rows = []
    for i, (s, r) in enumerate(zip(sides, residuals)):
        ratio = math.nan if i == 0 or r == 0 else residuals[i - 1] / r
        rows.append((s, r, ratio))
    order = None
    if len(sides) >= 2 and all(r > 0 for r in residuals):
        order = float(np.polyfit(np.log(sides), np.log(residuals), 1)[0])
    doc = summary("holonomy", cfg, {"center": str(center), "order": order, "residuals": residuals})
    _emit(cfg, "holonomy", ["side", "residual", "ratio_to_previous"], rows, doc)
    write_json(_out_dir(cfg) / "holonomy.json", doc)
    print(f"holonomy: residuals {', '.join(f'{r:.3e}' for r in residuals)}; order {order if order is None else round(order, 3)}")
    return EXIT_OK


def cmd_validate(cfg: RunConfig | None = None) -> int:
    results = run_checks()
    print(format_table(results))
    failed = [r.name for r in results if not r.passed]
    if failed:
        print(f"FAILED: {', '.join(failed)}", file=sys.stderr)
        return EXIT_VALIDATION
    return EXIT_OK


COMMANDS = {
    "field": cmd_field,
    "chern": cmd_chern,
    "fs-sweep": cmd_fs_sweep,
    "holonomy": cmd_holonomy,
    "validate": cmd_validate,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML config file or an earlier JSON summary")
    common.add_argument("--model", help=f"one of {', '.join(MODEL_NAMES)}")
    common.add_argument("--mix", help="doubled-qwz mixing: default or identity")
    common.add_argument("--table", help="d-vector CSV for --model tabulated")
    common.add_argument("--m", nargs="+", type=float, help="mass parameter value(s)")
    common.add_argument("--grid", help="momentum grid NxN")
    common.add_argument("--band-range", dest="band_range", help="tracked bands a..b (a inclusive, b exclusive)")
    common.add_argument("--gap-tol", dest="gap_tol", type=float, help="gap below which a point is singular")
    common.add_argument("--step", type=float, help="finite-difference step h")
    common.add_argument("--sweep", help="m sweep start:stop:step (inclusive)")
    common.add_argument("--method", choices=METHODS)
    common.add_argument("--out", help="output directory")
    common.add_argument("--format", choices=("csv", "json"))
    common.add_argument("--workers", type=int)
    common.add_argument("--center", help="holonomy loop center kx,ky")
    common.add_argument("--sides", nargs="+", type=float, help="holonomy loop side lengths")
    common.add_argument("--plane", help="loop plane as two coordinate indices, e.g. 0,1")
    common.add_argument("--points-per-side", dest="points_per_side", type=int)

    parser = argparse.ArgumentParser(prog="qgt", description="Quantum geometric tensor toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("field", parents=[common], help="QGT components on a momentum grid")
    sub.add_parser("chern", parents=[common], help="Chern numbers versus m")
    sub.add_parser("fs-sweep", parents=[common], help="integrated metric versus m and critical points")
    sub.add_parser("holonomy", parents=[common], help="small-loop holonomy check")
    sub.add_parser("validate", help="run the built-in invariant checks")
    return parser


def _glue_values(argv: Sequence[str]) -> list[str]:
    # argparse would read "--sweep -3:3:0.1" as two options
    out: list[str] = []
    it = iter(argv)
    for token in it:
        if token in VALUE_FLAGS:
            value = next(it, None)
            out.append(token if value is None else f"{token}={value}")
        else:
            out.append(token)
    return out


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(_glue_values(sys.argv[1:] if argv is None else argv))
    if args.command == "validate":
        return cmd_validate()
    try:
        cfg = resolve_config(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        print(f"qgt {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (QGTError, ArithmeticError, OSError) as exc:
        print(f"qgt {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_COMPUTE
    except ValueError as exc:
        print(f"qgt {args.command}: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
