"""Command-line front end: ``affsym {classify,scan,verify,construct}``.

Runs are configured by flags or by a JSON document with the same keys::

    {"command": "scan", "surface": "z2z2", "grid": "t=-1:1:5,u=-1:1:5,v=-1:1:5",
     "tolerances": {"classify": 1e-7}, "output": {"path": "out.json", "format": "json"},
     "seed": 0}

A composed surface replaces the id by an object::

    {"family": "proper_warped", "sphere": "unit_sphere2",
     "curve": {"gamma1": [...8 coefficients...], "gamma2": [...], "domain": [0.2, 1.2]}}

Curve coefficients refer to the basis 1, t, t², t³, eᵗ, e⁻ᵗ, cosh t, sinh t.
Exit status: 0 all checks pass, 1 check failures, 2 configuration or domain errors.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import math
import os
import sys
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from . import __version__
from .affine_core import GeometryError, apparatus
from .catalog import (
    CurveSpec,
    DefinitenessError,
    build_surface,
    curve_sign_report,
    validate_definiteness,
)
from .functions import CURVE_BASIS
from .symmetry import DEFAULT_TOL, ClassificationError, stabilizer_pair, symmetry_residual
from .verifier import (
    RESIDUAL_TOLERANCES,
    check_structure,
    fundamental_batch,
    grid_points,
    parse_grid,
    scan,
    warped_case,
)

SCHEMA = 1
COMMANDS = ("classify", "scan", "verify", "construct")
FORMATS = ("json", "csv")
CONFIG_KEYS = {"command", "surface", "point", "grid", "tolerances", "output", "seed", "structure"}
SURFACE_KEYS = {"family", "sphere", "curve"}
CURVE_KEYS = {"gamma1", "gamma2", "domain"}
OUTPUT_KEYS = {"path", "format"}
SYMMETRY_RESIDUAL_TOL = 1e-6


class ConfigError(ValueError):
    """Malformed or inconsistent run configuration (exit status 2)."""


@dataclass
class RunConfig:
    command: str
    surface: str | dict
    point: tuple[float, ...] | None = None
    grid: tuple[tuple[float, float, int], ...] | None = None
    tolerances: dict[str, float] = field(default_factory=dict)
    output_path: str | None = None
    output_format: str = "json"
    seed: int = 0
    structure: bool = False

    @property
    def tol(self) -> float:
        return float(self.tolerances.get("classify", DEFAULT_TOL))

    def canonical(self) -> dict:
        """Normalized config used for hashing (no timestamp, no output location)."""
        return {
            "command": self.command,
            "surface": self.surface,
            "point": None if self.point is None else [float(x) for x in self.point],
            "grid": None if self.grid is None else [[float(a), float(b), int(n)] for a, b, n in self.grid],
            "tolerances": {k: float(self.tolerances[k]) for k in sorted(self.tolerances)},
            "format": self.output_format,
            "seed": int(self.seed),
            "structure": bool(self.structure),
        }

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


# --------------------------------------------------------------------------
# config parsing


def _parse_point(value) -> tuple[float, ...]:
    if isinstance(value, str):
        parts = [p for p in value.split(",") if p.strip()]
    else:
        parts = list(value)
    try:
        pt = tuple(float(p) for p in parts)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"point must be numbers: {value!r}") from exc
    if len(pt) != 3 or not all(math.isfinite(x) for x in pt):
        raise ConfigError("point needs three finite coordinates")
    return pt


def _parse_grid_value(value):
    if isinstance(value, str):
        try:
            return parse_grid(value)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        axes = tuple((float(a), float(b), int(n)) for a, b, n in value)
    except (TypeError, ValueError) as exc:
        raise ConfigError("grid must be a string or three [start, stop, count] triples") from exc
    if len(axes) != 3 or any(n < 1 for _, _, n in axes):
        raise ConfigError("grid needs three axes with counts >= 1")
    return axes


def _check_surface_value(value):
    if isinstance(value, str):
        return value
    if not isinstance(value, dict):
        raise ConfigError("surface must be a catalog id or an object")
    unknown = set(value) - SURFACE_KEYS
    if unknown:
        raise ConfigError(f"unknown surface keys: {sorted(unknown)}")
    if "family" not in value or "sphere" not in value:
        raise ConfigError("composed surface needs 'family' and 'sphere'")
    curve = value.get("curve")
    if curve is not None:
        if not isinstance(curve, dict):
            raise ConfigError("curve must be an object")
        unknown = set(curve) - CURVE_KEYS
        if unknown:
            raise ConfigError(f"unknown curve keys: {sorted(unknown)}")
        if set(curve) != CURVE_KEYS:
            raise ConfigError("curve needs gamma1, gamma2 and domain")
        for key in ("gamma1", "gamma2"):
            if len(curve[key]) != len(CURVE_BASIS):
                raise ConfigError(f"curve {key} needs {len(CURVE_BASIS)} coefficients")
        if len(curve["domain"]) != 2 or not float(curve["domain"][0]) < float(curve["domain"][1]):
            raise ConfigError("curve domain must be [start, stop] with start < stop")
    return value


def _check_tolerances(tols) -> dict[str, float]:
    if not isinstance(tols, dict):
        raise ConfigError("tolerances must be an object")
    allowed = {"classify"} | set(RESIDUAL_TOLERANCES)
    unknown = set(tols) - allowed
    if unknown:
        raise ConfigError(f"unknown tolerance keys: {sorted(unknown)}")
    out = {}
    for k, v in tols.items():
        try:
            v = float(v)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"tolerance {k!r} must be a number") from exc
        if not (v > 0 and math.isfinite(v)):
            raise ConfigError(f"tolerance {k!r} must be positive")
        out[k] = v
    return out


def config_from_mapping(data: dict) -> RunConfig:
    """Validate a config mapping; unknown keys are rejected."""
    if not isinstance(data, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(data) - CONFIG_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    command = data.get("command")
    if command not in COMMANDS:
        raise ConfigError(f"command must be one of {', '.join(COMMANDS)}")
    if "surface" not in data:
        raise ConfigError("config needs a surface")
    out = data.get("output") or {}
    if not isinstance(out, dict) or set(out) - OUTPUT_KEYS:
        raise ConfigError("output must be an object with 'path' and/or 'format'")
    fmt = out.get("format") or "json"
    if fmt not in FORMATS:
        raise ConfigError(f"format must be one of {', '.join(FORMATS)}")
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer")
    return RunConfig(
        command=command,
        surface=_check_surface_value(data["surface"]),
        point=None if data.get("point") is None else _parse_point(data["point"]),
        grid=None if data.get("grid") is None else _parse_grid_value(data["grid"]),
        tolerances=_check_tolerances(data.get("tolerances") or {}),
        output_path=out.get("path"),
        output_format=fmt,
        seed=seed,
        structure=bool(data.get("structure", False)),
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="affsym", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"affsym {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; flags given explicitly override it")
        p.add_argument("--surface", help="catalog id, e.g. z2z2 or proper_warped:unit_sphere2")
        p.add_argument("--point", help="x,y,z parameter point")
        p.add_argument("--grid", help="t=a:b:n,u=a:b:n,v=a:b:n")
        p.add_argument("--tol", type=float, help="classification tolerance")
        p.add_argument("--output", help="report path (default: stdout)")
        p.add_argument("--format", choices=FORMATS)
        p.add_argument("--seed", type=int)
        if name == "verify":
            p.add_argument("--structure", action="store_true", help="add structure-equation and case checks")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    data: dict = {}
    if args.config:
        try:
            with open(args.config, encoding="utf-8") as fh:
                data = json.load(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        if data.get("command", args.command) != args.command:
            raise ConfigError("config command differs from the subcommand")
    data["command"] = args.command
    if args.surface is not None:
        data["surface"] = args.surface
    if args.point is not None:
        data["point"] = args.point
    if args.grid is not None:
        data["grid"] = args.grid
    if args.tol is not None:
        data.setdefault("tolerances", {})
        data["tolerances"] = dict(data["tolerances"], classify=args.tol)
    if args.output is not None or args.format is not None:
        out = dict(data.get("output") or {})
        if args.output is not None:
            out["path"] = args.output
        if args.format is not None:
            out["format"] = args.format
        elif args.output and args.output.endswith(".csv"):
            out["format"] = "csv"
        data["output"] = out
    if args.seed is not None:
        data["seed"] = args.seed
    if getattr(args, "structure", False):
        data["structure"] = True
    return config_from_mapping(data)


def resolve_surface(value):
    try:
        if isinstance(value, str):
            return build_surface(value)
        name = f"{value['family']}:{value['sphere']}"
        curve = None
        if value.get("curve"):
            c = value["curve"]
            curve = CurveSpec.from_coefficients(c["gamma1"], c["gamma2"], c["domain"])
        return build_surface(name, curve=curve)
    except DefinitenessError as exc:
        raise ConfigError(f"surface fails the definiteness condition: {exc}") from exc
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"cannot build surface: {exc}") from exc


# --------------------------------------------------------------------------
# commands


def _clean(value):
    """Recursively convert to JSON-safe builtins; non-finite floats become None."""
    if isinstance(value, dict):
        return {str(k): _clean(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(v) for v in value]
    if isinstance(value, np.ndarray):
        return _clean(value.tolist())
    if isinstance(value, (bool, np.bool_)):
        return bool(value)
    if isinstance(value, (int, np.integer)):
        return int(value)
    if isinstance(value, (float, np.floating)):
        v = float(value)
        return v if math.isfinite(v) else None
    return value


def _points(cfg: RunConfig, surface) -> np.ndarray:
    if cfg.grid is not None:
        return grid_points(cfg.grid)
    if cfg.point is not None:
        return np.array([cfg.point], dtype=float)
    return np.asarray(surface.domain, dtype=float).mean(axis=1)[None]


def _threads() -> int | None:
    raw = os.environ.get("AFFSYM_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError as exc:
        raise ConfigError("AFFSYM_THREADS must be an integer") from exc
    if n < 1:
        raise ConfigError("AFFSYM_THREADS must be >= 1")
    return n


def run_classify(cfg, surface):
    if cfg.grid is not None:
        raise ConfigError("classify takes --point, not --grid")
    pt = _points(cfg, surface)[0]
    try:
        app = apparatus(surface, pt)
        rep = stabilizer_pair(app.C, app.S, cfg.tol)
    except GeometryError as exc:
        raise ConfigError(f"{type(exc).__name__}: {exc}") from exc
    except ClassificationError as exc:
        return [{"point": list(pt), "error": str(exc)}], False
    res = symmetry_residual(rep, app.C, app.S, seed=cfg.seed)
    row = {"point": [float(x) for x in pt], **rep.to_dict()}
    row["symmetry_residual"] = res.max_normalized
    row["diagnostics"] = {k: app.diagnostics[k] for k in sorted(app.diagnostics)}
    return [row], res.max_normalized <= SYMMETRY_RESIDUAL_TOL


def run_scan(cfg, surface):
    pts = _points(cfg, surface)
    g = scan(surface, pts, tol=cfg.tol, threads=_threads(), seed=cfg.seed,
             tolerances={k: v for k, v in cfg.tolerances.items() if k != "classify"})
    rows = [p.to_dict() for p in g.points]
    ok = g.passed and all(
        p.symmetry_residual is not None and p.symmetry_residual <= SYMMETRY_RESIDUAL_TOL for p in g.points
    )
    return rows, ok, {"summary": g.summary}


def run_verify(cfg, surface):
    pts = _points(cfg, surface)
    tols = {k: v for k, v in cfg.tolerances.items() if k != "classify"}
    rows, ok = [], True
    for pt, recs in zip(pts, fundamental_batch(surface, pts, tolerances=tols)):
        if isinstance(recs, Exception):
            rows.append({"point": [float(x) for x in pt], "name": None, "error": f"{type(recs).__name__}: {recs}"})
            ok = False
            continue
        for r in recs:
            rows.append({"point": [float(x) for x in pt], **r.to_dict(), "error": None})
            ok &= r.passed
    extra = {}
    if cfg.structure:
        try:
            st = check_structure(surface, tol=cfg.tol)
            wc = warped_case(surface, pts if len(pts) > 1 else None, tol=cfg.tol)
        except ValueError as exc:
            raise ConfigError(f"structure checks unavailable: {exc}") from exc
        extra["structure"] = [r.to_dict() for r in st.records]
        extra["warped_case"] = wc.to_dict()
        ok &= st.passed and not wc.dichotomy_violated
    return rows, ok, extra


def run_construct(cfg, surface):
    pts = _points(cfg, surface)
    inside = np.asarray(surface.contains(pts))
    pos = surface.position(pts)
    rows = [
        {"point": [float(x) for x in p], "position": [float(x) for x in q], "inside": bool(i)}
        for p, q, i in zip(pts, pos, inside)
    ]
    validity = validate_definiteness(surface)
    extra = {"validity": _clean(validity.__dict__)}
    if surface.curve is not None and surface.family:
        extra["curve"] = _clean(
            curve_sign_report(
                surface.curve, surface.family, getattr(surface.sphere, "kind", None)
            ).__dict__
        )
    return rows, bool(validity.passed and inside.all()), extra


RUNNERS = {"classify": run_classify, "scan": run_scan, "verify": run_verify, "construct": run_construct}


def run(cfg: RunConfig) -> tuple[dict, bool]:
    """Execute a config; returns the report document and the pass flag."""
    surface = resolve_surface(cfg.surface)
    out = RUNNERS[cfg.command](cfg, surface)
    rows, ok = out[0], out[1]
    extra = out[2] if len(out) > 2 else {}
    doc = {
        "schema": SCHEMA,
        "meta": {
            "version": __version__,
            "command": cfg.command,
            "surface": getattr(surface, "id", None),
            "config_hash": cfg.hash(),
            "seed": cfg.seed,
            "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        },
        **extra,
        "passed": bool(ok),
        "results": rows,
    }
    return _clean(doc), ok


# --------------------------------------------------------------------------
# serialization


def _flatten(prefix: str, value, out: dict) -> None:
    if isinstance(value, dict):
        for k in value:
            _flatten(f"{prefix}.{k}" if prefix else str(k), value[k], out)
    elif isinstance(value, list) and value and all(isinstance(v, dict) and "name" in v for v in value):
        for v in value:
            for k in v:
                if k != "name":
                    _flatten(f"{prefix}.{v['name']}.{k}", v[k], out)
    elif isinstance(value, list):
        for i, v in enumerate(value):
            _flatten(f"{prefix}.{i}", v, out)
    else:
        out[prefix] = value


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def to_csv(doc: dict) -> str:
    """Per-row CSV; columns follow first appearance, so order is stable for a config."""
    flat = []
    for row in doc["results"]:
        d: dict = {}
        _flatten("", row, d)
        flat.append(d)
    cols: list[str] = []
    for d in flat:
        for k in d:
            if k not in cols:
                cols.append(k)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for d in flat:
        w.writerow([_cell(d.get(c)) for c in cols])
    return buf.getvalue()


def to_json(doc: dict) -> str:
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else 2
    try:
        cfg = config_from_args(args)
        doc, ok = run(cfg)
        text = to_csv(doc) if cfg.output_format == "csv" else to_json(doc)
        if cfg.output_path:
            try:
                with open(cfg.output_path, "w", encoding="utf-8", newline="") as fh:
                    fh.write(text)
            except OSError as exc:
                raise ConfigError(f"cannot write report: {exc}") from exc
        else:
            sys.stdout.write(text)
    except ConfigError as exc:
        print(f"affsym: error: {exc}", file=sys.stderr)
        return 2
    return 0 if ok else 1


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
