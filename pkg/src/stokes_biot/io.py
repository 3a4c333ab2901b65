"""Legacy VTK snapshots, CSV tables and validated JSON configs."""

from __future__ import annotations

import csv
import hashlib
import json
import subprocess
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Optional

import jsonschema
import numpy as np

from .forms import NitscheParams, PhysParams
from .mesh import Mesh2D


class ConfigError(ValueError):
    """Config validation failure; ``errors`` lists (path, message) pairs."""

    def __init__(self, errors: list):
        self.errors = errors
        super().__init__("; ".join(f"{p or '<root>'}: {m}" for p, m in errors))


def _fmt(x) -> str:
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return str(x)


# --------------------------------------------------------------------------- VTK

@dataclass
class Snapshot:
    time: float
    mesh: Mesh2D
    point_data: dict = field(default_factory=dict)

    def validate(self) -> None:
        if not self.time >= 0:
            raise ValueError("snapshot time must be non-negative")
        nv = self.mesh.n_vertices
        for name, arr in self.point_data.items():
            if not name or any(c.isspace() for c in name):
                raise ValueError(f"invalid field name {name!r}")
            if np.asarray(arr).shape[0] != nv:
                raise ValueError(f"field {name} has {np.asarray(arr).shape[0]} values, mesh has {nv} vertices")


def snapshot_from_state(prob, y: np.ndarray, t: float) -> Snapshot:
    from .scenarios import nodal_values

    data = {name: nodal_values(prob, y, name) for name in ("v", "p_f", "q", "p_p", "U", "Udot")}
    return Snapshot(t, prob.mesh, data)


def write_vtk(snap: Snapshot, path) -> None:
    """ASCII legacy VTK unstructured grid with point data and a region cell field."""
    snap.validate()
    mesh = snap.mesh
    lines = ["# vtk DataFile Version 3.0", f"stokes-biot snapshot t={_fmt(snap.time)}", "ASCII",
             "DATASET UNSTRUCTURED_GRID", f"POINTS {mesh.n_vertices} double"]
    lines += [f"{_fmt(x)} {_fmt(y)} 0.0" for x, y in mesh.vertices]
    nt = mesh.n_triangles
    lines.append(f"CELLS {nt} {4 * nt}")
    lines += [f"3 {a} {b} {c}" for a, b, c in mesh.triangles]
    lines.append(f"CELL_TYPES {nt}")
    lines += ["5"] * nt
    lines += [f"CELL_DATA {nt}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    lines += [str(int(r)) for r in mesh.regions]
    lines.append(f"POINT_DATA {mesh.n_vertices}")
    for name, arr in snap.point_data.items():
        a = np.asarray(arr, dtype=float)
        if a.ndim == 1:
            lines += [f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
            lines += [_fmt(v) for v in a]
        else:
            lines.append(f"VECTORS {name} double")
            lines += [f"{_fmt(u)} {_fmt(v)} 0.0" for u, v in a]
    path = Path(path)
    try:
        path.write_text("\n".join(lines) + "\n", encoding="ascii")
    except OSError as exc:
        raise OSError(f"cannot write VTK file {path}: {exc}") from exc


def read_vtk(path) -> dict:
    """Parse files produced by ``write_vtk`` (points, cells, point fields)."""
    tok = Path(path).read_text(encoding="ascii").split("\n")
    out = {"points": None, "cells": None, "point_data": {}}
    i = 0
    while i < len(tok):
        line = tok[i].split()
        if not line:
            i += 1
            continue
        if line[0] == "POINTS":
            n = int(line[1])
            out["points"] = np.array([[float(v) for v in tok[i + 1 + k].split()[:2]] for k in range(n)])
            i += n + 1
        elif line[0] == "CELLS":
            n = int(line[1])
            out["cells"] = np.array([[int(v) for v in tok[i + 1 + k].split()[1:]] for k in range(n)])
            i += n + 1
        elif line[0] == "POINT_DATA":
            npts = int(line[1])
            i += 1
            while i < len(tok) and tok[i].strip():
                head = tok[i].split()
                if head[0] == "SCALARS":
                    vals = [float(tok[i + 2 + k]) for k in range(npts)]
                    out["point_data"][head[1]] = np.array(vals)
                    i += npts + 2
                elif head[0] == "VECTORS":
                    vals = [[float(v) for v in tok[i + 1 + k].split()[:2]] for k in range(npts)]
                    out["point_data"][head[1]] = np.array(vals)
                    i += npts + 1
                else:
                    break
        else:
            i += 1
    return out


# --------------------------------------------------------------------------- tables

def git_revision() -> str:
    try:
        return subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True, text=True,
                              timeout=5, cwd=Path(__file__).parent).stdout.strip() or "unknown"
    except (OSError, subprocess.SubprocessError):
        return "unknown"


def config_hash(raw: dict) -> str:
    return hashlib.sha256(json.dumps(raw, sort_keys=True).encode()).hexdigest()[:12]


def table_metadata(cfg) -> dict:
    return {"git-rev": git_revision(), "config-hash": config_hash(cfg.raw),
            "tau_ref": cfg.convergence.get("tauRef", "")}


def write_table(rows: list, path, meta: Optional[dict] = None) -> None:
    """CSV with an optional ``# key=value, ...`` metadata line before the header."""
    path = Path(path)
    cols = list(rows[0].keys()) if rows else []
    with path.open("w", newline="", encoding="utf-8") as fh:
        if meta is not None:
            fh.write("# " + ", ".join(f"{k}={_fmt(v)}" for k, v in meta.items()) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow([_fmt(r[c]) if r[c] is not None else "" for c in cols])


def read_table(path) -> tuple[list, dict]:
    meta = {}
    with Path(path).open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if lines and lines[0].startswith("#"):
        for item in lines[0][1:].split(","):
            if "=" in item:
                k, v = item.strip().split("=", 1)
                meta[k] = v
        lines = lines[1:]
    rows = []
    for rec in csv.DictReader(lines):
        row = {}
        for k, v in rec.items():
            try:
                row[k] = int(v) if v.lstrip("-").isdigit() else float(v)
            except ValueError:
                row[k] = v
        rows.append(row)
    return rows, meta


# --------------------------------------------------------------------------- configs

def load_schema() -> dict:
    return json.loads(resources.files("stokes_biot").joinpath("schema/scenario.schema.json").read_text())


def _path(err) -> str:
    parts = [str(p) for p in err.absolute_path]
    if err.validator == "required":
        missing = err.message.split("'")[1]
        parts.append(missing)
    return ".".join(parts)


def validate_config(raw: dict) -> None:
    validator = jsonschema.Draft202012Validator(load_schema())
    errors = sorted(validator.iter_errors(raw), key=lambda e: list(map(str, e.absolute_path)))
    if errors:
        raise ConfigError([(_path(e), e.message) for e in errors])


def config_from_dict(raw: dict):
    from .scenarios import ScenarioConfig, bjs_coefficient

    validate_config(raw)
    pp = dict(raw["physParams"])
    npar = dict(raw["nitscheParams"])
    mode = npar.pop("tangentialMode", "noSlip")
    if mode == "BJS" and "beta" not in pp:
        pp["beta"] = bjs_coefficient(pp["alpha"], pp["mu_f"], pp["kappa"])
    try:
        phys = PhysParams(**pp)
    except ValueError as exc:
        raise ConfigError([("physParams", str(exc))]) from exc
    try:
        nit = NitscheParams(tangential_mode=mode, **npar)
    except (ValueError, TypeError) as exc:
        raise ConfigError([("nitscheParams", str(exc))]) from exc
    cfg = ScenarioConfig(
        scenario=raw["scenario"], units=raw["units"], geometry=dict(raw["geometry"]),
        phys=phys, nit=nit, tau=raw["tau"], T_final=raw["T_final"],
        elementPreset=raw.get("elementPreset", "inf-sup"), scheme=raw.get("scheme", "monolithic"),
        output=dict(raw.get("output", {})), convergence=dict(raw.get("convergence", {})),
        precond=dict(raw.get("precond", {})), override=bool(raw.get("override", False)),
        seed=int(raw.get("seed", 0)), raw=raw,
    )
    for key in ("inflow", "source", "energy"):
        if key in raw:
            setattr(cfg, key, dict(raw[key]))
    if cfg.scheme == "algoB" and not cfg.override:
        ratio = phys.alpha ** 2 / (phys.lambda_p * phys.s_0)
        if ratio >= 1:
            raise ConfigError([("scheme", f"splitting constraint alpha^2/(lambda_p s_0) = {ratio:.3g} >= 1; "
                                          "set override=true to run anyway")])
    return cfg


def read_config(path):
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except OSError as exc:
        raise ConfigError([("", f"cannot read {path}: {exc}")]) from exc
    except json.JSONDecodeError as exc:
        raise ConfigError([("", f"invalid JSON in {path}: {exc}")]) from exc
    return config_from_dict(raw)
