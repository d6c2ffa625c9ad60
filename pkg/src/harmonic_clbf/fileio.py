"""Plain-text file formats: environment configs, field exports, contour grids,
trajectory traces, experiment reports, and run manifests.

Everything is JSON or line-oriented text; floats are written with shortest
round-trip precision so a saved field reloads bit-identically.  Writes go
through a temp file and an atomic rename, so failed commands leave no
partial outputs.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field as _dc_field

import numpy as np

from .geometry import Environment, Rect, classify
from .simulate import Trajectory
from .solver import GridSpec, NodeMask, ScalarField
from .systems import SystemKind, kind_of, planar_position, state_names
from .fields import value_at

__all__ = [
    "ConfigError",
    "RunManifest",
    "env_to_dict",
    "env_from_dict",
    "load_environment",
    "save_environment",
    "save_field",
    "load_field",
    "save_contour",
    "save_trace",
    "save_manifest",
    "save_report",
    "atomic_write_text",
]

FIELD_FORMAT = "harmonic-clbf/field-v1"


class ConfigError(ValueError):
    """Malformed or inconsistent configuration input."""


def atomic_write_text(path: str, text: str) -> None:
    """Write text to ``path`` via a temp file and rename."""
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


# ---------------------------------------------------------------------------
# Environment config
# ---------------------------------------------------------------------------


def env_to_dict(env: Environment) -> dict:
    return {
        "domain": env.domain.as_list(),
        "goal": env.goal.as_list(),
        "unsafe": [r.as_list() for r in env.unsafe],
        "barrier_level": env.barrier_level,
        "laplacian_rhs": env.laplacian_rhs,
    }


def env_from_dict(data: dict) -> Environment:
    try:
        return Environment(
            domain=Rect.from_list(data["domain"]),
            goal=Rect.from_list(data["goal"]),
            unsafe=tuple(Rect.from_list(r) for r in data.get("unsafe", [])),
            barrier_level=float(data.get("barrier_level", 1.0)),
            laplacian_rhs=float(data.get("laplacian_rhs", 0.0)),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad environment config: {exc}") from exc


def load_environment(path: str) -> Environment:
    return env_from_dict(_load_json(path))


def save_environment(path: str, env: Environment) -> None:
    atomic_write_text(path, json.dumps(env_to_dict(env), indent=2) + "\n")


def _load_json(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path} is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return data


# ---------------------------------------------------------------------------
# Field export
# ---------------------------------------------------------------------------


def save_field(path: str, fld: ScalarField, env: Environment | None = None) -> None:
    """Write a field file: header, values row-major (x fastest), mask, env."""
    grid = fld.grid
    data = {
        "format": FIELD_FORMAT,
        "nx": grid.nx,
        "ny": grid.ny,
        "domain": grid.domain.as_list(),
        "rhs": fld.rhs,
        "level": fld.level,
        "residual": fld.solve_residual,
        "values": fld.values.ravel().tolist(),
        "mask": fld.mask.tags.ravel().tolist(),
        "env": env_to_dict(env) if env is not None else None,
    }
    atomic_write_text(path, json.dumps(data) + "\n")


def load_field(path: str) -> tuple[ScalarField, Environment | None]:
    data = _load_json(path)
    if data.get("format") != FIELD_FORMAT:
        raise ConfigError(f"{path}: not a field file (format={data.get('format')!r})")
    try:
        nx, ny = int(data["nx"]), int(data["ny"])
        grid = GridSpec(Rect.from_list(data["domain"]), nx, ny)
        values = np.array(data["values"], dtype=float).reshape(ny, nx)
        tags = np.array(data["mask"], dtype=np.uint8).reshape(ny, nx)
        mask = NodeMask(grid, tags)
        fld = ScalarField(
            grid=grid,
            values=values,
            mask=mask,
            rhs=float(data["rhs"]),
            level=float(data["level"]),
            solve_residual=data.get("residual"),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"bad field file {path}: {exc}") from exc
    env = env_from_dict(data["env"]) if data.get("env") else None
    return fld, env


# ---------------------------------------------------------------------------
# Contour grid
# ---------------------------------------------------------------------------


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def save_contour(path: str, fld: ScalarField) -> None:
    """Plot-ready grid: x coordinates, y coordinates, then V row per y."""
    grid = fld.grid
    lines = [
        "# harmonic-clbf contour v1",
        "# nx ny",
        f"{grid.nx} {grid.ny}",
        "# x coordinates",
        " ".join(_fmt(v) for v in grid.xs()),
        "# y coordinates",
        " ".join(_fmt(v) for v in grid.ys()),
        "# V rows, one per y, x fastest",
    ]
    for j in range(grid.ny):
        lines.append(" ".join(_fmt(v) for v in fld.values[j]))
    atomic_write_text(path, "\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# Trajectory trace
# ---------------------------------------------------------------------------


def save_trace(
    path: str,
    traj: Trajectory,
    kind: SystemKind,
    fld: ScalarField,
    env: Environment,
) -> None:
    """CSV trace: step, t, state components, V, region label."""
    kind = kind_of(kind)
    names = state_names(kind)
    rows = ["step,t," + ",".join(names) + ",V,label"]
    for k, s in enumerate(traj.states):
        p = planar_position(kind, s)
        v = value_at(fld, p) if fld.grid.domain.contains(*p) else float("nan")
        label = classify(env, p).value
        cells = [str(k), _fmt(k * traj.dt)] + [_fmt(x) for x in s] + [_fmt(v), label]
        rows.append(",".join(cells))
    atomic_write_text(path, "\n".join(rows) + "\n")


# ---------------------------------------------------------------------------
# Reports and manifests
# ---------------------------------------------------------------------------


@dataclass
class RunManifest:
    """Everything needed to reproduce a run bit-exactly, plus provenance."""

    command: str
    config: dict
    seed: int | None = None
    solver: dict = _dc_field(default_factory=dict)
    version: str = ""
    created_utc: str = ""
    elapsed_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "tool": "harmonic-clbf",
            "version": self.version,
            "command": self.command,
            "config": self.config,
            "seed": self.seed,
            "solver": self.solver,
            "created_utc": self.created_utc,
            "elapsed_seconds": self.elapsed_seconds,
        }


def save_manifest(path: str, manifest: RunManifest) -> None:
    atomic_write_text(path, json.dumps(manifest.to_dict(), indent=2) + "\n")


def save_report(path: str, report_dict: dict) -> None:
    atomic_write_text(path, json.dumps(report_dict, indent=2) + "\n")
