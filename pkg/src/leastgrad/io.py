"""Problem bundles: JSON descriptors and CSV fields.

A bundle is a JSON file whose entries either hold a descriptor inline or name
a file relative to the bundle's directory::

    {
      "grid": "grid.json",                 # nx, ny, h, origin, mask (run-length)
      "metric": {"kind": "isotropic", "a": "a.csv"},
      "boundary": "boundary.csv",          # i, j, di, dj, value per boundary face
      "solver": {"tol": 1e-5}
    }

Field CSVs have one row per cell (``i,j,value``), a ``sigma0`` CSV has the
four tensor entries per cell.  Floats are written with ``repr`` so the same
data always produce the same bytes.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from leastgrad.grid import Grid, GridError
from leastgrad.metric import MetricError, Riemannian, WeightedIsotropic
from leastgrad.solver import SolverConfig, SolverConfigError


class InputError(ValueError):
    """Malformed bundle; ``where`` names the offending field or path."""

    def __init__(self, where: str, message: str):
        super().__init__(f"{where}: {message}")
        self.where = where


def _fmt(v: float) -> str:
    return repr(float(v))


# -- run-length masks -----------------------------------------------------

def rle_encode(mask: np.ndarray) -> list[int]:
    """Run lengths of the row-major flattened mask, starting with a ``False`` run."""
    flat = np.asarray(mask, dtype=bool).ravel()
    runs = []
    cur = False
    n = 0
    for v in flat:
        if v == cur:
            n += 1
        else:
            runs.append(n)
            cur = not cur
            n = 1
    runs.append(n)
    return runs


def rle_decode(runs, shape) -> np.ndarray:
    total = int(np.prod(shape))
    if any(int(r) < 0 for r in runs) or sum(int(r) for r in runs) != total:
        raise ValueError(f"run lengths must be nonnegative and sum to {total}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    val = False
    for r in runs:
        flat[pos:pos + int(r)] = val
        pos += int(r)
        val = not val
    return flat.reshape(shape)


# -- grid -----------------------------------------------------------------

def grid_to_dict(grid: Grid) -> dict:
    return {
        "nx": grid.nx,
        "ny": grid.ny,
        "h": float(grid.h),
        "origin": [float(grid.origin[0]), float(grid.origin[1])],
        "mask": rle_encode(grid.mask),
    }


def grid_from_dict(d: dict, where: str = "grid") -> Grid:
    try:
        nx, ny, h = int(d["nx"]), int(d["ny"]), float(d["h"])
        origin = tuple(float(v) for v in d.get("origin", (0.0, 0.0)))
        mask = d.get("mask")
        if mask is not None:
            mask = rle_decode(mask, (nx, ny))
        return Grid(nx, ny, h, origin, mask)
    except KeyError as exc:
        raise InputError(where, f"missing key {exc.args[0]!r}") from exc
    except (TypeError, ValueError, GridError) as exc:
        raise InputError(where, str(exc)) from exc


# -- fields ---------------------------------------------------------------

def write_field(path: Path, grid: Grid, u: np.ndarray, all_cells: bool = False) -> None:
    """One row per domain cell (or every cell with ``all_cells``)."""
    sel = np.ones(grid.shape, dtype=bool) if all_cells else grid.mask
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for i, j in zip(*np.nonzero(sel)):
            w.writerow([int(i), int(j), _fmt(u[i, j])])


def write_vector_field(path: Path, grid: Grid, p: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "x", "y"])
        for i, j in zip(*np.nonzero(grid.mask)):
            w.writerow([int(i), int(j), _fmt(p[0, i, j]), _fmt(p[1, i, j])])


def _rows(path: Path, columns: list[str]):
    if not path.is_file():
        raise InputError(str(path), "file not found")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in columns if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(str(path), f"missing columns {missing}")
        yield from enumerate(reader, start=2)


def read_field(path: Path, grid: Grid, fill: float = 0.0) -> np.ndarray:
    """Read ``i,j,value``; every domain cell must be present."""
    u = np.full(grid.shape, np.nan)
    for n, row in _rows(path, ["i", "j", "value"]):
        try:
            i, j, v = int(row["i"]), int(row["j"]), float(row["value"])
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}:{n}", str(exc)) from exc
        if not (0 <= i < grid.nx and 0 <= j < grid.ny):
            raise InputError(f"{path}:{n}", f"cell ({i}, {j}) outside the grid")
        u[i, j] = v
    gap = grid.mask & np.isnan(u)
    if gap.any():
        i, j = np.argwhere(gap)[0]
        raise InputError(str(path), f"no value for domain cell ({i}, {j})")
    return np.where(np.isnan(u), fill, u)


def write_boundary(path: Path, grid: Grid, g: np.ndarray) -> None:
    bf = grid.boundary_faces()
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "di", "dj", "value"])
        for k in range(len(bf)):
            w.writerow([int(bf.i[k]), int(bf.j[k]), int(bf.normal[k, 0]), int(bf.normal[k, 1]), _fmt(g[k])])


def read_boundary(path: Path, grid: Grid) -> np.ndarray:
    """Boundary values in face enumeration order; rows may come in any order."""
    bf = grid.boundary_faces()
    index = {(int(bf.i[k]), int(bf.j[k]), int(bf.normal[k, 0]), int(bf.normal[k, 1])): k for k in range(len(bf))}
    g = np.full(len(bf), np.nan)
    for n, row in _rows(path, ["i", "j", "di", "dj", "value"]):
        try:
            key = (int(row["i"]), int(row["j"]), int(row["di"]), int(row["dj"]))
            v = float(row["value"])
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}:{n}", str(exc)) from exc
        if key not in index:
            raise InputError(f"{path}:{n}", f"{key} is not a boundary face of the grid")
        g[index[key]] = v
    if np.isnan(g).any():
        k = int(np.flatnonzero(np.isnan(g))[0])
        raise InputError(str(path), f"no value for boundary face {bf[k].cell} normal {bf[k].normal}")
    if not np.all(np.isfinite(g)):
        raise InputError(str(path), "boundary values must be finite")
    return g


def write_tensor_field(path: Path, grid: Grid, s: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "s00", "s01", "s10", "s11"])
        for i, j in zip(*np.nonzero(grid.mask)):
            t = s[i, j]
            w.writerow([int(i), int(j), _fmt(t[0, 0]), _fmt(t[0, 1]), _fmt(t[1, 0]), _fmt(t[1, 1])])


def read_tensor_field(path: Path, grid: Grid) -> np.ndarray:
    s = np.full(grid.shape + (2, 2), np.nan)
    cols = ["s00", "s01", "s10", "s11"]
    for n, row in _rows(path, ["i", "j"] + cols):
        try:
            i, j = int(row["i"]), int(row["j"])
            vals = [float(row[c]) for c in cols]
        except (TypeError, ValueError) as exc:
            raise InputError(f"{path}:{n}", str(exc)) from exc
        if not (0 <= i < grid.nx and 0 <= j < grid.ny):
            raise InputError(f"{path}:{n}", f"cell ({i}, {j}) outside the grid")
        s[i, j] = np.array(vals).reshape(2, 2)
    gap = grid.mask & np.isnan(s[..., 0, 0])
    if gap.any():
        i, j = np.argwhere(gap)[0]
        raise InputError(str(path), f"no tensor for domain cell ({i}, {j})")
    eye = np.broadcast_to(np.eye(2), s.shape)
    return np.where(np.isnan(s), eye, s)


# -- cell sets ------------------------------------------------------------

def cellset_to_dict(E: np.ndarray) -> dict:
    E = np.asarray(E, dtype=bool)
    return {"shape": list(E.shape), "rle": rle_encode(E)}


def cellset_from_dict(d: dict) -> np.ndarray:
    return rle_decode(d["rle"], tuple(d["shape"]))


def write_cellset_csv(path: Path, E: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["i", "j", "value"])
        for (i, j), v in np.ndenumerate(np.asarray(E, dtype=bool)):
            w.writerow([i, j, int(v)])


# -- metrics --------------------------------------------------------------

def scalar_or_field(spec, base: Path, grid: Grid, where: str) -> np.ndarray:
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return np.full(grid.shape, float(spec))
    if isinstance(spec, str):
        return read_field(base / spec, grid, fill=1.0)
    raise InputError(where, "expected a number or a CSV path")


def metric_from_dict(d: dict, base: Path, grid: Grid, where: str = "metric"):
    if not isinstance(d, dict):
        raise InputError(where, "expected an object with 'kind' and 'a'")
    kind = d.get("kind")
    if "a" not in d:
        raise InputError(f"{where}.a", "missing weight")
    a = scalar_or_field(d["a"], base, grid, f"{where}.a")
    a = np.where(grid.mask, a, 1.0)
    try:
        if kind == "isotropic":
            return WeightedIsotropic(a)
        if kind == "riemannian":
            if "sigma0" not in d:
                raise InputError(f"{where}.sigma0", "missing tensor field")
            s = d["sigma0"]
            if isinstance(s, str):
                sig = read_tensor_field(base / s, grid)
            else:
                sig = np.broadcast_to(np.asarray(s, dtype=float), grid.shape + (2, 2)).copy()
            return Riemannian(a, sig)
    except MetricError as exc:
        raise InputError(where, str(exc)) from exc
    raise InputError(f"{where}.kind", f"unknown metric kind {kind!r}; use isotropic or riemannian")


def write_metric(directory: Path, grid: Grid, metric) -> dict:
    """Write the metric's CSVs into ``directory`` and return its descriptor."""
    write_field(directory / "a.csv", grid, metric.a)
    d = {"kind": metric.kind, "a": "a.csv"}
    if metric.kind == "riemannian":
        write_tensor_field(directory / "sigma0.csv", grid, metric.sigma0)
        d["sigma0"] = "sigma0.csv"
    return d


# -- bundles --------------------------------------------------------------

@dataclass
class ProblemBundle:
    path: Path
    raw: dict
    grid: Grid | None = None
    metric: object = None
    boundary: np.ndarray | None = None
    solver: SolverConfig = field(default_factory=SolverConfig)
    out: Path | None = None

    @property
    def base(self) -> Path:
        return self.path.parent


def _load_json(path: Path) -> dict:
    if not path.is_file():
        raise InputError(str(path), "file not found")
    try:
        with open(path) as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise InputError(str(path), f"invalid JSON: {exc}") from exc


def _descriptor(raw: dict, key: str, base: Path):
    v = raw[key]
    if isinstance(v, str) and v.endswith(".json"):
        return _load_json(base / v)
    return v


def load_bundle(path: str | Path, need=("grid", "metric", "boundary")) -> ProblemBundle:
    """Parse a bundle, loading the parts listed in ``need`` (others are optional)."""
    path = Path(path)
    raw = _load_json(path)
    if not isinstance(raw, dict):
        raise InputError(str(path), "bundle must be a JSON object")
    for key in need:
        if key not in raw:
            raise InputError(key, "missing from bundle")
    b = ProblemBundle(path, raw)
    base = b.base
    if "grid" in raw:
        b.grid = grid_from_dict(_descriptor(raw, "grid", base))
    if "metric" in raw and b.grid is not None:
        b.metric = metric_from_dict(_descriptor(raw, "metric", base), base, b.grid)
    if "boundary" in raw and b.grid is not None:
        if not isinstance(raw["boundary"], str):
            raise InputError("boundary", "expected a CSV path")
        b.boundary = read_boundary(base / raw["boundary"], b.grid)
    if "solver" in raw:
        try:
            b.solver = SolverConfig.from_dict(_descriptor(raw, "solver", base))
        except (TypeError, SolverConfigError) as exc:
            raise InputError("solver", str(exc)) from exc
    if "out" in raw:
        b.out = base / raw["out"]
    return b


def write_json(path: Path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_bundle(directory: str | Path, grid: Grid, metric, g: np.ndarray,
                 solver: dict | None = None, extra: dict | None = None) -> Path:
    """Write a complete solve bundle into ``directory``; returns the bundle path."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    write_json(d / "grid.json", grid_to_dict(grid))
    metric_desc = write_metric(d, grid, metric)
    write_boundary(d / "boundary.csv", grid, g)
    bundle = {"grid": "grid.json", "metric": metric_desc, "boundary": "boundary.csv"}
    if solver:
        bundle["solver"] = solver
    if extra:
        bundle.update(extra)
    write_json(d / "problem.json", bundle)
    return d / "problem.json"


def demo_bundle(kind: str, directory: str | Path, n: int | None = None) -> Path:
    """Ready-made bundles: ``constant`` (g = 1 on a disk) and ``annulus`` (g = 0 inside, 1 outside)."""
    if kind == "constant":
        grid = Grid.disk(n or 32, 0.45)
        metric = WeightedIsotropic(np.ones(grid.shape))
        g = np.ones(len(grid.boundary_faces()))
        return write_bundle(directory, grid, metric, g, {"tol": 1e-6})
    if kind == "annulus":
        from leastgrad.analysis.annulus import annulus_metric

        grid = Grid.annulus(n or 128, 1.0, 2.0)
        metric = annulus_metric(grid)
        c = grid.boundary_faces().centers(grid)
        g = (np.hypot(c[:, 0], c[:, 1]) > 1.5).astype(float)
        return write_bundle(directory, grid, metric, g, {"tol": 1e-4, "max_iters": 50000})
    raise ValueError(f"unknown demo bundle {kind!r}; use constant or annulus")
