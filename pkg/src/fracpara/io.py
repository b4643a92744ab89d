"""Archives of kernels, extension fields and DN matrices (npz + JSON header)."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np

from .grid import ExtensionField, Grid, GridSpec, build_grid
from .heat_kernel import HeatKernel


def _write(path, header: dict, **arrays) -> Path:
    path = Path(path)
    if path.suffix != ".npz":
        path = path.with_suffix(".npz")
    np.savez_compressed(path, header=np.array(json.dumps(header, sort_keys=True)), **arrays)
    return path


def read_archive(path) -> tuple[dict, dict]:
    """Return ``(header, arrays)`` of an archive written by this module."""
    with np.load(path, allow_pickle=False) as data:
        header = json.loads(str(data["header"]))
        arrays = {k: data[k] for k in data.files if k != "header"}
    return header, arrays


def grid_from_header(header: dict) -> Grid:
    return build_grid(GridSpec(**header["grid"]))


def save_kernel(path, kernel: HeatKernel) -> Path:
    """Tabulated densities keyed by tau, with sigma and grid hashes."""
    taus = kernel.taus
    header = {"type": "heat-kernel", "kind": kernel.kind, "method": kernel.method,
              "sigma": kernel.sigma.digest(), "grid": kernel.grid.spec.as_dict(), "taus": taus,
              "asymmetry": {repr(t): kernel.asymmetry.get(t) for t in taus}}
    arrays = {f"tau_{i}": kernel.table[t] for i, t in enumerate(taus)}
    return _write(path, header, **arrays)


def save_extension(path, field: ExtensionField) -> Path:
    header = {"type": "extension", "s": field.s, "grid": field.grid.spec.as_dict()}
    return _write(path, header, values=field.values, y=field.y)


def load_extension(path) -> ExtensionField:
    header, arrays = read_archive(path)
    if header.get("type") != "extension":
        raise ValueError(f"{path} does not hold an extension field")
    return ExtensionField(grid_from_header(header), arrays["values"], header["s"], arrays["y"])
