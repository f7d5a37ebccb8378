"""
Binary and CSV serialization of complex grid fields.

Binary layout (little-endian): 8-byte magic, int32 d, int32 shape[d], float64 spacing,
float64 lower[d], float64 upper[d], then the C-ordered payload as interleaved re/im doubles.
"""
import csv
from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.errors import InvalidSpecError
from src.grid import Grid

MAGIC = b"FHGRID01"
CSV_MAX_NODES = 100_000


def write_grid(path: Union[str, Path], field: np.ndarray, grid: Grid) -> None:
    field = np.asarray(field)
    if field.shape != grid.shape:
        raise InvalidSpecError(f"field shape {field.shape} does not match grid {grid.shape}")
    header = [
        MAGIC,
        np.array([grid.d, *grid.shape], dtype="<i4").tobytes(),
        np.array([grid.spacing, *grid.lower, *grid.upper], dtype="<f8").tobytes(),
    ]
    with open(path, "wb") as fh:
        for chunk in header:
            fh.write(chunk)
        fh.write(np.ascontiguousarray(field, dtype="<c16").tobytes())


def read_grid(path: Union[str, Path]) -> Tuple[np.ndarray, Grid]:
    """Read a binary grid file, returning (field, grid)."""
    data = Path(path).read_bytes()
    if data[:len(MAGIC)] != MAGIC:
        raise InvalidSpecError(f"{path} is not a grid file")
    offset = len(MAGIC)
    d = int(np.frombuffer(data, dtype="<i4", count=1, offset=offset)[0])
    if d not in (1, 2, 3):
        raise InvalidSpecError(f"{path} has unsupported dimension {d}")
    offset += 4
    shape = tuple(int(n) for n in np.frombuffer(data, dtype="<i4", count=d, offset=offset))
    offset += 4 * d
    floats = np.frombuffer(data, dtype="<f8", count=1 + 2 * d, offset=offset)
    offset += 8 * (1 + 2 * d)
    grid = Grid(shape=shape, spacing=float(floats[0]), lower=tuple(float(x) for x in floats[1:1 + d]))
    expected = int(np.prod(shape))
    payload = np.frombuffer(data, dtype="<c16", offset=offset)
    if payload.size != expected:
        raise InvalidSpecError(f"{path}: expected {expected} values, found {payload.size}")
    return payload.reshape(shape).copy(), grid


def write_grid_csv(path: Union[str, Path], field: np.ndarray, grid: Grid) -> None:
    """Coordinates and re/im per node, for small grids only."""
    if grid.size > CSV_MAX_NODES:
        raise InvalidSpecError(f"grid with {grid.size} nodes is too large for CSV output")
    coords = [f"x{i}" for i in range(grid.d)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([*coords, "re", "im"])
        for point, value in zip(grid.points(), np.asarray(field).ravel()):
            writer.writerow([*(repr(float(x)) for x in point), repr(float(value.real)), repr(float(value.imag))])
