"""
Tests for the grid file formats.
"""

import csv
import sys
from pathlib import Path

import numpy as np
import pytest

# Add repo root to path
sys.path.insert(0, str(Path(__file__).parent))

from src.errors import InvalidSpecError
from src.grid import Grid
from src.grid_io import read_grid, write_grid, write_grid_csv


def test_binary_preserves_field_and_grid(tmp_path):
    grid = Grid(shape=(6, 4), spacing=0.25, lower=(-1.0, 0.5))
    rng = np.random.default_rng(0)
    field = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    path = tmp_path / "field.bin"
    write_grid(path, field, grid)
    loaded, loaded_grid = read_grid(path)
    assert np.array_equal(loaded, field)
    assert loaded_grid == grid
    # 8 magic + 3 int32 + 5 float64 + payload
    assert path.stat().st_size == 8 + 12 + 40 + 16 * field.size


def test_real_field_is_stored_as_complex(tmp_path):
    grid = Grid.centered(1, 8, 2.0)
    path = tmp_path / "real.bin"
    write_grid(path, np.arange(8.0), grid)
    loaded, _ = read_grid(path)
    assert loaded.dtype == np.complex128
    assert np.array_equal(loaded.real, np.arange(8.0))


def test_bad_files_rejected(tmp_path):
    grid = Grid.centered(1, 8, 2.0)
    with pytest.raises(InvalidSpecError):
        write_grid(tmp_path / "x.bin", np.zeros(7), grid)

    bogus = tmp_path / "bogus.bin"
    bogus.write_bytes(b"NOTAGRID" + bytes(64))
    with pytest.raises(InvalidSpecError):
        read_grid(bogus)

    path = tmp_path / "short.bin"
    write_grid(path, np.zeros(8), grid)
    path.write_bytes(path.read_bytes()[:-16])
    with pytest.raises(InvalidSpecError):
        read_grid(path)


def test_csv_content(tmp_path):
    grid = Grid.centered(2, 3, 3.0)
    field = np.arange(9).reshape(3, 3) * (1 - 2j)
    path = tmp_path / "field.csv"
    write_grid_csv(path, field, grid)
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 9
    assert list(rows[0]) == ["x0", "x1", "re", "im"]
    assert float(rows[1]["x0"]) == -1.5
    assert float(rows[1]["x1"]) == -0.5
    assert float(rows[5]["re"]) == 5.0
    assert float(rows[5]["im"]) == -10.0


def test_csv_size_cap(tmp_path):
    grid = Grid.centered(3, 47, 1.0)
    with pytest.raises(InvalidSpecError):
        write_grid_csv(tmp_path / "big.csv", np.zeros(grid.shape), grid)


if __name__ == "__main__":
    print("=" * 60)
    print("GRID IO TESTS")
    print("=" * 60)
    sys.exit(pytest.main([__file__, "-v"]))
