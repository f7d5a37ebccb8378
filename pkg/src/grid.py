"""
Uniform Cartesian grids, convex region descriptors and direction sets.
"""
from typing import List, Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator


class Grid(BaseModel):
    """Uniform grid with equal spacing on every axis; node j sits at lower + j * spacing."""

    model_config = ConfigDict(frozen=True)

    shape: Tuple[int, ...]
    spacing: float
    lower: Tuple[float, ...]

    @field_validator("shape")
    @classmethod
    def _check_shape(cls, value: Tuple[int, ...]) -> Tuple[int, ...]:
        if not 1 <= len(value) <= 3:
            raise ValueError("grid dimension must be 1, 2 or 3")
        if any(n < 2 for n in value):
            raise ValueError("every axis needs at least 2 nodes")
        return value

    @field_validator("spacing")
    @classmethod
    def _check_spacing(cls, value: float) -> float:
        if value <= 0:
            raise ValueError("spacing must be positive")
        return value

    @model_validator(mode="after")
    def _check_lower(self) -> "Grid":
        if len(self.lower) != len(self.shape):
            raise ValueError("lower corner and shape must have the same length")
        return self

    @classmethod
    def centered(cls, d: int, n: int, length: float) -> "Grid":
        """Grid of n^d nodes on the box [-length/2, length/2)^d."""
        return cls(shape=(n,) * d, spacing=length / n, lower=(-length / 2,) * d)

    @classmethod
    def from_box(cls, lower: Tuple[float, ...], length: float, n: int) -> "Grid":
        return cls(shape=(n,) * len(lower), spacing=length / n, lower=tuple(lower))

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def cell_volume(self) -> float:
        return self.spacing ** self.d

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lengths(self) -> Tuple[float, ...]:
        return tuple(n * self.spacing for n in self.shape)

    @property
    def upper(self) -> Tuple[float, ...]:
        return tuple(lo + n * self.spacing for lo, n in zip(self.lower, self.shape))

    @property
    def nyquist(self) -> float:
        return float(np.pi / self.spacing)

    def axes(self) -> List[np.ndarray]:
        return [lo + self.spacing * np.arange(n) for lo, n in zip(self.lower, self.shape)]

    def mesh(self) -> List[np.ndarray]:
        return np.meshgrid(*self.axes(), indexing="ij")

    def points(self) -> np.ndarray:
        """Node coordinates as an (N, d) array in C order."""
        return np.stack([c.ravel() for c in self.mesh()], axis=-1)

    def frequency_axes(self, pad: int = 1) -> List[np.ndarray]:
        return [2 * np.pi * np.fft.fftfreq(pad * n, d=self.spacing) for n in self.shape]

    def frequency_norm(self, pad: int = 1) -> np.ndarray:
        """|xi| on the (padded) discrete frequency lattice, FFT ordering."""
        grids = np.meshgrid(*self.frequency_axes(pad), indexing="ij")
        return np.sqrt(sum(g ** 2 for g in grids))

    def nearest_index(self, x) -> Tuple[int, ...]:
        x = np.atleast_1d(np.asarray(x, dtype=float))
        idx = np.rint((x - np.asarray(self.lower)) / self.spacing).astype(int)
        idx = np.clip(idx, 0, np.asarray(self.shape) - 1)
        return tuple(int(i) for i in idx)

    def integrate(self, field: np.ndarray) -> complex:
        return complex(np.sum(field) * self.cell_volume)

    def l2_norm(self, field: np.ndarray) -> float:
        return float(np.sqrt(np.sum(np.abs(field) ** 2) * self.cell_volume))


class Region(BaseModel):
    """Convex region descriptor: an axis-aligned box or a ball."""

    model_config = ConfigDict(frozen=True)

    kind: Literal["box", "ball"] = "box"
    center: Tuple[float, ...]
    half_widths: Optional[Tuple[float, ...]] = None
    radius: Optional[float] = None

    @model_validator(mode="after")
    def _check_shape(self) -> "Region":
        if self.kind == "box":
            if self.half_widths is None or len(self.half_widths) != len(self.center):
                raise ValueError("box regions need one half width per axis")
            if any(w <= 0 for w in self.half_widths):
                raise ValueError("half widths must be positive")
        elif self.radius is None or self.radius <= 0:
            raise ValueError("ball regions need a positive radius")
        return self

    def contains(self, points: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Mask of points (N, d) inside the region enlarged by margin."""
        offset = np.asarray(points, dtype=float) - np.asarray(self.center)
        if self.kind == "box":
            return np.all(np.abs(offset) <= np.asarray(self.half_widths) + margin, axis=-1)
        return np.linalg.norm(offset, axis=-1) <= self.radius + margin

    def mask(self, grid: Grid, margin: float = 0.0) -> np.ndarray:
        return self.contains(grid.points(), margin).reshape(grid.shape)


def direction_set(d: int, count: int = 2) -> np.ndarray:
    """
    Observation directions on the unit sphere.

    d = 1 gives the two signs, d = 2 uniform angles, d = 3 equal-area
    Fibonacci points. Returns an array of shape (count, d).
    """
    if d == 1:
        return np.array([[1.0], [-1.0]])
    if d == 2:
        theta = 2 * np.pi * np.arange(count) / count
        return np.stack([np.cos(theta), np.sin(theta)], axis=-1)
    if d == 3:
        i = np.arange(count) + 0.5
        z = 1 - 2 * i / count
        phi = np.pi * (1 + 5 ** 0.5) * i
        rho = np.sqrt(1 - z ** 2)
        return np.stack([rho * np.cos(phi), rho * np.sin(phi), z], axis=-1)
    raise ValueError(f"unsupported dimension {d}")


def direction_weights(d: int, count: int) -> np.ndarray:
    """Quadrature weights of direction_set over the unit sphere."""
    if d == 1:
        return np.ones(2)
    if d == 2:
        return np.full(count, 2 * np.pi / count)
    return np.full(count, 4 * np.pi / count)


def fourier_transform_at(field: np.ndarray, grid: Grid, zetas: np.ndarray) -> np.ndarray:
    """
    Continuous Fourier transform int e^{-i zeta.y} field(y) dy by direct grid sum.

    Args:
        field: values on grid
        grid: the grid
        zetas: frequencies, shape (M, d)

    Returns:
        complex array of shape (M,)
    """
    zetas = np.atleast_2d(np.asarray(zetas, dtype=float))
    support = np.abs(field.ravel()) > 0
    if not np.any(support):
        return np.zeros(len(zetas), dtype=complex)
    pts = grid.points()[support]
    values = field.ravel()[support]
    out = np.empty(len(zetas), dtype=complex)
    # chunked to bound the phase matrix
    chunk = max(1, 2_000_000 // max(len(pts), 1))
    for start in range(0, len(zetas), chunk):
        phase = np.exp(-1j * zetas[start:start + chunk] @ pts.T)
        out[start:start + chunk] = phase @ values
    return out * grid.cell_volume


def region_distance(a: Region, b: Region) -> float:
    """Euclidean distance between two regions (0 when they touch or overlap)."""
    offset = np.abs(np.asarray(a.center, dtype=float) - np.asarray(b.center, dtype=float))
    if a.kind == "box" and b.kind == "box":
        gap = np.maximum(offset - np.asarray(a.half_widths) - np.asarray(b.half_widths), 0.0)
        return float(np.linalg.norm(gap))
    if a.kind == "ball" and b.kind == "ball":
        return max(float(np.linalg.norm(offset)) - a.radius - b.radius, 0.0)
    box, ball = (a, b) if a.kind == "box" else (b, a)
    gap = np.maximum(offset - np.asarray(box.half_widths), 0.0)
    return max(float(np.linalg.norm(gap)) - ball.radius, 0.0)
