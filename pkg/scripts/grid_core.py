"""
grid_core.py

Smooth periodic fields on the circle S¹ = [0, 2π), sampled on a uniform grid.

Everything downstream (jets, Lagrangians, functionals, probes) works on these
types, so the conventions live here and only here:

    spectrum      f̂(n) = (1/2π) ∫ f(x) e^{-inx} dx, discretized as fft(samples) / N
    derivatives   spectral, multiplier (in)^order, Nyquist mode dropped for order ≥ 1
    quadrature    periodic trapezoid: spacing · Σ samples
    Sobolev H^2k  2π (Σ_n (1+n²)^{2k} |f̂(n)|²)^{1/2}

Bumps use the exp(-1/(1-t²)) profile and the smooth step / plateau cutoff are
built from the exp(-1/t) transition, so supports are exact at grid level.

Field and spectrum CSVs round-trip bit-exactly (floats are written with repr).
"""

import csv
import math
import logging
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Sequence, Union

import numpy as np
from scipy import fft as sp_fft

# ─── Grid constants ───────────────────────────────────────────────────────────

TWO_PI = 2.0 * math.pi
MIN_POINTS = 16

# Windows count as disjoint at grid level when at least this many cells apart.
DISJOINT_GAP_CELLS = 4

# Node lookup tolerance, in units of grid spacing.
NODE_SNAP = 1e-9

EPS = float(np.finfo(float).eps)
SPECTRAL_NOISE_FACTOR = 100.0


# ─── Types ────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic grid with n_points nodes x_j = j · 2π / n_points."""

    n_points: int

    def __post_init__(self):
        n = self.n_points
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)):
            raise ValueError(f"GridSpec n_points must be an integer, got {n!r}")
        if n < MIN_POINTS or (n & (n - 1)) != 0:
            raise ValueError(
                f"GridSpec n_points must be a power of two ≥ {MIN_POINTS}, got {n}"
            )
        object.__setattr__(self, "n_points", int(n))

    @property
    def circumference(self) -> float:
        return TWO_PI

    @property
    def spacing(self) -> float:
        return TWO_PI / self.n_points

    @property
    def aliasing_guard(self) -> int:
        return self.n_points // 4

    @property
    def nyquist(self) -> int:
        return self.n_points // 2

    @cached_property
    def nodes(self) -> np.ndarray:
        x = np.arange(self.n_points) * self.spacing
        x.setflags(write=False)
        return x

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        # integer modes in fft order: 0, 1, …, N/2-1, -N/2, …, -1
        k = np.rint(sp_fft.fftfreq(self.n_points, d=1.0 / self.n_points))
        k.setflags(write=False)
        return k

    def node_index(self, x: float) -> int:
        """Index of the grid node at x; rejects points that are not nodes."""
        pos = (float(x) % TWO_PI) / self.spacing
        idx = int(round(pos))
        if abs(pos - idx) > NODE_SNAP * max(1.0, pos):
            raise ValueError(
                f"x={x!r} is not a grid node (n={self.n_points}); "
                f"nearest node is {idx % self.n_points} at {(idx % self.n_points) * self.spacing!r}"
            )
        return idx % self.n_points

    def nearest_node(self, x: float) -> float:
        return self.nodes[int(round((float(x) % TWO_PI) / self.spacing)) % self.n_points]


@dataclass(frozen=True, eq=False)
class Field:
    """Samples of a smooth real function on a GridSpec. Immutable."""

    grid: GridSpec
    samples: np.ndarray

    def __post_init__(self):
        arr = np.array(self.samples, dtype=float)
        if arr.shape != (self.grid.n_points,):
            raise ValueError(
                f"Field expects {self.grid.n_points} samples, got shape {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            bad = int(np.flatnonzero(~np.isfinite(arr))[0])
            raise ValueError(f"Field samples must be finite (first bad index {bad})")
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)

    # ── constructors ──

    @classmethod
    def from_function(cls, grid: GridSpec, fn) -> "Field":
        return cls(grid, fn(grid.nodes))

    @classmethod
    def constant(cls, grid: GridSpec, value: float) -> "Field":
        return cls(grid, np.full(grid.n_points, float(value)))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls.constant(grid, 0.0)

    @classmethod
    def from_spectrum(cls, grid: GridSpec, coefficients: np.ndarray) -> "Field":
        coeffs = np.asarray(coefficients, dtype=complex)
        return cls(grid, np.real(sp_fft.ifft(coeffs * grid.n_points)))

    # ── spectral data ──

    @cached_property
    def spectrum(self) -> np.ndarray:
        s = sp_fft.fft(self.samples) / self.grid.n_points
        s.setflags(write=False)
        return s

    # ── access ──

    def value_at(self, x: float) -> float:
        return float(self.samples[self.grid.node_index(x)])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.samples)))

    # ── arithmetic ──

    def _coerce(self, other) -> np.ndarray:
        if isinstance(other, Field):
            if other.grid != self.grid:
                raise ValueError(
                    f"Cannot combine fields on different grids "
                    f"(n={self.grid.n_points} vs n={other.grid.n_points})"
                )
            return other.samples
        return np.asarray(float(other))

    def __add__(self, other):
        return Field(self.grid, self.samples + self._coerce(other))

    __radd__ = __add__

    def __sub__(self, other):
        return Field(self.grid, self.samples - self._coerce(other))

    def __rsub__(self, other):
        return Field(self.grid, self._coerce(other) - self.samples)

    def __mul__(self, other):
        return Field(self.grid, self.samples * self._coerce(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return Field(self.grid, self.samples / self._coerce(other))

    def __neg__(self):
        return Field(self.grid, -self.samples)

    def __repr__(self):
        return f"Field(n={self.grid.n_points}, max|f|={self.max_abs():.6g})"


@dataclass(frozen=True)
class SupportWindow:
    """Closed arc of half-width `radius` around `center`."""

    center: float
    radius: float

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError(f"SupportWindow radius must be positive, got {self.radius!r}")
        object.__setattr__(self, "center", float(self.center) % TWO_PI)
        object.__setattr__(self, "radius", float(self.radius))

    @classmethod
    def full(cls) -> "SupportWindow":
        return cls(0.0, math.pi)

    @property
    def is_full(self) -> bool:
        return self.radius >= math.pi

    def contains(self, x) -> np.ndarray:
        return arc_distance(x, self.center) <= self.radius

    def mask(self, grid: GridSpec) -> np.ndarray:
        return self.contains(grid.nodes)

    def gap_to(self, other: "SupportWindow") -> float:
        """Arc distance between the two arcs (negative when they overlap)."""
        return float(arc_distance(self.center, other.center)) - self.radius - other.radius

    def disjoint_from(self, other: "SupportWindow", grid: Optional[GridSpec] = None,
                      gap_cells: int = DISJOINT_GAP_CELLS) -> bool:
        gap = 0.0 if grid is None else gap_cells * grid.spacing
        return self.gap_to(other) > gap


Windows = Union[None, SupportWindow, Sequence[SupportWindow]]


# ─── Geometry helpers ─────────────────────────────────────────────────────────

def arc_distance(x, y):
    """Shortest distance on the circle of circumference 2π."""
    d = np.abs((np.asarray(x, dtype=float) - y + math.pi) % TWO_PI - math.pi)
    return d if d.ndim else float(d)


def signed_arc(x, center: float):
    """Signed arc coordinate of x relative to center, in [-π, π)."""
    return (np.asarray(x, dtype=float) - center + math.pi) % TWO_PI - math.pi


def window_mask(grid: GridSpec, windows: Windows) -> np.ndarray:
    """Boolean node mask for one window, a union of windows, or the full circle (None)."""
    if windows is None:
        return np.ones(grid.n_points, dtype=bool)
    if isinstance(windows, SupportWindow):
        return windows.mask(grid)
    mask = np.zeros(grid.n_points, dtype=bool)
    for w in windows:
        mask |= w.mask(grid)
    return mask


# ─── Smooth transitions ───────────────────────────────────────────────────────

def _transition(u):
    """B(u) = exp(-1/u) for u > 0, 0 otherwise."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos])
    return out


def _transition_prime(u):
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    out[pos] = np.exp(-1.0 / u[pos]) / u[pos] ** 2
    return out


def smooth_step(t, lo: float, hi: float):
    """
    C^∞ step: 1 for t ≤ lo, 0 for t ≥ hi.

    s(t) = B(hi - t) / (B(hi - t) + B(t - lo)).
    """
    if not hi > lo:
        raise ValueError(f"smooth_step needs lo < hi, got lo={lo}, hi={hi}")
    t_arr = np.asarray(t, dtype=float)
    up = _transition(hi - t_arr)
    down = _transition(t_arr - lo)
    out = up / (up + down)
    return out if out.ndim else float(out)


def smooth_step_prime(t, lo: float, hi: float):
    t_arr = np.asarray(t, dtype=float)
    up, down = _transition(hi - t_arr), _transition(t_arr - lo)
    up_p, down_p = _transition_prime(hi - t_arr), _transition_prime(t_arr - lo)
    out = -(up_p * down + up * down_p) / (up + down) ** 2
    return out if out.ndim else float(out)


def plateau_cutoff(grid: GridSpec, center: float, radius: float,
                   inner: Optional[float] = None) -> "Field":
    """Equal to 1 within `inner` (default radius/2) of center, 0 beyond radius."""
    inner = radius / 2.0 if inner is None else inner
    d = arc_distance(grid.nodes, center)
    return Field(grid, smooth_step(d, inner, radius))


# ─── Operations ───────────────────────────────────────────────────────────────

def _derivative_multiplier(grid: GridSpec, order: int) -> np.ndarray:
    mult = (1j * grid.wavenumbers) ** order
    mult[grid.nyquist] = 0.0
    return mult


def _check_order(grid: GridSpec, order: int) -> None:
    if order < 0:
        raise ValueError(f"Derivative order must be non-negative, got {order}")
    if order > grid.aliasing_guard:
        raise ValueError(
            f"Spectral derivative of order {order} exceeds the aliasing guard "
            f"n/4 = {grid.aliasing_guard} for n={grid.n_points}; refine the grid"
        )


def spectral_derivative(f: Field, order: int) -> Field:
    """Multiply the spectrum by (in)^order. Order 0 returns f itself."""
    _check_order(f.grid, order)
    if order == 0:
        return f
    grid = f.grid
    coeffs = f.spectrum * _derivative_multiplier(grid, order)
    return Field.from_spectrum(grid, coeffs)


def derivative_noise(grid: GridSpec, order: int, scale: float = 1.0) -> float:
    """Round-off level of an order-`order` spectral derivative of a field of size `scale`."""
    return SPECTRAL_NOISE_FACTOR * EPS * (grid.n_points / 2.0) ** order * max(scale, 1.0)


def derivative_stack(f: Field, k: int) -> np.ndarray:
    """Array of shape (k+1, n) holding f, f′, …, f^(k) at every node."""
    _check_order(f.grid, k)
    grid = f.grid
    out = np.empty((k + 1, grid.n_points))
    out[0] = f.samples
    if k:
        scaled = f.spectrum * grid.n_points
        for j in range(1, k + 1):
            out[j] = np.real(sp_fft.ifft(scaled * _derivative_multiplier(grid, j)))
    return out


def integrate(f: Field) -> float:
    return float(f.grid.spacing * np.sum(f.samples))


def l2_norm(f: Field) -> float:
    return math.sqrt(integrate(f * f))


def seminorm(f: Field, m: int, windows: Windows = None) -> float:
    """
    π_{m,K}(f) = max over nodes in K of max_{j ≤ m} |f^(j)(x)|.

    `windows` is one SupportWindow, a union of them, or None for the full circle.
    """
    mask = window_mask(f.grid, windows)
    if not mask.any():
        raise ValueError(
            f"Seminorm window selects no grid nodes (n={f.grid.n_points}); widen the window"
        )
    stack = derivative_stack(f, m)
    return float(np.max(np.abs(stack[:, mask])))


def sobolev_weights(grid: GridSpec, k: int) -> np.ndarray:
    return (1.0 + grid.wavenumbers ** 2) ** (2 * k)


def sobolev_norm(f: Field, k: int) -> float:
    """H^{2k} norm: 2π (Σ_n (1+n²)^{2k} |f̂(n)|²)^{1/2} over the grid's modes."""
    if k < 0:
        raise ValueError(f"Sobolev index must be non-negative, got {k}")
    weights = sobolev_weights(f.grid, k)
    return float(TWO_PI * np.sqrt(np.sum(weights * np.abs(f.spectrum) ** 2)))


def bump(window: SupportWindow, grid: GridSpec, amplitude: float = 1.0,
         peak: Optional[float] = None) -> Field:
    """
    amplitude · exp(-1/(1-t²)) with t = arc distance / radius; exactly zero for t ≥ 1.

    The centre value is amplitude · e^{-1}; pass `peak` to fix the maximum instead.
    """
    if window.radius >= math.pi:
        raise ValueError(f"Bump radius must be < π, got {window.radius}")
    if peak is not None:
        amplitude = peak * math.e
    t = arc_distance(grid.nodes, window.center) / window.radius
    vals = np.zeros(grid.n_points)
    inside = t < 1.0
    vals[inside] = np.exp(-1.0 / (1.0 - t[inside] ** 2))
    return Field(grid, amplitude * vals)


def random_field(grid: GridSpec, seed, band_limit: int, decay: float,
                 amplitude: float = 1.0) -> Field:
    """
    Real band-limited field with |f̂(n)| ≤ amplitude · decay^|n| for |n| ≤ band_limit.

    Deterministic in `seed` (anything numpy.random.default_rng accepts).
    """
    if band_limit < 0 or band_limit > grid.nyquist // 2:
        raise ValueError(
            f"random_field band_limit must lie in [0, {grid.nyquist // 2}] for "
            f"n={grid.n_points}, got {band_limit}"
        )
    rng = np.random.default_rng(seed)
    coeffs = np.zeros(grid.n_points, dtype=complex)
    coeffs[0] = amplitude * rng.uniform(-1.0, 1.0)
    for n in range(1, band_limit + 1):
        mag = amplitude * decay ** n * rng.uniform(0.0, 1.0)
        c = mag * np.exp(1j * rng.uniform(0.0, TWO_PI))
        coeffs[n] = c
        coeffs[-n] = np.conj(c)
    return Field.from_spectrum(grid, coeffs)


def flat_spectrum_field(grid: GridSpec, band_limit: int, amplitude: float = 1.0) -> Field:
    """Σ_{n=1}^{band} cos(n x), scaled: every mode 1..band carries the same weight."""
    if band_limit < 1 or band_limit > grid.nyquist // 2:
        raise ValueError(f"flat_spectrum_field band_limit out of range: {band_limit}")
    x = grid.nodes
    vals = sum(np.cos(n * x) for n in range(1, band_limit + 1))
    return Field(grid, amplitude * vals / band_limit)


def fields_disjoint(f: Field, g: Field, gap_cells: int = DISJOINT_GAP_CELLS) -> bool:
    """True when the supports of f and g are at least gap_cells nodes apart."""
    a = np.flatnonzero(f.samples != 0.0)
    b = np.flatnonzero(g.samples != 0.0)
    if a.size == 0 or b.size == 0:
        return True
    n = f.grid.n_points
    diff = np.abs(a[:, None] - b[None, :])
    cells = np.minimum(diff, n - diff)
    return bool(cells.min() > gap_cells)


# ─── CSV I/O ──────────────────────────────────────────────────────────────────

FIELD_CSV_HEADER = ["x", "value"]
SPECTRUM_CSV_HEADER = ["n", "re", "im"]


def _data_rows(path: Path) -> Iterable[list]:
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.reader(fh):
            if not row or row[0].startswith("#"):
                continue
            yield row


def field_to_csv(f: Field, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(FIELD_CSV_HEADER)
        for x, v in zip(f.grid.nodes, f.samples):
            writer.writerow([repr(float(x)), repr(float(v))])
    logging.info(f"[grid] Field CSV written: {path}")
    return path


def field_from_csv(path) -> Field:
    rows = list(_data_rows(Path(path)))
    if not rows or rows[0] != FIELD_CSV_HEADER:
        raise ValueError(f"{path}: expected header {FIELD_CSV_HEADER}")
    values = [float(r[1]) for r in rows[1:]]
    return Field(GridSpec(len(values)), np.array(values))


def spectrum_to_csv(f: Field, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SPECTRUM_CSV_HEADER)
        for n, c in zip(f.grid.wavenumbers, f.spectrum):
            writer.writerow([int(n), repr(float(c.real)), repr(float(c.imag))])
    logging.info(f"[grid] Spectrum CSV written: {path}")
    return path


def spectrum_from_csv(path) -> np.ndarray:
    """Read back the (n, re, im) table as complex coefficients in fft order."""
    rows = list(_data_rows(Path(path)))
    if not rows or rows[0] != SPECTRUM_CSV_HEADER:
        raise ValueError(f"{path}: expected header {SPECTRUM_CSV_HEADER}")
    body = rows[1:]
    grid = GridSpec(len(body))
    coeffs = np.zeros(grid.n_points, dtype=complex)
    for r in body:
        coeffs[int(r[0]) % grid.n_points] = complex(float(r[1]), float(r[2]))
    return coeffs
