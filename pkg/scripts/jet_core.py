"""
jet_core.py

k-jets of fields at grid nodes, and the polynomial section that turns a jet
back into a genuine field.

    extract_jet    (f, x, k)  -> (f(x), f′(x), …, f^(k)(x))       spectral derivatives
    realize_jet    jet        -> Taylor polynomial × plateau cutoff  (1 on radius/2)
    jets_along     (f, k)     -> all jets at every node, shape (k+1, n)

Jets compare equal when their base points are the same node and every value
agrees within JET_ATOL + JET_RTOL · max(|a|, |b|).
"""

import csv
import math
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, Sequence

import numpy as np

from grid_core import (
    Field,
    GridSpec,
    arc_distance,
    derivative_stack,
    plateau_cutoff,
    signed_arc,
)

JET_ATOL = 1e-9
JET_RTOL = 1e-9

# Base points closer than this are the same node.
BASE_POINT_ATOL = 1e-12


@dataclass(frozen=True, eq=False)
class Jet:
    base_point: float
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ValueError("Jet needs at least the 0th value")
        if not all(math.isfinite(v) for v in vals):
            raise ValueError(f"Jet values must be finite, got {vals}")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "base_point", float(self.base_point) % (2.0 * math.pi))

    @property
    def order(self) -> int:
        return len(self.values) - 1

    def truncate(self, k: int) -> "Jet":
        if k > self.order:
            raise ValueError(f"Cannot truncate a {self.order}-jet to order {k}")
        return Jet(self.base_point, self.values[: k + 1])

    def agrees_with(self, other: "Jet", atol: float = JET_ATOL, rtol: float = JET_RTOL) -> bool:
        if self.order != other.order:
            return False
        if arc_distance(self.base_point, other.base_point) > BASE_POINT_ATOL:
            return False
        return all(
            abs(a - b) <= atol + rtol * max(abs(a), abs(b))
            for a, b in zip(self.values, other.values)
        )

    def __eq__(self, other):
        if not isinstance(other, Jet):
            return NotImplemented
        return self.agrees_with(other)

    __hash__ = None

    def max_difference(self, other: "Jet") -> float:
        if self.order != other.order:
            raise ValueError(f"Jet orders differ: {self.order} vs {other.order}")
        return max(abs(a - b) for a, b in zip(self.values, other.values))

    def to_row(self) -> list:
        return [repr(self.base_point), self.order, *(repr(v) for v in self.values)]

    @classmethod
    def from_row(cls, row: Sequence[str]) -> "Jet":
        k = int(row[1])
        values = [float(v) for v in row[2:]]
        if len(values) != k + 1:
            raise ValueError(f"Jet row declares order {k} but carries {len(values)} values")
        return cls(float(row[0]), tuple(values))


def extract_jet(f: Field, x: float, k: int) -> Jet:
    """(f(x), …, f^(k)(x)) at a grid node x. Off-node points are rejected."""
    idx = f.grid.node_index(x)
    stack = derivative_stack(f, k)
    return Jet(f.grid.nodes[idx], tuple(stack[:, idx]))


def jets_along(f: Field, k: int) -> np.ndarray:
    """k-jets of f at every node; row j holds f^(j)."""
    return derivative_stack(f, k)


def taylor_polynomial(jet: Jet, s: np.ndarray) -> np.ndarray:
    """Σ_j v_j s^j / j! evaluated by Horner's rule."""
    s = np.asarray(s, dtype=float)
    out = np.full_like(s, jet.values[-1])
    for j in range(jet.order - 1, -1, -1):
        out = jet.values[j] + out * s / (j + 1)
    return out


def realize_jet(jet: Jet, cutoff_radius: float, grid: GridSpec) -> Field:
    """
    Field whose k-jet at the base point is `jet`.

    Taylor polynomial in the signed arc coordinate, multiplied by a cutoff that
    is 1 on cutoff_radius/2 and 0 beyond cutoff_radius.
    """
    if not 0.0 < cutoff_radius < math.pi / 2:
        raise ValueError(f"realize_jet cutoff_radius must lie in (0, π/2), got {cutoff_radius}")
    s = signed_arc(grid.nodes, jet.base_point)
    poly = taylor_polynomial(jet, s)
    cutoff = plateau_cutoff(grid, jet.base_point, cutoff_radius)
    return Field(grid, poly * cutoff.samples)


# ─── CSV I/O ──────────────────────────────────────────────────────────────────

def jets_to_csv(jets: Iterable[Jet], path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        for j in jets:
            writer.writerow(j.to_row())
    logging.info(f"[jet] Jet CSV written: {path}")
    return path


def jets_from_csv(path) -> List[Jet]:
    with open(path, newline="", encoding="utf-8") as fh:
        return [Jet.from_row(r) for r in csv.reader(fh) if r and not r[0].startswith("#")]
