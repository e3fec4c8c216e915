"""Periodic square lattice, random initialization and exact pair/density counts."""

from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np

from .models import Model

__all__ = [
    "DensityVector",
    "PairMatrix",
    "LatticeGrid",
    "neighbors",
    "init_random",
    "estimate_densities",
    "estimate_pairs",
    "save_snapshot",
    "load_snapshot",
]

_SUM_TOL = 1e-12


@dataclass(frozen=True)
class DensityVector:
    """Per-state probabilities P_sigma over a model's alphabet (sum 1)."""

    states: tuple[str, ...]
    p: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        if p.shape != (len(self.states),):
            raise ValueError("density vector shape mismatch")
        if np.any(p < -_SUM_TOL) or abs(p.sum() - 1.0) > 1e-9:
            raise ValueError(f"densities must be >= 0 and sum to 1, got sum {p.sum()!r}")

    def __getitem__(self, state: str) -> float:
        return float(self.p[self.states.index(state)])

    def as_dict(self) -> dict:
        return {s: float(v) for s, v in zip(self.states, self.p)}

    @classmethod
    def from_dict(cls, states, dens: dict) -> "DensityVector":
        return cls(tuple(states), np.array([dens.get(s, 0.0) for s in states]))


@dataclass(frozen=True)
class PairMatrix:
    """Ordered neighbor-pair probabilities P_{sigma sigma'}.

    Symmetric (P_ab = P_ba) with marginals sum_b P_ab = P_a.  Conditionals
    P_{a|b} = P_ab / P_b, defined as 0 when P_b = 0.
    """

    states: tuple[str, ...]
    p: np.ndarray  # (S, S)

    def __post_init__(self):
        p = np.asarray(self.p, dtype=float)
        object.__setattr__(self, "p", p)
        n = len(self.states)
        if p.shape != (n, n):
            raise ValueError("pair matrix shape mismatch")
        if not np.allclose(p, p.T, atol=_SUM_TOL):
            raise ValueError("pair matrix must be symmetric")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValueError("pair probabilities must sum to 1")

    @property
    def marginals(self) -> np.ndarray:
        return self.p.sum(axis=1)

    def density_vector(self) -> DensityVector:
        return DensityVector(self.states, self.marginals)

    def __getitem__(self, pair: tuple[str, str]) -> float:
        a, b = pair
        return float(self.p[self.states.index(a), self.states.index(b)])

    def conditional(self, a: str, given: str) -> float:
        """P_{a|given}: probability a random neighbor of a `given`-cell is `a`."""
        i, j = self.states.index(a), self.states.index(given)
        pj = self.p[:, j].sum()
        return float(self.p[i, j] / pj) if pj > 0 else 0.0

    def conditional_matrix(self) -> np.ndarray:
        """C[a, b] = P_{a|b}; columns sum to 1 where P_b > 0."""
        m = self.marginals
        with np.errstate(divide="ignore", invalid="ignore"):
            c = np.where(m[None, :] > 0, self.p / m[None, :], 0.0)
        return c


@dataclass
class LatticeGrid:
    """Dense periodic grid of state indices for one model alphabet."""

    model: Model
    cells: np.ndarray  # (height, width) int8

    def __post_init__(self):
        self.cells = np.asarray(self.cells, dtype=np.int8)
        if self.cells.ndim != 2:
            raise ValueError("cells must be 2-D")
        if self.height < 2 or self.width < 2:
            raise ValueError("grid must be at least 2x2")
        if self.cells.min() < 0 or self.cells.max() >= self.model.n_states:
            raise ValueError("cell state out of range for model alphabet")

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def n_cells(self) -> int:
        return self.cells.size

    def copy(self) -> "LatticeGrid":
        return LatticeGrid(self.model, self.cells.copy())

    def rolled(self, dr: int, dc: int) -> "LatticeGrid":
        return LatticeGrid(self.model, np.roll(self.cells, (dr, dc), axis=(0, 1)))


def neighbors(site: tuple[int, int], grid: LatticeGrid) -> tuple:
    """The four von Neumann neighbors of ``site`` = (row, col), periodic.

    Deterministic order: north, south, west, east.
    """
    r, c = site
    h, w = grid.height, grid.width
    if not (0 <= r < h and 0 <= c < w):
        raise IndexError(f"site {site} outside {h}x{w} grid")
    return ((r - 1) % h, c), ((r + 1) % h, c), (r, (c - 1) % w), (r, (c + 1) % w)


def init_random(model: Model, width: int, height: int,
                densities: DensityVector | dict, rng) -> LatticeGrid:
    """Each cell drawn independently from the target density vector."""
    if isinstance(densities, dict):
        densities = DensityVector.from_dict(model.states, densities)
    if densities.states != model.states:
        raise ValueError("density vector alphabet does not match model")
    rng = np.random.default_rng(rng)
    p = np.clip(densities.p, 0.0, None)
    p = p / p.sum()
    cells = rng.choice(model.n_states, size=(height, width), p=p).astype(np.int8)
    return LatticeGrid(model, cells)


def estimate_densities(grid: LatticeGrid) -> DensityVector:
    """Exact cell-count fractions."""
    counts = np.bincount(grid.cells.ravel(), minlength=grid.model.n_states)
    return DensityVector(grid.model.states, counts / grid.n_cells)


def estimate_pairs(grid: LatticeGrid) -> PairMatrix:
    """Ordered (site, neighbor) pair frequencies over all 4*W*H pairs.

    Marginals equal estimate_densities exactly by construction.
    """
    n = grid.model.n_states
    c = grid.cells
    counts = np.zeros((n, n), dtype=np.int64)
    for shifted in (np.roll(c, 1, axis=0), np.roll(c, -1, axis=0),
                    np.roll(c, 1, axis=1), np.roll(c, -1, axis=1)):
        np.add.at(counts, (c.ravel(), shifted.ravel()), 1)
    return PairMatrix(grid.model.states, counts / (4.0 * grid.n_cells))


def save_snapshot(grid: LatticeGrid, path_or_file) -> None:
    """Plain-text snapshot: ``width height model`` then one code row per lattice row."""
    codes = np.array(grid.model.codes)
    lines = [f"{grid.width} {grid.height} {grid.model.name}"]
    for row in grid.cells:
        lines.append("".join(codes[row]))
    text = "\n".join(lines) + "\n"
    if hasattr(path_or_file, "write"):
        path_or_file.write(text)
    else:
        with open(path_or_file, "w") as fh:
            fh.write(text)


def load_snapshot(path_or_file, model: Model) -> LatticeGrid:
    """Inverse of save_snapshot; requires a model with matching name and codes."""
    if hasattr(path_or_file, "read"):
        text = path_or_file.read()
    else:
        with open(path_or_file) as fh:
            text = fh.read()
    lines = text.strip("\n").split("\n")
    w_s, h_s, name = lines[0].split()
    width, height = int(w_s), int(h_s)
    if name != model.name:
        raise ValueError(f"snapshot is for model {name!r}, not {model.name!r}")
    if len(lines) != height + 1:
        raise ValueError("snapshot row count mismatch")
    code_to_idx = {c: i for i, c in enumerate(model.codes)}
    cells = np.empty((height, width), dtype=np.int8)
    for i, line in enumerate(lines[1:]):
        if len(line) != width:
            raise ValueError(f"snapshot row {i} has wrong width")
        cells[i] = [code_to_idx[ch] for ch in line]
    return LatticeGrid(model, cells)


def snapshot_roundtrip_equal(grid: LatticeGrid) -> bool:
    buf = io.StringIO()
    save_snapshot(grid, buf)
    buf.seek(0)
    return bool(np.array_equal(load_snapshot(buf, grid.model).cells, grid.cells))
