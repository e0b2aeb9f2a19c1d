"""Finite-depth fat Cantor sets, modified Sierpinski carpets and N-close cubes.

All interval and cube coordinates are exact rationals; floats only appear
when a construction is rasterised onto a :class:`~iml.fields.GridDomain`.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from fractions import Fraction
from functools import cached_property
from itertools import product

import numpy as np

from .errors import ConfigurationError, ResolutionError, ValidationError
from .fields import ScalarField

SNAP = 1e-9  # membership slack for float node coordinates, in units of h


def _as_fraction(x):
    if isinstance(x, Fraction):
        return x
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    if isinstance(x, str):
        return Fraction(x)
    return Fraction(float(x)).limit_denominator(10 ** 12)


@dataclass(frozen=True)
class GapSequence:
    """Relative gap sizes ``a_j``; ``flavor`` is ``"cantor"`` or ``"sierpinski"``."""

    a: tuple
    flavor: str = "cantor"

    def __post_init__(self):
        if self.flavor not in ("cantor", "sierpinski"):
            raise ConfigurationError(f"unknown gap flavor {self.flavor!r}")
        vals = tuple(_as_fraction(x) for x in self.a)
        for j, v in enumerate(vals):
            if not 0 < v < 1:
                raise ValidationError(f"a_{j + 1} = {v} is not in (0, 1)")
            if self.flavor == "sierpinski":
                inv = 1 / v
                if inv.denominator != 1 or inv.numerator % 2 == 0 or inv.numerator < 3:
                    raise ValidationError(
                        f"a_{j + 1} = {v}: carpet gaps must be 1/3, 1/5, 1/7, ...")
        object.__setattr__(self, "a", vals)

    @classmethod
    def constant(cls, value, depth, flavor="cantor"):
        return cls((value,) * depth, flavor)

    @classmethod
    def geometric(cls, q, depth, flavor="cantor"):
        """``a_j = q**j`` for ``j = 1..depth``."""
        q = _as_fraction(q)
        return cls(tuple(q ** j for j in range(1, depth + 1)), flavor)

    def __len__(self):
        return len(self.a)

    def odd_factors(self):
        """``1/a_j`` as integers (carpet flavor)."""
        return [int(1 / v) for v in self.a]


def _check_depth(gaps, depth):
    if depth < 0:
        raise ConfigurationError("depth must be nonnegative")
    if depth > len(gaps):
        raise ConfigurationError(f"depth {depth} exceeds the {len(gaps)} available gaps")


@dataclass(frozen=True)
class CantorApprox:
    """The ``2**depth`` closed intervals of the level-``depth`` Cantor approximant."""

    gaps: GapSequence
    depth: int
    intervals: tuple  # (left, length) pairs, left to right

    @property
    def measure(self):
        return sum((length for _, length in self.intervals), Fraction(0))

    def removed(self):
        """Open gaps removed at levels ``1..depth`` as ``(level, left, length)``."""
        out = []
        level_intervals = [(Fraction(0), Fraction(1))]
        for level in range(1, self.depth + 1):
            a = self.gaps.a[level - 1]
            nxt = []
            for left, length in level_intervals:
                child = length * (1 - a) / 2
                out.append((level, left + child, length * a))
                nxt.extend([(left, child), (left + length - child, child)])
            level_intervals = nxt
        return out

    def contains(self, x):
        """Exact membership for a rational or float point."""
        x = _as_fraction(x) if not isinstance(x, float) else Fraction(x)
        return any(left <= x <= left + length for left, length in self.intervals)

    def indicator_1d(self, coords, h):
        """Boolean membership of float coordinates (closed intervals, tiny snap)."""
        coords = np.asarray(coords, dtype=float)
        lefts = np.array([float(l) for l, _ in self.intervals])
        rights = np.array([float(l + n) for l, n in self.intervals])
        tol = SNAP * h
        pos = np.searchsorted(lefts, coords + tol, side="right") - 1
        ok = pos >= 0
        out = np.zeros(coords.shape, dtype=bool)
        out[ok] = coords[ok] <= rights[pos[ok]] + tol
        return out

    def rasterize(self, grid):
        """Indicator of the ``n``-fold product on ``grid`` (``n = grid.dim``).

        Every gap intersecting the grid window must span at least four
        spacings, otherwise :class:`ResolutionError` reports the needed ``h``.
        """
        need = None
        for axis, ((lo, hi), h) in enumerate(zip(grid.bounds, grid.spacing)):
            for _, left, length in self.removed():
                if float(left + length) <= lo or float(left) >= hi:
                    continue
                if need is None or length < need:
                    need = length
            if need is not None and h > float(need) / 4 * (1 + 1e-12):
                raise ResolutionError(
                    f"grid spacing {h:.6g} too coarse for depth {self.depth}: "
                    f"need h <= {float(need) / 4:.6g} (shortest gap {float(need):.6g} / 4)")
        ind = None
        for axis_coords, h in zip(grid.axes, grid.spacing):
            m = self.indicator_1d(axis_coords, h)
            ind = m if ind is None else np.logical_and.outer(ind, m)
        return ScalarField(grid, ind.astype(float))


def cantor_build(gaps, depth):
    """Intervals of the Cantor approximant after ``depth`` middle-gap removals."""
    if gaps.flavor != "cantor":
        gaps = GapSequence(gaps.a, "cantor")
    _check_depth(gaps, depth)
    intervals = [(Fraction(0), Fraction(1))]
    for a in gaps.a[:depth]:
        nxt = []
        for left, length in intervals:
            child = length * (1 - a) / 2
            nxt.append((left, child))
            nxt.append((left + length - child, child))
        intervals = nxt
    return CantorApprox(gaps, depth, tuple(intervals))


def cantor_measure(gaps, depth):
    """``prod_{j <= depth} (1 - a_j)`` as an exact fraction."""
    _check_depth(gaps, depth)
    out = Fraction(1)
    for a in gaps.a[:depth]:
        out *= 1 - a
    return out


def ternary_cantor_member(x, depth):
    """Digit test for the middle-thirds set: no base-3 digit 1 among the first
    ``depth`` digits, allowing the terminating ``0222...``/``1000...`` rewrite."""
    x = _as_fraction(x)
    if not 0 <= x <= 1:
        return False
    for _ in range(depth):
        x *= 3
        digit = int(x)
        if digit == 3:
            digit = 2
        x -= digit
        if digit == 1:
            if x == 0:
                # 0.1000... == 0.0222...
                return True
            return False
    return True


@dataclass(frozen=True)
class Cube:
    """Closed cube ``corner + [0, edge]^n`` with exact coordinates."""

    level: int
    index: tuple  # (k_1, ..., k_level), ordinals 1..p^n-1 (p^n for a central cube)
    corner: tuple
    edge: Fraction


@dataclass(frozen=True)
class CarpetApprox:
    """Level-``depth`` precarpet ``S_{a,depth}`` in ``[0, 1]^n``."""

    gaps: GapSequence
    n: int
    depth: int

    @cached_property
    def factors(self):
        return self.gaps.odd_factors()[:self.depth]

    def _children(self, p):
        centre = (p - 1) // 2
        pos = list(product(range(p), repeat=self.n))
        centre_pos = (centre,) * self.n
        ordinals, k = {}, 1
        for q in pos:
            if q == centre_pos:
                continue
            ordinals[q] = k
            k += 1
        return pos, centre_pos, ordinals

    @cached_property
    def _levels(self):
        """Retained cells and removed central cubes per level."""
        retained = [Cube(0, (), (Fraction(0),) * self.n, Fraction(1))]
        levels = []
        removed = []
        for level, p in enumerate(self.factors, start=1):
            pos, centre_pos, ordinals = self._children(p)
            nxt = []
            for cell in retained:
                edge = cell.edge / p
                for q in pos:
                    corner = tuple(c + edge * qi for c, qi in zip(cell.corner, q))
                    if q == centre_pos:
                        removed.append(Cube(level, cell.index + (p ** self.n,), corner, edge))
                    else:
                        nxt.append(Cube(level, cell.index + (ordinals[q],), corner, edge))
            retained = nxt
            levels.append(retained)
        return levels, removed

    @property
    def retained(self):
        """Level-``depth`` cells ``T_{k_1..k_depth}``."""
        levels, _ = self._levels
        return levels[-1] if levels else [Cube(0, (), (Fraction(0),) * self.n, Fraction(1))]

    def retained_at(self, level):
        if level == 0:
            return [Cube(0, (), (Fraction(0),) * self.n, Fraction(1))]
        return self._levels[0][level - 1]

    @property
    def removed(self):
        """Central cubes removed at levels ``1..depth``."""
        return self._levels[1]

    @property
    def measure(self):
        return sum((c.edge ** self.n for c in self.retained), Fraction(0))

    def contains(self, point):
        """Exact membership (closed cells) of a rational point."""
        pt = tuple(_as_fraction(x) for x in point)
        if any(not 0 <= x <= 1 for x in pt):
            return False
        for cube in self.removed:
            if all(c < x < c + cube.edge for c, x in zip(cube.corner, pt)):
                return False
        return True

    def check_alignment(self, grid):
        """Cells of level ``depth`` must have node-aligned boundaries."""
        P = int(np.prod(self.factors)) if self.factors else 1
        for axis, ((lo, _), h) in enumerate(zip(grid.bounds, grid.spacing)):
            per_cell = 1.0 / (P * h)
            origin = -lo / h
            if abs(per_cell - round(per_cell)) > 1e-6 or round(per_cell) < 1 \
                    or abs(origin - round(origin)) > 1e-6:
                raise ResolutionError(
                    f"axis {axis}: spacing {h:.6g} does not align level-{self.depth} cells "
                    f"(need 1/h a multiple of {P} and 0 on a node)")
        return P

    def _removed_interior_mask(self, grid, upto=None):
        """Nodes strictly inside some removed central cube of level ``<= upto``."""
        self.check_alignment(grid)
        upto = self.depth if upto is None else upto
        removed = np.zeros(grid.shape, dtype=bool)
        z = [np.rint(ax / h).astype(np.int64) for ax, h in zip(grid.axes, grid.spacing)]
        spans = [int(round(1.0 / h)) for h in grid.spacing]  # nodes per level-(i-1) edge
        for p in self.factors[:upto]:
            central = None
            for a, zi in enumerate(z):
                child = spans[a] // p
                t = np.mod(zi, spans[a])
                m = (t > child * (p - 1) // 2) & (t < child * (p + 1) // 2)
                central = m if central is None else np.logical_and.outer(central, m)
                spans[a] = child
            removed |= central
        return removed

    def rasterize(self, grid):
        """Indicator of ``S_{a,depth}``: in the unit cube, outside every removed open cube."""
        inside = None
        for ax, h in zip(grid.axes, grid.spacing):
            m = (ax >= -SNAP * h) & (ax <= 1 + SNAP * h)
            inside = m if inside is None else np.logical_and.outer(inside, m)
        ind = inside & ~self._removed_interior_mask(grid)
        return ScalarField(grid, ind.astype(float))

    def face_collar(self, grid, width=1):
        """Nodes within ``width`` lattice steps (max-norm) of a removed cube's boundary."""
        mask = np.zeros(grid.shape, dtype=bool)
        for cube in self.removed:
            lo = [float(c) for c in cube.corner]
            hi = [float(c + cube.edge) for c in cube.corner]
            near = None
            on_face = None
            for ax, h, a, b in zip(grid.axes, grid.spacing, lo, hi):
                band = (ax >= a - width * h - SNAP * h) & (ax <= b + width * h + SNAP * h)
                face = (np.abs(ax - a) <= width * h + SNAP * h) | (np.abs(ax - b) <= width * h + SNAP * h)
                near = band if near is None else np.logical_and.outer(near, band)
                on_face = face if on_face is None else np.logical_or.outer(on_face, face)
            mask |= near & on_face
        return mask


def carpet_build(gaps, n, depth):
    if gaps.flavor != "sierpinski":
        gaps = GapSequence(gaps.a, "sierpinski")
    _check_depth(gaps, depth)
    return CarpetApprox(gaps, n, depth)


def carpet_measure(gaps, n, depth):
    """``prod_{j <= depth} (1 - a_j^n)`` as an exact fraction."""
    _check_depth(gaps, depth)
    out = Fraction(1)
    for a in gaps.a[:depth]:
        out *= 1 - a ** n
    return out


@dataclass(frozen=True)
class NCloseSet:
    """Level-``m`` cubes within ``N`` adjacency steps of a removed central cube."""

    carpet: CarpetApprox
    N: int
    m: int
    cells: tuple

    def rasterize(self, grid):
        mask = np.zeros(grid.shape, dtype=bool)
        for cube in self.cells:
            box = None
            for ax, h, c in zip(grid.axes, grid.spacing, cube.corner):
                a, b = float(c), float(c + cube.edge)
                m = (ax >= a - SNAP * h) & (ax <= b + SNAP * h)
                box = m if box is None else np.logical_and.outer(box, m)
            mask |= box
        return ScalarField(grid, mask.astype(float))


def _bfs_steps(p, n, start, N):
    """Max-norm-adjacency BFS distances on the ``p^n`` child lattice, capped at ``N``."""
    dist = {start: 0}
    queue = deque([start])
    while queue:
        cur = queue.popleft()
        if dist[cur] >= N:
            continue
        for step in product((-1, 0, 1), repeat=n):
            nxt = tuple(c + s for c, s in zip(cur, step))
            if nxt in dist or any(not 0 <= c < p for c in nxt):
                continue
            dist[nxt] = dist[cur] + 1
            queue.append(nxt)
    return dist


def n_close_cells(carpet, N, m):
    """``E_{N,m}``: siblings reachable from the level-``m`` central cube in ``<= N`` steps.

    Adjacency is nonempty intersection of closed cubes. The central cube itself
    is included, so for ``N < 1/a_m`` the result is the centred block with edge
    fraction ``min(1, (2N+1) a_m)`` of the parent.
    """
    if not 1 <= m <= carpet.depth:
        raise ConfigurationError(f"level m={m} outside 1..{carpet.depth}")
    p = carpet.factors[m - 1]
    n = carpet.n
    centre = ((p - 1) // 2,) * n
    reach = _bfs_steps(p, n, centre, N)
    pos, centre_pos, ordinals = carpet._children(p)
    cells = []
    for parent in carpet.retained_at(m - 1):
        edge = parent.edge / p
        for q in sorted(reach):
            corner = tuple(c + edge * qi for c, qi in zip(parent.corner, q))
            k = p ** n if q == centre_pos else ordinals[q]
            cells.append(Cube(m, parent.index + (k,), corner, edge))
    return NCloseSet(carpet, N, m, tuple(cells))


def cells_csv_rows(cubes):
    """Rows ``(level, multi-index, corner..., edge)`` for CSV export."""
    rows = []
    for c in cubes:
        rows.append([c.level, "-".join(str(k) for k in c.index)]
                    + [float(x) for x in c.corner] + [float(c.edge)])
    return rows
