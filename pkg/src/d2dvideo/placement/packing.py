"""Turn caching probabilities into a strip layout and per-device caches.

The layout is an ``M x 1`` strip of unit rows. File ``i`` at quality ``q``
is a block ``M_q`` rows tall and ``p[i, q]`` wide, possibly cut into
x-disjoint pieces. A device draws ``u ~ U[0, 1)`` and caches every block
crossed by the vertical line at ``u``, so the marginal caching probability
of a block equals its placed width and no device exceeds ``M``.

Packing works on column configurations: a configuration is a maximal
multiset of block heights that stack within ``M``. A small LP chooses how
much x-length each configuration gets and how much of every block goes into
each configuration's segment (never more than the segment length). Inside a
segment, blocks of one height are laid on that height's lanes with
wrap-around, which keeps a block's pieces x-disjoint. Width the LP cannot
place is returned as a residual.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.optimize import linprog

__all__ = ["Piece", "CacheLayout", "pack_layout", "pack_probabilities",
           "realize_cache", "column_configurations"]

_MIN_WIDTH = 1e-12


@dataclass(frozen=True)
class Piece:
    file: int
    quality: int
    rows: tuple[int, ...]
    x0: float
    x1: float

    @property
    def width(self) -> float:
        return self.x1 - self.x0


@dataclass(frozen=True)
class CacheLayout:
    pieces: tuple[Piece, ...]
    residual: np.ndarray
    storage: int
    storage_size: np.ndarray
    _starts: np.ndarray = field(init=False, repr=False, compare=False)
    _ends: np.ndarray = field(init=False, repr=False, compare=False)
    _index: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "_starts", np.array([pc.x0 for pc in self.pieces], dtype=float))
        object.__setattr__(self, "_ends", np.array([pc.x1 for pc in self.pieces], dtype=float))
        object.__setattr__(self, "_index", np.array(
            [(pc.file, pc.quality) for pc in self.pieces], dtype=int).reshape(-1, 2))

    @property
    def shape(self) -> tuple[int, int]:
        return self.residual.shape

    def placed_width(self) -> np.ndarray:
        out = np.zeros(self.shape)
        for pc in self.pieces:
            out[pc.file, pc.quality] += pc.width
        return out

    def column_height(self, x) -> np.ndarray:
        """Total block height crossed by vertical lines at ``x``."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        hit = (self._starts[None, :] <= x[:, None]) & (x[:, None] < self._ends[None, :])
        heights = np.array([len(pc.rows) for pc in self.pieces], dtype=float)
        return hit @ heights if self.pieces else np.zeros(x.shape)

    def realize(self, u: float) -> set[tuple[int, int]]:
        if not 0.0 <= u < 1.0:
            raise ValueError("u must lie in [0, 1)")
        hit = (self._starts <= u) & (u < self._ends)
        return {(int(i), int(q)) for i, q in self._index[hit]}

    def realize_many(self, us) -> np.ndarray:
        """Boolean cache matrix of shape ``(len(us), F, Q)``."""
        us = np.asarray(us, dtype=float)
        out = np.zeros((us.size,) + self.shape, dtype=bool)
        for pc in self.pieces:
            out[:, pc.file, pc.quality] |= (pc.x0 <= us) & (us < pc.x1)
        return out


def realize_cache(layout: CacheLayout, u: float) -> set[tuple[int, int]]:
    return layout.realize(u)


def _as_int_sizes(storage_size, storage):
    sizes = np.asarray(storage_size, dtype=float)
    ints = np.rint(sizes).astype(int)
    if np.any(np.abs(sizes - ints) > 1e-9) or abs(storage - round(storage)) > 1e-9:
        raise ValueError("strip packing needs integer storage sizes")
    return ints, int(round(storage))


def column_configurations(heights, storage: int) -> list[tuple[int, ...]]:
    """Maximal multisets of quality levels whose heights stack within ``storage``.

    Each configuration is a tuple of per-level counts.
    """
    heights = [int(h) for h in heights]
    order = sorted(range(len(heights)), key=lambda q: -heights[q])
    found: list[tuple[int, ...]] = []

    def extend(pos, counts, room):
        if pos == len(order):
            if any(h <= room for h in heights):
                return  # not maximal
            found.append(tuple(counts))
            return
        q = order[pos]
        for n in range(room // heights[q], -1, -1):
            counts[q] = n
            extend(pos + 1, counts, room - n * heights[q])
        counts[q] = 0

    extend(0, [0] * len(heights), storage)
    return found


def pack_probabilities(p, storage_size, storage) -> CacheLayout:
    p = np.asarray(p, dtype=float)
    if np.any(p < -1e-12) or np.any(p > 1 + 1e-12):
        raise ValueError("caching probabilities must lie in [0, 1]")
    p = np.clip(p, 0.0, 1.0)
    heights, M = _as_int_sizes(storage_size, storage)
    F, Q = p.shape
    configs = column_configurations(heights, M)
    K = len(configs)

    # variables: s_k (segment lengths) then y[i, q, k] for usable (q, k)
    var_index: dict[tuple[int, int, int], int] = {}
    for k, counts in enumerate(configs):
        for q in range(Q):
            if counts[q] == 0:
                continue
            for i in range(F):
                if p[i, q] > 0:
                    var_index[(i, q, k)] = K + len(var_index)
    n_var = K + len(var_index)
    if not var_index:
        return _build_layout(p, heights, M, configs, np.zeros(K), {})

    rows, cols, vals, rhs = [], [], [], []

    def add(entries, bound):
        r = len(rhs)
        for c, v in entries:
            rows.append(r)
            cols.append(c)
            vals.append(v)
        rhs.append(bound)

    add([(k, 1.0) for k in range(K)], 1.0)
    for (i, q, k), v in var_index.items():
        add([(v, 1.0), (k, -1.0)], 0.0)
    lane_members: dict[tuple[int, int], list[int]] = {}
    block_members: dict[tuple[int, int], list[int]] = {}
    for (i, q, k), v in var_index.items():
        lane_members.setdefault((q, k), []).append(v)
        block_members.setdefault((i, q), []).append(v)
    for (q, k), members in lane_members.items():
        add([(v, 1.0) for v in members] + [(k, -float(configs[k][q]))], 0.0)
    for (i, q), members in block_members.items():
        add([(v, 1.0) for v in members], float(p[i, q]))

    A = sparse.csr_matrix((vals, (rows, cols)), shape=(len(rhs), n_var))
    cost = np.zeros(n_var)
    for (i, q, k), v in var_index.items():
        cost[v] = -heights[q]
    res = linprog(cost, A_ub=A, b_ub=np.array(rhs), bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"packing LP failed: {res.message}")
    seg = np.clip(res.x[:K], 0.0, None)
    amounts = {key: float(res.x[v]) for key, v in var_index.items()}
    return _build_layout(p, heights, M, configs, seg, amounts)


def _build_layout(p, heights, M, configs, seg, amounts) -> CacheLayout:
    F, Q = p.shape
    total = seg.sum()
    if total > 1.0:
        seg = seg / total
    pieces: list[Piece] = []
    x0 = 0.0
    for k, counts in enumerate(configs):
        s = float(seg[k])
        if s <= _MIN_WIDTH:
            continue
        row = 0
        for q in sorted(range(Q), key=lambda q: -heights[q]):
            n = counts[q]
            lanes = [tuple(range(row + j * heights[q], row + (j + 1) * heights[q]))
                     for j in range(n)]
            row += n * heights[q]
            if n == 0:
                continue
            items = [(i, min(amounts.get((i, q, k), 0.0), s)) for i in range(F)]
            budget = n * s
            used = sum(y for _, y in items if y > _MIN_WIDTH)
            scale = budget / used if used > budget else 1.0
            cursor = 0.0
            for i, y in items:
                y *= scale
                if y <= _MIN_WIDTH:
                    continue
                pieces.extend(_wrap(i, q, lanes, x0, s, cursor, y))
                cursor += y
        x0 += s
    pieces = _snap(pieces, M)
    layout_placed = np.zeros((F, Q))
    for pc in pieces:
        layout_placed[pc.file, pc.quality] += pc.width
    residual = np.clip(p - layout_placed, 0.0, None)
    residual[residual < 1e-9] = 0.0
    return CacheLayout(tuple(pieces), residual, M, np.asarray(heights, dtype=float))


def _snap(pieces, rows):
    """Remove ulp-sized overlaps left by rounding where one piece ends and the next starts."""
    row_end = np.zeros(rows)
    out = []
    for pc in sorted(pieces, key=lambda pc: pc.x0):
        start = max(pc.x0, float(row_end[list(pc.rows)].max()))
        if start != pc.x0:
            pc = Piece(pc.file, pc.quality, pc.rows, start, pc.x1)
        if pc.width > _MIN_WIDTH:
            out.append(pc)
            row_end[list(pc.rows)] = pc.x1
    return out


def _wrap(i, q, lanes, x0, s, cursor, y):
    lane = min(int(cursor // s), len(lanes) - 1)
    offset = cursor - lane * s
    first_end = min(offset + y, s)
    out = [Piece(i, q, lanes[lane], x0 + offset, x0 + first_end)]
    spill = offset + y - s
    if spill > _MIN_WIDTH and lane + 1 < len(lanes):
        # y <= s, so the spill ends before the first piece starts
        out.append(Piece(i, q, lanes[lane + 1], x0, x0 + min(spill, offset)))
    return [pc for pc in out if pc.width > _MIN_WIDTH]


def pack_layout(solution, storage=None) -> CacheLayout:
    """Layout for a :class:`PlacementSolution` (storage defaults to the solved one)."""
    M = solution.storage if storage is None else storage
    return pack_probabilities(solution.p, solution.storage_size, M)
