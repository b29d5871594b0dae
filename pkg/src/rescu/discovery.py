"""Unsupervised recurring-pattern discovery from one feature set.

A pattern is an M x N matrix of feature ids: rows are visual words, columns
are instances. Every 2 x 2 sub-matrix (a URP) is scored by how consistently
its two instances agree in feature scale and orientation once the instance
size ratio is factored out; the pattern score is the URP sum divided by M*N.
Search grows each seed URP greedily by adding or removing whole rows and
columns while the score strictly increases.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from itertools import combinations
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DegenerateInstance
from .features import VisualWordIndex
from .types import (
    DiscoveryParams,
    Feature,
    FeatureSet,
    RecurringPattern,
    RpMatrix,
    instance_regions,
)

log = logging.getLogger(__name__)

ANGLE_EPS = 1e-9
IMPROVE_EPS = 1e-12
DEDUP_IOD = 0.5

Cells = list[list[Optional[int]]]


@dataclass(frozen=True)
class Urp:
    """2 x 2 sub-pattern: ``f11, f21`` form instance 1 and ``f12, f22`` instance 2."""

    f11: Feature
    f12: Feature
    f21: Feature
    f22: Feature

    def __post_init__(self) -> None:
        ids = {self.f11.id, self.f12.id, self.f21.id, self.f22.id}
        if len(ids) != 4:
            raise ValueError("URP needs four distinct features")


# -- affinity primitives -----------------------------------------------------


def size_ratio(f11: Feature, f21: Feature, f12: Feature, f22: Feature) -> float:
    """Ratio of the within-instance feature distances of instance 1 and instance 2."""
    d1 = math.hypot(f11.x - f21.x, f11.y - f21.y)
    d2 = math.hypot(f12.x - f22.x, f12.y - f22.y)
    if d1 == 0.0 or d2 == 0.0:
        raise DegenerateInstance(f"coincident features in instance (d1={d1}, d2={d2})")
    return d1 / d2


def _scale_diff(si: float, sj: float, r: float) -> float:
    return (si - r * sj) / (si + r * sj)


def _angle_diff(ti: float, tj: float, r: float) -> float:
    num = ti - r * tj
    den = ti + r * tj
    if abs(den) < ANGLE_EPS:
        if abs(num) < ANGLE_EPS:
            return 0.0
        return math.copysign(1.0, num)
    return num / den


def _wrap(a: float) -> float:
    """Wrap an angle to [-pi, pi)."""
    return (a + math.pi) % (2 * math.pi) - math.pi


def normalized_scale_diff(fi: Feature, fj: Feature, r: float) -> float:
    return _scale_diff(fi.scale, fj.scale, r)


def normalized_angle_diff(fi: Feature, fj: Feature, r: float) -> float:
    """Literal ratio form of the orientation difference.

    The ratio is undefined when both orientations are zero; that case counts
    as a perfect match. Any other vanishing denominator saturates to +-1.
    """
    return _angle_diff(fi.orientation, fj.orientation, r)


def _affinity(
    s11: float, s12: float, s21: float, s22: float,
    t11: float, t12: float, t21: float, t22: float,
    r: float, sigma_s: float, sigma_t: float,
    angle_mode: str = "literal", rotation: float = 0.0,
) -> float:
    ds = max(abs(_scale_diff(s11, s12, r)), abs(_scale_diff(s21, s22, r)))
    if angle_mode == "wrapped":
        dt = max(abs(_wrap(t11 - t12 - rotation)), abs(_wrap(t21 - t22 - rotation))) / math.pi
    else:
        dt = max(abs(_angle_diff(t11, t12, r)), abs(_angle_diff(t21, t22, r)))
    return math.exp(-(ds * ds) / (2.0 * sigma_s) - (dt * dt) / (2.0 * sigma_t))


def _rotation(ax: float, ay: float, bx: float, by: float, ax2: float, ay2: float, bx2: float, by2: float) -> float:
    """Rotation of instance 1's baseline relative to instance 2's."""
    return math.atan2(by - ay, bx - ax) - math.atan2(by2 - ay2, bx2 - ax2)


def urp_affinity(urp: Urp, params: DiscoveryParams = DiscoveryParams()) -> float:
    """Affinity in (0, 1] of a URP; 1 iff the scale and angle discrepancies vanish.

    The discrepancy of each kind is the larger magnitude over the two rows,
    which makes the score independent of row and column order.
    """
    f11, f12, f21, f22 = urp.f11, urp.f12, urp.f21, urp.f22
    r = size_ratio(f11, f21, f12, f22)
    rot = _rotation(f11.x, f11.y, f21.x, f21.y, f12.x, f12.y, f22.x, f22.y)
    return _affinity(
        f11.scale, f12.scale, f21.scale, f22.scale,
        f11.orientation, f12.orientation, f21.orientation, f22.orientation,
        r, params.sigma_s, params.sigma_theta, params.angle_mode, rot,
    )


# -- candidate cache -----------------------------------------------------------


class AffinityCache:
    """Candidate pairs admitted by the adaptive constraints, plus a URP memo.

    ``links`` are pairs of features in the same visual word (corresponding
    features of two instances) whose scale ratio lies within
    ``[1 - p_s, 1 / (1 - p_s)]`` and whose wrapped orientation difference is
    at most ``p_theta``. ``bonds`` are pairs of features from different words
    (two features of one instance) no further apart than ``p_d`` image
    diagonals. A URP is scorable only if both its rows are links and both its
    columns are bonds.
    """

    def __init__(self, fs: FeatureSet, words: VisualWordIndex, params: DiscoveryParams):
        self.params = params
        self.word_of: dict[int, int] = {}
        for wi, w in enumerate(words.words):
            for fid in w:
                self.word_of[fid] = wi
        self.words = words
        self.xs = [f.x for f in fs.features]
        self.ys = [f.y for f in fs.features]
        self.ss = [f.scale for f in fs.features]
        self.ts = [f.orientation for f in fs.features]
        self.partners: dict[int, set[int]] = {fid: set() for fid in self.word_of}
        self.neighbors: dict[int, dict[int, float]] = {fid: {} for fid in self.word_of}

        lo = 1.0 - params.p_s
        hi = math.inf if lo <= 0.0 else 1.0 / lo
        max_angle = math.radians(params.p_theta)
        for w in words.words:
            for a, b in combinations(w, 2):
                ratio = self.ss[a] / self.ss[b]
                dtheta = abs(_wrap(self.ts[a] - self.ts[b]))
                if lo <= ratio <= hi and dtheta <= max_angle + 1e-12:
                    self.partners[a].add(b)
                    self.partners[b].add(a)

        ids = sorted(self.word_of)
        if ids:
            pts = fs.positions[ids]
            max_d = params.p_d * fs.diagonal
            diff = pts[:, None, :] - pts[None, :, :]
            dist = np.hypot(diff[..., 0], diff[..., 1])
            wv = np.array([self.word_of[i] for i in ids])
            ok = (dist <= max_d) & (dist > 0.0) & (wv[:, None] != wv[None, :])
            for ia, ib in zip(*np.nonzero(np.triu(ok, 1))):
                a, b = ids[ia], ids[ib]
                d = float(dist[ia, ib])
                self.neighbors[a][b] = d
                self.neighbors[b][a] = d
        self._memo: dict[tuple[int, int, int, int], float] = {}

    @property
    def links(self) -> set[tuple[int, int]]:
        return {(a, b) for a, ps in self.partners.items() for b in ps if a < b}

    @property
    def bonds(self) -> set[tuple[int, int]]:
        return {(a, b) for a, ns in self.neighbors.items() for b in ns if a < b}

    def is_link(self, a: int, b: int) -> bool:
        return b in self.partners.get(a, ())

    def is_bond(self, a: int, b: int) -> bool:
        return b in self.neighbors.get(a, ())

    def u(self, a: int, a2: int, b: int, b2: int) -> float:
        """Affinity of the URP with rows (a, a2), (b, b2) and columns (a, b), (a2, b2).

        Returns 0 when any of the four pairs is not an admitted candidate.
        """
        key = (a, a2, b, b2)
        val = self._memo.get(key)
        if val is not None:
            return val
        na, na2 = self.neighbors.get(a), self.neighbors.get(a2)
        if (
            na is None or na2 is None
            or b not in na or b2 not in na2
            or a2 not in self.partners[a] or b2 not in self.partners[b]
        ):
            val = 0.0
        else:
            p = self.params
            xs, ys = self.xs, self.ys
            r = na[b] / na2[b2]
            rot = _rotation(xs[a], ys[a], xs[b], ys[b], xs[a2], ys[a2], xs[b2], ys[b2]) if p.angle_mode == "wrapped" else 0.0
            val = _affinity(
                self.ss[a], self.ss[a2], self.ss[b], self.ss[b2],
                self.ts[a], self.ts[a2], self.ts[b], self.ts[b2],
                r, p.sigma_s, p.sigma_theta, p.angle_mode, rot,
            )
        self._memo[key] = val
        return val

    def cell_u(self, cells: Cells, i: int, j: int, k: int, l: int) -> float:
        """URP affinity for rows i, k and columns j, l of ``cells`` (0 across holes)."""
        a, a2, b, b2 = cells[i][j], cells[i][l], cells[k][j], cells[k][l]
        if a is None or a2 is None or b is None or b2 is None:
            return 0.0
        return self.u(a, a2, b, b2)


def precompute_affinity_cache(fs: FeatureSet, words: VisualWordIndex, params: DiscoveryParams) -> AffinityCache:
    return AffinityCache(fs, words, params)


# -- objective -----------------------------------------------------------------


def _urp_sum(cells: Cells, cache: AffinityCache) -> float:
    m = len(cells)
    n = len(cells[0]) if m else 0
    total = 0.0
    for i, k in combinations(range(m), 2):
        for j, l in combinations(range(n), 2):
            total += cache.cell_u(cells, i, j, k, l)
    return total


def rp_objective(matrix: RpMatrix, cache: AffinityCache) -> float:
    """Pattern score: sum of URP affinities over unordered row pairs and
    unordered column pairs, divided by M*N."""
    if matrix.m == 0 or matrix.n == 0:
        return 0.0
    cells = [list(r) for r in matrix.rows]
    return _urp_sum(cells, cache) / (matrix.m * matrix.n)


def _cell_gain(f: int, i: int, c: int, cells: Cells, cache: AffinityCache) -> float:
    """Sum of affinities of every URP that places ``f`` at row i, column c."""
    total = 0.0
    memo_get = cache._memo.get
    u = cache.u
    row = cells[i]
    for j, fij in enumerate(row):
        if j == c or fij is None:
            continue
        for k, other in enumerate(cells):
            if k == i:
                continue
            b, b2 = other[c], other[j]
            if b is None or b2 is None:
                continue
            v = memo_get((f, fij, b, b2))
            total += u(f, fij, b, b2) if v is None else v
    return total


def candidate_gain(f: int, row_i: int, matrix: RpMatrix, cache: AffinityCache, column: Optional[int] = None) -> float:
    """Affinity sum-up score of placing feature ``f`` in ``row_i`` of the newest column.

    ``matrix`` already holds the partner features of the new column (holes
    allowed). ``column`` defaults to the last column.
    """
    cells = [list(r) for r in matrix.rows]
    c = matrix.n - 1 if column is None else column
    return _cell_gain(f, row_i, c, cells, cache)


# -- greedy expansion ------------------------------------------------------------


class _Search:
    def __init__(self, cells: Cells, words: list[int], cache: AffinityCache, blocked: set[int]):
        self.cells = cells
        self.words = words
        self.cache = cache
        self.blocked = blocked
        self.used = {f for row in cells for f in row if f is not None}
        self.total = _urp_sum(cells, cache)

    @property
    def m(self) -> int:
        return len(self.cells)

    @property
    def n(self) -> int:
        return len(self.cells[0])

    def score(self) -> float:
        return self.total / (self.m * self.n)

    def _free(self, f: int, taken: set[int]) -> bool:
        return f not in self.used and f not in self.blocked and f not in taken

    def _cell_candidates(self, cells: Cells, i: int, c: int, taken: set[int]) -> set[int]:
        cache = self.cache
        linked: set[int] = set()
        for j, f in enumerate(cells[i]):
            if j != c and f is not None:
                linked |= cache.partners.get(f, set())
        if not linked:
            return set()
        col = [cells[k][c] for k in range(len(cells)) if k != i and cells[k][c] is not None]
        used, blocked, neighbors = self.used, self.blocked, cache.neighbors
        out = set()
        for f in linked:
            if f in used or f in blocked or f in taken:
                continue
            nb = neighbors[f]
            for g in col:
                if g in nb:
                    out.add(f)
                    break
        return out

    def _best_cell(self, cells: Cells, i: int, c: int, taken: set[int]) -> tuple[float, Optional[int]]:
        best_gain, best_f = 0.0, None
        for f in sorted(self._cell_candidates(cells, i, c, taken)):
            g = _cell_gain(f, i, c, cells, self.cache)
            if g > best_gain:
                best_gain, best_f = g, f
        return best_gain, best_f

    # moves: each returns (new score, new total, payload) or None

    def _fill_holes(self):
        best = None
        for i in range(self.m):
            for c in range(self.n):
                if self.cells[i][c] is not None:
                    continue
                gain, f = self._best_cell(self.cells, i, c, set())
                if f is not None and (best is None or gain > best[1]):
                    best = (i, gain, c, f)
        if best is None:
            return None
        i, gain, c, f = best
        return (self.total + gain) / (self.m * self.n), ("hole", i, c, f, gain)

    def _add_column(self):
        cache = self.cache
        best = None
        seen: set[tuple] = set()
        for i0 in range(self.m):
            anchors: set[int] = set()
            for f in self.cells[i0]:
                if f is not None:
                    anchors |= cache.partners.get(f, set())
            for anchor in sorted(a for a in anchors if self._free(a, set())):
                ext = [row + [None] for row in self.cells]
                ext[i0][-1] = anchor
                taken = {anchor}
                c = self.n
                # rows ordered by their best gain given the anchor alone
                order, first = [], {}
                for k in range(self.m):
                    if k == i0:
                        continue
                    first[k] = self._best_cell(ext, k, c, taken)
                    order.append((-first[k][0], k))
                order.sort()
                gain = 0.0
                for pos, (_, k) in enumerate(order):
                    # the first fill sees the same state as the ordering pass
                    g, f = first[k] if pos == 0 else self._best_cell(ext, k, c, taken)
                    if f is None:
                        continue
                    ext[k][c] = f
                    taken.add(f)
                    gain += g
                col = tuple(ext[k][c] for k in range(self.m))
                if sum(v is not None for v in col) < 2 or col in seen:
                    continue
                seen.add(col)
                score = (self.total + gain) / (self.m * (self.n + 1))
                if best is None or score > best[0]:
                    best = (score, ("col+", col, gain))
        return best

    def _row_can_gain(self, anchor: int, c0: int) -> bool:
        """Cheap necessary condition for a new row anchored at column c0 to score."""
        cache = self.cache
        for p in cache.partners.get(anchor, ()):
            if not self._free(p, {anchor}):
                continue
            nb = cache.neighbors[p]
            for c in range(self.n):
                if c == c0:
                    continue
                for row in self.cells:
                    g = row[c]
                    if g is not None and g in nb and row[c0] is not None:
                        return True
        return False

    def _add_row(self):
        cache = self.cache
        best = None
        seen: set[tuple] = set()
        present = set(self.words)
        for w, members in enumerate(cache.words.words):
            if w in present:
                continue
            for c0 in range(self.n):
                col_feats = [row[c0] for row in self.cells if row[c0] is not None]
                anchors = [
                    f for f in members
                    if self._free(f, set())
                    and any(cache.is_bond(f, g) for g in col_feats)
                    and self._row_can_gain(f, c0)
                ]
                for anchor in anchors:
                    ext = [list(row) for row in self.cells] + [[None] * self.n]
                    r = self.m
                    ext[r][c0] = anchor
                    taken = {anchor}
                    order, first = [], {}
                    for c in range(self.n):
                        if c == c0:
                            continue
                        first[c] = self._best_cell(ext, r, c, taken)
                        order.append((-first[c][0], c))
                    order.sort()
                    gain = 0.0
                    for pos, (_, c) in enumerate(order):
                        g, f = first[c] if pos == 0 else self._best_cell(ext, r, c, taken)
                        if f is None:
                            continue
                        ext[r][c] = f
                        taken.add(f)
                        gain += g
                    row = tuple(ext[r])
                    if gain <= 0.0 or row in seen:
                        continue
                    seen.add(row)
                    score = (self.total + gain) / ((self.m + 1) * self.n)
                    if best is None or score > best[0]:
                        best = (score, ("row+", w, row, gain))
        return best

    def _remove_column(self):
        if self.n <= 2:
            return None
        best = None
        for c in range(self.n):
            cells = [row[:c] + row[c + 1 :] for row in self.cells]
            total = _urp_sum(cells, self.cache)
            score = total / (self.m * (self.n - 1))
            if best is None or score > best[0]:
                best = (score, ("col-", c, total))
        return best

    def _remove_row(self):
        if self.m <= 2:
            return None
        best = None
        for i in range(self.m):
            cells = self.cells[:i] + self.cells[i + 1 :]
            keep = [c for c in range(self.n) if sum(row[c] is not None for row in cells) >= 2]
            if len(keep) < 2:
                continue
            cells = [[row[c] for c in keep] for row in cells]
            total = _urp_sum(cells, self.cache)
            score = total / (len(cells) * len(keep))
            if best is None or score > best[0]:
                best = (score, ("row-", i, keep, total))
        return best

    def _apply(self, move) -> None:
        kind = move[0]
        if kind == "hole":
            _, i, c, f, gain = move
            self.cells[i][c] = f
            self.used.add(f)
            self.total += gain
        elif kind == "col+":
            _, col, gain = move
            for k, f in enumerate(col):
                self.cells[k].append(f)
                if f is not None:
                    self.used.add(f)
            self.total += gain
        elif kind == "row+":
            _, w, row, gain = move
            self.cells.append(list(row))
            self.words.append(w)
            self.used |= {f for f in row if f is not None}
            self.total += gain
        elif kind == "col-":
            _, c, total = move
            for row in self.cells:
                f = row.pop(c)
                if f is not None:
                    self.used.discard(f)
            self.total = total
        elif kind == "row-":
            _, i, keep, total = move
            dropped = self.cells.pop(i)
            self.words.pop(i)
            self.used -= {f for f in dropped if f is not None}
            for row in self.cells:
                for c in range(len(row)):
                    if c not in keep and row[c] is not None:
                        self.used.discard(row[c])
            self.cells = [[row[c] for c in keep] for row in self.cells]
            self.total = total

    def _state(self) -> tuple:
        return tuple(self.words), tuple(tuple(row) for row in self.cells)

    def run(self, max_moves: int = 10_000, memo: Optional[dict] = None) -> None:
        """Apply improving moves until none is left.

        ``memo`` maps states reached by earlier runs (same cache and blocked
        set) to their final state; the search is deterministic given its
        state, so a hit ends the run early with the same result.
        """
        visited = []
        try:
            self._run(max_moves, memo, visited)
        finally:
            if memo is not None:
                final = self._state()
                for st in visited:
                    memo[st] = final

    def _run(self, max_moves: int, memo: Optional[dict], visited: list) -> None:
        for _ in range(max_moves):
            if memo is not None:
                st = self._state()
                hit = memo.get(st)
                if hit is not None:
                    words, cells = hit
                    self.words = list(words)
                    self.cells = [list(row) for row in cells]
                    self.used = {f for row in self.cells for f in row if f is not None}
                    self.total = _urp_sum(self.cells, self.cache)
                    return
                visited.append(st)
            current = self.score()
            best = None
            for proposal in (self._fill_holes(), self._add_column(), self._add_row(), self._remove_column(), self._remove_row()):
                if proposal is not None and (best is None or proposal[0] > best[0]):
                    best = proposal
            if best is None or best[0] <= current + IMPROVE_EPS:
                return
            self._apply(best[1])
            # resync to avoid drift from incremental sums
            self.total = _urp_sum(self.cells, self.cache)


def _canonical(cells: Cells, words: list[int], cache: AffinityCache) -> RpMatrix:
    """Rows sorted by word index, columns by mean feature position (x, then y)."""
    order = sorted(range(len(words)), key=lambda i: words[i])
    cells = [cells[i] for i in order]
    words = [words[i] for i in order]

    def col_key(c: int):
        fs = [row[c] for row in cells if row[c] is not None]
        return (
            sum(cache.xs[f] for f in fs) / len(fs),
            sum(cache.ys[f] for f in fs) / len(fs),
            min(fs),
        )

    cols = sorted(range(len(cells[0])), key=col_key)
    return RpMatrix(rows=tuple(tuple(row[c] for c in cols) for row in cells), words=tuple(words))


def expand_rp(
    initial: tuple[int, int, int, int],
    fs: FeatureSet,
    words: VisualWordIndex,
    params: DiscoveryParams,
    cache: Optional[AffinityCache] = None,
    blocked: Iterable[int] = (),
    memo: Optional[dict] = None,
) -> RpMatrix:
    """Grow a seed URP ``(f11, f12, f21, f22)`` into a locally optimal pattern.

    Each step applies whichever of fill-hole, add-column, add-row,
    remove-column or remove-row raises the score most, and stops when none
    raises it strictly.
    """
    cache = cache or precompute_affinity_cache(fs, words, params)
    a, a2, b, b2 = initial
    search = _Search([[a, a2], [b, b2]], [cache.word_of[a], cache.word_of[b]], cache, set(blocked))
    search.run(memo=memo)
    return _canonical(search.cells, search.words, cache)


def enumerate_urps(cache: AffinityCache, blocked: Iterable[int] = ()) -> list[tuple[float, tuple[int, int, int, int]]]:
    """All scorable URPs as (affinity, (f11, f12, f21, f22)), each counted once."""
    blocked = set(blocked)
    out = []
    for a in sorted(cache.partners):
        if a in blocked:
            continue
        wa = cache.word_of[a]
        for a2 in sorted(cache.partners[a]):
            if a2 <= a or a2 in blocked:
                continue
            na2 = cache.neighbors[a2]
            for b in sorted(cache.neighbors[a]):
                if b in blocked or cache.word_of[b] <= wa:
                    continue
                for b2 in sorted(cache.partners[b]):
                    if b2 in blocked or b2 not in na2 or b2 in (a, a2):
                        continue
                    out.append((cache.u(a, a2, b, b2), (a, a2, b, b2)))
    return out


def select_initials(
    cache: AffinityCache, params: DiscoveryParams, blocked: Iterable[int] = (), rng: Optional[np.random.Generator] = None
) -> list[tuple[int, int, int, int]]:
    """Pick up to ``n_initials`` seed URPs, round-robin over word pairs.

    Word pairs are visited in order of their best affinity. The first pick in
    each pair is its best URP; later picks are drawn at random among that
    pair's remaining URPs within 0.1 of its remaining best.
    """
    rng = rng if rng is not None else np.random.default_rng(params.rng_seed)
    strata: dict[tuple[int, int], list[tuple[float, tuple[int, int, int, int]]]] = {}
    for u, urp in enumerate_urps(cache, blocked):
        key = (cache.word_of[urp[0]], cache.word_of[urp[2]])
        strata.setdefault(key, []).append((u, urp))
    for entries in strata.values():
        entries.sort(key=lambda e: (-e[0], e[1]))
    order = sorted(strata, key=lambda k: (-strata[k][0][0], k))
    picks: list[tuple[int, int, int, int]] = []
    first = {k: True for k in order}
    while len(picks) < params.n_initials and any(strata[k] for k in order):
        for k in order:
            entries = strata[k]
            if not entries or len(picks) >= params.n_initials:
                continue
            if first[k]:
                idx = 0
                first[k] = False
            else:
                top = entries[0][0]
                pool = [i for i, e in enumerate(entries) if e[0] >= top - 0.1]
                idx = int(pool[int(rng.integers(len(pool)))])
            picks.append(entries.pop(idx)[1])
    return picks


def _union_iod(a: RecurringPattern, b: RecurringPattern) -> float:
    from shapely.geometry import box
    from shapely.ops import unary_union

    ua = unary_union([box(*r.bbox) for r in a.instances])
    ub = unary_union([box(*r.bbox) for r in b.instances])
    if ua.area == 0:
        return 0.0
    return ua.intersection(ub).area / ua.area


def _best_pattern(fs, words, params, cache, blocked) -> Optional[tuple[float, RpMatrix]]:
    rng = np.random.default_rng(params.rng_seed)
    initials = select_initials(cache, params, blocked, rng)
    best: Optional[tuple[float, RpMatrix]] = None
    memo: dict = {}
    for init in initials:
        matrix = expand_rp(init, fs, words, params, cache, blocked, memo)
        score = rp_objective(matrix, cache)
        if best is None or score > best[0] + IMPROVE_EPS:
            best = (score, matrix)
    return best


def discover_rps(
    fs: FeatureSet,
    words: VisualWordIndex,
    params: DiscoveryParams = DiscoveryParams(),
    cache: Optional[AffinityCache] = None,
) -> list[RecurringPattern]:
    """Extract recurring patterns one at a time.

    The best pattern over all seeds is accepted when its score reaches
    ``params.u_min``; its features are then withheld and the search repeats,
    up to ``params.max_rps`` patterns. A pattern whose instance area is more
    than half covered by an already accepted pattern is discarded.
    """
    if len(words) == 0:
        return []
    cache = cache or precompute_affinity_cache(fs, words, params)
    blocked: set[int] = set()
    accepted: list[RecurringPattern] = []
    attempts = 0
    while len(accepted) < params.max_rps and attempts < 4 * params.max_rps:
        attempts += 1
        found = _best_pattern(fs, words, params, cache, blocked)
        if found is None or found[0] < params.u_min:
            break
        score, matrix = found
        blocked |= set(matrix.feature_ids())
        rp = RecurringPattern(matrix=matrix, score=score, instances=instance_regions(matrix, fs), params=params)
        if any(_union_iod(rp, other) > DEDUP_IOD for other in accepted):
            log.debug("dropping pattern overlapping an accepted one (U=%.4f)", score)
            continue
        accepted.append(rp)
    accepted.sort(key=lambda p: -p.score)
    return accepted


def default_grid(base: DiscoveryParams = DiscoveryParams()) -> list[DiscoveryParams]:
    return [
        replace(base, p_d=pd, p_s=ps, p_theta=pt)
        for pd in (0.1, 0.15, 0.2)
        for ps in (0.1, 0.2, 0.3, 0.4, 0.5)
        for pt in (30.0, 90.0, 180.0)
    ]


def grid_search_params(
    fs: FeatureSet, words: VisualWordIndex, grid: Sequence[DiscoveryParams]
) -> tuple[DiscoveryParams, list[RecurringPattern]]:
    """Pick the grid point whose best pattern scores highest.

    Ties go to the smaller p_d, then p_s, then p_theta. When no point yields
    a pattern the first grid point is returned with an empty list.
    """
    if not grid:
        raise ValueError("empty parameter grid")
    results = []
    for params in grid:
        rps = discover_rps(fs, words, params)
        if rps:
            results.append((rps[0].score, params, rps))
    if not results:
        return grid[0], []
    results.sort(key=lambda t: (-round(t[0], 9), t[1].p_d, t[1].p_s, t[1].p_theta))
    _, params, rps = results[0]
    return params, rps
