"""Binary-tree genealogy addressing and storage of observed lineages.

Cells are addressed by their path from the root: digit 0 selects the new-pole
daughter, digit 1 the old-pole daughter, and the empty path is the root.
A :class:`LineageTree` maps alive cells to their trait value (e.g. growth
rate); dead cells are simply absent. Trees are prefix-closed (a living cell
never has a dead ancestor) and immutable once built, so they can be shared
freely across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

MAX_DEPTH = 63

NEW_POLE = 0
OLD_POLE = 1

_POLE_NAMES = {"new": NEW_POLE, "old": OLD_POLE, 0: NEW_POLE, 1: OLD_POLE}


@dataclass(frozen=True, order=True)
class CellId:
    """Address of a cell: ``depth`` path digits packed into ``bits``.

    The most significant of the ``depth`` bits is the first division. Packing
    keeps ids hashable and cheap; depth is capped at 63 so ids fit in uint64.
    """

    depth: int
    bits: int

    def __post_init__(self):
        if not 0 <= self.depth <= MAX_DEPTH:
            raise ValueError(f"cell depth must be in [0, {MAX_DEPTH}], got {self.depth}")
        if not 0 <= self.bits < (1 << self.depth if self.depth else 1):
            raise ValueError(f"cell bits {self.bits} out of range for depth {self.depth}")

    @classmethod
    def root(cls) -> "CellId":
        return cls(0, 0)

    @classmethod
    def from_string(cls, path: str) -> "CellId":
        """Parse a path of '0'/'1' digits; "" is the root."""
        if any(ch not in "01" for ch in path):
            raise ValueError(f"invalid cell path {path!r}: digits must be 0 or 1")
        if len(path) > MAX_DEPTH:
            raise ValueError(f"cell path longer than {MAX_DEPTH} digits: {path!r}")
        bits = int(path, 2) if path else 0
        return cls(len(path), bits)

    def child(self, pole) -> "CellId":
        p = _POLE_NAMES.get(pole)
        if p is None:
            raise ValueError(f"pole must be 'new'/'old' or 0/1, got {pole!r}")
        return CellId(self.depth + 1, (self.bits << 1) | p)

    def parent(self) -> "CellId":
        if self.depth == 0:
            raise ValueError("the root has no parent")
        return CellId(self.depth - 1, self.bits >> 1)

    def __str__(self) -> str:
        return format(self.bits, f"0{self.depth}b") if self.depth else ""


def child_id(cell: CellId, pole) -> CellId:
    """Daughter address: appends 0 for the new pole, 1 for the old pole."""
    return cell.child(pole)


def generation(cell: CellId) -> int:
    """Generation of a cell, i.e. the number of path digits."""
    return cell.depth


@dataclass(frozen=True)
class SubtreeCounts:
    """Classification of the alive cells of generation <= n by daughter fate."""

    n: int
    t_star: int
    t_both: int
    t_new_only: int
    t_old_only: int
    t_none: int

    def __post_init__(self):
        parts = self.t_both + self.t_new_only + self.t_old_only + self.t_none
        if parts != self.t_star:
            raise ValueError("fate counts do not partition t_star")


class LineageTree:
    """Immutable map from alive :class:`CellId` to a finite trait value.

    Internally one sorted ``(ids, values)`` array pair per generation, which
    is what the vectorised statistics consume. Construction validates prefix
    closure in a single pass and rejects non-finite values.
    """

    __slots__ = ("_ids", "_values")

    def __init__(self, cells: Mapping[CellId, float] | Iterable[tuple[CellId, float]]):
        items = cells.items() if isinstance(cells, Mapping) else list(cells)
        by_gen: dict[int, list[tuple[int, float]]] = {}
        for cell, value in items:
            if not isinstance(cell, CellId):
                raise TypeError(f"keys must be CellId, got {type(cell).__name__}")
            by_gen.setdefault(cell.depth, []).append((cell.bits, float(value)))
        gens = []
        for q in range(max(by_gen) + 1 if by_gen else 0):
            rows = sorted(by_gen.get(q, []))
            ids = np.array([b for b, _ in rows], dtype=np.uint64)
            vals = np.array([v for _, v in rows], dtype=np.float64)
            if len(np.unique(ids)) != len(ids):
                raise ValueError(f"duplicate cell id at generation {q}")
            gens.append((ids, vals))
        self._init_from_arrays(gens)

    @classmethod
    def from_generation_arrays(
        cls, gens: Sequence[tuple[np.ndarray, np.ndarray]]
    ) -> "LineageTree":
        """Build from per-generation ``(ids, values)`` arrays, ids sorted."""
        tree = cls.__new__(cls)
        tree._init_from_arrays(
            [
                (np.ascontiguousarray(i, dtype=np.uint64), np.ascontiguousarray(v, dtype=np.float64))
                for i, v in gens
            ]
        )
        return tree

    def _init_from_arrays(self, gens):
        while gens and len(gens[-1][0]) == 0:
            gens = gens[:-1]
        for q, (ids, vals) in enumerate(gens):
            if len(ids) != len(vals):
                raise ValueError(f"ids/values length mismatch at generation {q}")
            if not np.all(np.isfinite(vals)):
                raise ValueError(f"non-finite trait value at generation {q}")
            if len(ids) > 1 and not np.all(ids[:-1] < ids[1:]):
                raise ValueError(f"cell ids not sorted and unique at generation {q}")
            if q == 0:
                if len(ids) != 1 or ids[0] != 0:
                    raise ValueError("nonempty tree must contain exactly the root at generation 0")
            else:
                parents = ids >> np.uint64(1)
                prev = gens[q - 1][0]
                if len(prev) == 0:
                    ok = np.zeros(len(ids), dtype=bool)
                else:
                    pos = np.searchsorted(prev, parents)
                    ok = (pos < len(prev)) & (prev[np.minimum(pos, len(prev) - 1)] == parents)
                if not np.all(ok):
                    bad = ids[~ok][0]
                    raise ValueError(
                        f"not prefix-closed: cell {format(int(bad), f'0{q}b')} has no parent"
                    )
        self._ids = tuple(g[0] for g in gens)
        self._values = tuple(g[1] for g in gens)

    # -- basic queries --------------------------------------------------

    def __len__(self) -> int:
        return int(sum(len(ids) for ids in self._ids))

    def __contains__(self, cell: CellId) -> bool:
        if cell.depth >= len(self._ids):
            return False
        ids = self._ids[cell.depth]
        pos = int(np.searchsorted(ids, np.uint64(cell.bits)))
        return pos < len(ids) and int(ids[pos]) == cell.bits

    def value(self, cell: CellId) -> float:
        if cell.depth < len(self._ids):
            ids = self._ids[cell.depth]
            pos = int(np.searchsorted(ids, np.uint64(cell.bits)))
            if pos < len(ids) and int(ids[pos]) == cell.bits:
                return float(self._values[cell.depth][pos])
        raise KeyError(f"cell {str(cell)!r} not alive in tree")

    @property
    def max_generation(self) -> int:
        """Deepest generation holding an alive cell (-1 for an empty tree)."""
        return len(self._ids) - 1

    def generation_size(self, q: int) -> int:
        if q < 0:
            raise ValueError("generation index must be >= 0")
        return len(self._ids[q]) if q < len(self._ids) else 0

    def size_up_to(self, n: int) -> int:
        """Number of alive cells of generation <= n."""
        return int(sum(len(self._ids[q]) for q in range(min(n, self.max_generation) + 1)))

    def generation_arrays(self, q: int) -> tuple[np.ndarray, np.ndarray]:
        """Sorted ``(ids, values)`` of the alive cells at generation q."""
        if 0 <= q < len(self._ids):
            return self._ids[q], self._values[q]
        empty = np.empty(0, dtype=np.uint64)
        return empty, np.empty(0, dtype=np.float64)

    def generation_slice(self, q: int) -> list[CellId]:
        """Alive cells at generation q in lexicographic path order."""
        if q < 0:
            raise ValueError("generation index must be >= 0")
        ids, _ = self.generation_arrays(q)
        return [CellId(q, int(b)) for b in ids]

    def cells(self) -> Iterator[tuple[CellId, float]]:
        """All (cell, value) pairs, generation by generation, paths sorted."""
        for q in range(len(self._ids)):
            ids, vals = self._ids[q], self._values[q]
            for b, v in zip(ids, vals):
                yield CellId(q, int(b)), float(v)

    # -- mother/daughter extraction -------------------------------------

    def mother_daughter_arrays(self, q: int):
        """Vectorised triples for the mothers at generation q.

        Returns ``(x, y, z, has_y, has_z)`` where y/z are the new/old pole
        daughter values (NaN when the daughter is dead or unobserved).
        """
        ids, x = self.generation_arrays(q)
        nid, nval = self.generation_arrays(q + 1)
        y, z, has_y, has_z = _lookup_daughters(ids, nid, nval)
        return x, y, z, has_y, has_z

    def triple(self, cell: CellId):
        """``(x, y, z)`` for one mother; dead daughters are None."""
        x = self.value(cell)
        out = [x, None, None]
        for pole in (NEW_POLE, OLD_POLE):
            d = cell.child(pole)
            if d in self:
                out[1 + pole] = self.value(d)
        return tuple(out)


def _lookup_daughters(mother_ids, next_ids, next_vals):
    k = len(mother_ids)
    y = np.full(k, np.nan)
    z = np.full(k, np.nan)
    if len(next_ids) == 0:
        false = np.zeros(k, dtype=bool)
        return y, z, false, false.copy()
    for pole, out in ((0, y), (1, z)):
        want = (mother_ids << np.uint64(1)) | np.uint64(pole)
        pos = np.searchsorted(next_ids, want)
        pos_c = np.minimum(pos, len(next_ids) - 1)
        hit = (pos < len(next_ids)) & (next_ids[pos_c] == want)
        out[hit] = next_vals[pos_c[hit]]
    return y, z, ~np.isnan(y), ~np.isnan(z)


def subtree_counts(tree: LineageTree, n: int) -> SubtreeCounts:
    """Classify alive cells of generation <= n by which daughters are alive."""
    if n < 0:
        raise ValueError("n must be >= 0")
    t_star = t_both = t_new = t_old = t_none = 0
    for q in range(min(n, tree.max_generation) + 1):
        _, _, _, has_y, has_z = tree.mother_daughter_arrays(q)
        t_star += len(has_y)
        t_both += int(np.sum(has_y & has_z))
        t_new += int(np.sum(has_y & ~has_z))
        t_old += int(np.sum(~has_y & has_z))
        t_none += int(np.sum(~has_y & ~has_z))
    return SubtreeCounts(n, t_star, t_both, t_new, t_old, t_none)


# -- lineage interchange: one JSON object per line ----------------------


def write_jsonl(tree: LineageTree, path) -> None:
    """Write a tree as JSON lines with fields "id" (path string) and "x"."""
    with open(path, "w") as fh:
        for cell, value in tree.cells():
            fh.write(json.dumps({"id": str(cell), "x": value}) + "\n")


def read_jsonl(path) -> LineageTree:
    """Read a lineage file, rejecting malformed or non-prefix-closed input."""
    cells: dict[CellId, float] = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ValueError(f"{path}:{lineno}: invalid JSON: {exc}") from None
            if not isinstance(obj, dict) or "id" not in obj or "x" not in obj:
                raise ValueError(f'{path}:{lineno}: expected object with "id" and "x"')
            cell = CellId.from_string(obj["id"])
            if cell in cells:
                raise ValueError(f"{path}:{lineno}: duplicate cell id {obj['id']!r}")
            x = obj["x"]
            if not isinstance(x, (int, float)) or isinstance(x, bool) or not math.isfinite(x):
                raise ValueError(f"{path}:{lineno}: trait value must be a finite number")
            cells[cell] = float(x)
    return LineageTree(cells)
