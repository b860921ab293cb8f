"""
Coverage bookkeeping shared by the fuzzer, the concolic executor and the feature engine.
Neighbor lookups go through a disjoint-set index built once from the program's
conditional groups.
"""
import logging
from typing import Dict, List, Sequence

import numpy as np

from src.program_model import BranchId, ProgramModel

logger = logging.getLogger(__name__)


class DisjointSet:
    """
    Union-find with path halving and union by rank over dense integer ids.
    """

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.rank = [0] * n
        self.size = n

    def find(self, x: int) -> int:
        while x != self.parent[x]:
            self.parent[x] = self.parent[self.parent[x]]
            x = self.parent[x]
        return x

    def union(self, x: int, y: int) -> int:
        rx, ry = self.find(x), self.find(y)
        if rx == ry:
            return rx
        if self.rank[rx] < self.rank[ry]:
            rx, ry = ry, rx
        self.parent[ry] = rx
        if self.rank[rx] == self.rank[ry]:
            self.rank[rx] += 1
        self.size -= 1
        return rx

    def linked(self, x: int, y: int) -> bool:
        return self.find(x) == self.find(y)


class CoverageStore:
    """
    Covered-branch bitset plus the neighbor index of one program.

    The covered set only grows. A single campaign owns and writes the store;
    readers (feature extraction) never mutate it.
    """

    def __init__(self, model: ProgramModel):
        self.model = model
        self.covered = np.zeros(model.branch_count, dtype=bool)
        self.neighbor_index = DisjointSet(model.branch_count)
        for group in model.groups:
            first = group.members[0]
            for member in group.members[1:]:
                self.neighbor_index.union(first, member)
        # Members per representative, so a query touches only its own group
        self._members: Dict[int, List[int]] = {}
        for group in model.groups:
            root = self.neighbor_index.find(group.members[0])
            self._members[root] = list(group.members)
        self._grouped = model.group_of >= 0
        self._representative = np.array(
            [self.neighbor_index.find(b) for b in range(model.branch_count)], dtype=np.int64)

    @property
    def covered_count(self) -> int:
        return int(self.covered.sum())

    def is_covered(self, branch: BranchId) -> bool:
        return bool(self.covered[branch])

    def neighbors(self, branch: BranchId) -> List[int]:
        """Group members of `branch` other than itself, via the union-find representative."""
        if not self._grouped[branch]:
            return []
        return [m for m in self._members[self._representative[branch]] if m != branch]

    def snapshot(self) -> np.ndarray:
        return self.covered.copy()


def _validated(store: CoverageStore, trace: Sequence[BranchId]) -> np.ndarray:
    return store.model.check_trace(trace)


def mark_covered(store: CoverageStore, trace: Sequence[BranchId]) -> int:
    """
    Adds the branches of a trace to the covered set.

    Returns:
        The number of branches newly covered (duplicates counted once).

    Raises:
        ProgramModelError: If the trace holds an out-of-range BranchId.
    """
    arr = _validated(store, trace)
    if arr.size == 0:
        return 0
    distinct = np.unique(arr)
    new = distinct[~store.covered[distinct]]
    store.covered[new] = True
    if new.size:
        logger.debug(f"Marked {new.size} new branches covered (total {store.covered_count})")
    return int(new.size)


def undiscovered_neighbors(store: CoverageStore, trace: Sequence[BranchId]) -> int:
    """
    Counts, over distinct grouped branches of a trace, the group members not yet covered.

    Does not mutate the store.
    """
    arr = _validated(store, trace)
    if arr.size == 0:
        return 0
    distinct = np.unique(arr)
    grouped = distinct[store._grouped[distinct]]
    total = 0
    for branch in grouped:
        members = store._members[store._representative[branch]]
        total += sum(1 for m in members if m != branch and not store.covered[m])
    return total
