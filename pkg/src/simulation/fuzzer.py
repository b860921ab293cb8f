"""
GA-style fuzzer over a synthetic program.

A mutation re-executes a queue seed up to one of its conditional decisions and
flips that decision to a sibling direction. Easy directions flip with
probability p_easy, Hard ones with probability 2^-magic_width, size-gated ones
only for large enough inputs. Children reaching a new edge enter the queue;
those reaching a new branch are marked first_new_cov.
"""
import logging
from dataclasses import replace
from typing import Dict, List, Optional, Sequence, Set, Tuple

import numpy as np

from src.coverage import CoverageStore, mark_covered
from src.features import FuzzerStateView
from src.lineage import LineageIndex, Seed, SeedId, SeedOrigin, record_seed
from src.program_model import BranchId, ProgramModel

logger = logging.getLogger(__name__)

Edge = Tuple[int, int]
# Pseudo-branch the entry edge starts from
ENTRY_EDGE_SOURCE = -1


class FuzzerState:
    """
    Queue, coverage and lineage of one campaign, plus the mutation parameters.
    Owned and mutated by a single campaign.
    """

    def __init__(self, model: ProgramModel, fuzzer_epoch: int = 64, p_easy: float = 0.2,
                 favored_bias: float = 0.7, max_trace_length: int = 96, size_jitter: int = 4):
        self.model = model
        self.fuzzer_epoch = fuzzer_epoch
        self.p_easy = p_easy
        self.favored_bias = favored_bias
        self.max_trace_length = max_trace_length
        self.size_jitter = size_jitter
        self.queue: List[Seed] = []
        self.favored: List[Seed] = []
        self.seeds: Dict[SeedId, Seed] = {}
        self.coverage = CoverageStore(model)
        self.edges: Set[Edge] = set()
        self.lineage = LineageIndex()
        self.tick = 0
        self.mutations = 0
        self._next_id = 0

    def view(self) -> FuzzerStateView:
        return FuzzerStateView(queue_size=len(self.queue), coverage=self.coverage)

    @staticmethod
    def trace_edges(trace: Sequence[BranchId]) -> Set[Edge]:
        edges = {(ENTRY_EDGE_SOURCE, int(trace[0]))} if len(trace) else set()
        edges.update((int(a), int(b)) for a, b in zip(trace[:-1], trace[1:]))
        return edges

    def new_seed(self, parent: Optional[Seed], origin: SeedOrigin, size: int,
                 trace: Sequence[BranchId]) -> Seed:
        """Allocates a SeedId for a candidate input; first_new_cov is set on admission."""
        seed = Seed(
            id=self._next_id,
            parent=parent.id if parent is not None else None,
            origin=origin,
            size=int(size),
            trace=tuple(int(b) for b in trace),
            created_at=self.tick,
        )
        self._next_id += 1
        return seed

    def admit(self, seed: Seed, force: bool = False) -> Optional[Seed]:
        """
        Adds a candidate to the queue when it reaches a new edge (always when forced).

        Returns:
            The queued seed, with first_new_cov set when it covered a new branch,
            or None when the candidate brought nothing new.
        """
        arr = self.model.check_trace(seed.trace)
        new_edges = self.trace_edges(seed.trace) - self.edges
        if not new_edges and not force:
            return None
        new_branches = int(np.count_nonzero(~self.coverage.covered[np.unique(arr)])) if arr.size else 0
        if new_branches:
            seed = replace(seed, first_new_cov=1)
        mark_covered(self.coverage, arr)
        self.edges |= new_edges
        record_seed(self.lineage, seed)
        self.queue.append(seed)
        self.seeds[seed.id] = seed
        if seed.first_new_cov:
            self.favored.append(seed)
        return seed

    def pick_parent(self, rng: np.random.Generator) -> Seed:
        """AFL-like choice: favored (first_new_cov) seeds with probability favored_bias."""
        if self.favored and rng.random() < self.favored_bias:
            return self.favored[int(rng.integers(len(self.favored)))]
        return self.queue[int(rng.integers(len(self.queue)))]


def decision_positions(model: ProgramModel, trace: Sequence[BranchId]) -> np.ndarray:
    """
    Trace positions whose branch belongs to a conditional group, the first
    position included: flipping it replaces the entry decision itself.
    """
    arr = np.asarray(trace, dtype=np.int64)
    if arr.size == 0:
        return np.zeros(0, dtype=np.int64)
    return np.nonzero(model.group_of[arr] >= 0)[0]


def fuzzer_epoch_step(state: FuzzerState, model: ProgramModel, rng: np.random.Generator) -> List[Seed]:
    """
    Performs `state.fuzzer_epoch` mutations and returns the children admitted to the queue.

    Deterministic given the state and rng.
    """
    if not state.queue:
        return []
    admitted: List[Seed] = []
    for _ in range(state.fuzzer_epoch):
        state.mutations += 1
        parent = state.pick_parent(rng)
        positions = decision_positions(model, parent.trace)
        if positions.size == 0:
            continue
        i = int(positions[int(rng.integers(positions.size))])
        siblings = model.siblings(parent.trace[i])
        target = siblings[int(rng.integers(len(siblings)))]
        jitter = int(rng.integers(-state.size_jitter, state.size_jitter + 1)) if state.size_jitter else 0
        size = max(1, parent.size + jitter)
        if not model.can_take(target, size):
            continue
        width = model.branches[target].magic_width
        flip_probability = 2.0 ** -width if width > 0 else state.p_easy
        if rng.random() >= flip_probability:
            continue
        trace = model.walk(target, size, rng, state.max_trace_length, prefix=parent.trace[:i])
        child = state.admit(state.new_seed(parent, SeedOrigin.FUZZER_MUTATION, size, trace))
        if child is not None:
            admitted.append(child)
    if admitted:
        logger.debug(
            f"Tick {state.tick}: fuzzer admitted {len(admitted)} seeds "
            f"(queue {len(state.queue)}, covered {state.coverage.covered_count})")
    return admitted
