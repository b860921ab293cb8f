"""
Synthetic target programs.
A ProgramModel is the desk-scale stand-in for an instrumented binary: a branch
graph whose conditional statements group neighbor branches, annotated with
sanitizer labels, instruction counts and branch hardness.
"""
import json
import logging
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from src.scheduling_interface import ProgramModelError

logger = logging.getLogger(__name__)

BranchId = int

PROGRAM_FILE_VERSION = 1


@dataclass(frozen=True)
class BranchAnnotation:
    """Static facts about one branch. magic_width == 0 means Easy, > 0 means Hard(magic_width)."""

    local_labels: int = 0
    cmp_count: int = 0
    external_calls: int = 0
    indirect_calls: int = 0
    magic_width: int = 0
    min_input_size: int = 0
    reachable_labels: int = 0

    @property
    def is_hard(self) -> bool:
        return self.magic_width > 0

    @property
    def hardness(self) -> str:
        return f"Hard({self.magic_width})" if self.is_hard else "Easy"


@dataclass(frozen=True)
class ConditionalGroup:
    """Neighbor branches stemming from one conditional statement."""

    members: Tuple[BranchId, ...]


class AnnotationRanges(BaseModel):
    """Inclusive (low, high) ranges for generated branch annotations."""

    model_config = ConfigDict(frozen=True)

    cmp: Tuple[int, int] = (0, 4)
    external: Tuple[int, int] = (1, 2)
    external_rate: float = 0.12
    indirect: Tuple[int, int] = (1, 2)
    indirect_rate: float = 0.05
    magic_width: Tuple[int, int] = (16, 32)
    max_local_labels: int = 3


class GeneratorParams(BaseModel):
    """Parameters of the synthetic program generator."""

    model_config = ConfigDict(frozen=True)

    name: Optional[str] = None
    branch_count: int = 200
    group_size_range: Tuple[int, int] = (2, 4)
    hard_fraction: float = 0.3
    label_density: float = 0.1
    hard_label_boost: float = 1.0
    group_probability: float = 0.7
    depth_bias: float = 0.3
    merge_fraction: float = 0.1
    size_gate: int = 0
    gated_fraction: float = 0.0
    # > 0 splits the program at the entry: this share of branches sits behind one
    # direction gated by size_gate and holds every label and Hard branch
    gated_region_fraction: float = 0.0
    annotation_ranges: AnnotationRanges = Field(default_factory=AnnotationRanges)


@dataclass(frozen=True, eq=False)
class ProgramModel:
    """
    Immutable synthetic target program.

    successors[b] lists the branches that may execute right after b; when they
    form a conditional group the first member is the default (fall-through)
    direction taken when an attempted direction cannot be satisfied.
    """

    name: str
    gen_seed: int
    branches: Tuple[BranchAnnotation, ...]
    groups: Tuple[ConditionalGroup, ...]
    successors: Tuple[Tuple[BranchId, ...], ...]
    entry: BranchId = 0
    params: Optional[GeneratorParams] = field(default=None, compare=False)

    def __post_init__(self):
        n = len(self.branches)
        if n == 0:
            raise ProgramModelError("A program model needs at least one branch.")
        if len(self.successors) != n:
            raise ProgramModelError(
                f"successors has {len(self.successors)} entries for {n} branches.")
        if not 0 <= self.entry < n:
            raise ProgramModelError(f"Entry branch {self.entry} out of range [0, {n}).")
        for b, succ in enumerate(self.successors):
            for s in succ:
                if not 0 <= s < n:
                    raise ProgramModelError(f"Branch {b} has out-of-range successor {s}.")
        seen = set()
        for group in self.groups:
            if len(group.members) < 2:
                raise ProgramModelError(f"Conditional group {group.members} has fewer than 2 members.")
            for m in group.members:
                if not 0 <= m < n:
                    raise ProgramModelError(f"Group member {m} out of range [0, {n}).")
                if m in seen:
                    raise ProgramModelError(f"Branch {m} belongs to more than one conditional group.")
                seen.add(m)
        for b, annotation in enumerate(self.branches):
            counts = (annotation.local_labels, annotation.cmp_count, annotation.external_calls,
                      annotation.indirect_calls, annotation.magic_width, annotation.min_input_size)
            if min(counts) < 0:
                raise ProgramModelError(f"Branch {b} has a negative annotation: {annotation}")
        unreachable = n - len(self._reachable_from(self.entry))
        if unreachable:
            raise ProgramModelError(
                f"Program '{self.name}' is not connected: {unreachable} branches unreachable from entry {self.entry}.")

    # --- Structure ---

    @property
    def branch_count(self) -> int:
        return len(self.branches)

    @cached_property
    def graph(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(range(self.branch_count))
        for b, succ in enumerate(self.successors):
            g.add_edges_from((b, s) for s in succ)
        return g

    @cached_property
    def group_of(self) -> np.ndarray:
        """Index into groups for every branch, -1 when the branch is in no group."""
        group_of = np.full(self.branch_count, -1, dtype=np.int64)
        for gi, group in enumerate(self.groups):
            group_of[list(group.members)] = gi
        return group_of

    def siblings(self, branch: BranchId) -> Tuple[BranchId, ...]:
        """Neighbor branches of `branch` (its group members other than itself)."""
        gi = self.group_of[branch]
        if gi < 0:
            return ()
        return tuple(m for m in self.groups[gi].members if m != branch)

    def _reachable_from(self, start: BranchId) -> set:
        seen = {start}
        stack = [start]
        while stack:
            b = stack.pop()
            for s in self.successors[b]:
                if s not in seen:
                    seen.add(s)
                    stack.append(s)
        return seen

    # --- Annotation arrays (read by the feature engine) ---

    def _column(self, attr: str) -> np.ndarray:
        column = np.array([getattr(a, attr) for a in self.branches], dtype=np.int64)
        column.setflags(write=False)
        return column

    @cached_property
    def local_labels(self) -> np.ndarray:
        return self._column("local_labels")

    @cached_property
    def cmp_counts(self) -> np.ndarray:
        return self._column("cmp_count")

    @cached_property
    def external_calls(self) -> np.ndarray:
        return self._column("external_calls")

    @cached_property
    def indirect_calls(self) -> np.ndarray:
        return self._column("indirect_calls")

    @cached_property
    def magic_widths(self) -> np.ndarray:
        return self._column("magic_width")

    @cached_property
    def min_input_sizes(self) -> np.ndarray:
        return self._column("min_input_size")

    @cached_property
    def reachable_labels(self) -> np.ndarray:
        """Per-branch sum of local labels over everything reachable from it (itself included)."""
        table = _compute_reachable_labels(self.graph, self.local_labels)
        table.setflags(write=False)
        return table

    def check_trace(self, trace: Sequence[BranchId]) -> np.ndarray:
        """Returns the trace as an int array, raising ProgramModelError on invalid ids."""
        arr = np.asarray(trace, dtype=np.int64)
        if arr.ndim != 1:
            raise ProgramModelError("A trace must be a flat sequence of branch ids.")
        if arr.size and (arr.min() < 0 or arr.max() >= self.branch_count):
            bad = [int(b) for b in arr if not 0 <= b < self.branch_count]
            raise ProgramModelError(f"Trace contains invalid branch ids {bad[:5]} for program '{self.name}'.")
        return arr

    # --- Execution ---

    def can_take(self, branch: BranchId, size: int) -> bool:
        return size >= self.branches[branch].min_input_size

    def walk(self, start: BranchId, size: int, rng: np.random.Generator,
             max_length: int, prefix: Sequence[BranchId] = ()) -> List[BranchId]:
        """
        Executes an input of `size` bytes from `start` onwards.

        At every step a random successor is attempted: Easy successors are
        taken, Hard ones only with probability 2^-magic_width, size-gated ones
        only when size >= min_input_size; otherwise the default successor
        (successors[0]) is taken. The trace is truncated at max_length.
        """
        trace = list(prefix)
        trace.append(start)
        current = start
        while len(trace) < max_length:
            succ = self.successors[current]
            if not succ:
                break
            candidate = succ[int(rng.integers(len(succ)))] if len(succ) > 1 else succ[0]
            if candidate != succ[0]:
                annotation = self.branches[candidate]
                blocked = size < annotation.min_input_size
                if not blocked and annotation.is_hard:
                    blocked = rng.random() >= 2.0 ** -annotation.magic_width
                if blocked:
                    candidate = succ[0]
            trace.append(candidate)
            current = candidate
        return trace

    def default_trace(self, max_length: int) -> List[BranchId]:
        """Trace of an input that always takes the default direction (the naive seed)."""
        trace = [self.entry]
        current = self.entry
        while len(trace) < max_length and self.successors[current]:
            current = self.successors[current][0]
            trace.append(current)
        return trace

    def structurally_equal(self, other: "ProgramModel") -> bool:
        return (self.name == other.name and self.gen_seed == other.gen_seed
                and self.branches == other.branches and self.groups == other.groups
                and self.successors == other.successors and self.entry == other.entry)

    def __eq__(self, other):
        if not isinstance(other, ProgramModel):
            return NotImplemented
        return self.structurally_equal(other)

    def __hash__(self):
        return hash((self.name, self.gen_seed, self.branch_count))


def _compute_reachable_labels(graph: nx.DiGraph, local_labels: np.ndarray) -> np.ndarray:
    """Sums local labels over reachable sets using the SCC condensation in reverse topological order."""
    condensed = nx.condensation(graph)
    mapping = condensed.graph["mapping"]
    n = graph.number_of_nodes()
    reach = np.zeros((condensed.number_of_nodes(), n), dtype=bool)
    for component in reversed(list(nx.topological_sort(condensed))):
        row = reach[component]
        row[list(condensed.nodes[component]["members"])] = True
        for succ in condensed.successors(component):
            row |= reach[succ]
    component_of = np.array([mapping[b] for b in range(n)], dtype=np.int64)
    per_component = reach.astype(np.int64) @ local_labels
    return per_component[component_of]


def build_program(name: str,
                  successors: Sequence[Sequence[BranchId]],
                  groups: Sequence[Sequence[BranchId]],
                  annotations: Sequence[BranchAnnotation],
                  entry: BranchId = 0,
                  gen_seed: int = 0,
                  params: Optional[GeneratorParams] = None) -> ProgramModel:
    """Assembles a ProgramModel and fills every annotation's reachable_labels from the reachability table."""
    draft = ProgramModel(
        name=name,
        gen_seed=gen_seed,
        branches=tuple(annotations),
        groups=tuple(ConditionalGroup(tuple(int(m) for m in g)) for g in groups),
        successors=tuple(tuple(int(s) for s in succ) for succ in successors),
        entry=entry,
        params=params,
    )
    table = draft.reachable_labels
    branches = tuple(replace(a, reachable_labels=int(table[b])) for b, a in enumerate(draft.branches))
    return ProgramModel(name=name, gen_seed=gen_seed, branches=branches, groups=draft.groups,
                        successors=draft.successors, entry=entry, params=params)


def reachable_label_table(model: ProgramModel) -> Dict[BranchId, int]:
    """
    Number of sanitizer labels statically reachable from each branch.

    For every branch b, the sum of local_labels over all branches reachable
    from b in the successor graph, b included. Computed once per model.
    """
    table = model.reachable_labels
    return {b: int(table[b]) for b in range(model.branch_count)}


# --- Generator ---

def _validate_params(params: GeneratorParams) -> None:
    if params.branch_count < 4:
        raise ProgramModelError(f"branch_count must be >= 4, got {params.branch_count}.")
    lo, hi = params.group_size_range
    if lo < 2 or hi < lo:
        raise ProgramModelError(f"group_size_range {params.group_size_range} is empty (need 2 <= low <= high).")
    if not 0.0 <= params.hard_fraction <= 1.0:
        raise ProgramModelError(f"hard_fraction must be within [0, 1], got {params.hard_fraction}.")
    for fraction_name in ("label_density", "group_probability", "depth_bias", "merge_fraction", "gated_fraction"):
        value = getattr(params, fraction_name)
        if not 0.0 <= value <= 1.0:
            raise ProgramModelError(f"{fraction_name} must be within [0, 1], got {value}.")
    ranges = params.annotation_ranges
    for range_name in ("cmp", "external", "indirect", "magic_width"):
        r_lo, r_hi = getattr(ranges, range_name)
        if r_lo < 0 or r_hi < r_lo:
            raise ProgramModelError(f"annotation range {range_name}={getattr(ranges, range_name)} is invalid.")
    if ranges.magic_width[0] < 1:
        raise ProgramModelError("magic_width range must start at 1 or above.")
    if params.gated_region_fraction:
        if not 0.0 < params.gated_region_fraction < 1.0:
            raise ProgramModelError(
                f"gated_region_fraction must be within [0, 1), got {params.gated_region_fraction}.")
        if params.size_gate <= 0:
            raise ProgramModelError("gated_region_fraction needs a positive size_gate.")
        payload = int(round(params.gated_region_fraction * params.branch_count))
        if not 1 <= payload <= params.branch_count - 2:
            raise ProgramModelError(
                f"gated_region_fraction {params.gated_region_fraction} leaves no room for both regions "
                f"in {params.branch_count} branches.")


def _grow(rng: np.random.Generator, params: GeneratorParams, successors: List[List[int]],
          parent: List[int], groups: List[List[int]], open_branches: List[int],
          next_id: int, end: int) -> None:
    """Grows a tree of conditionals and straight-line blocks until ids [next_id, end) are placed."""
    lo, hi = params.group_size_range
    while next_id < end:
        if rng.random() < params.depth_bias:
            position = len(open_branches) - 1
        else:
            position = int(rng.integers(len(open_branches)))
        branch = open_branches.pop(position)
        remaining = end - next_id
        if remaining >= lo and (not groups or rng.random() < params.group_probability):
            k = int(rng.integers(lo, min(hi, remaining) + 1))
            members = list(range(next_id, next_id + k))
            next_id += k
            groups.append(members)
        else:
            members = [next_id]
            next_id += 1
        successors[branch] = members
        for m in members:
            parent[m] = branch
            open_branches.append(m)


def generate_program(params: GeneratorParams, rng_seed: int) -> ProgramModel:
    """
    Generates a connected synthetic program, a pure function of (params, rng_seed).

    Raises:
        ProgramModelError: If branch_count < 4, the group size range is empty
                           or a fraction lies outside [0, 1]. A split program also needs a
                           positive size_gate and room for both regions.
    """
    _validate_params(params)
    rng = np.random.default_rng(rng_seed)
    n = params.branch_count

    # Structure: grow a tree of conditionals and straight-line blocks from the entry
    parent = [-1] * n
    successors: List[List[int]] = [[] for _ in range(n)]
    groups: List[List[int]] = []
    # region 1 is the size-gated payload of a split program; everything else is region 0
    region = [0] * n
    split = params.gated_region_fraction > 0
    if split:
        payload_count = int(round(params.gated_region_fraction * n))
        payload_start = n - payload_count + 1
        successors[0] = [1, 2]
        groups.append([1, 2])
        parent[1] = parent[2] = 0
        _grow(rng, params, successors, parent, groups, [1], 3, payload_start)
        _grow(rng, params, successors, parent, groups, [2], payload_start, n)
        for b in [2, *range(payload_start, n)]:
            region[b] = 1
    else:
        payload_count = n
        _grow(rng, params, successors, parent, groups, [0], 1, n)

    # Merge and loop edges: some leaves re-enter an existing conditional
    leaves = [b for b in range(n) if not successors[b]]
    for leaf in leaves:
        if split:
            targets = [g for g in groups[1:] if region[g[0]] == region[leaf]]
        else:
            targets = groups
        if targets and rng.random() < params.merge_fraction:
            successors[leaf] = list(targets[int(rng.integers(len(targets)))])

    # Hardness: prefer non-default conditional directions, then defaults, then straight-line blocks
    member_index = {}
    for members in groups:
        for i, m in enumerate(members):
            member_index[m] = i
    eligible = [b for b in range(n) if region[b] == 1 and b != 2] if split else list(range(n))
    tiers = [
        [b for b in eligible if member_index.get(b, 0) > 0],
        [b for b in eligible if b in member_index and member_index[b] == 0],
        [b for b in eligible if b != 0 and b not in member_index],
        [0] if not split and 0 not in member_index else [],
    ]
    ordered = []
    for tier in tiers:
        ordered.extend(int(b) for b in rng.permutation(tier))
    hard_target = int(round(params.hard_fraction * payload_count))
    ranges = params.annotation_ranges
    magic_width = [0] * n
    for b in ordered[:hard_target]:
        magic_width[b] = int(rng.integers(ranges.magic_width[0], ranges.magic_width[1] + 1))

    # Size gates on Easy non-default directions
    min_input_size = [0] * n
    if split:
        min_input_size[2] = params.size_gate
    if params.size_gate > 0 and params.gated_fraction > 0:
        candidates = [b for b in tiers[0] if magic_width[b] == 0]
        gate_count = int(round(params.gated_fraction * len(candidates)))
        for b in rng.permutation(candidates)[:gate_count]:
            min_input_size[int(b)] = params.size_gate

    # Guarded branches sit below a Hard or size-gated branch in the tree
    guarded = [False] * n
    for b in range(1, n):
        p = parent[b]
        guarded[b] = guarded[p] or magic_width[b] > 0 or min_input_size[b] > 0

    annotations = []
    for b in range(n):
        label_p = params.label_density * (params.hard_label_boost if guarded[b] else 1.0)
        if split and region[b] == 0:
            label_p = 0.0
        local = 0
        if rng.random() < min(1.0, label_p):
            local = int(rng.integers(1, ranges.max_local_labels + 1))
        cmp_count = int(rng.integers(ranges.cmp[0], ranges.cmp[1] + 1))
        external = 0
        if rng.random() < ranges.external_rate:
            external = int(rng.integers(ranges.external[0], ranges.external[1] + 1))
        indirect = 0
        if rng.random() < ranges.indirect_rate:
            indirect = int(rng.integers(ranges.indirect[0], ranges.indirect[1] + 1))
        annotations.append(BranchAnnotation(
            local_labels=local,
            cmp_count=cmp_count,
            external_calls=external,
            indirect_calls=indirect,
            magic_width=magic_width[b],
            min_input_size=min_input_size[b],
        ))

    name = params.name or f"gen-{n}-{rng_seed}"
    model = build_program(name, successors, groups, annotations, entry=0, gen_seed=rng_seed, params=params)
    logger.info(
        f"Generated program '{name}': {n} branches, {len(groups)} groups, "
        f"{hard_target} hard, {sum(1 for s in min_input_size if s)} size-gated")
    return model


def summarize_program(model: ProgramModel) -> Dict[str, Union[int, str]]:
    """Counts used by `gen` and `model` output: structure, hardness and label placement."""
    hard_or_gated = [b for b, a in enumerate(model.branches) if a.is_hard or a.min_input_size > 0]
    behind = set()
    for b in hard_or_gated:
        behind |= model._reachable_from(b)
    guarded_labels = int(sum(model.branches[b].local_labels for b in behind))
    return {
        "name": model.name,
        "gen_seed": model.gen_seed,
        "branches": model.branch_count,
        "groups": len(model.groups),
        "hard_branches": int(sum(1 for a in model.branches if a.is_hard)),
        "size_gated_branches": int(sum(1 for a in model.branches if a.min_input_size > 0)),
        "total_labels": int(model.local_labels.sum()),
        "guarded_labels": guarded_labels,
        "entry_reachable_labels": int(model.reachable_labels[model.entry]),
    }


# --- Serialization ---

class _BranchRecord(BaseModel):
    local_labels: int = Field(ge=0)
    cmp_count: int = Field(ge=0)
    external_calls: int = Field(ge=0)
    indirect_calls: int = Field(ge=0)
    magic_width: int = Field(ge=0)
    min_input_size: int = Field(default=0, ge=0)


class ProgramModelFile(BaseModel):
    """Versioned JSON schema of a program-model file."""

    version: int = PROGRAM_FILE_VERSION
    name: str
    gen_seed: int
    entry: int = 0
    params: Optional[GeneratorParams] = None
    branches: List[_BranchRecord]
    groups: List[List[int]]
    successors: List[List[int]]


def program_to_json(model: ProgramModel) -> str:
    document = ProgramModelFile(
        name=model.name,
        gen_seed=model.gen_seed,
        entry=model.entry,
        params=model.params,
        branches=[_BranchRecord(
            local_labels=a.local_labels, cmp_count=a.cmp_count, external_calls=a.external_calls,
            indirect_calls=a.indirect_calls, magic_width=a.magic_width, min_input_size=a.min_input_size,
        ) for a in model.branches],
        groups=[list(g.members) for g in model.groups],
        successors=[list(s) for s in model.successors],
    )
    return document.model_dump_json(indent=2) + "\n"


def save_program(model: ProgramModel, path: Union[str, Path]) -> Path:
    """
    Raises:
        ProgramModelError: If the file cannot be written.
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(program_to_json(model), encoding="utf-8")
    except OSError as e:
        raise ProgramModelError(f"Cannot write program model file {path}: {e}") from e
    logger.info(f"Wrote program model '{model.name}' to {path}")
    return path


def load_program(path: Union[str, Path]) -> ProgramModel:
    """
    Reads a program-model file.

    Raises:
        ProgramModelError: If the file is missing, malformed, of another
                           version or describes an invalid program.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ProgramModelError(f"Program model file not found: {path}")
    except (json.JSONDecodeError, UnicodeDecodeError) as e:
        raise ProgramModelError(f"Program model file {path} is not valid JSON: {e}")
    if not isinstance(raw, dict):
        raise ProgramModelError(f"Program model file {path} must hold a JSON object, got {type(raw).__name__}.")
    if raw.get("version") != PROGRAM_FILE_VERSION:
        raise ProgramModelError(
            f"Program model file {path} has version {raw.get('version')!r}, expected {PROGRAM_FILE_VERSION}.")
    try:
        document = ProgramModelFile.model_validate(raw)
    except ValidationError as e:
        raise ProgramModelError(f"Program model file {path} does not match the schema: {e}")
    annotations = [BranchAnnotation(**record.model_dump()) for record in document.branches]
    model = build_program(document.name, document.successors, document.groups, annotations,
                          entry=document.entry, gen_seed=document.gen_seed, params=document.params)
    logger.info(f"Loaded program model '{model.name}' ({model.branch_count} branches) from {path}")
    return model
