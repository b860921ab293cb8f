"""
Budgeted concolic executor.

Replays a dispatched seed's trace and tries to flip every conditional whose
siblings are still uncovered. Solving ignores magic values but pays for
comparisons, loses state to external calls and shrinks its budget under
indirect calls.
"""
import logging
from typing import List

import numpy as np

from src.lineage import Seed, SeedOrigin
from src.program_model import ProgramModel
from src.scheduling_interface import ConfigError
from src.simulation.fuzzer import FuzzerState

logger = logging.getLogger(__name__)


def solve_cost(model: ProgramModel, branch: int) -> int:
    return 1 + int(model.cmp_counts[branch])


def concolic_step(seed: Seed, state: FuzzerState, budget: float, rng: np.random.Generator,
                  p_ext: float = 0.3) -> List[Seed]:
    """
    Attempts solves along the trace of `seed` and returns the generated inputs.

    The available budget is `budget / (1 + indirect calls on the trace)`. Every
    distinct conditional branch of the trace, in first-occurrence order, tries
    each uncovered sibling in id order at a cost of 1 + cmp_count; the step
    stops at the first solve it cannot afford. A solve fails with probability
    1 - (1 - p_ext)^external_calls of the branch, or when the seed is smaller
    than the sibling's size gate. Each success yields a ConcolicImport child
    that follows the trace up to the branch and then takes the sibling.

    Returns:
        Candidate seeds (not yet admitted to the queue).
    """
    if budget <= 0:
        raise ConfigError(f"Concolic budget must be positive, got {budget}")
    model = state.model
    trace = model.check_trace(seed.trace)
    covered = state.coverage.covered
    available = budget / (1.0 + int(model.indirect_calls[trace].sum()))
    spent = 0.0
    children: List[Seed] = []
    seen = set()
    attempts = 0
    for i in range(trace.size):
        branch = int(trace[i])
        if branch in seen:
            continue
        seen.add(branch)
        for sibling in sorted(model.siblings(branch)):
            if covered[sibling]:
                continue
            cost = solve_cost(model, branch)
            if spent + cost > available:
                logger.debug(f"Seed {seed.id}: concolic budget exhausted after {attempts} solves")
                return children
            spent += cost
            attempts += 1
            externals = int(model.external_calls[branch])
            if externals and rng.random() < 1.0 - (1.0 - p_ext) ** externals:
                continue
            if not model.can_take(sibling, seed.size):
                continue
            child_trace = model.walk(sibling, seed.size, rng, state.max_trace_length, prefix=seed.trace[:i])
            children.append(state.new_seed(seed, SeedOrigin.CONCOLIC_IMPORT, seed.size, child_trace))
    logger.debug(f"Seed {seed.id}: {attempts} concolic solves, {len(children)} new inputs")
    return children
