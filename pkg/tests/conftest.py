import pytest

from src.learning.forest import ForestParams
from src.lineage import Seed, SeedOrigin
from src.program_model import BranchAnnotation, build_program
from src.simulation.benchmarks import generate_preset
from src.simulation.campaign import CampaignOptions


@pytest.fixture
def make_seed():
    """Factory for queue seeds; seeds without a parent are Initial."""

    def _make(seed_id, trace, size=4, parent=None, first_new_cov=0, created_at=0, origin=None):
        if origin is None:
            origin = SeedOrigin.INITIAL if parent is None else SeedOrigin.FUZZER_MUTATION
        return Seed(id=seed_id, parent=parent, origin=origin, size=size, trace=tuple(trace),
                    first_new_cov=first_new_cov, created_at=created_at)

    return _make


@pytest.fixture
def chain_model():
    """b0 -> b1 -> b2 with local labels (1, 2, 3), no conditionals."""
    return build_program(
        "chain", [[1], [2], []], [],
        [BranchAnnotation(local_labels=1), BranchAnnotation(local_labels=2), BranchAnnotation(local_labels=3)])


@pytest.fixture
def plain_chain_model():
    """b0 -> b1 -> b2 with all-zero annotations."""
    return build_program("plain", [[1], [2], []], [], [BranchAnnotation() for _ in range(3)])


@pytest.fixture
def reachable_labels_model():
    """
    b0 branches to b1 or b2, which lead to labeled leaves b3 and b4 (2 labels each).
    A seed running b0, b1 has 4 + 2 = 6 reachable labels.
    """
    annotations = [BranchAnnotation() for _ in range(3)] + [BranchAnnotation(local_labels=2)] * 2
    return build_program("reachable", [[1, 2], [3], [4], [], []], [[1, 2]], annotations)


@pytest.fixture
def neighbor_model():
    """
    b0 branches to b1 or b4, b1 branches to b2 or b5; b1 and b2 carry one label each.
    A seed running b0, b1, b2 reaches 2 labels directly and leaves b4, b5 undiscovered.
    """
    annotations = [BranchAnnotation(), BranchAnnotation(local_labels=1), BranchAnnotation(local_labels=1),
                   BranchAnnotation(), BranchAnnotation(), BranchAnnotation()]
    return build_program("neighbors", [[1, 4], [2, 5], [3], [], [], []], [[1, 4], [2, 5]], annotations)


@pytest.fixture
def tiny_program():
    return generate_preset("tiny")


@pytest.fixture
def small_options():
    """Campaign options small enough for unit-test campaigns."""
    return CampaignOptions(
        ticks=20, fuzzer_epoch=16, concolic_budget=24, concolic_interval=1, label_window=3, rf_batch_size=4,
        forest=ForestParams(n_trees=5),
    )
