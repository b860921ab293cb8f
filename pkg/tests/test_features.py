import math

import numpy as np
import pytest

from src.coverage import CoverageStore, mark_covered
from src.config import FEATURE_DIMENSION
from src.features import (
    FEATURE_NAMES,
    FeatureVector,
    FuzzerStateView,
    check_feature_layout,
    extract_feature_matrix,
    extract_features,
    features_to_frame,
    transform_for_linear,
)
from src.program_model import BranchAnnotation, build_program
from src.scheduling_interface import ProgramModelError


def _state(model, queue_size=1, covered=()):
    store = CoverageStore(model)
    if covered:
        mark_covered(store, covered)
    return FuzzerStateView(queue_size=queue_size, coverage=store)


def test_zero_annotation_trace_with_repeat(plain_chain_model, make_seed):
    """path_length counts repeated branches; label features are zero."""
    seed = make_seed(0, [0, 1, 0], size=4)
    vector = extract_features(seed, plain_chain_model, _state(plain_chain_model, queue_size=1))
    assert tuple(vector.as_array()) == (0, 0, 0, 0, 0, 0, 3, 4, 0, 1)


def test_reachable_labels_sum_over_path(reachable_labels_model, make_seed):
    seed = make_seed(0, [0, 1])
    vector = extract_features(seed, reachable_labels_model, _state(reachable_labels_model))
    assert vector.reachable_labels == 6


def test_reached_labels_and_undiscovered_neighbors(neighbor_model, make_seed):
    seed = make_seed(0, [0, 1, 2])
    state = _state(neighbor_model, covered=[0, 1, 2])
    vector = extract_features(seed, neighbor_model, state)
    assert vector.reached_labels == 2
    assert vector.undiscovered_neighbors == 2


def test_instruction_counts_use_raw_trace(make_seed):
    model = build_program("counts", [[1], [0]], [],
                          [BranchAnnotation(cmp_count=2, external_calls=1, indirect_calls=3),
                           BranchAnnotation(cmp_count=1)])
    vector = extract_features(make_seed(0, [0, 1, 0]), model, _state(model))
    assert vector.cmp_count == 5
    assert vector.external_calls == 2
    assert vector.indirect_calls == 6


def test_seed_metadata_features(chain_model, make_seed):
    seed = make_seed(3, [0, 1], size=17, parent=None, first_new_cov=1)
    vector = extract_features(seed, chain_model, _state(chain_model, queue_size=42))
    assert vector.input_size == 17
    assert vector.first_new_cov == 1
    assert vector.queue_size == 42


def test_empty_trace_is_rejected(chain_model, make_seed):
    with pytest.raises(ProgramModelError):
        extract_features(make_seed(0, []), chain_model, _state(chain_model))


def test_invalid_branch_is_rejected(chain_model, make_seed):
    with pytest.raises(ProgramModelError):
        extract_features(make_seed(0, [0, 9]), chain_model, _state(chain_model))


def test_feature_matrix_rows(chain_model, make_seed):
    seeds = [make_seed(0, [0]), make_seed(1, [0, 1, 2])]
    state = _state(chain_model)
    matrix = extract_feature_matrix(seeds, chain_model, state)
    assert matrix.shape == (2, len(FEATURE_NAMES))
    assert np.array_equal(matrix[1], extract_features(seeds[1], chain_model, state).as_array())


def test_feature_vector_validation():
    with pytest.raises(ValueError):
        FeatureVector(-1, 0, 0, 0, 0, 0, 1, 1, 0, 1)
    with pytest.raises(ValueError):
        FeatureVector(0, 0, 0, 0, 0, 0, 1, 1, 2, 1)


def test_transform_zero_vector():
    assert np.array_equal(transform_for_linear(np.zeros(10)), np.zeros(10))


def test_transform_log_identity():
    raw = np.zeros(10)
    raw[4] = math.e - 1
    out = transform_for_linear(raw)
    assert out[4] == pytest.approx(1.0)
    assert np.count_nonzero(out) == 1


def test_transform_passes_first_new_cov_through():
    vector = FeatureVector(0, 0, 0, 0, 0, 0, 1, 3, 1, 1)
    out = transform_for_linear(vector)
    assert out[FEATURE_NAMES.index("first_new_cov")] == 1.0
    assert out[FEATURE_NAMES.index("input_size")] == pytest.approx(math.log(4))


def test_transform_matrix_rows():
    raw = np.arange(20, dtype=float).reshape(2, 10)
    out = transform_for_linear(raw)
    assert out.shape == (2, 10)
    assert np.allclose(out[1], transform_for_linear(raw[1]))


def test_features_to_frame_header():
    frame = features_to_frame([FeatureVector(1, 2, 3, 4, 5, 6, 7, 8, 1, 9)])
    assert list(frame.columns) == FEATURE_NAMES
    assert frame.iloc[0]["queue_size"] == 9


def test_feature_layout_matches_dimension():
    assert len(FEATURE_NAMES) == FEATURE_DIMENSION
    check_feature_layout()


def test_feature_layout_rejects_reordered_names():
    with pytest.raises(RuntimeError, match="layout mismatch"):
        check_feature_layout(list(reversed(FEATURE_NAMES)))
