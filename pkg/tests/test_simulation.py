import json
import logging

import numpy as np
import pytest
from pydantic import ValidationError

from src.learning.bundle import bundle_predict
from src.lineage import SeedOrigin
from src.policies import PolicyKind
from src.program_model import BranchAnnotation, build_program
from src.scheduling_interface import ConfigError
from src.simulation.benchmarks import PRESETS, generate_preset, parse_generator_spec, resolve_program
from src.simulation.campaign import CampaignConfig, CampaignOptions, InitialSeed, run_campaign
from src.simulation.concolic import concolic_step
from src.simulation.fuzzer import FuzzerState, decision_positions, fuzzer_epoch_step


def two_way(sibling, default=BranchAnnotation()):
    """b0 branches to the default b1 or to b2."""
    return build_program("two-way", [[1, 2], [], []], [[1, 2]], [BranchAnnotation(), default, sibling])


def seeded_state(model, trace, size=4, **kwargs):
    state = FuzzerState(model, **kwargs)
    state.admit(state.new_seed(None, SeedOrigin.INITIAL, size, trace), force=True)
    return state


# --- Fuzzer ---

def test_fuzzer_cannot_pass_wide_magic_values():
    model = two_way(BranchAnnotation(magic_width=32))
    state = seeded_state(model, [0, 1], fuzzer_epoch=1000)
    assert fuzzer_epoch_step(state, model, np.random.default_rng(0)) == []
    assert state.coverage.covered_count == 2


def test_fuzzer_covers_easy_switch():
    model = build_program("switch", [[1, 2, 3, 4], [], [], [], []], [[1, 2, 3, 4]],
                          [BranchAnnotation() for _ in range(5)])
    state = seeded_state(model, [0, 1], fuzzer_epoch=500, p_easy=0.2)
    admitted = fuzzer_epoch_step(state, model, np.random.default_rng(1))
    assert state.coverage.covered_count == 5
    assert len(admitted) == 3
    assert all(s.first_new_cov == 1 and s.origin is SeedOrigin.FUZZER_MUTATION for s in admitted)


def test_fuzzer_respects_size_gate():
    model = two_way(BranchAnnotation(min_input_size=64))
    state = seeded_state(model, [0, 1], size=4, fuzzer_epoch=300, p_easy=1.0, size_jitter=2)
    assert fuzzer_epoch_step(state, model, np.random.default_rng(2)) == []


def test_fuzzer_is_deterministic(tiny_program):
    def run():
        state = FuzzerState(tiny_program, fuzzer_epoch=64)
        state.admit(state.new_seed(None, SeedOrigin.INITIAL, 8, tiny_program.default_trace(96)), force=True)
        rng = np.random.default_rng(5)
        return [(s.id, s.parent, s.trace) for _ in range(3) for s in fuzzer_epoch_step(state, tiny_program, rng)]

    assert run() == run()


def test_admission_needs_new_edge():
    model = two_way(BranchAnnotation())
    state = seeded_state(model, [0, 1])
    assert state.admit(state.new_seed(state.queue[0], SeedOrigin.FUZZER_MUTATION, 4, [0, 1])) is None
    child = state.admit(state.new_seed(state.queue[0], SeedOrigin.FUZZER_MUTATION, 4, [0, 2]))
    assert child is not None and child.first_new_cov == 1
    assert state.lineage.parents[child.id] == state.queue[0].id


# --- Concolic executor ---

def test_concolic_without_uncovered_neighbors():
    model = two_way(BranchAnnotation())
    state = seeded_state(model, [0, 1])
    state.admit(state.new_seed(state.queue[0], SeedOrigin.FUZZER_MUTATION, 4, [0, 2]))
    assert concolic_step(state.queue[0], state, 48, np.random.default_rng(0)) == []


def test_concolic_solves_hard_neighbor():
    model = two_way(BranchAnnotation(magic_width=32))
    state = seeded_state(model, [0, 1])
    children = concolic_step(state.queue[0], state, 48, np.random.default_rng(0))
    assert len(children) == 1
    child = children[0]
    assert child.trace == (0, 2)
    assert child.origin is SeedOrigin.CONCOLIC_IMPORT
    assert child.parent == state.queue[0].id


def test_concolic_budget_covers_comparisons():
    model = two_way(BranchAnnotation(), default=BranchAnnotation(cmp_count=5))
    state = seeded_state(model, [0, 1])
    assert concolic_step(state.queue[0], state, 1, np.random.default_rng(0)) == []
    assert len(concolic_step(state.queue[0], state, 6, np.random.default_rng(0))) == 1


def test_concolic_indirect_calls_shrink_budget():
    model = two_way(BranchAnnotation(), default=BranchAnnotation(indirect_calls=1))
    state = seeded_state(model, [0, 1])
    assert concolic_step(state.queue[0], state, 1.5, np.random.default_rng(0)) == []
    assert len(concolic_step(state.queue[0], state, 2, np.random.default_rng(0))) == 1


def test_concolic_external_calls_lose_state():
    model = two_way(BranchAnnotation(), default=BranchAnnotation(external_calls=2))
    state = seeded_state(model, [0, 1])
    assert concolic_step(state.queue[0], state, 48, np.random.default_rng(0), p_ext=1.0) == []


def test_concolic_respects_size_gate():
    model = two_way(BranchAnnotation(min_input_size=32))
    state = seeded_state(model, [0, 1], size=4)
    assert concolic_step(state.queue[0], state, 48, np.random.default_rng(0)) == []


def entry_in_group():
    """The entry b0 shares a conditional with b1; b2 loops back into either."""
    return build_program("entry-group", [[2], [2], [0, 1]], [[0, 1]], [BranchAnnotation() for _ in range(3)])


def test_decision_positions_include_entry():
    model = entry_in_group()
    assert decision_positions(model, [0, 2, 1]).tolist() == [0, 2]
    assert decision_positions(model, [2]).tolist() == []


def test_concolic_solves_entry_sibling():
    model = entry_in_group()
    state = seeded_state(model, [0, 2])
    children = concolic_step(state.queue[0], state, 48, np.random.default_rng(0))
    assert len(children) == 1
    assert children[0].trace[:2] == (1, 2)


def test_concolic_rejects_non_positive_budget():
    model = two_way(BranchAnnotation())
    state = seeded_state(model, [0, 1])
    with pytest.raises(ConfigError):
        concolic_step(state.queue[0], state, 0, np.random.default_rng(0))


# --- Benchmarks ---

def test_presets_generate():
    assert len(PRESETS) == 10
    tiny = generate_preset("tiny")
    assert tiny.name == "tiny" and tiny.branch_count == 24
    assert generate_preset("tiny") is tiny


def test_resolve_program_references(tmp_path):
    assert resolve_program("preset:tiny") == resolve_program("tiny")
    model = resolve_program("gen:branch_count=30,hard_fraction=0.1,group_size_range=2:3@4")
    assert model.branch_count == 30 and model.gen_seed == 4
    with pytest.raises(ConfigError, match="learnable"):
        resolve_program("no-such-program")


def test_generator_spec_errors():
    with pytest.raises(ConfigError):
        parse_generator_spec("branch_count")
    with pytest.raises(ConfigError):
        parse_generator_spec("colour=blue")
    with pytest.raises(ConfigError):
        parse_generator_spec("branch_count=30@x")


# --- Campaigns ---

def test_zero_tick_campaign(tiny_program, small_options):
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.RANDOM,
                                        options=small_options.model_copy(update={"ticks": 0})))
    assert stats.coverage == []
    assert stats.final_coverage == stats.initial_coverage > 0
    assert stats.dispatch_log == []


@pytest.mark.parametrize("policy", list(PolicyKind))
def test_campaign_is_deterministic(policy, tiny_program, small_options):
    cfg = CampaignConfig(program=tiny_program, policy=policy, rng_seed=11, options=small_options)
    first, second = run_campaign(cfg), run_campaign(cfg)
    assert first == second
    assert len(first.coverage) == small_options.ticks
    assert all(a <= b for a, b in zip(first.coverage, first.coverage[1:]))
    assert first.initial_coverage <= first.coverage[0] <= tiny_program.branch_count


def test_campaign_accounting(tiny_program, small_options):
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_EN, rng_seed=2,
                                        options=small_options))
    accounting = stats.accounting
    assert accounting["dispatches"] == accounting["labels"] + accounting["pending"]
    assert accounting["dispatches"] == len(stats.dispatch_log) == stats.dispatched_seeds
    assert 0 < stats.explored_fraction <= 1
    assert len(stats.training_log) == accounting["labels"]
    assert stats.final_bundle is not None and stats.final_bundle.kind.value == "EN"


def test_campaign_records_learning_timings(tiny_program, small_options):
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=3,
                                        options=small_options))
    assert "online_update" in stats.timings
    assert "online_prediction" in stats.timings
    assert "feature_extraction" in stats.timings
    assert stats.weight_history[-1]["updates"] == stats.final_bundle.ol.t


def test_campaign_loads_initial_model(tiny_program, small_options, caplog):
    trained = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=1,
                                          options=small_options)).final_bundle
    updates = trained.ol.t
    with caplog.at_level(logging.INFO):
        stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=1,
                                            options=small_options, initial_model=trained))
    assert "Loaded initial model (OL) before tick 0" in caplog.text
    assert trained.ol.t == updates
    assert stats.final_bundle.ol.t > updates


def test_frozen_campaign_keeps_model(tiny_program, small_options):
    trained = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=1,
                                          options=small_options)).final_bundle
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=4,
                                        options=small_options, initial_model=trained, frozen_model=True))
    assert np.array_equal(stats.final_bundle.ol.w, trained.ol.w)


def test_campaign_rejects_mismatched_model(tiny_program, small_options):
    trained = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=1,
                                          options=small_options)).final_bundle
    with pytest.raises(ValidationError):
        CampaignConfig(program=tiny_program, policy=PolicyKind.ML_RF, initial_model=trained)


def test_naive_seed_campaign(tiny_program, small_options):
    options = small_options.model_copy(update={"naive_seed": True})
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.RANDOM, options=options))
    assert stats.queue[0].size == 4
    assert list(stats.queue[0].trace) == tiny_program.default_trace(options.max_trace_length)


def test_explicit_initial_seeds(tiny_program, small_options):
    trace = tuple(tiny_program.default_trace(10))
    options = small_options.model_copy(update={"initial_seeds": [InitialSeed(size=20, trace=trace)], "ticks": 0})
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.RANDOM, options=options))
    assert stats.queue[0].trace == trace
    assert stats.initial_coverage == len(set(trace))


def test_stats_csv_rows(tiny_program, small_options, tmp_path):
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.HEURISTIC_AFL,
                                        options=small_options))
    frame = stats.coverage_frame()
    assert len(frame) == small_options.ticks
    assert frame["tick"].tolist() == list(range(1, small_options.ticks + 1))
    assert stats.write_csv(tmp_path / "stats.csv").exists()


def test_options_file_and_overrides(tmp_path):
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps({"ticks": 50, "label_window": 7, "forest": {"n_trees": 9}}), encoding="utf-8")
    options = CampaignOptions.from_file(path, ticks=12)
    assert options.ticks == 12
    assert options.label_window == 7
    assert options.forest.n_trees == 9


def test_options_file_rejects_unknown_keys(tmp_path):
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps({"tick": 50}), encoding="utf-8")
    with pytest.raises(ConfigError):
        CampaignOptions.from_file(path)


def test_options_reject_invalid_values():
    with pytest.raises(ConfigError):
        CampaignOptions.from_settings(label_window=0)


def test_initial_model_ranks_first_dispatch(tiny_program, small_options):
    trained = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=1,
                                          options=small_options)).final_bundle
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=2,
                                        options=small_options, initial_model=trained))
    first = stats.dispatch_log[0]
    assert first.tick == 1
    assert first.predicted_utility == pytest.approx(float(bundle_predict(trained, first.features.as_array())))
    assert not np.array_equal(stats.final_bundle.ol.w, trained.ol.w)


def test_queue_seeds_descend_from_initial_seeds(tiny_program, small_options):
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_OL, rng_seed=6,
                                        options=small_options))
    seeds = {seed.id: seed for seed in stats.queue}
    assert any(seed.parent is not None for seed in stats.queue)
    for seed in stats.queue:
        node = seed
        while node.parent is not None:
            node = seeds[node.parent]
        assert node.origin is SeedOrigin.INITIAL


def test_online_update_is_cheaper_than_refit(tiny_program, small_options):
    stats = run_campaign(CampaignConfig(program=tiny_program, policy=PolicyKind.ML_EN, rng_seed=3,
                                        options=small_options))
    assert stats.timing_counts["offline_update"] > 0
    assert stats.timings["online_update"] < stats.timings["offline_update"]
    assert stats.timings["feature_extraction"] < 1e-3
