"""
Oracle checks over many random instances: the online learner against batch
ridge regression, feature extraction against brute-force recounts and
descendant labels against plain BFS counting.
"""
from collections import deque

import numpy as np
import pytest

from src.coverage import CoverageStore
from src.features import FuzzerStateView, extract_features
from src.learning.online_model import rls_init, rls_update
from src.lineage import LineageIndex, Seed, SeedOrigin, descendant_tree_size, record_seed
from src.program_model import GeneratorParams, generate_program


def test_online_model_tracks_ridge_on_every_prefix():
    rng = np.random.default_rng(2024)
    for stream in range(50):
        lam = [0.1, 1.0, 10.0][stream % 3]
        n = int(rng.integers(1, 201))
        X = rng.normal(size=(n, 10))
        y = X @ rng.normal(size=10) + rng.normal(scale=0.5, size=n)
        model = rls_init(10, lam, stream, random_weights=False)
        gram = lam * np.eye(10)
        moment = np.zeros(10)
        for x_i, y_i in zip(X, y):
            rls_update(model, x_i, float(y_i))
            gram += np.outer(x_i, x_i)
            moment += x_i * y_i
            ridge = np.linalg.solve(gram, moment)
            assert np.max(np.abs(model.w - ridge)) < 1e-8


def test_inverse_covariance_stays_consistent():
    rng = np.random.default_rng(7)
    lam = 1.0
    model = rls_init(10, lam, 0)
    gram = lam * np.eye(10)
    for x in rng.normal(size=(10_000, 10)):
        rls_update(model, x, float(rng.normal()))
        gram += np.outer(x, x)
        assert np.linalg.norm(model.C_inv @ gram - np.eye(10)) < 1e-7


def _reachable_from(model, start):
    seen, stack = {start}, [start]
    while stack:
        for succ in model.successors[stack.pop()]:
            if succ not in seen:
                seen.add(succ)
                stack.append(succ)
    return seen


def test_features_match_brute_force_recount():
    rng = np.random.default_rng(11)
    for i in range(200):
        params = GeneratorParams(branch_count=int(rng.integers(8, 65)), label_density=0.3,
                                 hard_fraction=float(rng.uniform(0.0, 0.5)))
        model = generate_program(params, rng_seed=i)
        coverage = CoverageStore(model)
        coverage.covered[:] = rng.random(model.branch_count) < 0.5
        trace = model.walk(model.entry, 16, rng, max_length=48)
        seed = Seed(id=0, parent=None, origin=SeedOrigin.INITIAL, size=16, trace=tuple(trace))
        vector = extract_features(seed, model, FuzzerStateView(queue_size=i, coverage=coverage))

        distinct = set(trace)
        reachable = sum(sum(model.branches[r].local_labels for r in _reachable_from(model, b)) for b in distinct)
        undiscovered = 0
        for b in distinct:
            for group in model.groups:
                if b in group.members:
                    undiscovered += sum(1 for m in group.members if m != b and not coverage.covered[m])
        assert vector.reachable_labels == reachable
        assert vector.reached_labels == sum(model.branches[b].local_labels for b in distinct)
        assert vector.undiscovered_neighbors == undiscovered
        assert vector.external_calls == sum(model.branches[b].external_calls for b in trace)
        assert vector.cmp_count == sum(model.branches[b].cmp_count for b in trace)
        assert vector.indirect_calls == sum(model.branches[b].indirect_calls for b in trace)
        assert vector.path_length == len(trace)
        assert vector.queue_size == i


def _bfs_count(children, created_at, roots, root, cutoff, since):
    count = 1
    queue = deque(children[root])
    while queue:
        node = queue.popleft()
        if node in roots:
            continue
        if since <= created_at[node] <= cutoff:
            count += 1
        queue.extend(children[node])
    return count


@pytest.mark.slow
def test_labels_match_bfs_on_random_forests():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        n = int(rng.integers(1, 10_001))
        index = LineageIndex()
        children = {i: [] for i in range(n)}
        created_at = {}
        for i in range(n):
            if i == 0 or rng.random() < 0.05:
                parent, created = None, int(rng.integers(0, 5))
            else:
                parent = int(rng.integers(0, i))
                created = created_at[parent] + int(rng.integers(0, 3))
                children[parent].append(i)
            created_at[i] = created
            origin = SeedOrigin.INITIAL if parent is None else SeedOrigin.FUZZER_MUTATION
            record_seed(index, Seed(id=i, parent=parent, origin=origin, size=1, trace=(0,), created_at=created))
        roots = {int(r) for r in rng.choice(n, size=min(n, int(rng.integers(1, 20))), replace=False)}
        for root in roots:
            index.mark_root(root)
        for root in roots:
            since = created_at[root] + int(rng.integers(0, 3))
            cutoff = since + int(rng.integers(0, 30))
            expected = _bfs_count(children, created_at, roots, root, cutoff, since)
            assert descendant_tree_size(index, root, cutoff=cutoff, since=since) == expected
