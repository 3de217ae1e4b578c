import itertools

import pytest

from assemblynet.training.dag import build_transfer_dag, parent_of, simulate_makespan, simulate_schedule


def test_parent_rules():
    assert parent_of((0, 0, 0)) is None
    assert parent_of((0, 0, 3)) == (0, 0, 2)
    assert parent_of((0, 2, 3)) == (0, 1, 3)
    assert parent_of((4, 2, 3)) == (3, 2, 3)


def test_five_cube_shape():
    dag = build_transfer_dag((5, 5, 5))
    assert len(dag) == 125
    assert len(dag.edges) == 124
    assert dag.root == (0, 0, 0)
    roots = [n for n in dag.nodes if dag.parents[n] is None]
    assert roots == [(0, 0, 0)]
    assert dag.longest_path_length() == 12


def test_depth_is_index_sum():
    dag = build_transfer_dag((3, 4, 2))
    for node in dag.nodes:
        assert dag.depth(node) == sum(node)
    with pytest.raises(KeyError):
        dag.depth((3, 0, 0))


def test_levels_and_topological_order():
    dag = build_transfer_dag((3, 3, 3))
    levels = dag.levels()
    assert len(levels) == 7
    for depth, level in enumerate(levels):
        assert level == sorted(n for n in itertools.product(range(3), repeat=3) if sum(n) == depth)
    seen = set()
    for node in dag.topological_order():
        parent = dag.parents[node]
        assert parent is None or parent in seen
        seen.add(node)
    assert len(seen) == 27


def test_children_and_dict():
    dag = build_transfer_dag((2, 2, 2))
    assert dag.children((0, 0, 0)) == [(0, 0, 1), (0, 1, 0), (1, 0, 0)]
    assert dag.children((1, 1, 1)) == []
    data = dag.to_dict()
    assert data["counts"] == [2, 2, 2]
    assert [[0, 0, 0], [0, 0, 1]] in data["edges"]
    assert len(data["edges"]) == 7


def test_single_tile():
    dag = build_transfer_dag((1, 1, 1))
    assert dag.edges == []
    assert dag.longest_path_length() == 0
    assert simulate_makespan(dag) == 1


def test_invalid_counts():
    with pytest.raises(ValueError):
        build_transfer_dag((0, 5, 5))
    with pytest.raises(ValueError):
        build_transfer_dag((5, 5))


def test_makespan_unlimited_workers():
    dag = build_transfer_dag((5, 5, 5))
    assert simulate_makespan(dag) == 13
    assert simulate_makespan(dag, task_cost=3) == 39


def test_makespan_one_worker_is_serial():
    dag = build_transfer_dag((5, 5, 5))
    assert simulate_makespan(dag, workers=1) == 125


def test_makespan_never_below_critical_path():
    dag = build_transfer_dag((5, 5, 5))
    spans = [simulate_makespan(dag, workers=w) for w in (1, 2, 4, 8, 16, 32)]
    assert all(13 <= s <= 125 for s in spans)
    assert spans[0] == 125


def test_schedule_respects_parents():
    dag = build_transfer_dag((4, 3, 2))
    starts = simulate_schedule(dag, workers=3)
    assert set(starts) == set(dag.nodes)
    for parent, child in dag.edges:
        assert starts[child] >= starts[parent] + 1


def test_schedule_rejects_bad_workers():
    with pytest.raises(ValueError):
        simulate_schedule(build_transfer_dag((2, 2, 2)), workers=0)
