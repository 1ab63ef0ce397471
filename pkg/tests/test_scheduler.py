import numpy as np
import pytest

from fmmoverlap.engine import FmmConfig, FmmState, compute_velocities
from fmmoverlap.quadtree import build_tree, uniform_lattice, uniform_random
from fmmoverlap.scheduler import (NEAR_STAGE, STAGE_EDGES, ExecutionTrace, SchedulerError,
                                  TraceRecord, build_dag, execute, simulate_schedule,
                                  validate_trace)


@pytest.fixture(scope="module")
def dag3():
    return build_dag(build_tree(3))


def test_stage_edges():
    for edge in [(1, 2), (1, 3), (2, 4), (4, 5), (5, 6), (3, 6), (6, 7), (7, 8),
                 (2, 9), (3, 9), (8, 10), (9, 10)]:
        assert edge in STAGE_EDGES
    assert not any(NEAR_STAGE in e and set(e) & {4, 5, 6, 7, 8} for e in STAGE_EDGES)


@pytest.mark.parametrize("other", [4, 5, 6, 7, 8])
def test_no_stage_path_between_near_and_sweeps(dag3, other):
    assert not dag3.stage_path_exists(9, other)
    assert not dag3.stage_path_exists(other, 9)
    assert dag3.stage_path_exists(other, 10)
    assert dag3.stage_path_exists(9, 10)


@pytest.mark.parametrize("levels", [2, 3, 4])
def test_no_task_path_between_near_and_sweeps(levels):
    g = build_dag(build_tree(levels))
    near = [t.id for t in g.by_stage(9)]
    sweep = {t.id for t in g.tasks if t.stage in (4, 5, 6, 7, 8)}
    assert not g.descendants(near) & sweep
    assert not g.ancestors(near) & sweep


def test_task_counts_level3(dag3):
    assert len(dag3.by_stage(5)) == 16
    assert len(dag3.by_stage(6)) == 80
    assert len(dag3.by_stage(7)) == 64
    for s in (4, 8, 9, 10):
        assert len(dag3.by_stage(s)) == 64
    for s in (1, 2, 3):
        assert len(dag3.by_stage(s)) == 1


def test_topological_order_respects_deps(dag3):
    order = dag3.topological_order()
    pos = {t: i for i, t in enumerate(order)}
    assert sorted(order) == list(range(len(dag3)))
    for tid, deps in enumerate(dag3.deps):
        assert all(pos[d] < pos[tid] for d in deps)


def test_m2l_waits_for_its_sources(dag3):
    tree = build_tree(3)
    for task in dag3.by_stage(6):
        producers = {dag3.tasks[d] for d in dag3.deps[task.id]}
        src_keys = {p.key for p in producers if p.stage in (4, 5)}
        assert src_keys == set(tree.interactions(task.level)[task.key].tolist())


def test_single_worker_matches_reference():
    p = uniform_random(400, seed=2)
    cfg = FmmConfig(levels=3, order=8)
    ref, _ = compute_velocities(p, cfg)
    res = execute(build_dag(build_tree(3)), p, cfg, workers=1)
    assert np.array_equal(res.velocities, ref)
    assert validate_trace(build_dag(build_tree(3)), res.trace).ok


@pytest.mark.parametrize("mode", ["sequential", "overlapped"])
def test_threaded_run_is_bitwise_deterministic(mode):
    p = uniform_random(500, seed=8)
    cfg = FmmConfig(levels=3, order=8)
    ref, _ = compute_velocities(p, cfg)
    g = build_dag(build_tree(3))
    res = execute(g, p, cfg, mode=mode, workers=4)
    assert np.array_equal(res.velocities, ref)
    verdict = validate_trace(g, res.trace)
    assert verdict.ok, verdict.violations[:3]
    assert res.report.flops(9) == compute_velocities(p, cfg)[1].flops(9)


def test_sequential_mode_keeps_near_field_out_of_sweeps():
    g = build_dag(build_tree(3))
    res = execute(g, uniform_lattice(3, 8), FmmConfig(levels=3, order=6), mode="sequential",
                  workers=4)
    assert validate_trace(g, res.trace).near_in_sweep_ns == 0


def test_overlapped_threads_interleave_near_field():
    g = build_dag(build_tree(4))
    p = uniform_lattice(4, 16)
    cfg = FmmConfig(levels=4, order=15)
    # thread interleaving is up to the OS, so allow a few attempts
    for _ in range(5):
        res = execute(g, p, cfg, mode="overlapped", workers=8)
        verdict = validate_trace(g, res.trace)
        assert verdict.ok
        if verdict.near_in_sweep_ns > 0:
            break
    assert verdict.near_in_sweep_ns > 0


def test_simulated_overlap_reduces_sweep_idle_time():
    # with more workers than level-3 boxes the coarse sweep leaves workers idle
    g = build_dag(build_tree(4))
    seq = validate_trace(g, simulate_schedule(g, 256, "sequential"))
    ovl = validate_trace(g, simulate_schedule(g, 256, "overlapped"))
    assert seq.ok and ovl.ok
    assert sum(ovl.idle_ns["sweep"].values()) < sum(seq.idle_ns["sweep"].values())
    assert ovl.near_in_sweep_ns > 0 and seq.near_in_sweep_ns == 0


def test_simulated_makespan_not_worse_when_overlapped():
    for levels, workers in [(3, 16), (3, 64), (4, 64), (4, 256)]:
        g = build_dag(build_tree(levels))
        seq = simulate_schedule(g, workers, "sequential")
        ovl = simulate_schedule(g, workers, "overlapped")
        end = lambda tr: max(r.end_ns for r in tr.records)  # noqa: E731
        assert end(ovl) <= end(seq)


@pytest.mark.parametrize("levels", [2, 3])
def test_random_simulated_schedules_validate(levels):
    g = build_dag(build_tree(levels))
    rng = np.random.default_rng(levels)
    for _ in range(50):
        workers = int(rng.integers(1, 40))
        mode = ["sequential", "overlapped"][int(rng.integers(2))]
        lengths = rng.integers(1, 1000, len(g))
        trace = simulate_schedule(g, workers, mode, duration=lambda t: lengths[t.id], rng=rng)
        assert validate_trace(g, trace).ok


def test_corrupted_trace_names_both_tasks(dag3):
    trace = simulate_schedule(dag3, 4)
    recs = {r.task: r for r in trace.records}
    victim = dag3.by_stage(10)[5]
    dep = dag3.tasks[dag3.deps[victim.id][0]]
    bad = recs[victim.id]
    recs[victim.id] = TraceRecord(bad.task, bad.stage, bad.tag, 99,
                                  recs[dep.id].start_ns - 1, recs[dep.id].start_ns)
    verdict = validate_trace(dag3, ExecutionTrace(list(recs.values()), 100, "overlapped"))
    assert not verdict.ok
    msg = " ".join(verdict.violations)
    assert str(victim) in msg and str(dep) in msg


def test_missing_and_duplicate_tasks_detected(dag3):
    trace = simulate_schedule(dag3, 2)
    short = ExecutionTrace(trace.records[1:], 2, "overlapped")
    assert not validate_trace(dag3, short).ok
    dup = ExecutionTrace(trace.records + trace.records[-1:], 2, "overlapped")
    assert any("twice" in v for v in validate_trace(dag3, dup).violations)


def test_worker_overlap_detected(dag3):
    trace = simulate_schedule(dag3, 2)
    recs = list(trace.records)
    # move every task onto worker 0 so intervals collide
    squashed = [TraceRecord(r.task, r.stage, r.tag, 0, r.start_ns, r.end_ns) for r in recs]
    verdict = validate_trace(dag3, ExecutionTrace(squashed, 2, "overlapped"))
    assert any("worker 0" in v for v in verdict.violations)


def test_task_failure_raises_with_partial_trace(monkeypatch):
    original = FmmState.run_task

    def flaky(self, stage, level, key):
        if stage == 8 and key == 3:
            raise RuntimeError("boom")
        return original(self, stage, level, key)

    monkeypatch.setattr(FmmState, "run_task", flaky)
    g = build_dag(build_tree(2))
    with pytest.raises(SchedulerError) as err:
        execute(g, uniform_random(50, seed=0), FmmConfig(levels=2, order=4), workers=3)
    assert "boom" in str(err.value)
    assert 0 < len(err.value.trace) < len(g)


def test_execute_rejects_bad_arguments():
    g = build_dag(build_tree(2))
    p = uniform_random(10, seed=0)
    with pytest.raises(ValueError):
        execute(g, p, FmmConfig(levels=3))
    with pytest.raises(ValueError):
        execute(g, p, FmmConfig(levels=2), mode="eager")


def test_trace_rows_format(dag3):
    rows = simulate_schedule(dag3, 2).rows()
    assert len(rows) == len(dag3)
    stage, box, worker, start, end = rows[0].split(",")
    assert int(stage) == 1 and box == "-"
    assert int(end) - int(start) == 1000
    assert any(r.split(",")[1] == "3:0" for r in rows)
