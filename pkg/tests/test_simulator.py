from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import (
    SINGLE_ARRIVAL_LOG,
    TWO_CUSTOMER_LOG,
    check_event_log,
    patient_edf_vs_mm1_pvalue,
    scripted_run,
)
from edf_fluid.distributions import Exponential
from edf_fluid.errors import EventOverflow
from edf_fluid.measures import FiniteMeasure, kolmogorov_distance
from edf_fluid.model import InitialCondition, SystemParams, config_from_dict, example_config
from edf_fluid.simulator import (
    ARRIVAL,
    RENEGE,
    SERVICE_END,
    SERVICE_START,
    Customer,
    OutputGrid,
    RandomStreams,
    SimState,
    build_initial_state,
    frontier_path,
    run,
    simulate,
    snapshot_potential_measure,
    snapshot_queue_measure,
)

def test_single_arrival_hand_trace():
    trace, state = scripted_run([1.0], [5.0], [0.5], horizon=3.0)
    assert trace.events == SINGLE_ARRIVAL_LOG
    assert trace.R == 0
    assert np.all(trace.q == 0)
    check_event_log(trace, state)


def test_two_customer_hand_trace():
    trace, state = scripted_run([0.125, 0.125], [2.875, 1.75], [10.0, 10.0], horizon=12.0)
    assert trace.events == TWO_CUSTOMER_LOG
    assert trace.R == 1
    check_event_log(trace, state)


def test_tie_order_renege_before_service_end_before_arrival():
    # customer 1 serves on [0.5, 1.5); customer 2 (deadline 1.5) reneges at 1.5
    # before the server frees up; customer 3 arrives at 1.5 and finds it idle
    trace, _ = scripted_run([0.5, 0.5, 0.5], [5.0, 0.5, 5.0], [1.0, 1.0], horizon=2.0)
    at_15 = [(k, c) for t, k, c in trace.events if t == 1.5]
    assert at_15 == [(RENEGE, 2), (SERVICE_END, 1), (ARRIVAL, 3), (SERVICE_START, 3)]


def test_deadline_ties_break_by_smaller_id():
    # 2 and 3 share deadline 4.0; when 1 finishes, 2 goes first
    trace, _ = scripted_run([0.5, 0.5, 1.0], [9.0, 3.0, 2.0], [2.0, 1.0, 1.0], horizon=4.5)
    starts = [c for _, k, c in trace.events if k == SERVICE_START]
    assert starts == [1, 2, 3]


def test_initial_customers_earliest_deadline_starts():
    trace, state = scripted_run(services=[1.0, 1.0, 1.0], initial_leads=[3.0, 1.5, 2.0],
                                horizon=5.0)
    starts = [(t, c) for t, k, c in trace.events if k == SERVICE_START]
    # ids -2, -1, 0 carry leads 3.0, 1.5, 2.0
    assert starts == [(0.0, -1), (1.0, 0), (2.0, -2)]
    assert trace.R == 0
    check_event_log(trace, state)


def test_frontier_without_head_changes_decreases_at_unit_rate():
    trace, _ = scripted_run(horizon=2.0)
    t, f, c = frontier_path(trace)
    np.testing.assert_allclose(f, -t)
    np.testing.assert_allclose(c, f)


def test_frontier_jumps_only_upward():
    trace, _ = scripted_run([0.1, 0.2, 0.2, 0.3], [1.0, 3.0, 0.5, 2.0], [0.7] * 4,
                            horizon=4.0, grid_points=4001)
    sup = trace.frontier + trace.times
    assert np.all(np.diff(sup) >= 0)


def test_empty_initial_measure_gives_empty_system():
    params = SystemParams(lam=1.0, mu=1.0, N=10, horizon=1.0)
    streams = RandomStreams(Exponential(1.0), Exponential(1.0), Exponential(1.0), params, 1)
    with pytest.warns(UserWarning, match="empty"):
        state = build_initial_state(InitialCondition(0.0, None), params, streams)
    assert state.X == 0 and state.Q == 0
    assert state.server is None
    assert state.frontier(0.0) == 0.0


def test_event_cap():
    cfg = config_from_dict(example_config(0.5, 2.0, event_cap=50))
    with pytest.raises(EventOverflow):
        simulate(cfg, 200)


def test_initial_state_count_and_law():
    params = SystemParams(lam=1.0, mu=0.5, N=1000, horizon=1.0, seed=3)
    ic = InitialCondition(1.0, Exponential(1.0))
    streams = RandomStreams(Exponential(1.0), Exponential(1.0), Exponential(2.0), params)
    state = build_initial_state(ic, params, streams)
    assert state.X == 1000
    emp = FiniteMeasure.point_masses(state.initial_deadlines, 1.0 / 1000)
    assert kolmogorov_distance(emp, ic.measure) < 0.05


def test_initial_leads_respect_frontier0():
    params = SystemParams(lam=1.0, mu=0.5, N=500, horizon=1.0, seed=5)
    ic = InitialCondition(1.0, Exponential(1.0), frontier0=0.0)
    streams = RandomStreams(Exponential(1.0), Exponential(1.0), Exponential(2.0), params)
    leads = streams.initial_leads(ic, 500)
    assert np.all(leads > 0)


def test_initial_leads_with_positive_frontier0():
    from edf_fluid.distributions import EmpiricalGrid

    law = EmpiricalGrid((0.5, 1.0, 3.0), (0.0, 0.4, 1.0))
    ic = InitialCondition(1.0, law, frontier0=0.5)
    params = SystemParams(lam=1.0, mu=0.5, N=400, horizon=1.0, seed=7)
    streams = RandomStreams(Exponential(1.0), Exponential(1.0), Exponential(2.0), params)
    assert np.all(streams.initial_leads(ic, 400) > 0.5)


def test_snapshot_queue_measure():
    state = SimState(N=1, streams=None, clock=1.0)
    assert snapshot_queue_measure(state).total_mass == 0.0
    for cid, d in ((1, 2.5), (2, 3.5)):
        state.customers[cid] = Customer(cid, 0.0, d)
        state.queue.add((d, cid))
    m = snapshot_queue_measure(state)
    np.testing.assert_allclose(m.atoms(), [1.5, 2.5])
    np.testing.assert_allclose(m.weights, [1.0, 1.0])
    assert m.scaled(1 / 4).total_mass == pytest.approx(state.Q / 4)


def test_potential_measure_at_zero_is_initial():
    ic_leads = [0.3, 1.2, 2.0]
    m = snapshot_potential_measure(([], []), ic_leads, 0.0)
    np.testing.assert_allclose(m.atoms(), ic_leads)


def test_potential_dominates_queue():
    cfg = config_from_dict(example_config(0.5, 2.0))
    trace = simulate(cfg, 100, seed=11)
    grid = np.linspace(0.0, 6.0, 301)
    for q, h in zip(trace.queue_snapshots.measures, trace.potential_snapshots.measures):
        assert np.all(h.tail(grid) >= q.tail(grid) - 1e-12)


def test_potential_measure_tracks_H():
    # scaled potential measure at the horizon is close to H(., T) at N = 1000;
    # one-seed noise is about 0.02, so average the sup distance over 10 seeds
    from edf_fluid.fluid import problem_from_config

    cfg = config_from_dict(example_config(0.5, 2.0))
    prob = problem_from_config(cfg)
    a = np.linspace(0.0, 5.0, 201)
    dists = []
    for seed in range(10):
        snaps = simulate(cfg, 1000, seed=seed).potential_snapshots
        t, m = snaps.times[-1], snaps.measures[-1]
        dists.append(np.max(np.abs(m.tail(a) - prob.H(a, t))))
    assert np.mean(dists) < 0.05


def test_queue_measure_has_no_mass_below_current_lead():
    cfg = config_from_dict(example_config(1.0, 0.5))
    trace = simulate(cfg, 200, seed=4)
    idx = {float(t): k for k, t in enumerate(trace.times)}
    for t, m in zip(trace.queue_snapshots.times, trace.queue_snapshots.measures):
        c = trace.current[idx[float(t)]]
        assert m.total_mass - m.tail_left(c) == pytest.approx(0.0, abs=1e-12)


def test_frontier_dominates_head():
    cfg = config_from_dict(example_config(1.0, 0.5))
    trace = simulate(cfg, 200, seed=9)
    busy = trace.q > 0
    assert np.all(trace.frontier[busy] >= trace.head[busy])
    assert np.all(trace.frontier[busy] > 0)


def test_determinism():
    cfg = config_from_dict(example_config(0.5, 2.0))
    a = simulate(cfg, 100, seed=21)
    b = simulate(cfg, 100, seed=21)
    c = simulate(cfg, 100, seed=22)
    assert a.events == b.events
    np.testing.assert_array_equal(a.q, b.q)
    assert a.events != c.events


@settings(max_examples=60, deadline=None)
@given(
    interarrivals=st.lists(st.floats(0.01, 1.0), min_size=1, max_size=25),
    patience=st.lists(st.floats(0.01, 3.0), min_size=25, max_size=25),
    services=st.lists(st.floats(0.01, 1.5), min_size=40, max_size=40),
    initial=st.lists(st.floats(0.05, 3.0), max_size=5),
)
def test_scripted_invariants(interarrivals, patience, services, initial):
    trace, state = scripted_run(interarrivals, patience, services, horizon=8.0,
                                initial_leads=initial)
    check_event_log(trace, state)


@settings(max_examples=25, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    N=st.integers(1, 60),
    mu=st.sampled_from([0.5, 1.0, 2.0]),
    theta=st.sampled_from([0.5, 1.0, 3.0]),
)
def test_random_run_invariants(seed, N, mu, theta):
    cfg = config_from_dict(example_config(mu, theta, horizon=3.0))
    params = cfg.params(N=N, seed=seed)
    streams = RandomStreams(cfg.arrival_law, cfg.service_law, cfg.patience_law, params)
    state = build_initial_state(cfg.initial, params, streams)
    trace = run(state, params, OutputGrid.uniform(3.0, 128, 8))
    check_event_log(trace, state)
    # the sampled X path obeys conservation at every grid point too
    assert np.all(trace.x >= trace.q)
    assert np.all(np.diff(trace.r) >= 0)


def test_patient_edf_matches_mm1_in_distribution():
    # with patience ~ Exp(1e-9) nobody reneges, so Q(T) follows the M/M/1 law
    assert patient_edf_vs_mm1_pvalue() > 1e-3
