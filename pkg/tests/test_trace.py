import io

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from faassim import (
    ConfigError,
    EstimationError,
    RequestRecord,
    ServerlessSimulator,
    empirical_metrics,
    estimate_parameters,
    records_from_events,
    run,
)
from faassim.trace import read_records, write_records


def rec(start, response, cold=False, iid="a"):
    return RequestRecord(start, response, cold, iid)


def test_arrival_rate_from_uniform_spacing():
    records = [rec(0, 1.0, True), rec(1, 1.0), rec(2, 1.0)]
    assert estimate_parameters(records)["arrival_rate"] == 1.0


def test_class_means_and_empirical_processes():
    records = [rec(0, 3.0, True), rec(5, 1.9), rec(9, 2.1)]
    est = estimate_parameters(records)
    assert est["warm_mean"] == pytest.approx(2.0)
    assert est["cold_mean"] == 3.0
    assert sorted(est["warm_empirical"].samples) == [1.9, 2.1]


@pytest.mark.parametrize("cold, missing", [(False, "cold"), (True, "warm")])
def test_missing_class_named(cold, missing):
    with pytest.raises(EstimationError, match=missing):
        estimate_parameters([rec(0, 1.0, cold), rec(1, 1.0, cold)])


def test_single_cold_record():
    m = empirical_metrics([rec(0, 2.0, True)])
    assert m.cold_start_probability == 1.0


def test_overlapping_requests_on_two_instances():
    records = [rec(0.0, 10.0, True, "a"), rec(4.0, 10.0, True, "b")]
    m = empirical_metrics(records, sample_step=7.0)
    assert m.sample_times.tolist() == [0.0, 7.0, 14.0]
    assert m.running_count_series.tolist() == [1, 2, 0]
    assert m.warm_pool_count_series.tolist() == [1, 2, 2]


def test_pool_forgets_instances_after_window():
    records = [rec(0.0, 1.0, True, "a"), rec(700.0, 1.0, True, "b")]
    m = empirical_metrics(records, window=600, sample_step=50)
    pool = dict(zip(m.sample_times.tolist(), m.warm_pool_count_series.tolist()))
    assert pool[550.0] == 1 and pool[600.0] == 1 and pool[650.0] == 0 and pool[700.0] == 1
    assert (m.idle_count_series >= 0).all()


def test_csv_round_trip_and_flags():
    text = "start_time,response_time,is_cold,instance_id\n0,1.5,true,x\n1,0.5,0,x\n2,0.5,FALSE,y\n3,2,1,z\n"
    records = read_records(io.StringIO(text))
    assert [r.is_cold for r in records] == [True, False, False, True]
    buf = io.StringIO()
    write_records(records, buf)
    assert read_records(io.StringIO(buf.getvalue())) == records


def test_csv_errors():
    with pytest.raises(ConfigError, match="instance_id"):
        read_records(io.StringIO("start_time,response_time,is_cold\n0,1,1\n"))
    with pytest.raises(ConfigError, match="is_cold"):
        read_records(io.StringIO("start_time,response_time,is_cold,instance_id\n0,1,maybe,a\n"))
    with pytest.raises(ConfigError):
        read_records(io.StringIO("start_time,response_time,is_cold,instance_id\n0,-1,1,a\n"))


record_lists = st.lists(
    st.builds(rec, st.floats(0, 1e4), st.floats(0.01, 50), st.booleans(), st.sampled_from("abcdef")),
    min_size=1,
    max_size=40,
)


@given(records=record_lists, window=st.floats(1, 1000))
def test_wasted_capacity_is_a_fraction(records, window):
    m = empirical_metrics(records, window=window, sample_step=25)
    assert 0.0 <= m.wasted_capacity <= 1.0
    assert (m.idle_count_series >= 0).all()


def test_round_trip_through_simulator_trace(table1):
    cfg = table1.replace(horizon=2e5, expiration_threshold=30)
    report, trace = run(cfg, record_trace=True)
    records = records_from_events(trace, start=cfg.skip_initial)
    assert len(records) == report.requests_total
    m = empirical_metrics(records, window=30)
    assert m.cold_start_probability == report.cold_start_probability
    est = estimate_parameters(records)
    assert est["warm_mean"] == pytest.approx(1.991, rel=0.02)
    assert est["cold_mean"] == pytest.approx(2.244, rel=0.03)
    assert est["arrival_rate"] == pytest.approx(0.9, rel=0.02)


def test_pool_estimator_is_exact_when_window_equals_threshold(table1):
    # live instances are exactly those that served a request within the last threshold seconds
    cfg = table1.replace(horizon=3e4, skip_initial=0.0, expiration_threshold=45)
    grid = np.arange(0.0, 3e4, 10.0)
    sim = ServerlessSimulator(cfg, grid=grid, record_trace=True)
    report, trace = sim.run()
    m = empirical_metrics(records_from_events(trace), window=45, sample_step=10.0, start=0.0, end=grid[-1])
    assert np.array_equal(m.warm_pool_count_series, sim.series.server_count)
    assert np.array_equal(m.running_count_series, sim.series.running_count)
