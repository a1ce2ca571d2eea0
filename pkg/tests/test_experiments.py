import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from pnmimo import analytic, experiments
from pnmimo.config import derive_increment_variance, reference_config
from pnmimo.experiments import SweepError, SweepSpec


@pytest.fixture(scope="module")
def base():
    return reference_config()


@pytest.mark.parametrize("kwargs", [
    dict(variable="snr", grid=[]),
    dict(variable="snr", grid=[1, 1]),
    dict(variable="M", grid=[10.5]),
    dict(variable="K", grid=[0, 1]),
    dict(variable="rho", grid=[1]),
    dict(variable="snr", grid=[1], modes=("sync", "coherent")),
])
def test_sweep_spec_rejects(base, kwargs):
    with pytest.raises(SweepError):
        SweepSpec(template=base, **kwargs)


def test_sign_changes():
    assert experiments.sign_changes([1, 2, 3, 2, 1]) == 1
    assert experiments.sign_changes([1, 2, 2, 3]) == 0
    assert experiments.sign_changes([1, 3, 2, 4]) == 2
    assert experiments.sign_changes([5]) == 0


@given(st.lists(st.floats(-1e6, 1e6), max_size=30))
def test_sign_changes_invariant_under_reversal(values):
    assert experiments.sign_changes(values) == experiments.sign_changes(values[::-1])


def test_drift_of_reference_constant(base):
    var = derive_increment_variance(2e9, 1e-7, 4.7e-18)
    assert experiments.accumulated_drift_deg(base, var) == pytest.approx(15.7568, abs=1e-3)


def test_rate_vs_snr_has_limit_rows(base):
    table = experiments.rate_vs_snr(SweepSpec("snr", [0, 10], base))
    assert len(table.rows) == 3 * 3
    limits = [r for r in table.rows if math.isinf(r[0])]
    assert [r[1] for r in limits] == list(experiments.MODES)
    for row in limits:
        finite = [r[2] for r in table.rows if r[1] == row[1] and not math.isinf(r[0])]
        assert row[2] > max(finite)


def test_csv_round_trips_floats(base):
    table = experiments.rate_vs_snr(SweepSpec("snr", [3.0], base, modes=("sync",)))
    line = table.to_csv().splitlines()[2]
    assert float(line.split(",")[2]) == table.rows[0][2]


def test_ideal_rate_grows_with_block_length(base):
    table = experiments.rate_vs_nd(SweepSpec("N_D", list(range(100, 5001, 100)), base, modes=("none",)))
    assert np.all(np.diff(table.column("sum_rate_bpcu")) >= 0)


def test_rate_vs_nd_matches_direct(base):
    table = experiments.rate_vs_nd(SweepSpec("N_D", [100, 700], base, modes=("sync",)))
    for n, rate in zip(table.column("N_D"), table.column("sum_rate_bpcu")):
        assert rate == pytest.approx(analytic.sum_rate(base.replace(N_D=n), "sync").sum_rate, rel=1e-12)


def test_optimal_block_lengths(base):
    table = experiments.max_rate_vs_k(SweepSpec("K", [10], base, modes=("sync", "nonsync")), 5000)
    best = dict(zip(table.column("mode"), table.column("best_N_D")))
    assert best == {"sync": 983, "nonsync": 1269}


def test_gap_is_positive_and_sync_worse(base):
    table = experiments.power_gap(SweepSpec("M", [500], base), targets=[1.0], constants=[4.7e-18])
    gaps = dict(zip(table.column("mode"), table.column("gap_db")))
    assert gaps["sync"] > gaps["nonsync"] > 0
