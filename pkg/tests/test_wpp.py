import pytest

from brakesafe.dsm import ConfigKind, DsmConfig, simulate_dsm
from brakesafe.patterns import CountPattern, ErrorSequence
from brakesafe.scenario import ScenarioParams, derive_geometry, simulate
from brakesafe.wpp import (
    TAB3,
    TAB5,
    build_hep_table,
    identity_gap,
    verify_wpp,
    wpp_policy,
    wpp_tracker_overapprox,
)

SMALL = ScenarioParams(delta_t=1.875)  # n_max = 8


@pytest.mark.parametrize("p", [CountPattern(19, 150, 150), CountPattern(0, 0, 150),
                               CountPattern(36, 150, 150)])
def test_wpp_policy_identity(p):
    assert wpp_policy(p) == p


@pytest.mark.parametrize("p, expected", [
    (CountPattern(19, 150, 150), CountPattern(19, 150, 150)),
    (CountPattern(23, 80, 150), CountPattern(23, 150, 150)),
    (CountPattern(0, 0, 150), CountPattern(0, 150, 150)),
])
def test_tracker_overapprox(p, expected):
    assert wpp_tracker_overapprox(p) == expected


def test_hep_table_tab3(pattern_table):
    rows = build_hep_table(pattern_table, TAB3).rows
    assert [r.label for r in rows] == ["S0..3", "S1..3", "S2..3", "S3"]
    assert rows[0].detector_pattern == CountPattern(19, 150, 150)
    for r in rows:
        assert r.tracker_pattern == r.ubi_pattern
        assert r.detector_pattern == CountPattern(r.ubi_pattern.k_min, 150, 150)


def test_hep_table_tab5_lowers_later_rows(pattern_table):
    t3 = build_hep_table(pattern_table, TAB3).rows
    t5 = build_hep_table(pattern_table, TAB5).rows
    assert t5[0].detector_pattern == t3[0].detector_pattern
    for a, b in zip(t3[1:], t5[1:]):
        assert b.detector_pattern.k_min == a.detector_pattern.k_min - 1


def test_hep_table_s3_row_from_reference_k():
    rows = [("S3", CountPattern(36, 150, 150))]
    assert build_hep_table(rows).rows[0].detector_pattern == CountPattern(36, 150, 150)


def test_empty_table():
    assert build_hep_table(None).rows == []
    assert build_hep_table([]).rows == []


def test_bad_convention(pattern_table):
    with pytest.raises(ValueError):
        build_hep_table(pattern_table, "tab4")


def test_empty_sequence_equals_nominal(params):
    rho = ErrorSequence((), 150)
    assert identity_gap(params, rho) == 0.0
    traj = simulate_dsm(params, config=DsmConfig(ConfigKind.C_PTILDE_D, rho))
    assert traj.samples == simulate(params).samples


def test_exhaustive_small_horizon():
    assert derive_geometry(SMALL).n_max == 8
    report = verify_wpp(SMALL, CountPattern(0, 8, 8))
    assert report.sequences_checked == 256
    assert report.identity_violations == []
    assert report.max_abs_accel_diff <= 1e-9


def test_soundness_exhaustive_small_horizon():
    report = verify_wpp(SMALL, CountPattern(3, 8, 8), c_values=(0, 1, 2, 3))
    # all sequences with at most 2 FNs, for each of the 4 keep-alive values
    assert report.soundness_checked == 4 * (1 + 8 + 28)
    assert report.ok


def test_random_full_horizon(params):
    report = verify_wpp(params, CountPattern(19, 150, 150), trials=100, seed=3, c_values=(0, 3),
                        severity_above=-1.0)
    assert report.sequences_checked == 100
    assert report.ok, report.as_dict()


def test_horizon_mismatch(params):
    with pytest.raises(ValueError):
        verify_wpp(params, CountPattern(1, 8, 8))


def test_report_dict():
    d = verify_wpp(SMALL, CountPattern(8, 8, 8)).as_dict()
    assert d["pattern"] == "count(8,8,8)" and d["ok"] is True
