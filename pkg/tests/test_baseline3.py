import pytest

from decoy4.baseline3 import (
    BASELINE_SECURITY,
    SourceConfig3,
    estimate_parameters3,
    evaluate3,
)
from decoy4.bounds import ObservedCounts, SecurityParams
from decoy4.channel import SystemParams, expected_counts, transmittance


def test_config_validation():
    with pytest.raises(ValueError):
        SourceConfig3.from_free(0.15, 0.188, 0.127, 0.599, 0.669)
    with pytest.raises(ValueError):
        SourceConfig3.from_free(0.551, 0.188, 0.5, 0.6, 0.669)


def test_counts_cover_both_bases(cfg3, sys100):
    c = expected_counts(cfg3, sys100)
    ratio = (1 - cfg3.p_z_alice) * (1 - cfg3.p_z_bob) / (cfg3.p_z_alice * cfg3.p_z_bob)
    assert c.n_x_mu / c.n_z_mu == pytest.approx(ratio)
    assert c.n_x_v2 == 0.0


def test_zero_counts_infeasible(cfg3):
    report = evaluate3(cfg3, ObservedCounts(), 1e9)
    assert not report.feasible and report.rate == 0.0


def test_requires_21_terms(cfg3, sys100):
    with pytest.raises(ValueError):
        evaluate3(cfg3, expected_counts(cfg3, sys100), 1e9, SecurityParams())


@pytest.mark.parametrize("length", [0.0, 50.0, 100.0])
def test_deviation_free_single_photon_bounds(length):
    # With the statistical deviation switched off, both decoy bounds fall just
    # below the exact expected single-photon detections of their basis
    # (gap about 3.4% at v = 0.1, growing roughly linearly in v).
    cfg = SourceConfig3.from_free(0.551, 0.1, 0.127, 0.599, 0.669)
    sys = SystemParams(length_km=length, n_pulses=1e9)
    est = estimate_parameters3(cfg, expected_counts(cfg, sys), eps_sec=21.0)
    eta = transmittance(sys)
    y1 = (1 - (1 - 2 * sys.p_dc) * (1 - eta)) * (1 + sys.p_ap)
    tau1 = cfg.tau(1)
    for s1, pa, pb in (
        (est.s_z1, cfg.p_z_alice, cfg.p_z_bob),
        (est.s_x1, 1 - cfg.p_z_alice, 1 - cfg.p_z_bob),
    ):
        truth = sys.n_pulses * tau1 * pa * pb * y1
        assert s1 <= truth
        assert (truth - s1) / truth < 0.05


def test_more_terms_cost_key(cfg3, sys100):
    counts = expected_counts(cfg3, sys100)
    report = evaluate3(cfg3, counts, 1e9, BASELINE_SECURITY)
    assert report.feasible and report.l > 0
    loose = estimate_parameters3(cfg3, counts, 1e-12)
    tight = estimate_parameters3(cfg3, counts, 1e-6)
    assert loose.s_z1 < tight.s_z1 and loose.e1_pz > tight.e1_pz
