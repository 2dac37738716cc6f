import math

import pytest
from hypothesis import given
from hypothesis import strategies as st

from decoy4.bounds import SourceConfig
from decoy4.channel import (
    SystemParams,
    detection_probability,
    error_probability,
    expected_counts,
    sifted,
    transmittance,
)


@pytest.mark.parametrize("length, eta", [(0.0, 0.1), (50.0, 0.01), (100.0, 0.001)])
def test_transmittance_powers_of_ten(length, eta):
    assert transmittance(SystemParams(length_km=length)) == pytest.approx(eta, rel=1e-14)


def test_vacuum_without_noise_is_silent():
    sys = SystemParams(p_dc=0.0, p_ap=0.0)
    assert sifted(0.0, 0.3, sys) == (0.0, 0.0)


def test_bright_limit_error_fraction():
    sys = SystemParams(p_dc=1e-6, p_ap=0.0, e_mis=0.0, eta_b=1.0, alpha=0.2)
    n, m = sifted(200.0, 1.0, sys)
    assert m / n == pytest.approx(1e-6, rel=1e-6)


def test_detection_probability_accurate_for_weak_pulses():
    sys = SystemParams(length_km=100)
    k = 2e-4
    eta = transmittance(sys)
    exact = 2 * sys.p_dc + eta * k * (1 - 2 * sys.p_dc) - (eta * k) ** 2 / 2
    assert detection_probability(k, sys) == pytest.approx(exact, rel=1e-12)


def test_system_params_validation():
    with pytest.raises(ValueError):
        SystemParams(p_dc=-1e-7)
    with pytest.raises(ValueError):
        SystemParams(length_km=-1.0)
    with pytest.raises(ValueError):
        SystemParams(alpha=0.0)


configs = st.builds(
    SourceConfig.from_free,
    mu=st.floats(0.3, 1.0),
    v1=st.floats(0.01, 0.25),
    v2=st.floats(0.01, 1.0),
    p_mu=st.floats(0.05, 0.3),
    p_v1=st.floats(0.05, 0.3),
    p_v2=st.floats(0.05, 0.3),
    p_z=st.floats(0.05, 0.95),
)


@given(cfg=configs, length=st.floats(0.0, 200.0))
def test_errors_never_exceed_detections(cfg, length):
    counts = expected_counts(cfg, SystemParams(length_km=length))
    for basis_k in ("z_mu", "z_v1", "z_omega", "x_v2", "x_omega"):
        n = getattr(counts, f"n_{basis_k}")
        m = getattr(counts, f"m_{basis_k}")
        assert 0 <= m <= n


@given(k=st.floats(1e-6, 2.0), a=st.floats(0.0, 150.0), b=st.floats(0.0, 150.0))
def test_counts_decrease_with_distance(k, a, b):
    near, far = sorted((a, b))
    d_near = detection_probability(k, SystemParams(length_km=near))
    d_far = detection_probability(k, SystemParams(length_km=far))
    assert d_far <= d_near
    assert error_probability(k, SystemParams(length_km=far)) <= error_probability(
        k, SystemParams(length_km=near)
    ) * (1 + 1e-12)


def test_counts_split_by_basis(cfg4):
    sys = SystemParams(length_km=30)
    c = expected_counts(cfg4, sys)
    assert c.n_x_mu == c.n_x_v1 == 0.0
    w_z = cfg4.p_mu * cfg4.p_z_bob
    assert c.n_z_mu == pytest.approx(
        sys.n_pulses * w_z * detection_probability(cfg4.mu, sys) * (1 + sys.p_ap)
    )
    assert math.isclose(c.e_z, c.m_z / c.n_z)
