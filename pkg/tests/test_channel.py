import numpy as np
import pytest

from baps.channel import ChannelConfig, apply_channel, delta2_from_linewidth, wiener_phase
from baps.errors import ConfigurationError
from baps.shaping import build_qam, mb_prior, normalize, sample_source


def _symbols(n, lam=0.0, seed=0):
    c = build_qam(64)
    p = mb_prior(c, lam)
    c = normalize(c, p)
    return c.points[sample_source(p, n, np.random.default_rng(seed))]


@pytest.mark.parametrize(
    "fw, baud, expected",
    [
        (200e3, 50e9, 2.5132741228718343e-05),
        (0.0, 32e9, 0.0),
        (100e3, 32e9, 1.9634954084936207e-05),
    ],
)
def test_delta2_from_linewidth(fw, baud, expected):
    assert delta2_from_linewidth(fw, baud) == pytest.approx(expected, rel=1e-14)


def test_delta2_bad_baud():
    with pytest.raises(ConfigurationError):
        delta2_from_linewidth(1e5, 0.0)


def test_delta2_override():
    cfg = ChannelConfig(12, 200e3, 50e9, delta2_override=5e-5)
    assert cfg.delta2 == 5e-5


def test_wiener_zero_variance_is_constant():
    th = wiener_phase(100, 0.0, 0.7, np.random.default_rng(0))
    np.testing.assert_array_equal(th, 0.7)


def test_wiener_increment_variance():
    d2 = 2.5e-5
    th = wiener_phase(10**6, d2, 0.0, np.random.default_rng(1))
    inc = np.diff(np.concatenate(([0.0], th)))
    assert abs(inc.var() / d2 - 1) < 0.02


def test_wiener_deterministic_and_unwrapped():
    a = wiener_phase(10**5, 1e-3, 3.0, np.random.default_rng(9))
    b = wiener_phase(10**5, 1e-3, 3.0, np.random.default_rng(9))
    np.testing.assert_array_equal(a, b)
    assert np.abs(a).max() > np.pi  # not reduced modulo 2*pi


def test_identity_channel():
    x = _symbols(1000)
    cfg = ChannelConfig(np.inf, 0.0, 50e9)
    out = apply_channel(x, cfg, np.random.default_rng(0), np.random.default_rng(1), theta0=0.0)
    np.testing.assert_array_equal(out.received, x)
    assert out.sigma2_true == 0.0


def test_noiseless_known_phase():
    x = _symbols(1000)
    cfg = ChannelConfig(np.inf, 200e3, 50e9)
    out = apply_channel(x, cfg, np.random.default_rng(0), np.random.default_rng(1))
    np.testing.assert_allclose(out.received * np.exp(-1j * out.true_phase), x, atol=1e-14)


def test_noise_power_and_circularity():
    n = 10**6
    x = np.zeros(n, dtype=complex)
    cfg = ChannelConfig(10.0, 0.0, 50e9)
    out = apply_channel(x, cfg, np.random.default_rng(0), np.random.default_rng(1))
    noise = out.received
    assert abs(np.mean(np.abs(noise) ** 2) / cfg.sigma2 - 1) < 0.01
    rho = np.corrcoef(noise.real, noise.imag)[0, 1]
    assert abs(rho) < 0.01


def test_snr_accounting():
    x = _symbols(2**18, lam=0.05)
    cfg = ChannelConfig(12.0, 200e3, 50e9)
    out = apply_channel(x, cfg, np.random.default_rng(5), np.random.default_rng(6))
    n = out.received - x * np.exp(1j * out.true_phase)
    snr = 10 * np.log10(np.mean(np.abs(x) ** 2) / np.mean(np.abs(n) ** 2))
    assert abs(snr - 12.0) < 0.05


def test_rotation_equivariance():
    # bitwise identity is not attainable in floating point; 1e-12 absolute
    x = _symbols(5000)
    phi = 0.37
    cfg = ChannelConfig(15.0, 200e3, 50e9)
    a = apply_channel(x, cfg, np.random.default_rng(2), np.random.default_rng(3), theta0=0.5)
    b = apply_channel(x * np.exp(1j * phi), cfg, np.random.default_rng(2), np.random.default_rng(3),
                      theta0=0.5 - phi)
    np.testing.assert_allclose(a.received, b.received, rtol=0, atol=1e-12)


def test_phase_and_noise_streams_independent():
    x = _symbols(10**5)
    cfg = ChannelConfig(12.0, 200e3, 50e9)
    a = apply_channel(x, cfg, np.random.default_rng(2), np.random.default_rng(3))
    b = apply_channel(x, cfg, np.random.default_rng(2), np.random.default_rng(4))
    np.testing.assert_array_equal(a.true_phase, b.true_phase)
    assert not np.array_equal(a.received, b.received)
