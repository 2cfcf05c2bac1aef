import json
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lacekit.lattice import (ScalarField, Torus, build_kernel, convolution_exponent, convolve,
                             decay_convolution_check, delta_field, kernel_fourier, kernel_from_json,
                             main_term_check, power_law_field, verify_kernel_bounds)


def test_uniform_kernel_weights_include_origin():
    k = build_kernel("uniform", L=2, d=2)
    assert len(k.weights) == 25
    assert set(k.weights.values()) == {Fraction(1, 25)}
    assert k.weight((0, 0)) == Fraction(1, 25)


def test_sigma2_exact():
    # per-coordinate variance of uniform{-L..L} is L(L+1)/3
    for L in (1, 2, 3):
        for d in (1, 2, 3):
            assert build_kernel("uniform", L, d).sigma2 == Fraction(d * L * (L + 1), 3)


def test_exclude_origin():
    k = build_kernel("uniform", 1, 2, exclude_origin=True)
    assert k.weight((0, 0)) == 0
    assert sum(k.weights.values()) == 1
    assert k.sigma2 == Fraction(12, 8)


def test_tabulated_profile_and_symmetry_check():
    k = build_kernel({(0,): 2, (1,): 1, (-1,): 1}, L=1, d=1)
    assert k.weight((0,)) == Fraction(1, 2)
    with pytest.raises(ValueError):
        build_kernel({(1,): 1, (-1,): 2}, L=1, d=1)
    with pytest.raises(ValueError):
        build_kernel({(0,): 0}, L=1, d=1)


def test_kernel_json_roundtrip_and_rejections():
    k = build_kernel("uniform", 2, 3)
    assert kernel_from_json(json.loads(json.dumps(k.to_json()))).weights == k.weights
    with pytest.raises(ValueError):
        kernel_from_json({"L": 1, "d": 1, "bogus": 0})
    with pytest.raises(ValueError):
        kernel_from_json({"L": "1", "d": 1})


def test_fourier_at_zero_and_symmetry():
    k = build_kernel("uniform", 2, 2)
    assert kernel_fourier(k, [0.0, 0.0]) == pytest.approx(1.0)
    q = np.array([[0.3, -1.1], [-0.3, 1.1], [1.1, 0.3]])
    v = kernel_fourier(k, q)
    assert v[0] == pytest.approx(v[1]) and v[0] == pytest.approx(v[2])


def test_fourier_closed_form_d1():
    # uniform on {-1,0,1}: (1 + 2 cos k)/3
    k = build_kernel("uniform", 1, 1)
    for t in np.linspace(-np.pi, np.pi, 11):
        assert kernel_fourier(k, [t]) == pytest.approx((1 + 2 * np.cos(t)) / 3)


def test_infrared_bounds_positive():
    r = verify_kernel_bounds(build_kernel("uniform", 2, 2), resolution=60)
    assert r["delta2_est"] > 0 and r["delta3_est"] > 0 and not r["violations"]


def test_degenerate_kernel_violations():
    k = build_kernel({(0,): 1}, L=1, d=1)
    r = verify_kernel_bounds(k, resolution=40)
    assert r["delta2_est"] == pytest.approx(0.0) and r["delta3_est"] == pytest.approx(0.0)
    assert r["violations"]


def test_torus_representatives():
    t = Torus(1, 8)
    assert list(t.rep(np.arange(8))) == [0, 1, 2, 3, 4, -3, -2, -1]
    assert t.index((-1,)) == (7,)


def test_field_save_load(tmp_path):
    t = Torus(2, 6)
    f = power_law_field(t, 1.5)
    f.save(tmp_path / "f.f64")
    g = ScalarField.load(tmp_path / "f.f64")
    assert np.array_equal(f.values, g.values) and g.symmetric


def test_field_load_rejects_bad_header(tmp_path):
    t = Torus(1, 4)
    f = delta_field(t)
    f.save(tmp_path / "f.f64")
    (tmp_path / "f.f64.json").write_text(json.dumps({"d": 1, "side": 5, "symmetric": True, "provenance": "x"}))
    with pytest.raises(ValueError):
        ScalarField.load(tmp_path / "f.f64")


@settings(max_examples=15, deadline=None)
@given(st.integers(1, 2), st.integers(3, 7), st.integers(0, 10 ** 6))
def test_spectral_equals_direct(d, side, seed):
    rng = np.random.default_rng(seed)
    t = Torus(d, side)
    f = ScalarField(t, rng.random(t.shape))
    g = ScalarField(t, rng.random(t.shape))
    assert np.allclose(convolve(f, g).values, convolve(f, g, "direct").values, atol=1e-12)


def test_delta_is_identity():
    t = Torus(2, 5)
    f = power_law_field(t, 2.0)
    assert np.allclose(convolve(f, delta_field(t)).values, f.values)


def test_convolution_exponent_regimes():
    assert convolution_exponent(3.5, 2.0, 3) == 2.0
    assert convolution_exponent(2.5, 1.5, 3) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        convolution_exponent(2.0, 0.5, 3)


def test_decay_checks_stable_small():
    r = decay_convolution_check(3.5, 3.2, Torus(3, 8), pad=2)
    assert r["finite"] and r["measured_constant"] > 0 and r["predicted_exponent"] == 3.2
    m = main_term_check(1.0, Torus(3, 8), pad=2)
    assert m["predicted_min_exponent"] == 2.0 and np.isfinite(m["constant"])
