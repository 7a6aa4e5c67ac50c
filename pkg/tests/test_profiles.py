"""Cutoff functions, absorption profiles, and the admissibility validator."""

import numpy as np
import pytest

from resonalens import (ValidationError, chi1, chi2, chi2_slope, make_profile,
                        validate_assumptions)


def test_chi1_is_flat_at_zero_and_increasing():
    assert chi1(-2.0) == 0.0
    assert chi1(0.0) == 0.0
    # exp(-1/t) underflows for tiny t; the limit value is correct
    assert chi1(1e-3) == 0.0
    np.testing.assert_allclose(chi1(1.0), np.exp(-1.0), rtol=1e-15)
    t = np.linspace(0.05, 5.0, 80)
    assert np.all(np.diff(chi1(t)) > 0.0)


def test_chi2_edges_and_midpoint():
    assert chi2(-0.5) == 0.0
    assert chi2(0.0) == 0.0
    assert chi2(1.0) == 1.0
    assert chi2(2.0) == 1.0
    np.testing.assert_allclose(chi2(0.5), 0.5, rtol=1e-15)
    t = np.linspace(0.01, 0.99, 60)
    assert np.all(np.diff(chi2(t)) > 0.0)


def test_chi2_partition_of_unity():
    rng = np.random.default_rng(11)
    t = rng.uniform(-0.5, 1.5, 200)
    np.testing.assert_allclose(chi2(t) + chi2(1.0 - t), 1.0, atol=1e-14)


def test_chi2_slope_matches_central_differences():
    rng = np.random.default_rng(12)
    t = rng.uniform(0.05, 0.95, 50)
    h = 1e-6
    fd = (chi2(t + h) - chi2(t - h)) / (2.0 * h)
    np.testing.assert_allclose(chi2_slope(t), fd, rtol=1e-7, atol=1e-9)
    assert chi2_slope(-0.2) == 0.0
    assert chi2_slope(1.3) == 0.0


def test_make_profile_rejects_bad_parameters():
    with pytest.raises(ValidationError):
        make_profile("parabolic")
    with pytest.raises(ValidationError):
        make_profile("affine", r_start=0.0)
    with pytest.raises(ValidationError):
        make_profile("affine", strength=-1.0)
    with pytest.raises(ValidationError):
        make_profile("power", exponent=0)
    with pytest.raises(ValidationError):
        make_profile("power", exponent=1.5)
    with pytest.raises(ValidationError):
        make_profile("smooth-chi2", r_start=2.0, r_flat=1.5)
    # the unscaled kind is opt-in for verification runs only
    with pytest.raises(ValidationError):
        make_profile("unscaled")
    assert make_profile("unscaled", verification_only=True).scaled is False


def test_smooth_profile_default_plateau_radius():
    prof = make_profile("smooth-chi2", strength=2.0, r_start=1.5)
    assert prof.r_flat == 2.5


def test_affine_stretch_closed_form():
    prof = make_profile("affine", strength=3.0, r_start=1.0)
    assert prof.stretch(0.5) == 0.0
    np.testing.assert_allclose(prof.stretch(2.0), 1.5, rtol=1e-15)
    np.testing.assert_allclose(prof.stretch_slope(2.0), 3.0 / 4.0, rtol=1e-15)


def test_power_stretch_closed_form():
    prof = make_profile("power", strength=1.0, r_start=1.0, exponent=2)
    np.testing.assert_allclose(prof.stretch(2.0), 0.5, rtol=1e-15)
    np.testing.assert_allclose(prof.stretch(3.0), 4.0 / 3.0, rtol=1e-15)
    # d/dr (r-1)^2/r = (r-1)(r+1)/r^2
    np.testing.assert_allclose(prof.stretch_slope(2.0), 3.0 / 4.0, rtol=1e-15)


def test_smooth_stretch_hits_plateau():
    prof = make_profile("smooth-chi2", strength=3.0, r_start=1.0, r_flat=2.0)
    assert prof.stretch(1.0) == 0.0
    np.testing.assert_allclose(prof.stretch(1.5), 1.5, rtol=1e-14)
    assert prof.stretch(2.0) == 3.0
    assert prof.stretch(7.0) == 3.0
    assert prof.stretch_slope(2.5) == 0.0


@pytest.mark.parametrize("kind,kwargs", [
    ("affine", {}),
    ("power", {"exponent": 1}),
    ("power", {"exponent": 2}),
    ("power", {"exponent": 3}),
    ("smooth-chi2", {"r_flat": 2.5}),
])
def test_stretch_slope_matches_central_differences(kind, kwargs):
    prof = make_profile(kind, strength=1.7, r_start=1.0, **kwargs)
    rng = np.random.default_rng(13)
    # stay clear of the onset and plateau joints where one-sided kinks live
    r = rng.uniform(1.05, 2.4, 40)
    h = 1e-6
    fd = (prof.stretch(r + h) - prof.stretch(r - h)) / (2.0 * h)
    np.testing.assert_allclose(prof.stretch_slope(r), fd, rtol=1e-6, atol=1e-8)


def test_onset_and_tail_constants():
    affine = make_profile("affine", strength=2.0)
    pow1 = make_profile("power", strength=2.0, exponent=1)
    pow2 = make_profile("power", strength=2.0, exponent=2)
    smooth = make_profile("smooth-chi2", strength=2.0)
    unscaled = make_profile("unscaled", verification_only=True)
    assert affine.alpha_onset == 2.0
    assert pow1.alpha_onset == 2.0
    assert pow2.alpha_onset == 0.0
    assert smooth.alpha_onset == 0.0
    assert affine.stretch_limit() == 2.0
    assert pow1.stretch_limit() == 2.0
    assert pow2.stretch_limit() == np.inf
    assert smooth.stretch_limit() == 2.0
    assert unscaled.stretch_limit() == 0.0


def test_kink_locations_per_kind():
    assert make_profile("affine", r_start=1.5).kinks() == (1.5,)
    assert make_profile("power", r_start=1.5, exponent=2).kinks() == (1.5,)
    assert make_profile("smooth-chi2", r_start=1.0, r_flat=2.0).kinks() == (1.0, 2.0)
    assert make_profile("unscaled", verification_only=True).kinks() == ()


@pytest.mark.parametrize("kind,kwargs", [
    ("affine", {}),
    ("power", {"exponent": 1}),
    ("power", {"exponent": 2}),
    ("smooth-chi2", {"r_flat": 2.0}),
])
def test_builtin_profiles_pass_the_validator(kind, kwargs):
    report = validate_assumptions(make_profile(kind, strength=3.0, **kwargs))
    assert report.passed, report.failures()


def test_validator_flags_the_unscaled_profile():
    report = validate_assumptions(make_profile("unscaled", verification_only=True))
    assert not report.items["positive_beyond_start"][0]


class _StepStretch:
    """Discontinuous counterexample: jumps from 0 to 1 at r = 2."""

    r_start = 1.0

    def stretch(self, r):
        r = np.asarray(r, dtype=float)
        out = np.where(r > 2.0, 1.0, 0.0)
        return out if out.ndim else float(out)


class _SaggingStretch:
    """Rises beyond the onset, then turns back down."""

    r_start = 1.0

    def stretch(self, r):
        r = np.asarray(r, dtype=float)
        d = np.maximum(r - 1.0, 0.0)
        out = d - 0.2 * d**2
        return out if out.ndim else float(out)


def test_validator_catches_a_step_with_a_witness():
    report = validate_assumptions(_StepStretch())
    ok, witness = report.items["continuous"]
    assert not ok
    assert abs(witness - 2.0) < 1e-3
    assert not report.passed


def test_validator_catches_nonmonotone_stretch():
    report = validate_assumptions(_SaggingStretch())
    ok, witness = report.items["nondecreasing"]
    assert not ok
    assert witness > 3.4  # the closed form peaks at r = 3.5
