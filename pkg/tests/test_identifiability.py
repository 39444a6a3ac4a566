import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slipid.dataset import SamplingRanges
from slipid.dynamics import GaitParams
from slipid.identifiability import (
    FULL,
    PARAMETERIZATIONS,
    REDUCED,
    SensitivityError,
    analyze,
    angle_deg,
    conditional_r2_bound,
    format_summary,
    jacobi_eigh,
    r2_bound_from_samples,
    scale_invariance_check,
    sensitivity_jacobian,
    singular_spectrum,
    write_report_csv,
)
from slipid.simulator import InitialConditions, simulate

SCALE_DIRECTION = np.array([1.0, 1.0, 0.0]) / math.sqrt(2)


# scale invariance

def test_unit_scale_is_exactly_zero(walker):
    p, ic = walker
    assert scale_invariance_check(p, ic, 1.0) == 0.0


def test_range_corner_pair_matches():
    p = GaitParams(60.0, 8000.0, 0.7)
    assert scale_invariance_check(p, InitialConditions(), 1.25) < 1e-9


def test_stiffness_alone_is_visible():
    p = GaitParams(60.0, 8000.0, 0.7)
    ic = InitialConditions()
    a = simulate(p, ic)
    b = simulate(replace(p, k=p.k * 1.25), ic)
    assert max(np.abs(a.xs - b.xs).max(), np.abs(a.ys - b.ys).max()) > 1e-3


def test_scale_factor_validated(walker):
    with pytest.raises(ValueError):
        scale_invariance_check(*walker, 0.0)


# Jacobian

@pytest.fixture(scope="module")
def gait_jacobians():
    p, ic = GaitParams(70.0, 9000.0, 0.7), InitialConditions()
    return sensitivity_jacobian(p, ic, FULL), sensitivity_jacobian(p, ic, REDUCED)


def test_scaling_direction_is_in_kernel(gait_jacobians):
    j3, _ = gait_jacobians
    assert j3.shape == (302, 3)
    assert np.linalg.norm(j3 @ np.array([1.0, 1.0, 0.0])) < 1e-5 * np.linalg.norm(j3)


def test_columns_carry_signal(gait_jacobians):
    j3, j2 = gait_jacobians
    norms3 = np.linalg.norm(j3, axis=0)
    assert norms3[2] > 1.0
    assert np.all(np.linalg.norm(j2, axis=0) > 1.0)
    # the reduced rho column is the k column, since rho moves through k
    np.testing.assert_allclose(j2[:, 0], j3[:, 1], rtol=0, atol=1e-6 * norms3[1])


def test_failing_perturbation_is_named():
    with pytest.raises(SensitivityError, match="log_m"):
        sensitivity_jacobian(GaitParams(70.0, 9000.0, 0.7), InitialConditions(), FULL, rel_step=2.0)


def test_unknown_parameterization():
    with pytest.raises((KeyError, ValueError)):
        sensitivity_jacobian(GaitParams(70.0, 9000.0, 0.7), InitialConditions(), "bogus")


# spectrum

def test_identity_columns():
    j = np.vstack([np.eye(3), np.zeros((5, 3))])
    rep = singular_spectrum(j)
    np.testing.assert_allclose(rep.singular_values, 1.0, atol=1e-15)
    assert rep.rank_ratio == pytest.approx(1.0)
    assert rep.identifiable


def test_duplicated_column():
    col = np.random.default_rng(0).normal(size=20)
    rep = singular_spectrum(np.column_stack([col, col]), ("a", "b"))
    assert rep.singular_values[1] < 1e-7 * rep.singular_values[0]
    assert angle_deg(rep.null_direction, np.array([1.0, -1.0])) < 1e-6
    assert rep.verdicts[1][1] == "unidentifiable combination"
    assert not rep.identifiable


def test_non_finite_jacobian_rejected():
    with pytest.raises(ValueError):
        singular_spectrum(np.array([[1.0, np.nan], [0.0, 1.0]]))


def test_spectrum_invariants():
    rep = singular_spectrum(np.random.default_rng(3).normal(size=(30, 3)))
    assert np.all(rep.singular_values >= 0)
    assert np.all(np.diff(rep.singular_values) <= 0)
    assert np.linalg.norm(rep.null_direction) == pytest.approx(1.0, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_jacobi_matches_reference(seed, n):
    rng = np.random.default_rng(seed)
    b = rng.normal(size=(n + 3, n)) * 10.0 ** rng.uniform(-3, 3, n)
    a = b.T @ b
    evals, evecs = jacobi_eigh(a)
    ref = np.linalg.eigvalsh(a)
    np.testing.assert_allclose(np.sort(evals), ref, rtol=1e-10, atol=1e-12 * ref.max())
    np.testing.assert_allclose(evecs.T @ evecs, np.eye(n), atol=1e-12)
    np.testing.assert_allclose(a @ evecs, evecs * evals, atol=1e-10 * ref.max())


def test_jacobi_rejects_asymmetric():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_gait_spectrum(gait_jacobians):
    j3, j2 = gait_jacobians
    full = singular_spectrum(j3, PARAMETERIZATIONS[FULL])
    reduced = singular_spectrum(j2, PARAMETERIZATIONS[REDUCED])
    assert full.rank_ratio < 1e-6
    assert angle_deg(full.null_direction, SCALE_DIRECTION) < 1.0
    assert reduced.rank_ratio > 1e-3


def test_report_outputs(tmp_path):
    reports = analyze(GaitParams(70.0, 9000.0, 0.7), InitialConditions())
    path = tmp_path / "report.csv"
    write_report_csv(reports, path)
    text = path.read_text().splitlines()
    assert text[0] == "parameterization,quantity,label,value"
    assert any(line.startswith(f"{FULL},rank_ratio") for line in text)
    assert any("unidentifiable combination" in line for line in text)
    summary = format_summary(reports)
    assert "log_m" in summary and FULL in summary and REDUCED in summary


# conditional R^2 ceiling

def test_degenerate_when_stiffness_tracks_mass():
    m = np.random.default_rng(0).uniform(60, 75, 100_000)
    b = r2_bound_from_samples(133.0 * m / m, m)
    assert b.degenerate and b.bound is None


@pytest.mark.parametrize("target", ["m", "k"])
def test_sampling_ranges_give_partial_information(target):
    b = conditional_r2_bound(SamplingRanges(), target, n_mc=200_000, seed=1)
    assert 0.0 < b.bound < 1.0
    assert b.stderr is not None and b.stderr < 0.01


def test_unrelated_target_has_no_ceiling():
    rng = np.random.default_rng(5)
    rho = rng.uniform(100, 170, 200_000)
    b = r2_bound_from_samples(rho, rng.normal(size=200_000))
    assert abs(b.bound) < 3 * b.stderr


def test_deterministic_target_near_one():
    rho = np.random.default_rng(6).uniform(100, 170, 100_000)
    b = r2_bound_from_samples(rho, 2 * rho + 1)
    assert b.bound > 0.999


def test_bound_arguments_validated():
    with pytest.raises(ValueError, match="1e5"):
        conditional_r2_bound(SamplingRanges(), "m", n_mc=1000)
    with pytest.raises(ValueError):
        conditional_r2_bound(SamplingRanges(), "l0")
