from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from growthfrag.errors import DomainError, InvalidSpecError
from growthfrag.problem_model import KernelSpec, ProblemSpec, RateSpec, eval_rate, kernel_mass, kernel_moment


# -- eval_rate examples

def test_linear_rate_value():
    assert eval_rate(RateSpec.linear(1.0), 3.0) == 3.0


def test_power_rate_value():
    assert eval_rate(RateSpec.power(1.0, 2), 2.0) == 4.0


def test_rate_zero_below_support():
    assert eval_rate(RateSpec.linear(1.0, b=1.0), 0.5) == 0.0
    assert eval_rate(RateSpec.linear(1.0, b=1.0), 1.5) == 1.5


def test_affine_and_constant_exact():
    assert eval_rate(RateSpec.affine(1.0, 2.0), 0.25) == 1.5
    assert eval_rate(RateSpec.constant(3.0), 1e9) == 3.0


def test_negative_coefficient_rejected():
    with pytest.raises(InvalidSpecError):
        RateSpec.affine(-1.0, 1.0)
    with pytest.raises(InvalidSpecError):
        RateSpec.constant(-0.1)


def test_nonfinite_point_rejected():
    with pytest.raises(DomainError):
        eval_rate(RateSpec.constant(1.0), float("nan"))


def test_tabulated_rate_interpolates_and_warns(caplog):
    r = RateSpec.tabulated([0.0, 1.0, 2.0], [0.0, 2.0, 2.0])
    assert eval_rate(r, 0.5) == pytest.approx(1.0)
    with caplog.at_level("WARNING"):
        assert eval_rate(r, 5.0) == 2.0
    assert "extrapolated" in caplog.text


# -- kernel_mass examples

def test_uniform_full_mass():
    assert kernel_mass(KernelSpec.uniform(), 2.0, 0.0, 2.0) == 1.0


def test_equal_mitosis_atom_mass():
    assert kernel_mass(KernelSpec.mitosis(0.5), 2.0, 0.9, 1.1) == 1.0


def test_homogeneous_alpha1_half_mass_matches_quadrature():
    k = KernelSpec.homogeneous(1.0)
    ref, _ = integrate.quad(lambda z: k.density(z), 0.0, 0.5)
    assert ref == pytest.approx(0.5, abs=1e-14)
    assert kernel_mass(k, 1.0, 0.0, 0.5) == pytest.approx(ref, abs=1e-14)


def test_kernel_mass_domain_errors():
    with pytest.raises(DomainError):
        kernel_mass(KernelSpec.uniform(), 0.0, 0.0, 1.0)
    with pytest.raises(DomainError):
        kernel_mass(KernelSpec.uniform(), 1.0, 0.5, 0.2)


def test_atom_on_left_endpoint_belongs_to_that_cell():
    k = KernelSpec.mitosis(0.5)
    # atom at x = 1 for y = 2
    assert kernel_mass(k, 2.0, 1.0, 1.5) == 1.0
    assert kernel_mass(k, 2.0, 0.5, 1.0) == 0.0


def test_renewal_atom_at_parent_size_counted_in_closed_last_cell():
    k = KernelSpec.mitosis(0.0)
    assert kernel_mass(k, 2.0, 1.5, 2.0) == 0.5
    assert kernel_mass(k, 2.0, 0.0, 0.1) == 0.5


# -- kernel_moment examples

def test_uniform_second_moment_matches_quadrature():
    ref, _ = integrate.quad(lambda z: z * z, 0.0, 1.0)
    assert kernel_moment(KernelSpec.uniform(), 3.0, 2) == pytest.approx(ref, abs=1e-14)
    assert kernel_moment(KernelSpec.uniform(), 3.0, 2) == pytest.approx(1 / 3, abs=1e-15)


def test_equal_mitosis_second_moment_exact():
    assert kernel_moment(KernelSpec.mitosis(0.5), 1.0, 2) == 0.25


@pytest.mark.parametrize("r,rho", [(0.25, 0.5), (0.1, 0.3), (0.5, 0.9)])
def test_mixture_second_moment_formula(r, rho):
    k = KernelSpec.renewal_mixture(rho, r)
    expected = (1.0 - 2.0 * r * (1.0 - r) * (1.0 - rho)) / 2.0
    assert kernel_moment(k, 1.0, 2) == pytest.approx(expected, abs=1e-12)


def test_homogeneous_moment_matches_quadrature():
    for a in (-0.5, 0.0, 1.0, 3.0):
        k = KernelSpec.homogeneous(a)
        ref, _ = integrate.quad(lambda z: z**3 * k.density(z), 0.0, 1.0, limit=200)
        assert kernel_moment(k, 1.0, 3) == pytest.approx(ref, rel=1e-8)


def test_tabulated_kernel_moment_by_quadrature():
    z = np.linspace(0, 1, 11)
    d = 1.0 + 0.5 * np.cos(2 * np.pi * z)  # symmetric, renormalized internally
    k = KernelSpec("tabulated_density", table_z=tuple(z), table_density=tuple(d), gamma=1.0,
                   shattering_constant_C=2.0)
    assert kernel_moment(k, 1.0, 0) == 1.0
    assert kernel_moment(k, 1.0, 1) == pytest.approx(0.5, abs=1e-12)
    assert float(k.cdf_left(1.0)) == pytest.approx(1.0, abs=1e-14)


def test_tabulated_kernel_needs_shattering_constants():
    with pytest.raises(InvalidSpecError):
        KernelSpec("tabulated_density", table_z=(0.0, 1.0), table_density=(1.0, 1.0))


def test_kernel_validation():
    with pytest.raises(InvalidSpecError):
        KernelSpec.mitosis(0.7)
    with pytest.raises(InvalidSpecError):
        KernelSpec.homogeneous(-1.0)


def test_derived_shattering_parameters():
    assert KernelSpec.mitosis(0.25).shattering_constant_C == 4.0
    assert KernelSpec.mitosis(0.0).gamma == 0.0
    assert KernelSpec.homogeneous(-0.5).gamma == 0.5


def test_problem_defaults_are_classical():
    p = ProblemSpec(RateSpec.constant(1.0), RateSpec.linear(1.0), KernelSpec.uniform())
    assert p.is_classical
    with pytest.raises(InvalidSpecError):
        ProblemSpec(RateSpec.constant(1.0), RateSpec.linear(1.0), KernelSpec.uniform(), n_fragments=1.5)


# -- properties

kernels = st.one_of(
    st.just(KernelSpec.uniform()),
    st.floats(0.0, 0.5).map(KernelSpec.mitosis),
    st.floats(-0.9, 5.0).map(KernelSpec.homogeneous),
    st.tuples(st.floats(0.0, 1.0), st.floats(0.01, 0.5)).map(lambda t: KernelSpec.renewal_mixture(*t)),
)
sizes = st.floats(1e-3, 1e3)


@settings(max_examples=60, deadline=None)
@given(kernels, sizes)
def test_zeroth_and_first_moments(k, y):
    assert kernel_moment(k, y, 0) == pytest.approx(1.0, abs=1e-12)
    assert kernel_moment(k, y, 1) == pytest.approx(0.5, abs=1e-12)
    assert kernel_mass(k, y, 0.0, y) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(kernels, sizes, sizes, st.integers(0, 6))
def test_moments_independent_of_parent_size(k, y1, y2, p):
    assert abs(kernel_moment(k, y1, p) - kernel_moment(k, y2, p)) <= 1e-12


@settings(max_examples=40, deadline=None)
@given(st.floats(-0.9, 5.0), st.lists(st.floats(0.0, 1.0), min_size=1, max_size=20))
def test_density_symmetry(a, zs):
    k = KernelSpec.homogeneous(a)
    z = np.array(zs)
    z = z[(z > 0) & (z < 1) & (1.0 - (1.0 - z) == z)]  # exactly mirrored nodes
    np.testing.assert_allclose(k.density(z), k.density(1.0 - z), rtol=1e-12)


@settings(max_examples=60, deadline=None)
@given(kernels, sizes, st.lists(st.floats(0.0, 1.0), min_size=2, max_size=8))
def test_mass_is_partition_additive(k, y, cuts):
    pts = np.unique(np.concatenate([[0.0, 1.0], np.asarray(cuts)])) * y
    parts = sum(kernel_mass(k, y, a, b) for a, b in zip(pts[:-1], pts[1:]))
    assert parts == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.sampled_from(["power_law", "affine", "constant"]),
       st.floats(0.0, 10.0), st.floats(0.0, 3.0), st.floats(0.0, 1e3))
def test_rates_nonnegative(kind, c, p, x):
    coeffs = {"power_law": (c, p), "affine": (c, p), "constant": (c,)}[kind]
    assert eval_rate(RateSpec(kind, coeffs), x) >= 0.0
