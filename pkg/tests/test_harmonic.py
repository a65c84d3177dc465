import math

import numpy as np
import pytest

from conftest import make_flat, make_sphere
from czmap.errors import PreconditionFailed
from czmap.harmonic import (HarmonicChartCandidate,
                            check_hr_conditions, declared_certificate,
                            derivative_decay_experiment,
                            estimate_harmonic_radius, solve_harmonic_chart)


@pytest.fixture(scope="module")
def flat_candidate():
    chart = make_flat(-2.0, 2.0, 41)
    return solve_harmonic_chart(chart, [0.1, -0.2], 1.0)


@pytest.fixture(scope="module")
def sphere_candidate():
    chart = make_sphere(res=33, theta=(0.9, math.pi - 0.9), phi=(-0.9, 0.9))
    return solve_harmonic_chart(chart, [math.pi / 2, 0.0], 0.35)


class TestSolve:
    def test_flat_coordinates_are_affine(self, flat_candidate):
        cand = flat_candidate
        assert cand.laplace_residual <= 1e-8
        mask = cand.jet_mask
        assert np.abs(cand.pushed_inverse[mask] - np.eye(2)).max() <= 1e-8

    def test_flat_is_centered(self, flat_candidate):
        from scipy.interpolate import RegularGridInterpolator
        cand = flat_candidate
        for a in range(2):
            interp = RegularGridInterpolator(cand.chart.box.axes,
                                             cand.fields[a])
            assert abs(float(interp([0.1, -0.2])[0])) < 1e-12

    def test_constant_metric_rescales_to_identity(self):
        # linear change z = sqrt(3) x is harmonic and pushes 3*delta to delta
        chart = make_flat(-2.0, 2.0, 33, scale=3.0)
        cand = solve_harmonic_chart(chart, [0.0, 0.0], 1.0)
        assert np.abs(cand.pushed_inverse[cand.jet_mask] - np.eye(2)).max() < 1e-10

    def test_curved_residual_small(self, sphere_candidate):
        assert sphere_candidate.laplace_residual <= 1e-6
        assert sphere_candidate.boundary_fallbacks == 0

    def test_curved_jacobian_near_isometric(self, sphere_candidate):
        ratio = sphere_candidate.jacobian_ratio
        vals = ratio[np.isfinite(ratio)]
        assert vals.min() >= 0.9 and vals.max() <= 1.1

    def test_truncated_ball_rejected(self):
        chart = make_flat(-1.0, 1.0, 21)
        with pytest.raises(PreconditionFailed):
            solve_harmonic_chart(chart, [0.8, 0.0], 0.6)


class TestConditions:
    def test_flat_margins(self, flat_candidate):
        cert = check_hr_conditions(flat_candidate, k=1, alpha=0.5)
        assert cert.hr1_margin == pytest.approx(0.5, abs=1e-10)
        assert cert.hr2_value <= 1e-6
        assert cert.verdict == "holds"

    def test_inflated_inverse_fails_sandwich(self, flat_candidate):
        # pushed inverse metric constant 3*delta violates the upper bound
        cand = flat_candidate
        fake = HarmonicChartCandidate(
            chart=cand.chart, center=cand.center, radius=cand.radius,
            ball=cand.ball, fields=cand.fields,
            interior_mask=cand.interior_mask, jet_mask=cand.jet_mask,
            deriv_mask=cand.deriv_mask, outer_jet_mask=cand.outer_jet_mask,
            laplace_residual=cand.laplace_residual, jacobian=cand.jacobian,
            jacobian_ratio=cand.jacobian_ratio,
            pushed_inverse=3.0 * cand.pushed_inverse)
        cert = check_hr_conditions(fake)
        assert cert.verdict == "fails"
        assert cert.hr1_margin == pytest.approx(-1.0, abs=1e-9)

    def test_weighted_bound_stable_under_refinement(self):
        values = []
        for res in (33, 49):
            chart = make_sphere(res=res, theta=(0.9, math.pi - 0.9),
                                phi=(-0.9, 0.9))
            cand = solve_harmonic_chart(chart, [math.pi / 2, 0.0], 0.35)
            values.append(check_hr_conditions(cand).hr2_value)
        assert abs(values[1] - values[0]) <= 0.10 * values[0]

    def test_certificate_record_fields(self, sphere_candidate):
        rec = check_hr_conditions(sphere_candidate).as_record()
        for key in ("r", "residual", "hr1_margin", "hr2_value", "verdict"):
            assert key in rec


class TestRadiusEstimate:
    def test_flat_returns_lower_bound_sentinel(self):
        chart = make_flat(-13.0, 13.0, 41)
        est = estimate_harmonic_radius(chart, [0.0, 0.0], r_max=10.0)
        assert est.at_least
        assert est.value == 10.0
        assert str(est) == ">= 10"

    def test_rescaled_constant_metric_sentinel(self):
        chart = make_flat(-3.0, 3.0, 33, scale=3.0)
        est = estimate_harmonic_radius(chart, [0.0, 0.0], r_max=1.2)
        assert est.at_least

    def test_sphere_estimate_finite_positive(self):
        chart = make_sphere(res=33, theta=(0.9, math.pi - 0.9),
                            phi=(-0.65, 0.65))
        est = estimate_harmonic_radius(chart, [math.pi / 2, 0.0], r_max=0.6,
                                       bisection_steps=5)
        assert not est.at_least
        assert 0.0 < est.value <= 0.6

    def test_verdicts_monotone_over_tested_radii(self):
        chart = make_sphere(res=33, theta=(0.9, math.pi - 0.9),
                            phi=(-0.65, 0.65))
        est = estimate_harmonic_radius(chart, [math.pi / 2, 0.0], r_max=0.6,
                                       bisection_steps=5)
        held = [c.r for c in est.certificates if c.holds]
        failed = [c.r for c in est.certificates if not c.holds]
        if held and failed:
            assert max(held) < min(failed) + 1e-12

    def test_alpha_dependence_of_seminorm(self):
        # the unweighted seminorm grows with alpha whenever sampled pair
        # distances stay below one; the radius-weighted certificate value
        # need not be monotone (the r^{1+alpha} weight can win on small
        # balls), so only the guaranteed ordering is asserted
        from czmap.harmonic import _pushed_derivatives
        from czmap.norms import holder_seminorm
        chart = make_sphere(res=33, theta=(0.9, math.pi - 0.9),
                            phi=(-0.9, 0.9))
        cand = solve_harmonic_chart(chart, [math.pi / 2, 0.0], 0.35)
        dz, dmask = _pushed_derivatives(cand)
        zpts = cand.image_points(dmask)
        pair_diam = np.linalg.norm(zpts[:, None, :] - zpts[None, :, :],
                                   axis=-1).max()
        assert pair_diam < 1.0
        samples = dz[..., 1, 1, 0][dmask]
        low = holder_seminorm(zpts, samples, 0.3)
        high = holder_seminorm(zpts, samples, 0.7)
        assert high >= low - 1e-12


class TestDerivativeDecay:
    def test_flat_products_vanish(self):
        chart = make_flat(-2.0, 2.0, 33)
        rows = derivative_decay_experiment(chart, [0.0, 0.0], [0.4, 0.8])
        for row in rows:
            assert row["product"] <= 1e-10
            assert row["verdict"] == "holds"

    def test_sphere_products_below_one_where_held(self):
        chart = make_sphere(res=33, theta=(0.9, math.pi - 0.9),
                            phi=(-0.9, 0.9))
        rows = derivative_decay_experiment(chart, [math.pi / 2, 0.0],
                                           [0.15, 0.25, 0.35])
        for row in rows:
            if row["verdict"] == "holds":
                assert row["product"] <= 1.0


def test_declared_certificate_is_trusted():
    cert = declared_certificate(0.5)
    assert cert.holds and cert.source == "declared"
