import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from czmap.engine import (HarmonicRadii, build_cover, compute_r_hat,
                          omega_decomposition, verify_ball_estimate,
                          verify_euclidean_corollaries, verify_global_estimate)
from czmap.errors import (CertificateRequired, DegenerateRadius,
                          PreconditionFailed, ResolutionTooCoarse)
from czmap.expressions import Expression
from czmap.fixtures import (flat_chart, flat_to_sphere_map, graph_immersion,
                            identity_map, sphere_immersion)
from czmap.geodesics import segment_length
from czmap.harmonic import declared_certificate
from czmap.maps import MapModel

V2 = ("x1", "x2")


class TestRHat:
    def test_finite_inputs(self):
        assert compute_r_hat(2.0, 1.0, 4.0) == pytest.approx(1.0 / 64.0)

    def test_infinite_convention(self):
        assert compute_r_hat(np.inf, np.inf, np.inf) == pytest.approx(1.0 / 16.0)

    def test_mixed(self):
        assert compute_r_hat(0.5, np.inf, 3.0) == pytest.approx(1.0 / 32.0)

    def test_degenerate_combination(self):
        with pytest.raises(DegenerateRadius):
            compute_r_hat(1.0, 2.0, np.inf)

    def test_monotonicity(self):
        base = compute_r_hat(0.4, 0.6, 2.0)
        assert compute_r_hat(0.5, 0.6, 2.0) >= base
        assert compute_r_hat(0.4, 0.7, 2.0) >= base
        assert compute_r_hat(0.4, 0.6, 3.0) <= base

    @given(r1M=st.floats(0.01, 100.0), r1N=st.floats(0.01, 100.0),
           L=st.floats(0.0, 50.0), bump=st.floats(0.0, 10.0))
    @settings(max_examples=150, deadline=None)
    def test_monotonicity_and_bounds_property(self, r1M, r1N, L, bump):
        base = compute_r_hat(r1M, r1N, L)
        assert 0.0 < base <= 1.0 / 16.0
        assert compute_r_hat(r1M + bump, r1N, L) >= base
        assert compute_r_hat(r1M, r1N + bump, L) >= base
        assert compute_r_hat(r1M, r1N, L + bump) <= base


class TestOmega:
    def test_constant_map_all_inside(self):
        source = flat_chart(-1.0, 1.0, 21, dim=2)
        target = flat_chart(-2.0, 2.0, 5, dim=2)
        const = MapModel(source, target,
                         [Expression("0.3", V2), Expression("0", V2)], 0.0)
        om = omega_decomposition(const, [0.3, 0.0], 2.0)
        assert om.mask.all()

    def test_infinite_radius_whole_source(self):
        ident = identity_map()
        om = omega_decomposition(ident, [0.0, 0.0], np.inf)
        assert om.mask.all()

    def test_identity_map_preimage_ball(self):
        # grid chosen so no point sits exactly on the threshold circle
        source = flat_chart(-2.0, 2.0, 40, dim=2)
        target = flat_chart(-2.5, 2.5, 7, dim=2)
        ident = MapModel(source, target,
                         [Expression("x1", V2), Expression("x2", V2)], 1.0)
        om = omega_decomposition(ident, [0.0, 0.0], 4.0)
        expected = (np.linalg.norm(source.box.points(), axis=1) < 1.0)
        assert np.array_equal(om.mask.reshape(-1), expected)


class TestCover:
    def test_interval_cover_and_multiplicity(self):
        chart = flat_chart(0.0, 1.0, 65, dim=1, names=("x",))
        cover = build_cover(chart, 0.25)
        checks = cover.verify()
        assert checks["cover_holds"]
        # brute-force oracle: recount both sums from scratch
        pts = chart.box.points()
        count8 = np.zeros(pts.shape[0], dtype=int)
        count1 = np.zeros(pts.shape[0], dtype=int)
        for c in cover.centers:
            row = segment_length(chart, c[None, :], pts)
            count8 += row <= 0.25 / 8.0
            count1 += row <= 0.25
        assert np.array_equal(count8, cover.count_eighth)
        assert np.array_equal(count1, cover.count_full)
        assert count8.min() >= 1
        assert count1.max() == cover.multiplicity

    def test_single_center_degenerate_case(self):
        chart = flat_chart(0.0, 0.05, 3, dim=1, names=("x",))
        cover = build_cover(chart, 0.5)
        assert cover.size == 1
        assert cover.multiplicity == 1

    def test_square_cover_brute_force(self):
        chart = flat_chart(0.0, 1.0, 17, dim=2)
        cover = build_cover(chart, 0.5)
        checks = cover.verify()
        assert checks["cover_holds"]
        pts = chart.box.points()
        counts = np.zeros(pts.shape[0], dtype=int)
        for c in cover.centers:
            counts += segment_length(chart, c[None, :], pts) <= 0.5
        assert counts.max() == cover.multiplicity

    def test_too_coarse_rejected(self):
        chart = flat_chart(0.0, 1.0, 5, dim=2)
        with pytest.raises(ResolutionTooCoarse):
            build_cover(chart, 0.1)


class TestBallEstimate:
    def setup_method(self):
        self.ident = identity_map(extent=1.0, resolution=33)
        self.certs = dict(
            source_certificate=declared_certificate(np.inf),
            target_certificate=declared_certificate(np.inf))

    def test_affine_has_zero_ratio(self):
        inst = verify_ball_estimate(self.ident, [0.0, 0.0], [0.0, 0.0],
                                    0.3, 1.0, 2.0, **self.certs)
        assert inst.terms["lhs_hess"] == 0.0
        assert inst.ratio == 0.0
        assert inst.terms["t_du"] > 0.0

    def test_certificates_required(self):
        with pytest.raises(CertificateRequired):
            verify_ball_estimate(self.ident, [0, 0], [0, 0], 0.3, 1.0, 2.0)

    def test_radius_precondition(self):
        with pytest.raises(PreconditionFailed):
            verify_ball_estimate(
                self.ident, [0, 0], [0, 0], 0.3, 1.0, 2.0,
                source_certificate=declared_certificate(0.5),
                target_certificate=declared_certificate(np.inf))

    def test_containment_precondition(self):
        with pytest.raises(PreconditionFailed):
            verify_ball_estimate(self.ident, [0, 0], [0, 0], 0.3, 0.1, 2.0,
                                 **self.certs)

    def test_sphere_patch_ratio_stable(self):
        ratios = []
        for res in (33, 65):
            psi = sphere_immersion((math.pi / 2 - 0.55, math.pi / 2 + 0.55),
                                   (0.0, 1.1), res)
            inst = verify_ball_estimate(
                psi, [math.pi / 2, 0.55], [0.0, 0.0, 0.0], 0.12, 2.5, 2.0,
                source_certificate=declared_certificate(0.3),
                target_certificate=declared_certificate(np.inf))
            assert np.isfinite(inst.ratio) and inst.ratio > 0
            ratios.append(inst.ratio)
        assert abs(ratios[1] - ratios[0]) <= 0.10 * ratios[0]


@pytest.fixture(scope="module")
def split_regime_instance():
    psi = flat_to_sphere_map(resolution=65)
    radii = HarmonicRadii(r1M=np.inf, r1N=0.3)
    return verify_global_estimate(psi, [1.6208, 0.05], 2.0, radii,
                                  name="flat-to-sphere")


class TestGlobalEstimate:
    def test_affine_identity_zero(self, flat_identity):
        radii = HarmonicRadii(np.inf, np.inf)
        inst = verify_global_estimate(flat_identity, [0.0, 0.0], 2.0, radii)
        assert inst.terms["lhs_hess"] == 0.0
        assert inst.ratio == 0.0
        assert all(v for v in inst.checks.values() if isinstance(v, bool))

    def test_graph_immersion_zero(self):
        psi = graph_immersion(extent=0.26, resolution=29)
        radii = HarmonicRadii(np.inf, np.inf)
        inst = verify_global_estimate(psi, [0.0, 0.0, 0.0], 2.0, radii)
        assert inst.ratio == 0.0

    def test_regime_split_present_and_checked(self, split_regime_instance):
        inst = split_regime_instance
        in_omega = [c.in_omega for c in inst.center_reports]
        assert any(in_omega) and not all(in_omega)
        assert all(c.regime_ok for c in inst.center_reports)
        assert all(c.lip_estimate_ok for c in inst.center_reports)
        assert inst.checks["regime_dichotomy"]

    def test_curvature_term_active_for_finite_target_radius(
            self, split_regime_instance):
        assert split_regime_instance.terms["t_du_2p_sq"] > 0.0
        assert np.isfinite(split_regime_instance.ratio)

    def test_summation_and_cover_checks(self, split_regime_instance):
        checks = split_regime_instance.checks
        assert checks["cover_holds"]
        assert checks["summation_lower"]
        assert checks["summation_upper"]

    def test_uniform_continuity_reuse_is_flagged(self, flat_identity):
        radii = HarmonicRadii(10.0, 10.0)
        inst = verify_global_estimate(flat_identity, [0.0, 0.0], 2.0, radii,
                                      uniform_radius=0.2)
        assert inst.extrapolated
        assert inst.ratio == 0.0

    def test_uniform_continuity_needs_small_profile(self, flat_identity):
        radii = HarmonicRadii(10.0, 1.0)
        with pytest.raises(PreconditionFailed):
            verify_global_estimate(flat_identity, [0.0, 0.0], 2.0, radii,
                                   uniform_radius=0.2)


class TestEuclideanCorollaries:
    def test_flat_graph_zero(self):
        psi = graph_immersion(extent=0.5, resolution=21)
        rec = verify_euclidean_corollaries(psi, 2.0, mode="intro")
        assert rec["norm_ii"] == 0.0
        assert rec["ratio"] == 0.0

    def test_sphere_closed_form_norms(self):
        # ||II||_2 = sqrt(2 vol), ||H||_2 = 2 sqrt(vol) with vol ~ 4 pi
        psi = sphere_immersion((0.04, math.pi - 0.04), (0.0, 2 * math.pi), 65)
        rec = verify_euclidean_corollaries(psi, 2.0, mode="intro")
        assert rec["norm_ii"] == pytest.approx(math.sqrt(8 * math.pi), abs=1e-2)
        assert rec["norm_h"] == pytest.approx(2 * math.sqrt(4 * math.pi), abs=1e-2)
        assert rec["norm_dist"] == pytest.approx(math.sqrt(4 * math.pi), abs=1e-2)

    def test_rho_family_ratio_scale_invariant(self):
        for rho in (0.5, 1.0, 2.0):
            psi = sphere_immersion((0.7, math.pi - 0.7), (0.0, 1.4), 33,
                                   rho=rho)
            rec = verify_euclidean_corollaries(psi, 2.0, mode="intro")
            assert rec["norm_ii"] / rec["norm_h"] == pytest.approx(
                1.0 / math.sqrt(2.0), abs=1e-3)

    def test_gradient_norm_closed_form_for_isometries(self):
        psi = sphere_immersion(resolution=33)
        rec = verify_euclidean_corollaries(psi, 2.0, mode="intro")
        assert rec["du_sq_minus_m"] <= 1e-10
        assert rec["norm_du_2p_sq"] == pytest.approx(
            rec["norm_du_2p_sq_closed_form"], rel=1e-12)

    def test_corollary_mode_reports_diameter(self):
        psi = sphere_immersion(resolution=33)
        radii = HarmonicRadii(0.3, np.inf)
        rec = verify_euclidean_corollaries(psi, 2.0, mode="corollaryA",
                                           radii=radii)
        assert rec["diameter_is_lower_bound"]
        assert 0 < rec["diameter"] <= 2.0 + 1e-9
        assert rec["r"] == pytest.approx(0.3)
        assert np.isfinite(rec["ratio"]) and rec["ratio"] > 0

    def test_corollary_mode_requires_radii(self):
        psi = sphere_immersion(resolution=17)
        with pytest.raises(CertificateRequired):
            verify_euclidean_corollaries(psi, 2.0, mode="corollaryA")
