"""First and second order calculus of maps between metric charts.

For a map u with components u^a between charts with metrics g (source,
indices i, j, l) and h (target, indices a, b, c), the generalized Hessian
has coordinate components

    Hess(u)^a_ij = d_i d_j u^a - sGamma^l_ij d_l u^a
                   + tGamma^a_bc(u) d_i u^b d_j u^c,

its trace against g^{ij} is the generalized Laplacian (tension field), and
the nonlinear term T^a_ij = tGamma^a_bc(u) d_i u^b d_j u^c is kept
separately.  Pointwise norms use the full tensor contractions

    |du|^2      = g^{ij} h_ab(u) d_i u^a d_j u^b,
    |Hess(u)|^2 = Hess^a_ij Hess^b_lk g^{ik} g^{jl} h_ab(u).

For isometric immersions these are the second fundamental form and mean
curvature data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RegularGridInterpolator

from . import fd
from .errors import NotImmersion, TargetEscape
from .geodesics import metric_ball, segment_length
from .geometry import ChristoffelField, MetricChart
from .norms import DistanceEvaluator

RANK_THRESHOLD = 1e-8
TRACE_IDENTITY_TOL = 1e-10


class MapModel:
    """Map components between a source and a target chart.

    ``components``: one vectorized scalar callable per target coordinate.
    ``lipschitz_bound`` may be ``inf`` (merely continuous).
    """

    def __init__(self, source_chart: MetricChart, target_chart: MetricChart,
                 components, lipschitz_bound: float = np.inf, name="map"):
        self.source_chart = source_chart
        self.target_chart = target_chart
        self.components = list(components)
        if len(self.components) != target_chart.dimension:
            raise ValueError("need one component per target dimension")
        if lipschitz_bound < 0:
            raise ValueError("lipschitz bound must be nonnegative")
        self.lipschitz_bound = float(lipschitz_bound)
        self.name = name
        self._cache: dict = {}

    @property
    def source_dimension(self) -> int:
        return self.source_chart.dimension

    @property
    def target_dimension(self) -> int:
        return self.target_chart.dimension

    def values(self, points) -> np.ndarray:
        """Map values ``(..., n)`` at arbitrary source points."""
        points = np.asarray(points, dtype=float)
        return np.stack([c(points) for c in self.components], axis=-1)

    def values_on_grid(self) -> np.ndarray:
        if "values" not in self._cache:
            vals = self.values(self.source_chart.box.points())
            inside = self.target_chart.box.contains(vals)
            if not np.all(inside):
                bad = int(np.flatnonzero(~inside)[0])
                raise TargetEscape(self.source_chart.box.points()[bad], vals[bad])
            self._cache["values"] = vals
        return self._cache["values"]

    def validate(self, quotient_pairs: int = 256, tol: float = 0.05,
                 seed: int = 20859) -> "MapModel":
        """Target containment plus sampled Lipschitz difference quotients."""
        self.values_on_grid()
        L = self.lipschitz_bound
        if np.isfinite(L):
            pts = self.source_chart.box.points()
            rng = np.random.default_rng(seed)
            i = rng.integers(0, pts.shape[0], quotient_pairs)
            j = rng.integers(0, pts.shape[0], quotient_pairs)
            keep = i != j
            i, j = i[keep], j[keep]
            num = segment_length(self.target_chart, self.values(pts[i]),
                                 self.values(pts[j]))
            den = segment_length(self.source_chart, pts[i], pts[j])
            quotient = np.max(num / np.maximum(den, 1e-300))
            if quotient > L * (1.0 + tol):
                raise ValueError(
                    f"map {self.name}: sampled difference quotient {quotient:.4g} "
                    f"exceeds declared Lipschitz bound {L:.4g}")
        return self


def _component_grids(map_model: MapModel) -> np.ndarray:
    """Component samples in grid shape, ``(n, *grid)``."""
    vals = map_model.values_on_grid()
    shape = map_model.source_chart.box.shape
    return np.stack([vals[:, a].reshape(shape)
                     for a in range(map_model.target_dimension)])


def _map_first_derivatives(map_model: MapModel) -> np.ndarray:
    """d_i u^a, shape ``(*grid, n, m)``."""
    chart = map_model.source_chart
    box = chart.box
    m, n = chart.dimension, map_model.target_dimension
    out = np.empty(box.shape + (n, m))
    if chart.derivative_mode == "analytic":
        pts = box.points()
        for a, comp in enumerate(map_model.components):
            for i in range(m):
                out[..., a, i] = comp.partial(i)(pts).reshape(box.shape)
    else:
        grids = _component_grids(map_model)
        for a in range(n):
            for i in range(m):
                out[..., a, i] = fd.diff1(grids[a], axis=i, h=box.steps[i])
    return out


def _map_second_derivatives(map_model: MapModel) -> np.ndarray:
    """d_i d_j u^a, shape ``(*grid, n, m, m)``."""
    chart = map_model.source_chart
    box = chart.box
    m, n = chart.dimension, map_model.target_dimension
    out = np.empty(box.shape + (n, m, m))
    if chart.derivative_mode == "analytic":
        pts = box.points()
        for a, comp in enumerate(map_model.components):
            for i in range(m):
                di = comp.partial(i)
                for j in range(i, m):
                    val = di.partial(j)(pts).reshape(box.shape)
                    out[..., a, i, j] = val
                    out[..., a, j, i] = val
    else:
        grids = _component_grids(map_model)
        for a in range(n):
            hess = fd.grid_hessian(grids[a], box.steps)
            out[..., a, :, :] = np.moveaxis(hess, (0, 1), (-2, -1))
    return out


def target_metric_at(map_model: MapModel, values: np.ndarray) -> np.ndarray:
    """h_ab evaluated along the image, shape ``(..., n, n)``."""
    inside = map_model.target_chart.box.contains(values)
    if not np.all(inside):
        bad = np.argwhere(~inside)
        raise TargetEscape(bad[0], values[tuple(bad[0])] if values.ndim > 1 else values)
    return map_model.target_chart.metric(values)


def target_christoffel_at(map_model: MapModel, values: np.ndarray,
                          target_gamma: ChristoffelField | None = None) -> np.ndarray:
    """tGamma^a_bc along the image, shape ``(..., n, n, n)``.

    Analytic charts evaluate exactly; otherwise the grid field is
    interpolated multilinearly (interpolation order recorded in reports).
    """
    target = map_model.target_chart
    if target.derivative_mode == "analytic" and target_gamma is None or \
       (target_gamma is not None and target_gamma.chart.derivative_mode == "analytic"):
        return target.christoffel_at(values)
    gamma = target_gamma or target.grid_christoffel()
    n = target.dimension
    flatv = values.reshape(-1, n)
    interp = RegularGridInterpolator(target.box.axes,
                                     gamma.values, bounds_error=False,
                                     fill_value=None)
    out = interp(flatv)
    return out.reshape(values.shape[:-1] + (n, n, n))


@dataclass
class JetField:
    """Sampled first/second order data of a map, with derived norms.

    ``hess`` already contains the nonlinear term; ``nonlinear_term`` keeps
    that term on its own and ``scalar_hess`` is the source-covariant part
    (d_i d_j u^a - sGamma^l_ij d_l u^a).
    """

    map_model: MapModel
    du: np.ndarray                 # (*grid, n, m)
    raw_second: np.ndarray         # (*grid, n, m, m) coordinate second partials
    scalar_hess: np.ndarray        # (*grid, n, m, m)
    nonlinear_term: np.ndarray     # (*grid, n, m, m)
    hess: np.ndarray               # (*grid, n, m, m)
    laplacian: np.ndarray          # (*grid, n) trace route
    laplacian_split: np.ndarray    # (*grid, n) scalar-Laplacian route
    target_metric: np.ndarray      # (*grid, n, n) h at u(x)

    @property
    def source_chart(self) -> MetricChart:
        return self.map_model.source_chart

    def trace_identity_defect(self) -> float:
        """max |g^{ij} Hess^a_ij - Laplacian^a| over grid and components."""
        ginv = self.source_chart.grid_inverse()
        trace = np.einsum("...ij,...aij->...a", ginv, self.hess)
        return float(np.abs(trace - self.laplacian).max())

    def route_agreement(self) -> float:
        """max difference between the two Laplacian computation routes."""
        return float(np.abs(self.laplacian - self.laplacian_split).max())

    def norm_du(self) -> np.ndarray:
        ginv = self.source_chart.grid_inverse()
        sq = np.einsum("...ij,...ab,...ai,...bj->...",
                       ginv, self.target_metric, self.du, self.du)
        return np.sqrt(np.maximum(sq, 0.0))

    def norm_hess(self) -> np.ndarray:
        ginv = self.source_chart.grid_inverse()
        sq = np.einsum("...aij,...blk,...ik,...jl,...ab->...",
                       self.hess, self.hess, ginv, ginv, self.target_metric)
        return np.sqrt(np.maximum(sq, 0.0))

    def norm_laplacian(self) -> np.ndarray:
        sq = np.einsum("...ab,...a,...b->...",
                       self.target_metric, self.laplacian, self.laplacian)
        return np.sqrt(np.maximum(sq, 0.0))

    def hs_norm_du(self) -> np.ndarray:
        """|du|_HS of the raw coordinate matrix (diagnostic)."""
        return np.sqrt(np.sum(self.du ** 2, axis=(-2, -1)))

    def hs_chain_terms(self) -> np.ndarray:
        """sum_a (|G^-1 Hess(u^a)|_HS + |G^-1 T^a|_HS) per grid point."""
        ginv = self.source_chart.grid_inverse()
        gh = np.einsum("...ik,...akj->...aij", ginv, self.scalar_hess)
        gt = np.einsum("...ik,...akj->...aij", ginv, self.nonlinear_term)
        return (np.sqrt(np.sum(gh ** 2, axis=(-2, -1)))
                + np.sqrt(np.sum(gt ** 2, axis=(-2, -1)))).sum(axis=-1)

    def hessian_chain_bound(self) -> float:
        """Smallest pointwise b with |Hess(u)| <= b * HS chain sum."""
        lhs = self.norm_hess()
        rhs = self.hs_chain_terms()
        active = rhs > 1e-14 * max(1.0, float(lhs.max()))
        if not np.any(active):
            return 0.0
        return float(np.max(lhs[active] / rhs[active]))


def differential(map_model: MapModel):
    """First derivatives d_i u^a on the grid and the |du| samples."""
    du = _map_first_derivatives(map_model)
    values = map_model.values_on_grid().reshape(
        map_model.source_chart.box.shape + (map_model.target_dimension,))
    h = target_metric_at(map_model, values)
    ginv = map_model.source_chart.grid_inverse()
    sq = np.einsum("...ij,...ab,...ai,...bj->...", ginv, h, du, du)
    return du, np.sqrt(np.maximum(sq, 0.0))


def generalized_hessian(map_model: MapModel,
                        source_gamma: ChristoffelField | None = None,
                        target_gamma: ChristoffelField | None = None) -> JetField:
    """Full second-order jet of a map; see the module formula."""
    source = map_model.source_chart
    box = source.box
    values = map_model.values_on_grid().reshape(box.shape + (map_model.target_dimension,))
    du = _map_first_derivatives(map_model)
    ddu = _map_second_derivatives(map_model)
    sgam = (source_gamma or source.grid_christoffel()).values
    tgam_at_u = target_christoffel_at(map_model, values, target_gamma)
    h_at_u = target_metric_at(map_model, values)

    scalar_hess = ddu - np.einsum("...lij,...al->...aij", sgam, du)
    nonlinear = np.einsum("...abc,...bi,...cj->...aij", tgam_at_u, du, du)
    hess = scalar_hess + nonlinear

    ginv = source.grid_inverse()
    laplacian = np.einsum("...ij,...aij->...a", ginv, hess)
    # split route: scalar Laplace-Beltrami of the components plus the
    # nonlinear trace, matching the trace of the assembled Hessian
    scalar_lap = (np.einsum("...ij,...aij->...a", ginv, ddu)
                  - np.einsum("...ij,...lij,...al->...a", ginv, sgam, du))
    nonlinear_trace = np.einsum("...abc,...ij,...bi,...cj->...a",
                                tgam_at_u, ginv, du, du)
    laplacian_split = scalar_lap + nonlinear_trace

    return JetField(map_model=map_model, du=du, raw_second=ddu,
                    scalar_hess=scalar_hess, nonlinear_term=nonlinear,
                    hess=hess, laplacian=laplacian,
                    laplacian_split=laplacian_split, target_metric=h_at_u)


def generalized_laplacian(jet: JetField, source_chart: MetricChart | None = None,
                          tol: float = TRACE_IDENTITY_TOL) -> np.ndarray:
    """Tension field (Δu)^a; asserts the two routes agree to ``tol``."""
    chart = source_chart or jet.source_chart
    ginv = chart.grid_inverse()
    trace = np.einsum("...ij,...aij->...a", ginv, jet.hess)
    scale = max(1.0, float(np.abs(trace).max()))
    gap = float(np.abs(trace - jet.laplacian_split).max())
    if gap > tol * scale:
        raise AssertionError(
            f"laplacian routes disagree: {gap:.3e} (scale {scale:.3e})")
    return trace


def pointwise_norms(jet: JetField, source_chart=None, target_chart=None) -> dict:
    """All pointwise norms and Hilbert-Schmidt diagnostics of a jet."""
    return {
        "du": jet.norm_du(),
        "hess": jet.norm_hess(),
        "laplacian": jet.norm_laplacian(),
        "du_hs": jet.hs_norm_du(),
        "hs_chain": jet.hs_chain_terms(),
        "chain_bound": jet.hessian_chain_bound(),
    }


@dataclass
class ImmersionData:
    """Immersion specialization of a jet.

    ``second_fundamental_form`` aliases the generalized Hessian and
    ``mean_curvature`` its trace; defects quantify how isometric and how
    normal the data is.
    """

    jet: JetField
    pullback_metric: np.ndarray       # (*grid, m, m)
    isometry_defect: float
    normality: np.ndarray             # (*grid, m, m, m): h(Hess_ij, d_k u)
    normality_defect: float

    @property
    def second_fundamental_form(self) -> np.ndarray:
        return self.jet.hess

    @property
    def mean_curvature(self) -> np.ndarray:
        return self.jet.laplacian

    def norm_ii(self) -> np.ndarray:
        return self.jet.norm_hess()

    def norm_h(self) -> np.ndarray:
        return self.jet.norm_laplacian()


def immersion_check(map_model: MapModel, jet: JetField | None = None) -> ImmersionData:
    """Pullback metric, isometry defect and Gauss-formula normality.

    Raises NotImmersion when the differential drops rank (smallest singular
    value below the FD noise floor) at some grid point.
    """
    jet = jet or generalized_hessian(map_model)
    du = jet.du                      # (*grid, a, i)
    sigma = np.linalg.svd(du, compute_uv=False)
    smin = sigma[..., -1]
    if float(smin.min()) < RANK_THRESHOLD:
        flat = int(np.argmin(smin.reshape(-1)))
        pt = map_model.source_chart.box.points()[flat]
        raise NotImmersion(pt, float(smin.reshape(-1)[flat]))
    h = jet.target_metric
    pullback = np.einsum("...ab,...ai,...bj->...ij", h, du, du)
    g = map_model.source_chart.grid_metric()
    isometry_defect = float(np.abs(pullback - g).max())
    normality = np.einsum("...ab,...aij,...bk->...ijk", h, jet.hess, du)
    return ImmersionData(jet=jet, pullback_metric=pullback,
                         isometry_defect=isometry_defect,
                         normality=normality,
                         normality_defect=float(np.abs(normality).max()))


def uniform_continuity_profile(map_model: MapModel, r: float,
                               centers=None, max_centers: int = 16) -> float:
    """Smallest sampled R with u(B_r(center)) inside B_R(u(center)).

    Centers default to a coarse sub-lattice of the source grid.  For an
    L-Lipschitz map the result is <= L * r up to grid tolerance.
    """
    if r <= 0:
        raise ValueError("radius r must be positive")
    source = map_model.source_chart
    box = source.box
    if centers is None:
        stride = [max(1, s // int(round(max_centers ** (1 / box.dimension))))
                  for s in box.shape]
        mesh = np.meshgrid(*[ax[::st] for ax, st in zip(box.axes, stride)],
                           indexing="ij")
        centers = np.stack([g.reshape(-1) for g in mesh], axis=-1)
    centers = np.asarray(centers, dtype=float)
    values = map_model.values_on_grid()
    R = 0.0
    for c in centers:
        ball = metric_ball(source, c, r)
        image_center = map_model.values(c)
        evaluator = DistanceEvaluator(map_model.target_chart, image_center)
        dist = evaluator(values[ball.indices])
        R = max(R, float(dist.max()))
    return R
