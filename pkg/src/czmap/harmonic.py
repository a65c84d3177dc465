"""Harmonic coordinate charts on metric balls and harmonic-radius estimates.

A candidate chart solves the Laplace-Beltrami Dirichlet problem

    div_g grad_g phi^k = 0   on B_r(x),    phi = geodesic normal coords on
                                           the boundary layer,

one scalar solve per coordinate, after which the two harmonic-radius
conditions are checked on the pushed-forward inverse metric
g~^{ab} = J g^{ij} J^T (J the Jacobian of phi):

* hr1, the ellipticity sandwich  1/2 <= g~ <= 2  as bilinear forms;
* hr2, the weighted bound  sum_beta r^{|beta|} sup |d_beta g~^{ab}|
  + r^{k+alpha} [d_beta g~^{ab}]_alpha <= 1 per component pair (a, b).

The radius estimator bisects on the verdict; certificates under-claim by
construction (ties resolve downward).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.linalg import lgmres, splu

from .errors import NotDiffeomorphic, PreconditionFailed, SolverDiverged
from .geodesics import MetricBall, distance_field, log_map, metric_ball
from .geometry import MetricChart
from .norms import holder_seminorm

DIRECT_SOLVE_LIMIT = 20000
ITERATIVE_TOL = 1e-8
ITERATIVE_MAXITER = 10000
JACOBIAN_DET_FLOOR = 1e-6
DEFAULT_PAIR_SEED = 20859
# the Dirichlet problem is solved on the padded ball B_{(1+pad) r} so that
# every certified sample of B_r sits compactly inside the solve domain,
# away from the staircase-boundary layer where discrete second derivatives
# degrade
SOLVE_PAD = 0.15


@dataclass
class RadiusCertificate:
    """Outcome of the harmonic-radius conditions at one radius."""

    r: float
    alpha: float
    k: int
    hr1_margin: float
    hr2_value: float
    verdict: str                      # holds | fails | exceeds-grid
    laplace_residual: float = np.nan
    source: str = "solver"            # solver | declared

    @property
    def holds(self) -> bool:
        return self.verdict == "holds"

    def as_record(self) -> dict:
        return {"r": self.r, "alpha": self.alpha, "k": self.k,
                "residual": self.laplace_residual,
                "hr1_margin": self.hr1_margin, "hr2_value": self.hr2_value,
                "verdict": self.verdict, "source": self.source}


def declared_certificate(r: float, alpha: float = 0.5, k: int = 1) -> RadiusCertificate:
    """Certificate backed by a scenario declaration instead of a solve."""
    return RadiusCertificate(r=float(r), alpha=alpha, k=k, hr1_margin=np.nan,
                             hr2_value=np.nan, verdict="holds", source="declared")


@dataclass
class HarmonicChartCandidate:
    """Solved harmonic coordinates on one metric ball.

    ``jet_mask`` / ``deriv_mask`` mark the certified samples (grid points
    of the requested ball); ``outer_jet_mask`` extends over the padded
    solve domain and backs the difference stencils at the certified rim.
    """

    chart: MetricChart
    center: np.ndarray
    radius: float
    ball: MetricBall
    fields: np.ndarray                # (m, *grid), nan outside the solve ball
    interior_mask: np.ndarray         # operator rows
    jet_mask: np.ndarray              # certified first-derivative samples
    deriv_mask: np.ndarray            # certified pushed-derivative samples
    outer_jet_mask: np.ndarray        # differentiable region incl. padding
    laplace_residual: float
    jacobian: np.ndarray              # (*grid, a, i) = d_i phi^a
    jacobian_ratio: np.ndarray        # det(J)/sqrt(det g) on jet_mask
    pushed_inverse: np.ndarray        # (*grid, a, b) on outer_jet_mask
    boundary_fallbacks: int = 0

    def image_points(self, mask) -> np.ndarray:
        """phi values over a mask, shape (count, m)."""
        m = self.chart.dimension
        return np.stack([self.fields[a][mask] for a in range(m)], axis=-1)


def _stencil_offsets(m: int):
    return [np.array(o) for o in itertools.product((-1, 0, 1), repeat=m)
            if any(v != 0 for v in o)]


def _erode(mask: np.ndarray, offsets) -> np.ndarray:
    """Points whose whole neighbor stencil stays inside the mask."""
    out = mask.copy()
    for off in offsets:
        shifted = np.zeros_like(mask)
        src = tuple(slice(max(0, o), s + min(0, o)) for o, s in zip(off, mask.shape))
        dst = tuple(slice(max(0, -o), s + min(0, -o)) for o, s in zip(off, mask.shape))
        shifted[dst] = mask[src]
        out &= shifted
    return out


def _masked_diff1(values: np.ndarray, mask: np.ndarray, axis: int, h: float):
    """Central differences where both axis neighbors are masked in."""
    v = np.moveaxis(values, axis, 0)
    mk = np.moveaxis(mask, axis, 0)
    out = np.full_like(v, np.nan)
    ok = np.zeros_like(mk)
    ok[1:-1] = mk[2:] & mk[:-2]
    out[1:-1] = (v[2:] - v[:-2]) / (2.0 * h)
    out = np.where(ok, out, np.nan)
    return np.moveaxis(out, 0, axis), np.moveaxis(ok, 0, axis)


def _laplace_operator(chart: MetricChart, interior: np.ndarray):
    """Sparse Laplace-Beltrami rows over interior points (cols: all points).

    Expanded divergence form g^{ij} d_i d_j + b^l d_l with
    b^l = -g^{ij} Gamma^l_ij, central stencils.
    """
    box = chart.box
    m = box.dimension
    h = box.steps
    n = box.num_points
    pts_idx = np.flatnonzero(interior.reshape(-1))
    pts = box.points()[pts_idx]
    ginv = chart.grid_inverse().reshape(-1, m, m)[pts_idx]
    gam = chart.christoffel_at(pts)
    b = -np.einsum("...ij,...lij->...l", ginv, gam)

    multi = np.array(np.unravel_index(pts_idx, box.shape)).T
    rows, cols, vals = [], [], []
    strides = np.array([int(np.prod(box.shape[k + 1:])) for k in range(m)])
    row_ids = np.arange(pts_idx.size)

    def add(offset, coeff):
        shift = int(np.dot(offset, strides))
        rows.append(row_ids)
        cols.append(pts_idx + shift)
        vals.append(coeff)

    center_coeff = np.zeros(pts_idx.size)
    for i in range(m):
        w = ginv[:, i, i] / h[i] ** 2
        e = np.zeros(m, dtype=int); e[i] = 1
        add(e, w + b[:, i] / (2 * h[i]))
        add(-e, w - b[:, i] / (2 * h[i]))
        center_coeff -= 2 * w
        for j in range(i + 1, m):
            w2 = 2 * ginv[:, i, j] / (4 * h[i] * h[j])  # g^{ij}+g^{ji}
            ej = np.zeros(m, dtype=int); ej[j] = 1
            add(e + ej, w2)
            add(-(e + ej), w2)
            add(e - ej, -w2)
            add(ej - e, -w2)
    add(np.zeros(m, dtype=int), center_coeff)

    L = coo_matrix((np.concatenate(vals),
                    (np.concatenate(rows), np.concatenate(cols))),
                   shape=(pts_idx.size, n)).tocsr()
    return L, pts_idx


def solve_harmonic_chart(chart: MetricChart, x, r: float,
                         pad: float = SOLVE_PAD) -> HarmonicChartCandidate:
    """Solve for centered harmonic coordinates covering B_r(x).

    The Dirichlet problem runs on the padded ball B_{(1+pad) r}(x) with
    geodesic normal coordinates at x as boundary data (log map expressed
    in a g-orthonormal frame); the candidate's certified samples are the
    grid points of B_r(x).  Raises PreconditionFailed when the padded ball
    is truncated by the chart box, SolverDiverged when the iterative
    fallback stalls, NotDiffeomorphic when the solved Jacobian degenerates.
    """
    x = np.asarray(x, dtype=float)
    box = chart.box
    m = box.dimension
    dist = distance_field(chart, x)
    # the pad must clear the stencil erosion even on coarse grids so the
    # certified masks always cover every grid point of B_r
    lam_max = float(np.linalg.eigvalsh(chart.metric(x))[-1])
    step_len = float(box.steps.max()) * np.sqrt(lam_max)
    pad_eff = max(pad, 4.0 * step_len / r)
    outer = metric_ball(chart, x, (1.0 + pad_eff) * r, distances=dist)
    ball = metric_ball(chart, x, r, distances=dist)
    if outer.truncated:
        raise PreconditionFailed(
            f"padded ball of radius {(1.0 + pad_eff) * r:.4g} at {x.tolist()} "
            "leaves the chart box; stencils need interior margin")
    offsets = _stencil_offsets(m)
    interior = _erode(outer.mask, offsets)
    boundary = outer.mask & ~interior
    if interior.sum() < 1 or boundary.sum() < 2 * m:
        raise PreconditionFailed(
            f"ball of radius {r:.4g} has too few grid points "
            f"({int(outer.mask.sum())}) for the Dirichlet solve")

    # geodesic normal coordinates on the boundary layer
    bpts = box.points()[np.flatnonzero(boundary.reshape(-1))]
    v, converged = log_map(chart, x, bpts)
    fallbacks = int((~converged).sum())
    if fallbacks:
        # straight-line direction rescaled to the measured distance
        bdist = outer.distances[boundary]
        straight = bpts - x
        G = chart.metric(x)
        slen = np.sqrt(np.einsum("bi,ij,bj->b", straight, G, straight))
        scale = np.where(slen > 0, bdist / np.maximum(slen, 1e-300), 0.0)
        v = np.where(converged[:, None], v, straight * scale[:, None])
    G = chart.metric(x)
    Lfac = np.linalg.cholesky(G)
    phi_boundary = v @ Lfac  # phi = L^T v

    Lop, int_idx = _laplace_operator(chart, interior)
    bnd_idx = np.flatnonzero(boundary.reshape(-1))
    A = Lop[:, int_idx]
    B = Lop[:, bnd_idx]
    rhs = -(B @ phi_boundary)

    if int_idx.size <= DIRECT_SOLVE_LIMIT:
        lu = splu(A.tocsc())
        sol = np.column_stack([lu.solve(rhs[:, k]) for k in range(m)])
    else:
        sol = np.empty((int_idx.size, m))
        for k in range(m):
            sk, info = lgmres(A, rhs[:, k], rtol=ITERATIVE_TOL,
                              maxiter=ITERATIVE_MAXITER)
            if info != 0:
                raise SolverDiverged([np.linalg.norm(A @ sk - rhs[:, k])])
            sol[:, k] = sk

    fields = np.full((m,) + box.shape, np.nan)
    flat = fields.reshape(m, -1)
    flat[:, int_idx] = sol.T
    flat[:, bnd_idx] = phi_boundary.T

    residual_vec = A @ sol - rhs
    scale = max(1.0, float(np.abs(sol).max()) if sol.size else 1.0)
    residual = float(np.abs(residual_vec).max()) / scale if sol.size else 0.0

    # center exactly: harmonicity is translation invariant
    from scipy.interpolate import RegularGridInterpolator
    for a in range(m):
        interp = RegularGridInterpolator(box.axes, fields[a])
        fields[a] -= float(interp(x)[0])

    # Jacobian and pushed inverse metric over the padded solve domain;
    # certified masks restrict to the requested ball, whose rim stencils
    # then only read padded samples clear of the staircase boundary layer
    outer_jet = outer.mask.copy()
    jac = np.full(box.shape + (m, m), np.nan)
    for a in range(m):
        for i in range(m):
            d, ok = _masked_diff1(fields[a], outer.mask, i, box.steps[i])
            jac[..., a, i] = d
            outer_jet &= ok
    jet_mask = outer_jet & ball.mask
    detj = np.linalg.det(np.where(np.isfinite(jac), jac, 0.0))
    sqrtg = chart.grid_sqrt_det()
    ratio = np.where(jet_mask, detj / sqrtg, np.nan)
    if jet_mask.any():
        min_abs = float(np.nanmin(np.abs(ratio)))
        if min_abs < JACOBIAN_DET_FLOOR:
            raise NotDiffeomorphic(
                f"harmonic candidate at {x.tolist()}, r={r:.4g}: "
                f"min |det J|/sqrt(det g) = {min_abs:.3e}")
    ginv = chart.grid_inverse()
    pushed = np.einsum("...ai,...ij,...bj->...ab", jac, ginv, jac)
    pushed = np.where(outer_jet[..., None, None], pushed, np.nan)

    deriv_mask = _erode(outer_jet, offsets) & ball.mask

    return HarmonicChartCandidate(
        chart=chart, center=x, radius=float(r), ball=ball, fields=fields,
        interior_mask=interior, jet_mask=jet_mask, deriv_mask=deriv_mask,
        outer_jet_mask=outer_jet, laplace_residual=residual, jacobian=jac,
        jacobian_ratio=ratio, pushed_inverse=pushed,
        boundary_fallbacks=fallbacks)


def _pushed_derivatives(candidate: HarmonicChartCandidate):
    """d g~^{ab} / d z^c on the derivative submask, via the chain rule."""
    chart = candidate.chart
    box = chart.box
    m = box.dimension
    pushed = candidate.pushed_inverse
    dx = np.full(box.shape + (m, m, m), np.nan)   # (..., a, b, l) = d_x^l
    ok_all = candidate.deriv_mask.copy()
    for a in range(m):
        for b in range(m):
            for l in range(m):
                d, ok = _masked_diff1(pushed[..., a, b],
                                      candidate.outer_jet_mask,
                                      l, box.steps[l])
                dx[..., a, b, l] = d
                ok_all &= ok
    jac = candidate.jacobian
    with np.errstate(all="ignore"):
        jinv = np.linalg.inv(np.where(np.isfinite(jac), jac,
                                      np.eye(m)))   # dx/dz = J^{-1}
    dz = np.einsum("...abl,...lc->...abc", np.where(np.isfinite(dx), dx, 0.0), jinv)
    dz = np.where(ok_all[..., None, None, None], dz, np.nan)
    return dz, ok_all


def check_hr_conditions(candidate: HarmonicChartCandidate, k: int = 1,
                        alpha: float = 0.5,
                        pair_seed: int = DEFAULT_PAIR_SEED) -> RadiusCertificate:
    """Evaluate the two harmonic-radius conditions on a candidate."""
    if k not in (1, 2):
        raise ValueError("only k in {1, 2} is supported")
    if not (0.0 < alpha <= 1.0):
        raise ValueError("alpha must lie in (0, 1]")
    m = candidate.chart.dimension
    r = candidate.radius
    mask = candidate.jet_mask
    if mask.sum() < 3:
        return RadiusCertificate(r=r, alpha=alpha, k=k, hr1_margin=np.nan,
                                 hr2_value=np.nan, verdict="exceeds-grid",
                                 laplace_residual=candidate.laplace_residual)
    pushed = candidate.pushed_inverse[mask]        # (count, m, m)
    eig = np.linalg.eigvalsh(pushed)
    hr1_margin = float(np.minimum(2.0 - eig[..., -1], eig[..., 0] - 0.5).min())

    dz, dmask = _pushed_derivatives(candidate)
    if dmask.sum() < 3:
        return RadiusCertificate(r=r, alpha=alpha, k=k, hr1_margin=hr1_margin,
                                 hr2_value=np.nan, verdict="exceeds-grid",
                                 laplace_residual=candidate.laplace_residual)
    zpts = candidate.image_points(dmask)
    hr2 = 0.0
    for a in range(m):
        for b in range(a, m):
            total = 0.0
            for c in range(m):
                samples = dz[..., a, b, c][dmask]
                total += r * float(np.abs(samples).max())
                if k == 1:
                    total += r ** (1 + alpha) * holder_seminorm(
                        zpts, samples, alpha, seed=pair_seed)
            if k == 2:
                total += _second_order_terms(candidate, dz, dmask, a, b,
                                             alpha, pair_seed)
            hr2 = max(hr2, total)
    verdict = "holds" if (hr1_margin >= 0.0 and hr2 <= 1.0) else "fails"
    return RadiusCertificate(r=r, alpha=alpha, k=k, hr1_margin=hr1_margin,
                             hr2_value=float(hr2), verdict=verdict,
                             laplace_residual=candidate.laplace_residual)


def _second_order_terms(candidate, dz, dmask, a, b, alpha, pair_seed) -> float:
    """Order-two multi-index contributions for the k=2 condition."""
    box = candidate.chart.box
    m = box.dimension
    r = candidate.radius
    jac = candidate.jacobian
    with np.errstate(all="ignore"):
        jinv = np.linalg.inv(np.where(np.isfinite(jac), jac, np.eye(m)))
    offsets = _stencil_offsets(m)
    dz_valid = np.all(np.isfinite(dz), axis=(-3, -2, -1))
    mask2 = _erode(dz_valid, offsets) & candidate.ball.mask
    if mask2.sum() < 3:
        return np.inf
    zpts = candidate.image_points(mask2)
    total = 0.0
    for c in range(m):
        dxs = []
        ok = mask2.copy()
        for l in range(m):
            d, okl = _masked_diff1(dz[..., a, b, c], dz_valid, l, box.steps[l])
            dxs.append(d)
            ok &= okl
        dx_arr = np.stack(dxs, axis=-1)
        d2 = np.einsum("...l,...ld->...d", np.where(np.isfinite(dx_arr), dx_arr, 0.0), jinv)
        for d_axis in range(c, m):
            samples = d2[..., d_axis][mask2]
            total += r ** 2 * float(np.abs(samples).max())
            total += r ** (2 + alpha) * holder_seminorm(
                candidate.image_points(mask2), samples, alpha, seed=pair_seed)
    return total


@dataclass
class RadiusEstimate:
    """Largest verified radius, possibly only a lower bound sentinel.

    ``undetermined`` marks runs where every tested radius exceeded the
    grid's reach, so nothing could be verified either way.
    """

    value: float
    at_least: bool = False
    undetermined: bool = False
    certificates: list = field(default_factory=list)

    def as_float(self) -> float:
        return self.value

    def __str__(self):
        if self.undetermined:
            return "undetermined (grid too coarse)"
        return f">= {self.value:g}" if self.at_least else f"{self.value:g}"


def estimate_harmonic_radius(chart: MetricChart, x, k: int = 1,
                             alpha: float = 0.5, r_max: float = 1.0,
                             bisection_steps: int = 12) -> RadiusEstimate:
    """Bisection on the harmonic-radius verdict over (0, r_max].

    Returns the sentinel estimate ">= r_max" when the conditions hold at
    r_max itself.  Ties resolve downward so certificates under-claim.
    """
    tested = []

    def verdict_at(r: float) -> RadiusCertificate:
        try:
            cand = solve_harmonic_chart(chart, x, r)
            cert = check_hr_conditions(cand, k=k, alpha=alpha)
        except PreconditionFailed:
            cert = RadiusCertificate(r=r, alpha=alpha, k=k, hr1_margin=np.nan,
                                     hr2_value=np.nan, verdict="exceeds-grid")
        except NotDiffeomorphic:
            cert = RadiusCertificate(r=r, alpha=alpha, k=k, hr1_margin=np.nan,
                                     hr2_value=np.nan, verdict="fails")
        tested.append(cert)
        return cert

    top = verdict_at(r_max)
    if top.holds:
        return RadiusEstimate(value=r_max, at_least=True, certificates=tested)
    lo, hi = 0.0, r_max
    min_gap = float(chart.box.steps.min())
    for _ in range(bisection_steps):
        if hi - lo < min_gap:
            break
        mid = 0.5 * (lo + hi)
        if verdict_at(mid).holds:
            lo = mid
        else:
            hi = mid
    undetermined = not any(c.verdict in ("holds", "fails") for c in tested)
    return RadiusEstimate(value=lo, at_least=False, undetermined=undetermined,
                          certificates=tested)


def derivative_decay_experiment(chart: MetricChart, x, radii) -> list:
    """(r, sup |d g~^{ab}| * r over the inner half-ball, verdict) rows.

    Whenever the certificate holds the reported product stays <= 1, the
    grid realization of the derivative-decay bound behind the flatness
    characterization of infinite-radius points.
    """
    rows = []
    for r in radii:
        cand = solve_harmonic_chart(chart, x, float(r))
        cert = check_hr_conditions(cand)
        dz, dmask = _pushed_derivatives(cand)
        half = dmask & (cand.ball.distances <= 0.5 * r)
        if half.sum() == 0:
            half = dmask
        sup = float(np.nanmax(np.abs(dz[half]))) if half.any() else np.nan
        rows.append({"r": float(r), "sup_dginv": sup, "product": sup * float(r),
                     "verdict": cert.verdict, "hr2_value": cert.hr2_value})
    return rows
