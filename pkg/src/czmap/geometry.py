"""Riemannian metrics on coordinate boxes.

A chart is a box in R^m together with symmetric metric component functions
g_ij.  All pointwise geometric data (inverse metric, volume density,
Christoffel symbols, Ricci samples) derive from the component oracles,
either through symbolic partials ("analytic" mode) or central differences
("fd" mode).

Component callables must be vectorized: they take point arrays of shape
``(..., m)`` and return value arrays of shape ``(...,)``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from . import fd
from .errors import DegenerateMetric

SPD_EIGENVALUE_FLOOR = 1e-12


class RicciBoundWarning(UserWarning):
    """Sampled Ricci eigenvalues dip below the declared lower bound."""


class CoordinateBox:
    """Axis-aligned box with a uniform grid of sample points."""

    def __init__(self, lower, upper, resolution):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if self.lower.ndim != 1 or self.lower.shape != self.upper.shape:
            raise ValueError("lower and upper must be equal-length vectors")
        self.dimension = self.lower.size
        self.resolution = tuple(int(r) for r in np.atleast_1d(resolution))
        if len(self.resolution) != self.dimension:
            raise ValueError("resolution must give one count per axis")
        if any(r < 3 for r in self.resolution):
            raise ValueError("resolution must be >= 3 on every axis")
        if not np.all(self.lower < self.upper):
            raise ValueError("need lower[i] < upper[i] on every axis")
        self.steps = (self.upper - self.lower) / (np.array(self.resolution) - 1.0)
        self.shape = self.resolution
        self.num_points = int(np.prod(self.resolution))
        self._points = None

    @property
    def axes(self):
        return [np.linspace(self.lower[k], self.upper[k], self.resolution[k])
                for k in range(self.dimension)]

    def points(self) -> np.ndarray:
        """All grid points, shape ``(num_points, m)``, C order."""
        if self._points is None:
            mesh = np.meshgrid(*self.axes, indexing="ij")
            self._points = np.stack([g.reshape(-1) for g in mesh], axis=-1)
        return self._points

    def contains(self, points, margin: float = 0.0) -> np.ndarray:
        points = np.asarray(points, dtype=float)
        above = np.all(points >= self.lower + margin - 1e-12, axis=-1)
        below = np.all(points <= self.upper - margin + 1e-12, axis=-1)
        return above & below

    def nearest_index(self, point) -> tuple:
        point = np.asarray(point, dtype=float)
        idx = np.rint((point - self.lower) / self.steps).astype(int)
        idx = np.clip(idx, 0, np.array(self.resolution) - 1)
        return tuple(int(i) for i in idx)

    def ravel_index(self, idx) -> int:
        return int(np.ravel_multi_index(idx, self.resolution))

    def refined(self) -> "CoordinateBox":
        """Box with halved grid step; coarse points are a subset."""
        return CoordinateBox(self.lower, self.upper,
                             [2 * r - 1 for r in self.resolution])

    def __repr__(self):
        return (f"CoordinateBox(lower={self.lower.tolist()}, "
                f"upper={self.upper.tolist()}, resolution={self.resolution})")


def _symmetrize(components, m: int):
    comps = [[None] * m for _ in range(m)]
    for i in range(m):
        for j in range(i, m):
            entry = components[i][j]
            if entry is None:
                entry = components[j][i]
            comps[i][j] = entry
            comps[j][i] = entry  # shared object: g_ij = g_ji exactly
    return comps


class MetricChart:
    """Metric component oracles over a coordinate box.

    derivative_mode "analytic" uses the components' ``partial(axis)``
    method (expressions provide it) or explicit entries in
    ``derivative_oracles[(i, j, k)]``; "fd" uses central differences with
    per-axis step ``fd_step`` (default: the grid step).
    """

    def __init__(self, box: CoordinateBox, components, derivative_mode="analytic",
                 fd_step=None, derivative_oracles=None, name="chart"):
        self.box = box
        m = box.dimension
        self.components = _symmetrize(components, m)
        if derivative_mode not in ("analytic", "fd"):
            raise ValueError(f"unknown derivative_mode {derivative_mode!r}")
        self.derivative_mode = derivative_mode
        self.fd_step = np.asarray(fd_step, dtype=float) if fd_step is not None \
            else box.steps.copy()
        self.derivative_oracles = dict(derivative_oracles or {})
        self.name = name
        self._cache: dict = {}

    @property
    def dimension(self) -> int:
        return self.box.dimension

    # -- pointwise evaluation -------------------------------------------------

    def metric(self, points) -> np.ndarray:
        """Metric matrices ``(..., m, m)`` at arbitrary points."""
        points = np.asarray(points, dtype=float)
        m = self.dimension
        out = np.empty(points.shape[:-1] + (m, m), dtype=float)
        for i in range(m):
            for j in range(i, m):
                val = self.components[i][j](points)
                out[..., i, j] = val
                out[..., j, i] = val
        return out

    def metric_derivative(self, points) -> np.ndarray:
        """Partials of the metric, shape ``(..., m, m, m)``, last index k."""
        points = np.asarray(points, dtype=float)
        m = self.dimension
        out = np.empty(points.shape[:-1] + (m, m, m), dtype=float)
        for i in range(m):
            for j in range(i, m):
                comp = self.components[i][j]
                for k in range(m):
                    oracle = self.derivative_oracles.get((i, j, k)) \
                        or self.derivative_oracles.get((j, i, k))
                    if oracle is not None:
                        val = oracle(points)
                    elif self.derivative_mode == "analytic":
                        if not hasattr(comp, "partial"):
                            raise TypeError(
                                f"component g[{i}][{j}] of {self.name} has no "
                                "analytic partials; use derivative_mode='fd' or "
                                "pass derivative_oracles")
                        val = comp.partial(k)(points)
                    else:
                        val = fd.point_diff1(comp, points, k, float(self.fd_step[k]),
                                             self.box.lower, self.box.upper)
                    out[..., i, j, k] = val
                    out[..., j, i, k] = val
        return out

    def christoffel_at(self, points) -> np.ndarray:
        """Christoffel symbols ``(..., l, i, j)`` at arbitrary points."""
        g = self.metric(points)
        dg = self.metric_derivative(points)        # (..., i, j, k) = d_k g_ij
        ginv = np.linalg.inv(g)
        D = np.moveaxis(dg, -1, -3)                # (..., a, i, j) = d_a g_ij
        t_i_jk = D                                 # d_i g_jk  at slots (i, j, k)
        t_j_ik = np.swapaxes(D, -3, -2)            # d_j g_ik
        t_k_ij = np.moveaxis(D, -3, -1)            # d_k g_ij
        sym = t_i_jk + t_j_ik - t_k_ij
        # Gamma^l_ij = 1/2 g^{lk} (d_i g_jk + d_j g_ik - d_k g_ij)
        return 0.5 * np.einsum("...lk,...ijk->...lij", ginv, sym)

    def metric_at(self, x):
        """Metric data at one point.

        Returns ``(G, Ginv, vol_density, (lam_min, lam_max))`` where the
        eigenvalue pair is the ellipticity sandwich of G.  Raises
        DegenerateMetric when G is not positive definite.
        """
        x = np.asarray(x, dtype=float)
        G = self.metric(x)
        eig = np.linalg.eigvalsh(G)
        if eig[0] <= SPD_EIGENVALUE_FLOOR:
            raise DegenerateMetric(x, eig[0])
        Ginv = np.linalg.inv(G)
        vol = float(np.sqrt(np.linalg.det(G)))
        return G, Ginv, vol, (float(eig[0]), float(eig[-1]))

    # -- grid samples ----------------------------------------------------------

    def _grid(self, key, builder):
        if key not in self._cache:
            self._cache[key] = builder()
        return self._cache[key]

    def grid_metric(self) -> np.ndarray:
        def build():
            g = self.metric(self.box.points()).reshape(self.box.shape + (self.dimension,) * 2)
            eig = np.linalg.eigvalsh(g)
            bad = eig[..., 0] <= SPD_EIGENVALUE_FLOOR
            if np.any(bad):
                flat = np.argmin(eig[..., 0])
                idx = np.unravel_index(flat, self.box.shape)
                pt = [self.box.axes[k][idx[k]] for k in range(self.dimension)]
                raise DegenerateMetric(pt, eig[..., 0].reshape(-1)[flat])
            return g
        return self._grid("metric", build)

    def grid_inverse(self) -> np.ndarray:
        return self._grid("inverse", lambda: np.linalg.inv(self.grid_metric()))

    def grid_sqrt_det(self) -> np.ndarray:
        return self._grid("sqrt_det",
                          lambda: np.sqrt(np.linalg.det(self.grid_metric())))

    def grid_christoffel(self) -> "ChristoffelField":
        def build():
            pts = self.box.points()
            gam = self.christoffel_at(pts).reshape(self.box.shape + (self.dimension,) * 3)
            return ChristoffelField(chart=self, values=gam)
        return self._grid("christoffel", build)

    def ellipticity_range(self):
        """(min, max) metric eigenvalue over the grid."""
        eig = np.linalg.eigvalsh(self.grid_metric())
        return float(eig[..., 0].min()), float(eig[..., -1].max())

    def __repr__(self):
        return f"MetricChart({self.name!r}, box={self.box!r}, mode={self.derivative_mode!r})"


@dataclass
class ChristoffelField:
    """Grid-sampled Christoffel symbols, ``values[..., l, i, j]``."""

    chart: MetricChart
    values: np.ndarray

    @property
    def hs_norms(self) -> np.ndarray:
        """Hilbert-Schmidt norm over (i, j) per upper index l."""
        return np.sqrt(np.sum(self.values ** 2, axis=(-2, -1)))

    def max_hs_norm(self) -> float:
        return float(self.hs_norms.max())


@dataclass
class RicciSamples:
    """Grid-sampled Ricci tensor and its generalized eigenvalue floor."""

    values: np.ndarray            # (*grid, m, m)
    min_eigenvalue: np.ndarray    # (*grid,), eigenvalues of Ric relative to g

    def floor(self) -> float:
        return float(self.min_eigenvalue.min())


def ricci_samples(chart: MetricChart) -> RicciSamples:
    """Ricci tensor on the grid from Christoffel derivatives.

    R_ij = d_l Gamma^l_ij - d_j Gamma^l_il + Gamma^l_lk Gamma^k_ij
           - Gamma^l_jk Gamma^k_il.  The derivative of the Christoffel field
    is taken on the grid (second-order stencils), so Ricci values converge
    at O(h^2) regardless of the chart's derivative mode.  Eigenvalues are
    relative to g (the pairing that enters lower Ricci bounds).
    """
    m = chart.dimension
    gam = chart.grid_christoffel().values        # (*grid, l, i, j)
    steps = chart.box.steps
    dgam = [fd.diff1(gam, axis=a, h=steps[a]) for a in range(m)]
    # dgam[a][..., l, i, j] = d_a Gamma^l_ij
    term1 = sum(dgam[l][..., l, :, :] for l in range(m))
    contracted = np.einsum("...lil->...i", gam)  # Gamma^l_il
    dcon = [fd.diff1(contracted, axis=a, h=steps[a]) for a in range(m)]
    term2 = np.stack([dcon[j] for j in range(m)], axis=-1)  # (..., i, j)
    trace_gam = np.einsum("...llk->...k", gam)   # Gamma^l_lk
    term3 = np.einsum("...k,...kij->...ij", trace_gam, gam)
    term4 = np.einsum("...ljk,...kil->...ij", gam, gam)
    ric = term1 - term2 + term3 - term4
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    g = chart.grid_metric()
    L = np.linalg.cholesky(g)
    Linv = np.linalg.inv(L)
    rel = Linv @ ric @ np.swapaxes(Linv, -1, -2)
    eig = np.linalg.eigvalsh(rel)
    return RicciSamples(values=ric, min_eigenvalue=eig[..., 0])


def christoffel(chart: MetricChart) -> ChristoffelField:
    """Grid-sampled Christoffel symbols of a chart."""
    return chart.grid_christoffel()


def metric_at(chart: MetricChart, x):
    """Pointwise metric data; see :meth:`MetricChart.metric_at`."""
    return chart.metric_at(x)


@dataclass
class ManifoldModel:
    """A chart atlas with a declared Ricci lower bound.

    Charts are independent boxes; estimates run chart-locally.  The Ricci
    bound ``Ric >= -A`` is validated by sampling and reported as a warning
    on violation (grid noise must not block runs).
    """

    dimension: int
    atlas: list
    ricci_lower_bound: float = 0.0
    base_points: list = field(default_factory=list)
    name: str = "manifold"

    def validate(self, ricci_check: bool = True) -> "ManifoldModel":
        if self.ricci_lower_bound < 0:
            raise ValueError("ricci lower-bound parameter A must be >= 0")
        for chart in self.atlas:
            if chart.dimension != self.dimension:
                raise ValueError(f"chart {chart.name} dimension mismatch")
            chart.grid_metric()  # SPD check
            if ricci_check:
                A = self.ricci_lower_bound
                tol = 1e-4 * (1.0 + abs(A))
                floor = ricci_samples(chart).floor()
                if floor < -A - tol:
                    warnings.warn(
                        f"chart {chart.name}: sampled Ricci eigenvalue "
                        f"{floor:.4e} below -A={-A:.4e} (tol {tol:.1e})",
                        RicciBoundWarning, stacklevel=2)
        return self
