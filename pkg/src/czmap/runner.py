"""Scenario execution: builds models, drives the engine, emits reports."""

from __future__ import annotations

import time

import numpy as np

from .engine import (EllipticOperatorSpec, HarmonicRadii, build_cover,
                     compute_r_hat, verify_ball_estimate,
                     verify_euclidean_corollaries, verify_global_estimate,
                     verify_interior_estimate, verify_scaling_identities)
from .errors import CzmapError
from .expressions import Expression
from .harmonic import declared_certificate, estimate_harmonic_radius
from .maps import generalized_hessian
from .report import InequalityReport
from .scenario import Scenario
from .search import MapFamily, extremal_ratio_search

DRIFT_TOLERANCE = 0.10


def _resolve_r1(mdef, chart) -> tuple:
    """(radius value, provenance) for one manifold definition."""
    if mdef.r1_half == "estimate":
        if not mdef.base_points:
            raise CzmapError(f"manifold {mdef.name}: r1_half=estimate needs "
                             "a base_point")
        x = np.asarray(mdef.base_points[0], dtype=float)
        margin = float(min(np.min(x - chart.box.lower),
                           np.min(chart.box.upper - x)))
        lam_min, _ = chart.ellipticity_range()
        # leave reach for the padded solve domain of the Dirichlet solver
        r_max = 0.7 * margin * np.sqrt(lam_min)
        est = estimate_harmonic_radius(chart, x, r_max=r_max)
        if est.undetermined or est.value <= 0:
            raise CzmapError(
                f"manifold {mdef.name}: harmonic-radius estimate at "
                f"{x.tolist()} is {est}; refine the grid or declare r1_half")
        return float(est.value), "estimated"
    return float(mdef.r1_half), "declared"


def resolve_radii(scenario: Scenario, source_chart, target_chart) -> HarmonicRadii:
    mdef = scenario.primary_map()
    r1M, src_kind = _resolve_r1(scenario.manifolds[mdef.source], source_chart)
    r1N, tgt_kind = _resolve_r1(scenario.manifolds[mdef.target], target_chart)
    kind = "estimated" if "estimated" in (src_kind, tgt_kind) else "declared"
    return HarmonicRadii(r1M=r1M, r1N=r1N, source=kind)


def _basepoint(scenario: Scenario, map_model) -> np.ndarray:
    if scenario.run.basepoint is not None:
        return np.asarray(scenario.run.basepoint, dtype=float)
    sdef = scenario.manifolds[scenario.primary_map().source]
    if sdef.base_points:
        return map_model.values(np.asarray(sdef.base_points[0], dtype=float))
    center = 0.5 * (map_model.source_chart.box.lower
                    + map_model.source_chart.box.upper)
    return map_model.values(center)


def _resolutions(scenario: Scenario):
    ladder = scenario.run.resolution_ladder
    if ladder:
        sdef = scenario.manifolds[scenario.primary_map().source]
        return [[r] * sdef.dimension for r in ladder]
    return [None]


def run_scenario(scenario: Scenario) -> list:
    """Execute a scenario per its run config; one report per (p, level)."""
    mode = scenario.run.mode
    if mode == "lemma":
        return run_lemma_battery(scenario)
    if mode == "search":
        return run_search(scenario)
    reports = []
    for resolution in _resolutions(scenario):
        reports.extend(_run_at_resolution(scenario, resolution))
    _attach_drift_checks(reports, scenario.run.drift_tolerance)
    return reports


def run_and_report(scenario: Scenario, out_prefix: str | None = None):
    """Run a scenario and write its report files.

    Returns ``(reports, jsonl_path, tsv_path)``; paths are None when no
    output prefix is configured.
    """
    from .report import write_reports
    reports = run_scenario(scenario)
    prefix = out_prefix or scenario.run.out
    if prefix:
        jsonl, tsv = write_reports(reports, prefix)
        return reports, jsonl, tsv
    return reports, None, None


def _run_at_resolution(scenario: Scenario, resolution) -> list:
    mode = scenario.run.mode
    reports = []
    t0 = time.perf_counter()
    try:
        sdef, tdef, map_model = scenario.build_models(resolution)
        map_model.validate()
        radii = resolve_radii(scenario, map_model.source_chart,
                              map_model.target_chart)
        jet = generalized_hessian(map_model)
    except CzmapError as exc:
        return [InequalityReport(
            scenario=scenario.name, mode=mode, p=scenario.run.p_list[0],
            resolution=_res_label(scenario, resolution), terms={}, ratio=np.nan,
            error=f"{type(exc).__name__}: {exc}",
            timing_seconds=time.perf_counter() - t0)]
    res_label = "x".join(str(r) for r in map_model.source_chart.box.resolution)

    shared_cover = None
    for p in scenario.run.p_list:
        t1 = time.perf_counter()
        try:
            if mode == "global":
                o = _basepoint(scenario, map_model)
                if shared_cover is None and scenario.run.uc_radius is None:
                    shared_cover = build_cover(
                        map_model.source_chart,
                        compute_r_hat(radii.r1M, radii.r1N,
                                      map_model.lipschitz_bound))
                inst = verify_global_estimate(
                    map_model, o, p, radii, jet=jet, cover=shared_cover,
                    uniform_radius=scenario.run.uc_radius,
                    omega_slack=scenario.run.omega_slack,
                    name=scenario.name)
                rep = InequalityReport(
                    scenario=scenario.name, mode=mode, p=p,
                    resolution=res_label, terms=inst.terms, ratio=inst.ratio,
                    checks=inst.checks,
                    certificates=[radii.source_certificate().as_record(),
                                  radii.target_certificate().as_record()],
                    cover_stats={"centers": inst.cover.size,
                                 "multiplicity": inst.cover.multiplicity,
                                 "separation": inst.cover.separation},
                    warnings=inst.warnings, caveats=list(inst.caveats),
                    extra={"extrapolated": inst.extrapolated})
            elif mode in ("intro", "corollaryA"):
                basepoint = (np.asarray(scenario.run.basepoint, dtype=float)
                             if scenario.run.basepoint is not None else None)
                rec = verify_euclidean_corollaries(
                    map_model, p, mode=mode, basepoint=basepoint,
                    radii=radii if mode == "corollaryA" else None)
                checks = {"ratio_finite": bool(np.isfinite(rec["ratio"]))}
                rep = InequalityReport(
                    scenario=scenario.name, mode=mode, p=p,
                    resolution=res_label,
                    terms={k: v for k, v in rec.items()
                           if isinstance(v, (int, float))},
                    ratio=rec["ratio"], checks=checks,
                    caveats=rec.get("caveats", []))
            elif mode == "ball":
                rep = _run_ball(scenario, map_model, radii, jet, p, res_label)
            else:
                raise CzmapError(f"mode {mode} not runnable here")
        except CzmapError as exc:
            rep = InequalityReport(
                scenario=scenario.name, mode=mode, p=p, resolution=res_label,
                terms={}, ratio=np.nan,
                error=f"{type(exc).__name__}: {exc}")
        rep.timing_seconds = time.perf_counter() - t1
        reports.append(rep)
    return reports


def _run_ball(scenario, map_model, radii, jet, p, res_label) -> InequalityReport:
    ball = scenario.run.ball
    if "center" not in ball or "r" not in ball or "R" not in ball:
        raise CzmapError("ball mode needs ball_center, ball_r, ball_R")
    x = np.asarray(ball["center"], dtype=float)
    tc = ball.get("target_center", "image")
    y = map_model.values(x) if isinstance(tc, str) else np.asarray(tc, dtype=float)
    inst = verify_ball_estimate(
        map_model, x, y, float(ball["r"][0]), float(ball["R"][0]), p,
        source_certificate=declared_certificate(radii.r1M),
        target_certificate=declared_certificate(radii.r1N), jet=jet)
    return InequalityReport(
        scenario=scenario.name, mode="ball", p=p, resolution=res_label,
        terms=inst.terms, ratio=inst.ratio,
        checks={"ratio_finite": bool(np.isfinite(inst.ratio))},
        warnings=inst.warnings, caveats=list(inst.caveats))


def _res_label(scenario, resolution) -> str:
    if resolution is None:
        sdef = scenario.manifolds[scenario.primary_map().source]
        resolution = sdef.resolution
    return "x".join(str(r) for r in resolution)


def _attach_drift_checks(reports, tolerance: float = DRIFT_TOLERANCE):
    """Mark ratio drift between consecutive grid levels at equal p."""
    by_p = {}
    for rep in reports:
        if rep.error is None and np.isfinite(rep.ratio):
            by_p.setdefault(rep.p, []).append(rep)
    for p, chain in by_p.items():
        for prev, cur in zip(chain, chain[1:]):
            if prev.ratio == 0.0 and cur.ratio == 0.0:
                drift = 0.0
            elif prev.ratio == 0.0:
                drift = np.inf
            else:
                drift = abs(cur.ratio - prev.ratio) / abs(prev.ratio)
            cur.checks["ratio_drift_ok"] = bool(drift <= tolerance)
            cur.terms["ratio_drift"] = float(drift)


# ---------------------------------------------------------------------------
# lemma battery
# ---------------------------------------------------------------------------

LEMMA_SCALES = (0.25, 0.5, 1.0)
_V2 = ("x1", "x2")


def _lemma_operators():
    const = [[Expression("1", _V2), Expression("0", _V2)],
             [Expression("0", _V2), Expression("1", _V2)]]
    wavy = [[Expression("1 + 0.1*sin(x1)", _V2), Expression("0", _V2)],
            [Expression("0", _V2), Expression("1", _V2)]]
    return (("laplacian", const, 2.0), ("wavy", wavy, 2.0))


def _lemma_fields():
    return (Expression("x1^2", _V2), Expression("x1*x2", _V2),
            Expression("sin(2*x1)*x2", _V2))


def run_lemma_battery(scenario: Scenario) -> list:
    """Scaling identities and interior-estimate ratios on the operator
    battery, for every q in the run's p list and every scale."""
    reports = []
    for q in scenario.run.p_list:
        for s in LEMMA_SCALES:
            t0 = time.perf_counter()
            worst = {"dev_operator": 0.0, "dev_hessian": 0.0,
                     "dev_gradient": 0.0, "dev_norm": 0.0}
            passed = True
            ratios = []
            for op_name, coeffs, Lam in _lemma_operators():
                spec = EllipticOperatorSpec(s=s, q=q, coefficients=coeffs,
                                            Lambda=Lam)
                for u in _lemma_fields():
                    rep = verify_scaling_identities(spec, u)
                    passed &= rep["passed"]
                    for key in worst:
                        worst[key] = max(worst[key], rep[key])
                    est = verify_interior_estimate(spec, u)
                    ratios.append(est["ratio"])
            terms = dict(worst)
            terms["c_emp"] = max(ratios)
            reports.append(InequalityReport(
                scenario=scenario.name, mode="lemma", p=q,
                resolution=f"s={s:g}", terms=terms,
                ratio=max(ratios),
                checks={"identities_pass": bool(passed),
                        "ratio_finite": bool(np.isfinite(max(ratios)))},
                timing_seconds=time.perf_counter() - t0))
    return reports


# ---------------------------------------------------------------------------
# extremal search
# ---------------------------------------------------------------------------

def run_search(scenario: Scenario) -> list:
    if scenario.search is None:
        raise CzmapError("search mode needs a [search] section")
    cfg = scenario.search
    p = scenario.run.p_list[0]
    t0 = time.perf_counter()

    def evaluate(params):
        values = dict(zip(cfg.parameters, params))
        sdef, tdef, map_model = scenario.build_models(parameter_values=values)
        map_model.validate()
        radii = resolve_radii(scenario, map_model.source_chart,
                              map_model.target_chart)
        o = _basepoint(scenario, map_model)
        inst = verify_global_estimate(map_model, o, p, radii,
                                      name=scenario.name)
        return inst.ratio

    family = MapFamily(cfg.lower, cfg.upper, evaluate, name=scenario.name)
    result = extremal_ratio_search(family, seed=scenario.run.seed)
    rep = InequalityReport(
        scenario=scenario.name, mode="search", p=p,
        resolution=_res_label(scenario, None),
        terms={"best_value": result.best_value,
               **{f"best_{name}": float(v) for name, v in
                  zip(cfg.parameters, result.best_params)}},
        ratio=result.best_value,
        checks={"ratio_finite": bool(np.isfinite(result.best_value))},
        cover_stats={"evaluations": result.evaluations},
        extra={"trace": [t.as_record() for t in result.trace]},
        timing_seconds=time.perf_counter() - t0)
    return [rep]
