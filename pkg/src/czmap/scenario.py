"""Scenario files: declarative manifolds, maps and run configuration.

Format: INI-like sections with ``key = value`` lines and ``#`` comments.
Metric entries and map components are arithmetic expressions over the
declared coordinates (see :mod:`czmap.expressions`).  Example::

    [manifold sphere]
    coordinates = th, ph
    lower = 0.3, 0.0
    upper = 2.84, 1.5
    resolution = 49, 49
    metric.1.1 = 1
    metric.1.2 = 0
    metric.2.2 = sin(th)^2
    ricci_lower_bound = 0
    base_point = 1.57, 0.75
    r1_half = 0.3

    [map psi]
    source = sphere
    target = ambient
    component.1 = sin(th)*cos(ph)
    lipschitz = 1        # 'inf' marks merely-continuous maps

    [run]
    mode = global        # lemma | ball | global | intro | corollaryA | search
    p = 1.5, 2, 4
    basepoint = 0, 0, 0

Validation never yields a partially usable scenario: every violated
invariant is collected with its file line and reported in one
ScenarioError.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (CzmapError, DegenerateMetric, ExpressionSyntaxError,
                     ScenarioError, TargetEscape, ValidationIssue)
from .expressions import Expression, parse_expression, to_string
from .geometry import CoordinateBox, ManifoldModel, MetricChart
from .maps import MapModel

MODES = ("lemma", "ball", "global", "intro", "corollaryA", "search")
FIXTURE_ENV_VAR = "CZMAP_FIXTURES"


def fixture_dir() -> str:
    env = os.environ.get(FIXTURE_ENV_VAR)
    if env:
        return env
    return os.path.join(os.path.dirname(__file__), "fixtures")


def fixture_path(name: str) -> str:
    if not name.endswith(".scn"):
        name += ".scn"
    return os.path.join(fixture_dir(), name)


# ---------------------------------------------------------------------------
# raw file parsing
# ---------------------------------------------------------------------------

@dataclass
class _Entry:
    value: str
    line: int


@dataclass
class _Section:
    kind: str
    name: str
    line: int
    entries: dict = field(default_factory=dict)


def _parse_sections(path: str, issues: list) -> list:
    sections = []
    current = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if line.startswith("["):
                if not line.endswith("]"):
                    issues.append(ValidationIssue(path, lineno, "SectionHeader",
                                                  "unterminated section header"))
                    continue
                parts = line[1:-1].split()
                kind = parts[0] if parts else ""
                name = parts[1] if len(parts) > 1 else kind
                if kind not in ("manifold", "map", "run", "search"):
                    issues.append(ValidationIssue(path, lineno, "SectionHeader",
                                                  f"unknown section kind '{kind}'"))
                    continue
                current = _Section(kind=kind, name=name, line=lineno)
                sections.append(current)
                continue
            if "=" not in line:
                issues.append(ValidationIssue(path, lineno, "KeyValue",
                                              f"expected 'key = value': {line!r}"))
                continue
            if current is None:
                issues.append(ValidationIssue(path, lineno, "KeyValue",
                                              "entry before any section header"))
                continue
            key, value = (part.strip() for part in line.split("=", 1))
            if key in current.entries:
                issues.append(ValidationIssue(path, lineno, "DuplicateKey",
                                              f"duplicate key '{key}'"))
                continue
            current.entries[key] = _Entry(value=value, line=lineno)
    return sections


def _floats(text: str):
    return [float(tok) if tok.strip().lower() != "inf" else np.inf
            for tok in text.split(",")]


def _names(text: str):
    return tuple(tok.strip() for tok in text.split(",") if tok.strip())


# ---------------------------------------------------------------------------
# definitions
# ---------------------------------------------------------------------------

@dataclass
class ManifoldDef:
    name: str
    coordinates: tuple
    lower: list
    upper: list
    resolution: list
    metric_exprs: dict            # (i, j) 0-based -> source text
    derivative_mode: str
    ricci_lower_bound: float
    base_points: list
    r1_half: object               # float | inf | "estimate"
    line: int
    derivative_exprs: dict = field(default_factory=dict)  # (i, j, k) -> text

    @property
    def dimension(self) -> int:
        return len(self.coordinates)

    def build_chart(self, resolution=None, extra_variables=()) -> MetricChart:
        res = list(resolution) if resolution is not None else self.resolution
        box = CoordinateBox(self.lower, self.upper, res)
        m = self.dimension
        comps = [[None] * m for _ in range(m)]
        for (i, j), text in self.metric_exprs.items():
            comps[i][j] = Expression(text, self.coordinates)
        for i in range(m):
            for j in range(m):
                if comps[i][j] is None and comps[j][i] is not None:
                    comps[i][j] = comps[j][i]
        oracles = {key: Expression(text, self.coordinates)
                   for key, text in self.derivative_exprs.items()}
        return MetricChart(box, comps, derivative_mode=self.derivative_mode,
                           derivative_oracles=oracles, name=self.name)

    def build_manifold(self, resolution=None, ricci_check=False) -> ManifoldModel:
        chart = self.build_chart(resolution)
        return ManifoldModel(dimension=self.dimension, atlas=[chart],
                             ricci_lower_bound=self.ricci_lower_bound,
                             base_points=list(self.base_points),
                             name=self.name).validate(ricci_check=ricci_check)


@dataclass
class MapDef:
    name: str
    source: str
    target: str
    component_exprs: list
    lipschitz: float
    line: int

    def build(self, source_chart: MetricChart, target_chart: MetricChart,
              parameter_values: dict | None = None) -> MapModel:
        comps = []
        variables = tuple(source_chart.components[0][0].variables) \
            if hasattr(source_chart.components[0][0], "variables") else None
        for text in self.component_exprs:
            if parameter_values:
                params = tuple(parameter_values)
                expr = Expression(text, variables + params)
                from .expressions import Num, substitute
                ast = substitute(expr.ast, {k: Num(value=float(v))
                                            for k, v in parameter_values.items()})
                comps.append(Expression(ast, variables))
            else:
                comps.append(Expression(text, variables))
        return MapModel(source_chart, target_chart, comps,
                        lipschitz_bound=self.lipschitz, name=self.name)


@dataclass
class RunConfig:
    mode: str
    p_list: list
    basepoint: list | None
    resolution_ladder: list       # source grid point counts per level
    seed: int
    out: str | None
    ball: dict
    uc_radius: float | None
    drift_tolerance: float = 0.10
    omega_slack: float = 1e-9

    def validate_issue(self, path: str, line: int):
        if self.mode not in MODES:
            return ValidationIssue(path, line, "RunMode",
                                   f"mode must be one of {MODES}")
        if any(p <= 1.0 for p in self.p_list):
            return ValidationIssue(path, line, "UnsupportedExponent",
                                   "every p must satisfy p > 1")
        return None


@dataclass
class SearchConfig:
    parameters: tuple
    lower: list
    upper: list
    line: int


@dataclass
class Scenario:
    path: str
    manifolds: dict
    maps: dict
    run: RunConfig
    search: SearchConfig | None = None

    @property
    def name(self) -> str:
        return os.path.splitext(os.path.basename(self.path))[0]

    def primary_map(self) -> MapDef:
        if not self.maps:
            raise CzmapError(f"scenario {self.name} declares no map")
        return next(iter(self.maps.values()))

    def build_models(self, resolution=None, parameter_values=None):
        """(source ManifoldModel, target ManifoldModel, MapModel).

        The manifold models share their chart instances with the map, so
        grid caches are computed once per run.
        """
        mdef = self.primary_map()
        sdef = self.manifolds[mdef.source]
        tdef = self.manifolds[mdef.target]
        source = sdef.build_chart(resolution)
        target = tdef.build_chart()
        source_model = ManifoldModel(
            dimension=sdef.dimension, atlas=[source],
            ricci_lower_bound=sdef.ricci_lower_bound,
            base_points=list(sdef.base_points),
            name=sdef.name).validate(ricci_check=False)
        target_model = ManifoldModel(
            dimension=tdef.dimension, atlas=[target],
            ricci_lower_bound=tdef.ricci_lower_bound,
            base_points=list(tdef.base_points),
            name=tdef.name).validate(ricci_check=False)
        map_model = mdef.build(source, target, parameter_values)
        return source_model, target_model, map_model


# ---------------------------------------------------------------------------
# loading and validation
# ---------------------------------------------------------------------------

def _parse_manifold(section: _Section, path: str, issues: list) -> ManifoldDef | None:
    e = section.entries

    def need(key):
        if key not in e:
            issues.append(ValidationIssue(path, section.line, "MissingKey",
                                          f"manifold {section.name}: missing '{key}'"))
            return None
        return e[key]

    coords_entry = need("coordinates")
    if coords_entry is None:
        return None
    coordinates = _names(coords_entry.value)
    m = len(coordinates)
    ok = True
    vals = {}
    for key in ("lower", "upper", "resolution"):
        entry = need(key)
        if entry is None:
            ok = False
            continue
        try:
            nums = _floats(entry.value)
        except ValueError as exc:
            issues.append(ValidationIssue(path, entry.line, "NumberFormat", str(exc)))
            ok = False
            continue
        if len(nums) == 1:
            nums = nums * m
        if len(nums) != m:
            issues.append(ValidationIssue(path, entry.line, "DimensionMismatch",
                                          f"'{key}' needs {m} entries"))
            ok = False
            continue
        vals[key] = nums
    if not ok:
        return None
    for i in range(m):
        if vals["lower"][i] >= vals["upper"][i]:
            issues.append(ValidationIssue(path, e["lower"].line, "BoxOrder",
                                          f"lower[{i}] must be < upper[{i}]"))
            ok = False
        if vals["resolution"][i] < 3:
            issues.append(ValidationIssue(path, e["resolution"].line, "Resolution",
                                          "resolution must be >= 3 per axis"))
            ok = False

    derivative_exprs = {}
    for key, entry in e.items():
        if not key.startswith("metric_derivative."):
            continue
        parts = key.split(".")
        try:
            i, j, k = (int(p) - 1 for p in parts[1:4])
        except (IndexError, ValueError):
            issues.append(ValidationIssue(path, entry.line, "MetricKey",
                                          f"bad metric derivative key '{key}'"))
            ok = False
            continue
        try:
            parse_expression(entry.value, coordinates)
        except ExpressionSyntaxError as exc:
            issues.append(ValidationIssue(path, entry.line, "Expression",
                                          str(exc)))
            ok = False
            continue
        derivative_exprs[(i, j, k)] = entry.value

    metric_exprs = {}
    seen_pairs = {}
    for key, entry in e.items():
        if not key.startswith("metric.") or key.startswith("metric_derivative."):
            continue
        parts = key.split(".")
        try:
            i, j = int(parts[1]) - 1, int(parts[2]) - 1
        except (IndexError, ValueError):
            issues.append(ValidationIssue(path, entry.line, "MetricKey",
                                          f"bad metric key '{key}'"))
            ok = False
            continue
        if not (0 <= i < m and 0 <= j < m):
            issues.append(ValidationIssue(path, entry.line, "MetricKey",
                                          f"metric index out of range in '{key}'"))
            ok = False
            continue
        try:
            ast = parse_expression(entry.value, coordinates)
        except ExpressionSyntaxError as exc:
            issues.append(ValidationIssue(path, entry.line, "Expression", str(exc)))
            ok = False
            continue
        seen_pairs[(i, j)] = (entry, ast)
    for (i, j), (entry, ast) in seen_pairs.items():
        if (j, i) in seen_pairs and i > j:
            other = seen_pairs[(j, i)][1]
            if to_string(ast) != to_string(other):
                ei = Expression(ast, coordinates)
                ej = Expression(other, coordinates)
                probe_box = CoordinateBox(vals["lower"], vals["upper"], [5] * m)
                if not np.allclose(ei(probe_box.points()), ej(probe_box.points()),
                                   atol=1e-12):
                    # recorded but not fatal to parsing, so that every other
                    # invariant of the file still gets checked
                    issues.append(ValidationIssue(
                        path, entry.line, "SymmetryViolation",
                        f"metric.{i+1}.{j+1} differs from metric.{j+1}.{i+1}"))
        metric_exprs.setdefault((min(i, j), max(i, j)), entry.value)
    for i in range(m):
        for j in range(i, m):
            if (i, j) not in metric_exprs:
                issues.append(ValidationIssue(path, section.line, "MissingKey",
                                              f"missing metric.{i+1}.{j+1}"))
                ok = False

    mode = e.get("derivative_mode", _Entry("analytic", section.line)).value
    if mode not in ("analytic", "fd"):
        issues.append(ValidationIssue(path, e["derivative_mode"].line,
                                      "DerivativeMode",
                                      f"unknown derivative mode '{mode}'"))
        ok = False

    A = 0.0
    if "ricci_lower_bound" in e:
        A = float(e["ricci_lower_bound"].value)
        if A < 0:
            issues.append(ValidationIssue(path, e["ricci_lower_bound"].line,
                                          "RicciBound", "A must be >= 0"))
            ok = False

    base_points = []
    for key in ("base_point", "base_points"):
        if key in e:
            try:
                nums = _floats(e[key].value)
                pts = [nums[k:k + m] for k in range(0, len(nums), m)]
                if any(len(p) != m for p in pts):
                    raise ValueError("base point length mismatch")
                base_points.extend(pts)
            except ValueError as exc:
                issues.append(ValidationIssue(path, e[key].line, "BasePoint",
                                              str(exc)))
                ok = False

    r1_half: object = np.inf
    if "r1_half" in e:
        raw = e["r1_half"].value.strip().lower()
        if raw == "estimate":
            r1_half = "estimate"
        else:
            try:
                r1_half = _floats(raw)[0]
                if not r1_half > 0:
                    raise ValueError("r1_half must be positive")
            except ValueError as exc:
                issues.append(ValidationIssue(path, e["r1_half"].line,
                                              "HarmonicRadius", str(exc)))
                ok = False

    if not ok:
        return None
    return ManifoldDef(name=section.name, coordinates=coordinates,
                       lower=vals["lower"], upper=vals["upper"],
                       resolution=[int(r) for r in vals["resolution"]],
                       metric_exprs=metric_exprs, derivative_mode=mode,
                       ricci_lower_bound=A, base_points=base_points,
                       r1_half=r1_half, line=section.line,
                       derivative_exprs=derivative_exprs)


def _parse_map(section: _Section, path: str, issues: list,
               manifolds: dict, search: SearchConfig | None) -> MapDef | None:
    e = section.entries
    ok = True
    for key in ("source", "target"):
        if key not in e:
            issues.append(ValidationIssue(path, section.line, "MissingKey",
                                          f"map {section.name}: missing '{key}'"))
            ok = False
        elif e[key].value not in manifolds:
            issues.append(ValidationIssue(path, e[key].line, "UnknownManifold",
                                          f"unknown manifold '{e[key].value}'"))
            ok = False
    if not ok:
        return None
    source = manifolds[e["source"].value]
    target = manifolds[e["target"].value]
    allowed = tuple(source.coordinates)
    if search is not None:
        allowed = allowed + tuple(search.parameters)
    components = [None] * target.dimension
    for key, entry in e.items():
        if not key.startswith("component."):
            continue
        try:
            a = int(key.split(".")[1]) - 1
        except (IndexError, ValueError):
            issues.append(ValidationIssue(path, entry.line, "ComponentKey",
                                          f"bad component key '{key}'"))
            ok = False
            continue
        if not (0 <= a < target.dimension):
            issues.append(ValidationIssue(path, entry.line, "ComponentKey",
                                          f"component index out of range in '{key}'"))
            ok = False
            continue
        try:
            parse_expression(entry.value, allowed)
        except ExpressionSyntaxError as exc:
            issues.append(ValidationIssue(path, entry.line, "Expression", str(exc)))
            ok = False
            continue
        components[a] = entry.value
    for a, comp in enumerate(components):
        if comp is None:
            issues.append(ValidationIssue(path, section.line, "MissingKey",
                                          f"missing component.{a+1}"))
            ok = False
    lipschitz = np.inf
    if "lipschitz" in e:
        try:
            lipschitz = _floats(e["lipschitz"].value)[0]
            if lipschitz < 0:
                raise ValueError("lipschitz bound must be >= 0")
        except ValueError as exc:
            issues.append(ValidationIssue(path, e["lipschitz"].line, "Lipschitz",
                                          str(exc)))
            ok = False
    if not ok:
        return None
    return MapDef(name=section.name, source=e["source"].value,
                  target=e["target"].value, component_exprs=components,
                  lipschitz=lipschitz, line=section.line)


def _parse_run(section: _Section, path: str, issues: list) -> RunConfig:
    e = section.entries
    mode = e.get("mode", _Entry("global", section.line)).value.strip()
    p_list = [2.0]
    if "p" in e:
        try:
            p_list = _floats(e["p"].value)
        except ValueError as exc:
            issues.append(ValidationIssue(path, e["p"].line, "NumberFormat",
                                          str(exc)))
    basepoint = None
    if "basepoint" in e:
        try:
            basepoint = _floats(e["basepoint"].value)
        except ValueError as exc:
            issues.append(ValidationIssue(path, e["basepoint"].line,
                                          "NumberFormat", str(exc)))
    ladder = []
    if "resolution_ladder" in e:
        try:
            ladder = [int(x) for x in _floats(e["resolution_ladder"].value)]
        except ValueError as exc:
            issues.append(ValidationIssue(path, e["resolution_ladder"].line,
                                          "NumberFormat", str(exc)))
    seed = int(e.get("seed", _Entry("20859", section.line)).value)
    out = e.get("out", None)
    ball = {}
    for key in ("center", "target_center", "r", "R"):
        bkey = f"ball_{key}"
        if bkey in e:
            ball[key] = (e[bkey].value if key == "target_center"
                         and e[bkey].value.strip() == "image"
                         else _floats(e[bkey].value))
    uc_radius = None
    if "uc_radius" in e:
        uc_radius = _floats(e["uc_radius"].value)[0]
    drift = float(e["drift_tolerance"].value) if "drift_tolerance" in e else 0.10
    slack = float(e["omega_slack"].value) if "omega_slack" in e else 1e-9
    cfg = RunConfig(mode=mode, p_list=p_list, basepoint=basepoint,
                    resolution_ladder=ladder, seed=seed,
                    out=out.value if out else None, ball=ball,
                    uc_radius=uc_radius, drift_tolerance=drift,
                    omega_slack=slack)
    issue = cfg.validate_issue(path, section.line)
    if issue:
        issues.append(issue)
    return cfg


def _parse_search(section: _Section, path: str, issues: list) -> SearchConfig | None:
    e = section.entries
    if "parameters" not in e:
        issues.append(ValidationIssue(path, section.line, "MissingKey",
                                      "search section missing 'parameters'"))
        return None
    params = _names(e["parameters"].value)
    try:
        lower = _floats(e["lower"].value) if "lower" in e else None
        upper = _floats(e["upper"].value) if "upper" in e else None
    except ValueError as exc:
        issues.append(ValidationIssue(path, section.line, "NumberFormat", str(exc)))
        return None
    if lower is None or upper is None or len(lower) != len(params) \
            or len(upper) != len(params):
        issues.append(ValidationIssue(path, section.line, "SearchBounds",
                                      "search needs lower/upper per parameter"))
        return None
    return SearchConfig(parameters=params, lower=lower, upper=upper,
                        line=section.line)


def load_scenario(path: str, build_check: bool = True) -> Scenario:
    """Parse and fully validate a scenario file.

    ``build_check`` additionally builds the models at their declared
    resolution and runs the runtime invariants (metric positive
    definiteness, map target containment).  All failures are collected
    into one ScenarioError.
    """
    issues: list[ValidationIssue] = []
    if not os.path.exists(path):
        raise ScenarioError([ValidationIssue(path, 0, "FileMissing",
                                             "no such scenario file")])
    sections = _parse_sections(path, issues)
    search = None
    for sec in sections:
        if sec.kind == "search":
            search = _parse_search(sec, path, issues)
    manifolds = {}
    for sec in sections:
        if sec.kind == "manifold":
            mdef = _parse_manifold(sec, path, issues)
            if mdef is not None:
                manifolds[mdef.name] = mdef
    maps = {}
    run = RunConfig(mode="global", p_list=[2.0], basepoint=None,
                    resolution_ladder=[], seed=20859, out=None, ball={},
                    uc_radius=None)
    saw_run = False
    for sec in sections:
        if sec.kind == "map":
            mdef = _parse_map(sec, path, issues, manifolds, search)
            if mdef is not None:
                maps[mdef.name] = mdef
        elif sec.kind == "run":
            run = _parse_run(sec, path, issues)
            saw_run = True
    if not saw_run and run.mode != "lemma":
        issues.append(ValidationIssue(path, 0, "MissingSection",
                                      "scenario has no [run] section"))
    if issues:
        raise ScenarioError(issues)

    scenario = Scenario(path=path, manifolds=manifolds, maps=maps, run=run,
                        search=search)
    if build_check and run.mode != "lemma":
        _runtime_validation(scenario, issues)
        if issues:
            raise ScenarioError(issues)
    return scenario


def _runtime_validation(scenario: Scenario, issues: list):
    path = scenario.path
    for mdef in scenario.manifolds.values():
        try:
            mdef.build_manifold()
        except DegenerateMetric as exc:
            issues.append(ValidationIssue(path, mdef.line, "DegenerateMetric",
                                          str(exc)))
        except CzmapError as exc:
            issues.append(ValidationIssue(path, mdef.line, type(exc).__name__,
                                          str(exc)))
    if issues:
        return
    for mapdef in scenario.maps.values():
        try:
            params = None
            if scenario.search is not None:
                params = {name: 0.5 * (lo + hi) for name, lo, hi in
                          zip(scenario.search.parameters, scenario.search.lower,
                              scenario.search.upper)}
            source = scenario.manifolds[mapdef.source].build_chart()
            target = scenario.manifolds[mapdef.target].build_chart()
            mapdef.build(source, target, params).validate()
        except TargetEscape as exc:
            issues.append(ValidationIssue(path, mapdef.line, "TargetEscape",
                                          str(exc)))
        except (CzmapError, ValueError) as exc:
            issues.append(ValidationIssue(path, mapdef.line, type(exc).__name__,
                                          str(exc)))
