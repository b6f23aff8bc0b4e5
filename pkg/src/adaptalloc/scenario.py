"""Scenario ingestion, validation, and trace persistence.

Scenarios are YAML documents; loading fills documented defaults and either
returns a fully resolved Scenario or raises ValidationError listing every
violated rule with its field path (never just the first one). Traces are
newline-delimited JSON: a header object carrying the schema version and the
resolved scenario, then one record object per step. Floats are serialized
with shortest round-trip precision, so write followed by read reproduces
every numeric field bit-for-bit.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .adaptation import AdaptationParams, UpdateMode
from .allocation import GlobalSpec
from .qp import QpSettings
from .tasks import GammaConfig, GammaForm, TaskDef
from .world import (
    DEFAULT_BOUNDS,
    Annulus,
    AnnularSector,
    Disk,
    DisturbanceRegion,
    Rect,
    RobotClass,
    RobotModel,
    ScheduleEvent,
    TraceRecord,
)

SCHEMA_VERSION = 1


class ParseError(ValueError):
    """The document is not well-formed YAML or not a mapping at top level."""


class ValidationError(ValueError):
    """One or more scenario rules are violated; lists all of them."""

    def __init__(self, problems: list[str]):
        self.problems = list(problems)
        super().__init__(
            "invalid scenario:\n" + "\n".join(f"  - {p}" for p in self.problems)
        )


class TraceFormatError(ValueError):
    """The trace file does not conform to the expected schema."""


@dataclass
class Scenario:
    """Fully resolved simulation input; every field is validated."""

    name: str
    robots: list[RobotModel]
    tasks: list[TaskDef]
    regions: list[DisturbanceRegion]
    schedule: list[ScheduleEvent]
    spec_init: np.ndarray
    global_spec: GlobalSpec
    adaptation: AdaptationParams
    gamma: GammaConfig
    dt: float
    t_final: float
    u_max: float
    eps: float
    s_max: float = 1.0
    eps_s: float = 1e-3
    world_bounds: tuple = DEFAULT_BOUNDS
    qp_settings: QpSettings = field(default_factory=QpSettings)
    warnings: list[str] = field(default_factory=list)


_TOP_KEYS = {
    "name", "dt", "t_final", "u_max", "eps", "gamma", "global", "adaptation",
    "robots", "tasks", "spec_init", "regions", "schedule", "tolerances",
}
_ROBOT_KEYS = {"id", "class", "position"}
_TASK_KEYS = {"id", "goal", "label"}
_REGION_KEYS = {
    "name", "shape", "center", "radius", "r_in", "r_out", "angle_from",
    "angle_to", "min", "max", "affected_classes", "mu", "active",
}
_EVENT_KEYS = {"time", "region", "active", "mu", "affected_classes"}
_GLOBAL_KEYS = {"pi_star", "task_weights", "C", "l", "kappa", "delta_max"}
_ADAPT_KEYS = {"beta1", "beta2", "mode", "leak", "s_bar"}
_TOL_KEYS = {"primal", "dual", "objective", "max_iterations"}


def _is_num(x) -> bool:
    return isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x)


def _vec2(x) -> bool:
    return (
        isinstance(x, (list, tuple)) and len(x) == 2 and all(_is_num(v) for v in x)
    )


class _Builder:
    """Walks the raw document, collecting every problem before raising."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.problems: list[str] = []
        self.warnings: list[str] = []

    def fail(self, msg: str):
        self.problems.append(msg)

    def num(self, d, key, path, default, pred=None, rule=""):
        if key not in d or d[key] is None:
            return default
        v = d[key]
        if not _is_num(v):
            self.fail(f"{path}: expected a finite number, got {v!r}")
            return default
        v = float(v)
        if pred is not None and not pred(v):
            self.fail(f"{path}: {rule} (got {v})")
            return default
        return v

    def check_keys(self, d, allowed, path):
        for k in d:
            if k not in allowed:
                self.fail(f"{path}: unknown key {k!r}")

    def build(self) -> Scenario:
        raw = self.raw
        self.check_keys(raw, _TOP_KEYS, "scenario")

        name = raw.get("name", "scenario")
        if not isinstance(name, str):
            self.fail("name: expected a string")
            name = "scenario"
        dt = self.num(raw, "dt", "dt", 0.033, lambda v: v > 0, "must be > 0")
        t_final = self.num(
            raw, "t_final", "t_final", 30.0, lambda v: v >= 0, "must be >= 0"
        )
        u_max = self.num(raw, "u_max", "u_max", 0.2, lambda v: v > 0, "must be > 0")
        eps = self.num(raw, "eps", "eps", 0.01, lambda v: v >= 0, "must be >= 0")

        robots = self._robots(raw.get("robots", []))
        tasks = self._tasks(raw.get("tasks", []))
        n, m = len(robots), len(tasks)

        spec_init = self._matrix(raw.get("spec_init"), "spec_init", n, m, 1.0)
        gamma = self._gamma(raw.get("gamma", {}))
        gs = self._global(raw.get("global", {}), m)
        adaptation = self._adaptation(raw.get("adaptation", {}), dt, spec_init, n, m)
        regions = self._regions(raw.get("regions", []))
        schedule = self._schedule(raw.get("schedule", []), regions, t_final)
        qp_settings = self._tolerances(raw.get("tolerances", {}))

        if self.problems:
            raise ValidationError(self.problems)
        return Scenario(
            name=name,
            robots=robots,
            tasks=tasks,
            regions=regions,
            schedule=schedule,
            spec_init=spec_init,
            global_spec=gs,
            adaptation=adaptation,
            gamma=gamma,
            dt=dt,
            t_final=t_final,
            u_max=u_max,
            eps=eps,
            qp_settings=qp_settings,
            warnings=self.warnings,
        )

    def _robots(self, raw) -> list[RobotModel]:
        if not isinstance(raw, list):
            self.fail("robots: expected a list")
            return []
        out = []
        for i, r in enumerate(raw):
            path = f"robots[{i}]"
            if not isinstance(r, dict):
                self.fail(f"{path}: expected a mapping")
                continue
            self.check_keys(r, _ROBOT_KEYS, path)
            if r.get("id") != i:
                self.fail(f"{path}.id: robot ids must be 0..N-1 in order (got {r.get('id')!r})")
            cls_raw = r.get("class")
            try:
                cls = RobotClass(cls_raw)
            except ValueError:
                self.fail(
                    f"{path}.class: expected one of "
                    f"{[c.value for c in RobotClass]}, got {cls_raw!r}"
                )
                cls = RobotClass.GROUND
            pos = r.get("position")
            if not _vec2(pos):
                self.fail(f"{path}.position: expected [x, y] finite numbers")
                pos = [0.0, 0.0]
            out.append(RobotModel.at(i, cls, pos))
        return out

    def _tasks(self, raw) -> list[TaskDef]:
        if not isinstance(raw, list):
            self.fail("tasks: expected a list")
            return []
        out = []
        for i, t in enumerate(raw):
            path = f"tasks[{i}]"
            if not isinstance(t, dict):
                self.fail(f"{path}: expected a mapping")
                continue
            self.check_keys(t, _TASK_KEYS, path)
            if t.get("id") != i:
                self.fail(f"{path}.id: task ids must be 0..M-1 in order (got {t.get('id')!r})")
            goal = t.get("goal")
            if not _vec2(goal):
                self.fail(f"{path}.goal: expected [x, y] finite numbers")
                goal = [0.0, 0.0]
            label = t.get("label", "")
            if not isinstance(label, str):
                self.fail(f"{path}.label: expected a string")
                label = ""
            out.append(TaskDef(id=i, goal=np.asarray(goal, dtype=float), label=label))
        return out

    def _matrix(self, raw, path, n, m, default_val) -> np.ndarray:
        if raw is None:
            return np.full((n, m), default_val)
        ok = (
            isinstance(raw, list)
            and len(raw) == n
            and all(
                isinstance(row, list)
                and len(row) == m
                and all(_is_num(v) for v in row)
                for row in raw
            )
        )
        if not ok:
            self.fail(f"{path}: expected an N x M ({n} x {m}) matrix of finite numbers")
            return np.full((n, m), default_val)
        mat = np.asarray(raw, dtype=float)
        if np.any(mat < 0.0) or np.any(mat > 1.0):
            self.fail(f"{path}: entries must lie in [0, 1]")
            mat = np.clip(mat, 0.0, 1.0)
        return mat

    def _gamma(self, raw) -> GammaConfig:
        if not isinstance(raw, dict):
            self.fail("gamma: expected a mapping")
            return GammaConfig(GammaForm.LINEAR, 1.0)
        self.check_keys(raw, {"form", "gain"}, "gamma")
        form_raw = raw.get("form", "Linear")
        try:
            form = GammaForm(form_raw)
        except ValueError:
            self.fail(
                f"gamma.form: expected one of {[f.value for f in GammaForm]}, "
                f"got {form_raw!r}"
            )
            form = GammaForm.LINEAR
        gain = self.num(raw, "gain", "gamma.gain", 1.0, lambda v: v > 0, "must be > 0")
        return GammaConfig(form=form, gain=gain)

    def _vector(self, raw, path, m, default: np.ndarray) -> np.ndarray:
        if raw is None:
            return default
        ok = isinstance(raw, list) and all(_is_num(v) for v in raw)
        if not ok:
            self.fail(f"{path}: expected a list of finite numbers")
            return default
        if len(raw) != m:
            self.fail(f"{path}: expected length {m}, got {len(raw)}")
            return default
        return np.asarray(raw, dtype=float)

    def _global(self, raw, m) -> GlobalSpec:
        if not isinstance(raw, dict):
            self.fail("global: expected a mapping")
            raw = {}
        self.check_keys(raw, _GLOBAL_KEYS, "global")
        uniform = np.full(m, 1.0 / m) if m else np.zeros(0)
        pi_star = self._vector(raw.get("pi_star"), "global.pi_star", m, uniform)
        if np.any(pi_star < 0.0):
            self.fail("global.pi_star: entries must be >= 0")
            pi_star = np.abs(pi_star)
        if pi_star.sum() > 1.0 + 1e-9:
            self.fail(f"global.pi_star: entries must sum to at most 1 (got {pi_star.sum()})")
            pi_star = pi_star / pi_star.sum()
        weights = self._vector(raw.get("task_weights"), "global.task_weights", m, np.ones(m))
        if np.any(weights < 0.0):
            self.fail("global.task_weights: entries must be >= 0")
            weights = np.abs(weights)
        C = self.num(raw, "C", "global.C", 1e7, lambda v: v > 0, "must be > 0")
        l = self.num(raw, "l", "global.l", 10.0, lambda v: v > 0, "must be > 0")
        kappa = self.num(raw, "kappa", "global.kappa", 250.0, lambda v: v > 1, "must be > 1")
        delta_max = self.num(
            raw, "delta_max", "global.delta_max", 60.0, lambda v: v > 0, "must be > 0"
        )
        return GlobalSpec(
            pi_star=pi_star, task_weights=weights, C=C, l=l, kappa=kappa,
            delta_max=delta_max,
        )

    def _adaptation(self, raw, dt, spec_init, n, m) -> AdaptationParams:
        if not isinstance(raw, dict):
            self.fail("adaptation: expected a mapping")
            raw = {}
        self.check_keys(raw, _ADAPT_KEYS, "adaptation")
        beta1 = self.num(raw, "beta1", "adaptation.beta1", 1.0, lambda v: v > 0, "must be > 0")
        beta2 = self.num(raw, "beta2", "adaptation.beta2", 0.0, lambda v: v >= 0, "must be >= 0")
        leak = self.num(
            raw, "leak", "adaptation.leak", 0.0, lambda v: 0 <= v < 1,
            "must lie in [0, 1)",
        )
        mode_raw = raw.get("mode", "ProportionalOnly")
        try:
            mode = UpdateMode(mode_raw)
        except ValueError:
            self.fail(
                f"adaptation.mode: expected one of {[u.value for u in UpdateMode]}, "
                f"got {mode_raw!r}"
            )
            mode = UpdateMode.PROPORTIONAL_ONLY
        if mode is UpdateMode.WITH_INTEGRAL and not beta2 > 0.0:
            self.fail("adaptation.beta2: WithIntegral mode requires beta2 > 0")
            mode = UpdateMode.PROPORTIONAL_ONLY
        s_bar = raw.get("s_bar")
        s_bar = (
            self._matrix(s_bar, "adaptation.s_bar", n, m, 1.0)
            if s_bar is not None
            else spec_init.copy()
        )
        params = AdaptationParams(
            beta1=beta1, beta2=beta2, dt=dt, s_bar=s_bar, mode=mode, leak=leak
        )
        self.warnings.extend(params.warnings())
        return params

    def _regions(self, raw) -> list[DisturbanceRegion]:
        if not isinstance(raw, list):
            self.fail("regions: expected a list")
            return []
        out = []
        seen = set()
        for i, r in enumerate(raw):
            path = f"regions[{i}]"
            if not isinstance(r, dict):
                self.fail(f"{path}: expected a mapping")
                continue
            self.check_keys(r, _REGION_KEYS, path)
            name = r.get("name")
            if not isinstance(name, str) or not name:
                self.fail(f"{path}.name: expected a non-empty string")
                name = f"region{i}"
            if name in seen:
                self.fail(f"{path}.name: duplicate region name {name!r}")
            seen.add(name)
            geom = self._geometry(r, path)
            classes = self._classes(r.get("affected_classes"), f"{path}.affected_classes")
            mu = self.num(
                r, "mu", f"{path}.mu", 0.0, lambda v: 0 <= v <= 1, "must lie in [0, 1]"
            )
            active = r.get("active", True)
            if not isinstance(active, bool):
                self.fail(f"{path}.active: expected a boolean")
                active = True
            if geom is not None:
                out.append(
                    DisturbanceRegion(
                        name=name, geometry=geom, affected_classes=classes,
                        mu=mu, active=active,
                    )
                )
        return out

    def _geometry(self, r, path):
        shape = r.get("shape")
        shapes = {"Disk", "Annulus", "AnnularSector", "Rect"}
        if shape not in shapes:
            self.fail(f"{path}.shape: expected one of {sorted(shapes)}, got {shape!r}")
            return None
        def need(key, check=_is_num, desc="a finite number"):
            v = r.get(key)
            if check(v):
                return v
            self.fail(f"{path}.{key}: expected {desc} for shape {shape}")
            return None
        try:
            if shape == "Disk":
                center = need("center", _vec2, "[x, y]")
                radius = need("radius")
                if center is None or radius is None:
                    return None
                return Disk(center=center, radius=float(radius))
            if shape in ("Annulus", "AnnularSector"):
                center = need("center", _vec2, "[x, y]")
                r_in = need("r_in")
                r_out = need("r_out")
                if None in (center, r_in, r_out):
                    return None
                if shape == "Annulus":
                    return Annulus(center=center, r_in=float(r_in), r_out=float(r_out))
                a_from = need("angle_from")
                a_to = need("angle_to")
                if None in (a_from, a_to):
                    return None
                return AnnularSector(
                    center=center, r_in=float(r_in), r_out=float(r_out),
                    angle_from=float(a_from), angle_to=float(a_to),
                )
            lo = need("min", _vec2, "[x, y]")
            hi = need("max", _vec2, "[x, y]")
            if None in (lo, hi):
                return None
            return Rect(min_corner=lo, max_corner=hi)
        except ValueError as e:
            self.fail(f"{path}: {e}")
            return None

    def _classes(self, raw, path) -> frozenset:
        if raw is None:
            self.fail(f"{path}: required (list drawn from {[c.value for c in RobotClass]})")
            return frozenset()
        if not isinstance(raw, list):
            self.fail(f"{path}: expected a list of class names")
            return frozenset()
        out = set()
        for v in raw:
            try:
                out.add(RobotClass(v))
            except ValueError:
                self.fail(
                    f"{path}: unknown class {v!r} "
                    f"(choices: {[c.value for c in RobotClass]})"
                )
        return frozenset(out)

    def _schedule(self, raw, regions, t_final) -> list[ScheduleEvent]:
        if not isinstance(raw, list):
            self.fail("schedule: expected a list")
            return []
        names = {r.name for r in regions}
        out = []
        for i, ev in enumerate(raw):
            path = f"schedule[{i}]"
            if not isinstance(ev, dict):
                self.fail(f"{path}: expected a mapping")
                continue
            self.check_keys(ev, _EVENT_KEYS, path)
            time = self.num(
                ev, "time", f"{path}.time", 0.0,
                lambda v: 0 <= v <= t_final, f"must lie in [0, t_final={t_final}]",
            )
            if "time" not in ev:
                self.fail(f"{path}.time: required")
            region = ev.get("region")
            if not isinstance(region, str) or region not in names:
                self.fail(f"{path}.region: expected an existing region name, got {region!r}")
                region = ""
            active = ev.get("active")
            if active is not None and not isinstance(active, bool):
                self.fail(f"{path}.active: expected a boolean")
                active = None
            mu = None
            if "mu" in ev:
                mu = self.num(
                    ev, "mu", f"{path}.mu", None, lambda v: 0 <= v <= 1,
                    "must lie in [0, 1]",
                )
            classes = None
            if "affected_classes" in ev:
                classes = self._classes(ev["affected_classes"], f"{path}.affected_classes")
            if active is None and mu is None and classes is None:
                self.fail(f"{path}: needs at least one of active / mu / affected_classes")
            out.append(
                ScheduleEvent(
                    time=time, region=region, active=active, mu=mu,
                    affected_classes=classes,
                )
            )
        return out

    def _tolerances(self, raw) -> QpSettings:
        if not isinstance(raw, dict):
            self.fail("tolerances: expected a mapping")
            raw = {}
        self.check_keys(raw, _TOL_KEYS, "tolerances")
        primal = self.num(
            raw, "primal", "tolerances.primal", 1e-6, lambda v: v > 0, "must be > 0"
        )
        dual = self.num(
            raw, "dual", "tolerances.dual", 1e-6, lambda v: v > 0, "must be > 0"
        )
        objective = self.num(
            raw, "objective", "tolerances.objective", 1e-5, lambda v: v > 0, "must be > 0"
        )
        max_iter = raw.get("max_iterations", 20000)
        if not isinstance(max_iter, int) or isinstance(max_iter, bool) or max_iter < 1:
            self.fail("tolerances.max_iterations: expected a positive integer")
            max_iter = 20000
        return QpSettings(
            tol_primal=primal, tol_dual=dual, tol_obj=objective,
            max_iterations=max_iter,
        )


def load_scenario(text: str) -> Scenario:
    """Parse and validate a YAML scenario document."""
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as e:
        mark = getattr(e, "problem_mark", None)
        loc = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ParseError(f"malformed scenario document{loc}: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ParseError(
            f"scenario document must be a mapping, got {type(raw).__name__}"
        )
    return _Builder(raw).build()


def load_scenario_file(path) -> Scenario:
    return load_scenario(Path(path).read_text(encoding="utf-8"))


def scenario_to_dict(sc: Scenario) -> dict:
    """Resolved scenario as plain JSON-ready data; load_scenario-compatible."""
    def f2(a):
        return [float(a[0]), float(a[1])]

    out: dict = {
        "name": sc.name,
        "dt": sc.dt,
        "t_final": sc.t_final,
        "u_max": sc.u_max,
        "eps": sc.eps,
        "gamma": {"form": sc.gamma.form.value, "gain": sc.gamma.gain},
        "global": {
            "pi_star": [float(v) for v in sc.global_spec.pi_star],
            "task_weights": [float(v) for v in sc.global_spec.task_weights],
            "C": sc.global_spec.C,
            "l": sc.global_spec.l,
            "kappa": sc.global_spec.kappa,
            "delta_max": sc.global_spec.delta_max,
        },
        "adaptation": {
            "beta1": sc.adaptation.beta1,
            "beta2": sc.adaptation.beta2,
            "mode": sc.adaptation.mode.value,
            "leak": sc.adaptation.leak,
            "s_bar": [[float(v) for v in row] for row in sc.adaptation.s_bar],
        },
        "robots": [
            {"id": r.id, "class": r.robot_class.value, "position": f2(r.x_act)}
            for r in sc.robots
        ],
        "tasks": [
            {"id": t.id, "goal": f2(t.goal), "label": t.label} for t in sc.tasks
        ],
        "spec_init": [[float(v) for v in row] for row in sc.spec_init],
        "regions": [],
        "schedule": [],
        "tolerances": {
            "primal": sc.qp_settings.tol_primal,
            "dual": sc.qp_settings.tol_dual,
            "objective": sc.qp_settings.tol_obj,
            "max_iterations": sc.qp_settings.max_iterations,
        },
    }
    for reg in sc.regions:
        g = reg.geometry
        d: dict = {"name": reg.name}
        if isinstance(g, Disk):
            d.update(shape="Disk", center=f2(g.center), radius=g.radius)
        elif isinstance(g, AnnularSector):
            d.update(
                shape="AnnularSector", center=f2(g.center), r_in=g.r_in,
                r_out=g.r_out, angle_from=g.angle_from, angle_to=g.angle_to,
            )
        elif isinstance(g, Annulus):
            d.update(shape="Annulus", center=f2(g.center), r_in=g.r_in, r_out=g.r_out)
        else:
            d.update(shape="Rect", min=f2(g.min_corner), max=f2(g.max_corner))
        d["affected_classes"] = sorted(c.value for c in reg.affected_classes)
        d["mu"] = reg.mu
        d["active"] = reg.active
        out["regions"].append(d)
    for ev in sc.schedule:
        d = {"time": ev.time, "region": ev.region}
        if ev.active is not None:
            d["active"] = ev.active
        if ev.mu is not None:
            d["mu"] = ev.mu
        if ev.affected_classes is not None:
            d["affected_classes"] = sorted(c.value for c in ev.affected_classes)
        out["schedule"].append(d)
    return out


@dataclass
class Trace:
    """A parsed trace file: schema version, resolved scenario, records."""

    schema_version: int
    scenario: dict
    records: list[TraceRecord]


def _record_to_dict(r: TraceRecord) -> dict:
    return {
        "k": r.k,
        "t": r.t,
        "x_act": r.x_act.tolist(),
        "x_sim": r.x_sim.tolist(),
        "u": r.u.tolist(),
        "task_of": [int(v) for v in r.task_of],
        "delta": r.delta.tolist(),
        "s": r.s.tolist(),
        "v": r.v.tolist(),
        "pi_h": r.pi_h.tolist(),
        "objective": r.objective,
        "reassigned": r.reassigned,
        "qp_iterations": r.qp_iterations,
    }


def _record_from_dict(d: dict) -> TraceRecord:
    return TraceRecord(
        k=int(d["k"]),
        t=float(d["t"]),
        x_act=np.asarray(d["x_act"], dtype=float),
        x_sim=np.asarray(d["x_sim"], dtype=float),
        u=np.asarray(d["u"], dtype=float),
        task_of=np.asarray(d["task_of"], dtype=np.int64),
        delta=np.asarray(d["delta"], dtype=float),
        s=np.asarray(d["s"], dtype=float),
        v=np.asarray(d["v"], dtype=float),
        pi_h=np.asarray(d["pi_h"], dtype=float),
        objective=float(d["objective"]),
        reassigned=bool(d["reassigned"]),
        qp_iterations=int(d["qp_iterations"]),
    )


def write_trace(records: list[TraceRecord], sink, scenario: Scenario) -> None:
    """Write header plus one JSON line per record. sink: path or text file."""
    header = {
        "schema_version": SCHEMA_VERSION,
        "kind": "header",
        "scenario": scenario_to_dict(scenario),
    }
    lines = [json.dumps(header, separators=(",", ":"))]
    lines.extend(
        json.dumps(_record_to_dict(r), separators=(",", ":")) for r in records
    )
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def read_trace(source) -> Trace:
    """Parse a trace file back into records. source: path or text file."""
    if hasattr(source, "read"):
        text = source.read()
    else:
        text = Path(source).read_text(encoding="utf-8")
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise TraceFormatError("trace file is empty (missing header)")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise TraceFormatError(f"line 1: not valid JSON: {e}") from e
    if not isinstance(header, dict) or header.get("kind") != "header":
        raise TraceFormatError("line 1: expected the trace header object")
    version = header.get("schema_version")
    if version != SCHEMA_VERSION:
        raise TraceFormatError(
            f"unsupported trace schema_version {version!r} "
            f"(this reader supports {SCHEMA_VERSION})"
        )
    records = []
    for ln_no, ln in enumerate(lines[1:], start=2):
        try:
            d = json.loads(ln)
            records.append(_record_from_dict(d))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise TraceFormatError(f"line {ln_no}: malformed record: {e}") from e
    return Trace(
        schema_version=version, scenario=header.get("scenario", {}), records=records
    )
