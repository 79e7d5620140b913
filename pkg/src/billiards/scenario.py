"""Configuration-driven experiments with reproducible artifacts.

A scenario is a JSON document validated against ``schema/scenario.schema.json``.
Defaults are written back into the configuration before anything runs, and
the completed configuration is embedded in the report, so a report always
states every threshold and budget that produced it.

Machine-readable results (CSV, JSONL, JSON) are byte-identical for identical
``(config, rng_seed, version)``; wall-clock time is kept out of them and
written to a separate timing file.
"""
from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .billiard_map import PhasePoint, Tangency, iterate
from .diagnostics import (ContinuationLost, bifurcation_trace, lazutkin_band_check,
                          rotation_number)
from .homoclinic_detection import (Thresholds, _threads, grow_orbit_branches,
                                   heteroclinic_scan, homoclinic_reports)
from .invariant_manifolds import (KINDS, Budget, Inconclusive, NotHyperbolic, invariance_error,
                                  linearize, recurrence_diagnostic, seed_and_grow)
from .periodic_orbits import (DegeneratePolygon, NoConvergence, WrongRotation, enumerate_orbits,
                              find_orbit)
from .portrait import PortraitInputError, render_portrait
from .table import TWO_PI, NotConvex, SupportFunction, Table, support_from_config

TASKS = ("validate", "iterate", "orbits", "manifolds", "homoclinic", "heteroclinic",
         "lazutkin", "portrait", "bifurcation")

# domain outcomes that end a run early but are results, not crashes
FINDINGS = (NotConvex, Tangency, NotHyperbolic, WrongRotation, NoConvergence, DegeneratePolygon,
            ContinuationLost, Inconclusive, PortraitInputError)

EXIT_OK, EXIT_INTERNAL, EXIT_FINDING = 0, 1, 2


class ConfigError(ValueError):
    """Schema violation; ``path`` is the dotted location of the offending key."""

    def __init__(self, path: str, msg: str):
        super().__init__(f"{path or '<root>'}: {msg}")
        self.path = path


def load_schema() -> dict:
    text = resources.files("billiards").joinpath("schema/scenario.schema.json").read_text()
    return json.loads(text)


def _fill_defaults(node, schema):
    """Write schema defaults into ``node`` (objects and arrays, not inside oneOf)."""
    if isinstance(node, dict) and "properties" in schema:
        for key, sub in schema["properties"].items():
            if key not in node and "default" in sub:
                node[key] = copy.deepcopy(sub["default"])
            if key in node:
                _fill_defaults(node[key], sub)
    elif isinstance(node, list) and isinstance(schema.get("items"), dict):
        for item in node:
            _fill_defaults(item, schema["items"])


def _normalize_table(spec: dict) -> dict:
    spec = copy.deepcopy(spec)
    if "circle" in spec:
        spec["circle"].setdefault("radius", 1.0)
    elif "ellipse" in spec:
        spec["ellipse"].setdefault("fit_tol", 1e-14)
        p = spec.get("perturbation")
        if p is not None:
            if "harmonics" in p:
                p.setdefault("eps", 1.0)
            else:
                p.setdefault("kind", "cos")
    else:
        spec.setdefault("harmonics", [])
    return spec


def _error_path(err) -> str:
    return ".".join(str(x) for x in err.absolute_path)


@dataclass
class ScenarioConfig:
    """A validated scenario with every default materialized."""

    data: dict
    base_dir: Path = field(default_factory=Path.cwd)

    @classmethod
    def from_dict(cls, raw: dict, task: str | None = None, seed: int | None = None,
                  out: str | None = None, base_dir=None) -> "ScenarioConfig":
        if not isinstance(raw, dict):
            raise ConfigError("", "scenario must be a JSON object")
        data = copy.deepcopy(raw)
        if task is not None:
            data["task"] = task
        if seed is not None:
            data["rng_seed"] = int(seed)
        schema = load_schema()
        validator = jsonschema.Draft202012Validator(schema)
        errors = sorted(validator.iter_errors(data), key=lambda e: list(e.absolute_path))
        if errors:
            err = jsonschema.exceptions.best_match(errors)
            raise ConfigError(_error_path(err), err.message)
        if "task" not in data:
            raise ConfigError("task", "no task given in the scenario or on the command line")
        _fill_defaults(data, schema)
        data["table"] = _normalize_table(data["table"])
        if out is not None:
            data["output"]["dir"] = str(out)
        lo, hi = data["lazutkin"]["band"]
        if not (0.0 < lo < hi < 1.0):
            raise ConfigError("lazutkin.band", f"band {lo, hi} must satisfy 0 < lo < hi < 1")
        return cls(data, Path(base_dir) if base_dir is not None else Path.cwd())

    @classmethod
    def from_file(cls, path, **kw) -> "ScenarioConfig":
        path = Path(path)
        try:
            raw = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError("", f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
        return cls.from_dict(raw, base_dir=path.parent, **kw)

    @property
    def task(self) -> str:
        return self.data["task"]

    @property
    def seed(self) -> int:
        return self.data["rng_seed"]

    @property
    def out_dir(self) -> Path:
        d = Path(self.data["output"]["dir"])
        return d if d.is_absolute() else Path.cwd() / d

    def provenance(self) -> dict:
        """The effective configuration minus the output directory (which moves)."""
        d = copy.deepcopy(self.data)
        d["output"].pop("dir", None)
        return d

    @property
    def scenario_hash(self) -> str:
        blob = json.dumps(self.provenance(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()

    def path(self, key: str) -> Path:
        return self.out_dir / self.data["output"][key]

    def input_path(self, p: str) -> Path:
        q = Path(p)
        return q if q.is_absolute() else self.base_dir / q


@dataclass
class ReportRecord:
    scenario_hash: str
    version: str
    task: str
    status: str
    payload: dict
    artifacts: list
    wall_time: float = 0.0
    exit_code: int = EXIT_OK

    def to_json(self, config: dict) -> str:
        doc = {"scenario_hash": self.scenario_hash, "version": self.version, "task": self.task,
               "status": self.status, "config": config, "artifacts": self.artifacts,
               "payload": self.payload}
        return json.dumps(_clean(doc), indent=2, sort_keys=True, allow_nan=False) + "\n"


def _clean(x):
    """JSON-safe copy: tuples to lists, numpy scalars to Python, inf/nan to strings."""
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return [_clean(v) for v in x.tolist()]
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else ("inf" if x > 0 else "-inf" if x < 0 else "nan")
    if isinstance(x, np.bool_):
        return bool(x)
    return x


# ---------------------------------------------------------------- writers

ORBIT_FIELDS = ["period", "rotation", "thetas", "abs_s_max", "trace", "stability", "residue",
                "length", "degenerate", "r", "s"]


def write_orbits_csv(path: Path, orbits) -> None:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=ORBIT_FIELDS, lineterminator="\n")
    w.writeheader()
    for o in orbits:
        w.writerow(o.csv_row())
    path.write_text(buf.getvalue())


def write_branches_jsonl(path: Path, branches, orbit_index=None) -> None:
    lines = []
    for br in branches:
        for rec in br.jsonl_records():
            if orbit_index is not None:
                rec = {"orbit": orbit_index, **rec}
            lines.append(json.dumps(rec, sort_keys=True))
    path.write_text("".join(x + "\n" for x in lines))


def _write_csv(path: Path, header, rows) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    path.write_text(buf.getvalue())


# ---------------------------------------------------------------- helpers

def _support(cfg: ScenarioConfig) -> SupportFunction:
    return support_from_config(cfg.data["table"])


def _budget(cfg) -> Budget:
    b = cfg.data["budget"]
    return Budget(b["max_generations"], b["max_cum_length"])


def _thresholds(cfg) -> Thresholds:
    return Thresholds(**cfg.data["thresholds"])


def select_orbit(table: Table, spec: dict, tol: float):
    p, q = spec["rotation"]
    seed = None
    if "seed_turns" in spec:
        if len(spec["seed_turns"]) != q:
            raise ConfigError("orbit.seed_turns", f"need {q} angles for rotation {p}/{q}")
        seed = TWO_PI * np.asarray(spec["seed_turns"], dtype=float)
    return find_orbit(table, (p, q), seed, spec.get("mode", "newton"), tol)


def _orbit_summary(o) -> dict:
    p, q = o.rotation_class
    return {"rotation": f"{p}/{q}", "period": o.period, "trace": o.trace, "stability": o.stability,
            "residue": o.residue, "length": o.total_length, "degenerate": o.degenerate,
            "thetas": [t % TWO_PI for t in o.thetas],
            "points": [[x.r, x.s] for x in o.phase_points]}


def _branch_summary(br, recurrence: bool) -> dict:
    d = {"branch": f"{br.kind}@{br.fixture.index}", "status": br.status,
         "generations": br.generations, "total_length": br.total_length,
         "nodes": int(len(br.points)), "seed_delta": br.delta,
         "invariance_error": invariance_error(br)}
    if recurrence:
        try:
            rep = recurrence_diagnostic(br)
            d["recurrence"] = {"minimum": rep.minimum, "argmin_generation": rep.argmin_generation,
                               "per_generation": rep.per_generation}
        except ValueError as exc:
            d["recurrence"] = {"skipped": str(exc)}
    return d


def _portrait(cfg, table, artifacts, title, orbits=True, branches=True, crossings=False):
    o = cfg.data["output"]
    if not o["portrait"]:
        return None
    out = render_portrait(cfg.path("portrait_svg"), table.perimeter,
                          orbits=cfg.path("orbits_csv") if orbits else None,
                          branches=cfg.path("branches_jsonl") if branches else None,
                          crossings=cfg.path("report_json") if crossings else None,
                          title=title)
    artifacts.append(o["portrait_svg"])
    return out


# ---------------------------------------------------------------- tasks

def _task_validate(cfg, table, art):
    return {"table": table.describe()}


def _task_iterate(cfg, table, art):
    it = cfg.data["iterate"]
    start = PhasePoint(float(it["start"]["r"]) % table.perimeter, float(it["start"]["s"]))
    try:
        pts = iterate(table, start, it["steps"])
        tangency = None
    except Tangency as exc:
        pts, tangency = exc.partial, exc.index
    _write_csv(cfg.path("trajectory_csv"), ["n", "r", "s"],
               [[i, f"{p.r:.15e}", f"{p.s:.15e}"] for i, p in enumerate(pts)])
    art.append(cfg.data["output"]["trajectory_csv"])
    s = np.array([p.s for p in pts])
    return {"steps_completed": len(pts) - 1, "tangency_at": tangency,
            "s_min": float(s.min()), "s_max": float(s.max()), "final": [pts[-1].r, pts[-1].s]}


def _task_orbits(cfg, table, art):
    o = cfg.data["orbits"]
    found = enumerate_orbits(table, o["max_period"], o["angular_cells"], o["s_cells"],
                             seed=cfg.seed, tol=o["parabolic_tol"])
    write_orbits_csv(cfg.path("orbits_csv"), found)
    art.append(cfg.data["output"]["orbits_csv"])
    classes = {}
    for orb in found:
        p, q = orb.rotation_class
        classes.setdefault(f"{p}/{q}", 0)
        classes[f"{p}/{q}"] += 1
    return {"count": len(found), "per_class": classes, "orbits": [_orbit_summary(x) for x in found]}


def _task_manifolds(cfg, table, art):
    orbit = select_orbit(table, cfg.data["orbit"], cfg.data["orbits"]["parabolic_tol"])
    fx = linearize(table, orbit, 0)
    m = cfg.data["manifolds"]
    budget = _budget(cfg)
    with ThreadPoolExecutor(max_workers=_threads()) as pool:
        branches = list(pool.map(
            lambda k: seed_and_grow(fx, k, budget, m["h_max"], m["alpha_max"]), KINDS))
    write_orbits_csv(cfg.path("orbits_csv"), [orbit])
    write_branches_jsonl(cfg.path("branches_jsonl"), branches)
    art += [cfg.data["output"]["orbits_csv"], cfg.data["output"]["branches_jsonl"]]
    _portrait(cfg, table, art, "invariant manifolds")
    return {"orbit": _orbit_summary(orbit), "eigenvalue": fx.lam,
            "branches": [_branch_summary(b, m["recurrence"]) for b in branches]}


def _grow(cfg, table, orbit):
    m = cfg.data["manifolds"]
    return grow_orbit_branches(table, orbit, _budget(cfg), h_max=m["h_max"], alpha_max=m["alpha_max"])


def _task_homoclinic(cfg, table, art):
    orbit = select_orbit(table, cfg.data["orbit"], cfg.data["orbits"]["parabolic_tol"])
    branches = _grow(cfg, table, orbit)
    reps = homoclinic_reports(branches, _thresholds(cfg), _budget(cfg))
    write_orbits_csv(cfg.path("orbits_csv"), [orbit])
    write_branches_jsonl(cfg.path("branches_jsonl"), [branches[k][0] for k in KINDS])
    art += [cfg.data["output"]["orbits_csv"], cfg.data["output"]["branches_jsonl"]]
    verdicts = {f"{ku}/{ks}": r.verdict for (ku, ks), r in reps.items()}
    return {"orbit": _orbit_summary(orbit),
            "branches": [_branch_summary(branches[k][0], False) for k in KINDS],
            "verdicts": verdicts,
            "all_transversal": all(v == "transversal" for v in verdicts.values()),
            "reports": [r.to_dict() for r in reps.values()]}


def _task_heteroclinic(cfg, table, art):
    tol = cfg.data["orbits"]["parabolic_tol"]
    orbits = [select_orbit(table, spec, tol) for spec in cfg.data["heteroclinic"]["orbits"]]
    branches = [_grow(cfg, table, o) for o in orbits]
    matrix = heteroclinic_scan(table, orbits, _budget(cfg), _thresholds(cfg), branches)
    write_orbits_csv(cfg.path("orbits_csv"), orbits)
    lines = []
    for j, brs in enumerate(branches):
        for k in KINDS:
            for rec in brs[k][0].jsonl_records():
                lines.append(json.dumps({"orbit": j, **rec}, sort_keys=True))
    cfg.path("branches_jsonl").write_text("".join(x + "\n" for x in lines))
    art += [cfg.data["output"]["orbits_csv"], cfg.data["output"]["branches_jsonl"]]
    pairs = []
    for (a, b), reps in matrix.items():
        pairs.append({"from": a, "to": b, "kind": "homoclinic" if a == b else "heteroclinic",
                      "verdicts": {f"{ku}/{ks}": r.verdict for (ku, ks), r in reps.items()},
                      "reports": [r.to_dict() for r in reps.values()]})
    return {"orbits": [_orbit_summary(o) for o in orbits], "pairs": pairs}


def _task_lazutkin(cfg, table, art):
    lz = cfg.data["lazutkin"]
    starts = [PhasePoint(float(x["r"]) % table.perimeter, float(x["s"])) for x in lz["starts"]] or None
    samples = lazutkin_band_check(table, tuple(lz["band"]), lz["samples"], lz["n"], cfg.seed, starts)
    out = []
    for smp in samples:
        d = {"r": smp.r, "s": smp.s, "oscillation": smp.oscillation, "s_min": smp.s_min,
             "s_max": smp.s_max, "tangency_at": smp.tangency_at}
        if lz["rotation"] and smp.tangency_at is None:
            x = PhasePoint(smp.r, smp.s)
            a = rotation_number(table, x, lz["n"])
            b = rotation_number(table, x, lz["n"] // 2)
            d["rotation_number"] = a
            d["rotation_fluctuation"] = min(abs(a - b), 1.0 - abs(a - b))
        out.append(d)
    osc = [x["oscillation"] for x in out]
    return {"samples": out, "max_oscillation": max(osc), "min_oscillation": min(osc)}


def _task_portrait(cfg, table, art):
    p = cfg.data["portrait"]
    paths = {k: (cfg.input_path(p[k]) if p[k] else None) for k in ("orbits", "branches", "crossings")}
    render_portrait(cfg.path("portrait_svg"), table.perimeter, title=p["title"], **paths)
    art.append(cfg.data["output"]["portrait_svg"])
    return {"inputs": {k: p[k] for k in ("orbits", "branches", "crossings")}}


def _task_bifurcation(cfg, table, art):
    bf = cfg.data["bifurcation"]
    base = _support(cfg)
    m = bf["mode"]
    bump = SupportFunction(0.0, ((m, 0.0, 1.0) if bf["kind"] == "sin" else (m, 1.0, 0.0),))
    family = lambda eps: base.plus(bump, eps)  # noqa: E731
    eps = np.linspace(bf["eps_start"], bf["eps_stop"], bf["steps"])
    tol = cfg.data["orbits"]["parabolic_tol"]
    try:
        start = select_orbit(Table(family(float(eps[0]))), cfg.data["orbit"], tol)
    except (NoConvergence, WrongRotation, DegeneratePolygon) as exc:
        raise ContinuationLost(float(eps[0]), f"no base orbit: {exc}") from exc
    p = start.rotation_class[0]
    trace = bifurcation_trace(family, eps, start.thetas, p, tol)
    _write_csv(cfg.path("bifurcation_csv"), ["eps", "trace", "stability"],
               [[f"{x.eps:.15e}", f"{x.trace:.15e}", x.stability] for x in trace.samples])
    art.append(cfg.data["output"]["bifurcation_csv"])
    return trace.to_dict()


_DISPATCH = {
    "validate": _task_validate,
    "iterate": _task_iterate,
    "orbits": _task_orbits,
    "manifolds": _task_manifolds,
    "homoclinic": _task_homoclinic,
    "heteroclinic": _task_heteroclinic,
    "lazutkin": _task_lazutkin,
    "portrait": _task_portrait,
    "bifurcation": _task_bifurcation,
}


def run_scenario(cfg: ScenarioConfig) -> ReportRecord:
    """Run ``cfg``, write its artifacts and report, and return the record.

    Domain outcomes such as a non-convex table are reported with status
    ``finding`` and exit code 2; they still produce a report file.
    """
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    art: list = []
    rec = ReportRecord(cfg.scenario_hash, __version__, cfg.task, "ok", {}, art)
    try:
        table = Table(_support(cfg))
        rec.payload = _DISPATCH[cfg.task](cfg, table, art)
    except FINDINGS as exc:
        rec.status = "finding"
        rec.exit_code = EXIT_FINDING
        rec.payload = {"finding": type(exc).__name__, "message": str(exc)}
    o = cfg.data["output"]
    art.insert(0, o["report_json"])
    # crossing markers come from the report, so these portraits are drawn after it
    late = rec.status == "ok" and cfg.task in ("homoclinic", "heteroclinic") and o["portrait"]
    if late:
        art.append(o["portrait_svg"])
    cfg.path("report_json").write_text(rec.to_json(cfg.provenance()))
    if late:
        _portrait(cfg, table, [], f"{cfg.task} scenario", crossings=True)
    rec.wall_time = time.perf_counter() - t0
    cfg.path("timing_json").write_text(json.dumps(
        {"scenario_hash": rec.scenario_hash, "task": cfg.task, "wall_time_s": rec.wall_time,
         "threads": _threads()}, indent=2) + "\n")
    return rec


__all__ = ["TASKS", "ConfigError", "ScenarioConfig", "ReportRecord", "run_scenario",
           "select_orbit", "load_schema", "write_orbits_csv", "write_branches_jsonl",
           "EXIT_OK", "EXIT_INTERNAL", "EXIT_FINDING"]
