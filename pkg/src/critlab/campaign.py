"""Campaign orchestration: grids, determinacy, coverage, and reporting.

A campaign config (JSON, strict keys) names the autopilot variants, scenario
types, ego initial states and grid shape.  For every (autopilot, scenario
type) pair the runner classifies one grid per initial state, persists the raw
per-grid JSON (so summaries can be regenerated without re-simulating), and
aggregates a result matrix whose cells read like ``TF (9.0%) IS (4.2%)`` or
``OF-PD (2/4)``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from . import autopilots as ap_mod
from .autopilots import AutopilotSpec, ExternalAutopilot, ProtocolError
from .classify import (
    CheckAbortedError,
    classify_grid,
    determinacy_check_braking,
    determinacy_check_progress,
    grid_report_dict,
    run_grid,
)
from .criticality import most_critical
from .kinematics import ADProfile
from .partition import build_partition, coverage_ratio
from .scenario import ScenarioType, StaticPart, TestCase
from .simulator import SimConfig

__all__ = [
    "ConfigError",
    "CampaignConfig",
    "CampaignCell",
    "CampaignReport",
    "DEFAULT_CONFIG",
    "load_config",
    "run_campaign",
    "build_autopilot",
    "render_report",
    "write_outputs",
    "cell_text",
    "format_pct",
]

FAILURE_ORDER = ("TF", "IS", "IO")
OF_ORDER = ("OF-SF", "OF-PD")


class ConfigError(ValueError):
    """Raised for unknown keys or invalid values in a campaign config."""


DEFAULT_CONFIG: dict = {
    "scenario_types": [
        "merge_yield",
        "lane_change",
        "intersection_yield",
        "intersection_light",
    ],
    "autopilots": [
        {"name": "reference", "variant": "reference"},
        {"name": "transition_flawed", "variant": "transition_flawed", "optimism": 1.3},
        {
            "name": "irrational",
            "variant": "irrational",
            "fail_region": [[29.0, 35.0], [16.0, 24.0]],
        },
        {"name": "overcautious", "variant": "overcautious", "margin_inflation": 1.15},
        {
            "name": "non_determinate_brake",
            "variant": "non_determinate_brake",
            "rates": {"5.0": 5.0, "27.5": 3.0, "30.0": 5.0},
            "profile": {"a_max": 2.0, "b_max": 5.0, "v_max": 30.0},
            "braking_check_v0": 30.0,
        },
        {
            "name": "non_determinate_accel",
            "variant": "non_determinate_accel",
            "rates": {"5.0": 2.0, "7.5": 1.0},
        },
        {"name": "always_cautious", "variant": "always_cautious"},
        {"name": "constant_speed", "variant": "constant_speed"},
    ],
    "profile": {"a_max": 2.0, "b_max": 4.0, "v_max": 15.0},
    "static": {"d": 5.0, "vl": 10.0, "light_schedule": None},
    "initial_states": [[20.0, 5.0], [25.0, 7.5], [30.0, 10.0], [35.0, 12.0]],
    "grid": {"n_a": 20, "n_f": 20, "a_lo": 0.5, "a_hi_tilde": 1.1, "f_lo": 0.5, "f_hi": 2.5},
    "partition": {"speeds": [10.0, 7.5, 5.0], "x_f_cap": None, "steps": 100},
    "sim": {"dt": 0.1, "zone_epsilon": 0.1},
    "workers": 1,
    "seed": 0,
}

_TOP_KEYS = set(DEFAULT_CONFIG)
_AUTOPILOT_KEYS = {
    "name", "variant", "optimism", "margin_inflation", "fail_region", "rates",
    "profile", "braking_check_v0", "command",
}
_GRID_KEYS = {"n_a", "n_f", "a_lo", "a_hi_tilde", "f_lo", "f_hi"}
_SIM_KEYS = {"dt", "zone_epsilon"}
_PROFILE_KEYS = {"a_max", "b_max", "v_max"}
_STATIC_KEYS = {"d", "vl", "light_schedule"}
_PARTITION_KEYS = {"speeds", "x_f_cap", "steps"}


def _check_keys(section: dict, allowed: set[str], where: str) -> None:
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)} in {where}")


@dataclass
class CampaignConfig:
    raw: dict

    def __post_init__(self) -> None:
        cfg = self.raw
        _check_keys(cfg, _TOP_KEYS, "config")
        for required in ("scenario_types", "autopilots", "initial_states"):
            if not cfg.get(required):
                raise ConfigError(f"config needs a non-empty {required!r} list")
        _check_keys(cfg.get("grid", {}), _GRID_KEYS, "grid")
        _check_keys(cfg.get("sim", {}), _SIM_KEYS, "sim")
        _check_keys(cfg.get("profile", {}), _PROFILE_KEYS, "profile")
        _check_keys(cfg.get("static", {}), _STATIC_KEYS, "static")
        _check_keys(cfg.get("partition", {}), _PARTITION_KEYS, "partition")
        for entry in cfg["autopilots"]:
            if isinstance(entry, dict):
                _check_keys(entry, _AUTOPILOT_KEYS, f"autopilot {entry.get('name')}")
        try:
            [ScenarioType(s) for s in cfg["scenario_types"]]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        profile = self.base_profile()
        for x_e, v_e in cfg["initial_states"]:
            if v_e <= 0 or v_e > profile.v_max:
                raise ConfigError(f"initial speed {v_e} outside (0, v_max]")
            if profile.braking_distance(v_e) > x_e:
                raise ConfigError(
                    f"initial state ({x_e}, {v_e}) admits no cautious stop: "
                    "every generated case would be unwinnable"
                )

    def base_profile(self) -> ADProfile:
        p = {**DEFAULT_CONFIG["profile"], **self.raw.get("profile", {})}
        return ADProfile.constant(p["a_max"], p["b_max"], p["v_max"])

    def static_for(self, scenario_type: ScenarioType) -> StaticPart:
        s = {**DEFAULT_CONFIG["static"], **self.raw.get("static", {})}
        sched = s.get("light_schedule")
        return StaticPart(
            scenario_type=scenario_type,
            vl=s["vl"],
            d=s["d"],
            light_schedule=tuple(sched) if sched else None,
        )

    def sim_config(self) -> SimConfig:
        s = {**DEFAULT_CONFIG["sim"], **self.raw.get("sim", {})}
        return SimConfig(dt=s["dt"], zone_epsilon=s["zone_epsilon"])

    def grid_spec(self) -> dict:
        return {**DEFAULT_CONFIG["grid"], **self.raw.get("grid", {})}

    def partition_spec(self) -> dict:
        return {**DEFAULT_CONFIG["partition"], **self.raw.get("partition", {})}

    def build_autopilot(self, entry) -> AutopilotSpec | ExternalAutopilot:
        return build_autopilot(entry, self.base_profile())


def build_autopilot(entry, default_profile: ADProfile) -> AutopilotSpec | ExternalAutopilot:
    """Instantiate one autopilot from a config entry (dict, name, or exec:cmd)."""
    if isinstance(entry, str):
        if entry.startswith("exec:"):
            return ExternalAutopilot(entry[len("exec:"):], default_profile)
        entry = {"name": entry, "variant": entry}
    profile = default_profile
    if entry.get("profile"):
        p = entry["profile"]
        _check_keys(p, _PROFILE_KEYS, f"autopilot {entry.get('name')} profile")
        profile = ADProfile.constant(p["a_max"], p["b_max"], p["v_max"])
    if entry.get("command"):
        return ExternalAutopilot(entry["command"], profile, name=entry.get("name"))
    variant = entry.get("variant", "reference")
    name = entry.get("name", variant)
    try:
        if variant == "reference":
            return ap_mod.reference(profile, name)
        if variant == "transition_flawed":
            return ap_mod.transition_flawed(profile, entry.get("optimism", 1.3), name)
        if variant == "irrational":
            region = entry["fail_region"]
            fr = ((region[0][0], region[0][1]), (region[1][0], region[1][1]))
            return ap_mod.irrational(profile, fr, name)
        if variant == "overcautious":
            return ap_mod.overcautious(profile, entry.get("margin_inflation", 1.15), name)
        if variant == "non_determinate_brake":
            rates = {float(k): float(v) for k, v in entry["rates"].items()}
            return ap_mod.non_determinate_brake(profile, rates, name)
        if variant == "non_determinate_accel":
            rates = {float(k): float(v) for k, v in entry["rates"].items()}
            return ap_mod.non_determinate_accel(profile, rates, name)
        if variant == "always_cautious":
            return ap_mod.always_cautious(profile, name)
        if variant == "constant_speed":
            return ap_mod.constant_speed(profile, name)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"bad autopilot entry {entry.get('name')!r}: {exc}") from exc
    raise ConfigError(f"unknown autopilot variant {variant!r}")


def load_config(path: str | Path | None = None) -> CampaignConfig:
    if path is None:
        return CampaignConfig(raw=json.loads(json.dumps(DEFAULT_CONFIG)))
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return CampaignConfig(raw=data)


# -- execution -------------------------------------------------------------------


@dataclass
class CampaignCell:
    autopilot: str
    scenario_type: str
    counts: dict[str, int] = field(default_factory=dict)
    n_cells: int = 0
    of_counts: dict[str, int] = field(default_factory=dict)  # kind -> states hit
    m_states: int = 0
    zone_counts: dict[str, int] = field(default_factory=dict)
    protocol_error: bool = False

    def frequency(self, label: str) -> float:
        return self.counts.get(label, 0) / self.n_cells if self.n_cells else 0.0

    @property
    def any_failure(self) -> bool:
        return (
            self.protocol_error
            or any(self.counts.get(lab, 0) for lab in FAILURE_ORDER)
            or any(self.of_counts.values())
        )


@dataclass
class CampaignReport:
    scenario_types: list[str]
    autopilot_names: list[str]
    cells: dict[tuple[str, str], CampaignCell]
    determinacy: list[dict]
    coverage: list[dict]
    meta: dict

    @property
    def any_failure(self) -> bool:
        if any(c.any_failure for c in self.cells.values()):
            return True
        return any(not d.get("determinate", True) for d in self.determinacy
                   if d.get("status") == "ok")

    def to_dict(self) -> dict:
        return {
            "scenario_types": self.scenario_types,
            "autopilots": self.autopilot_names,
            "cells": [
                {
                    "autopilot": c.autopilot,
                    "scenario_type": c.scenario_type,
                    "text": cell_text(c),
                    "counts": dict(sorted(c.counts.items())),
                    "n_cells": c.n_cells,
                    "of": dict(sorted(c.of_counts.items())),
                    "m_states": c.m_states,
                    "zone_counts": dict(sorted(c.zone_counts.items())),
                    "protocol_error": c.protocol_error,
                }
                for c in (self.cells[(sc, ap)] for sc in self.scenario_types
                          for ap in self.autopilot_names)
            ],
            "determinacy": self.determinacy,
            "coverage": self.coverage,
            "meta": self.meta,
        }


def _grid_values(boundary, spec: dict) -> tuple[list[float], list[float]]:
    x_tilde = boundary.x_tilde_a
    if math.isinf(x_tilde):
        x_tilde = boundary.x_hat_a * 2.0
    a_lo = spec["a_lo"] * boundary.x_hat_a
    a_hi = spec["a_hi_tilde"] * x_tilde
    f_lo = max(spec["f_lo"] * boundary.x_hat_f, 0.5)
    f_hi = max(spec["f_hi"] * boundary.x_hat_f, f_lo + 1.0)
    n_a, n_f = spec["n_a"], spec["n_f"]
    xa = [a_lo + i * (a_hi - a_lo) / (n_a - 1) for i in range(n_a)]
    xf = [f_lo + i * (f_hi - f_lo) / (n_f - 1) for i in range(n_f)]
    return xa, xf


def _one_grid(args) -> dict:
    spec, scenario_value, static, x_e, v_e, grid_spec, sim_cfg = args
    boundary = most_critical(x_e, v_e, spec.profile, static)
    xa, xf = _grid_values(boundary, grid_spec)
    grid = run_grid(spec, x_e, v_e, static, xa, xf, sim_cfg)
    cls = classify_grid(grid)
    report = grid_report_dict(grid, cls)
    report["autopilot"] = spec.name
    return report


def run_campaign(config: CampaignConfig, out_dir: str | Path | None = None) -> CampaignReport:
    """Run the full pipeline and (optionally) persist raw grid reports."""
    cfg = config.raw
    scenario_types = [ScenarioType(s) for s in cfg["scenario_types"]]
    pilots = [config.build_autopilot(e) for e in cfg["autopilots"]]
    states = [tuple(s) for s in cfg["initial_states"]]
    grid_spec = config.grid_spec()
    sim_cfg = config.sim_config()
    workers = int(cfg.get("workers", 1))
    out_path = Path(out_dir) if out_dir is not None else None

    builtin_tasks = []
    task_index: dict[tuple[str, str, float, float], int] = {}
    for pilot in pilots:
        if isinstance(pilot, ExternalAutopilot):
            continue
        for sc in scenario_types:
            static = config.static_for(sc)
            for x_e, v_e in states:
                key = (pilot.name, sc.value, x_e, v_e)
                task_index[key] = len(builtin_tasks)
                builtin_tasks.append((pilot, sc.value, static, x_e, v_e, grid_spec, sim_cfg))

    if workers > 1 and builtin_tasks:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_one_grid, builtin_tasks))
    else:
        results = [_one_grid(t) for t in builtin_tasks]

    cells: dict[tuple[str, str], CampaignCell] = {}
    for pilot in pilots:
        for sc in scenario_types:
            cell = CampaignCell(autopilot=pilot.name, scenario_type=sc.value)
            static = config.static_for(sc)
            for x_e, v_e in states:
                if isinstance(pilot, ExternalAutopilot):
                    try:
                        report = _one_grid(
                            (pilot, sc.value, static, x_e, v_e, grid_spec, sim_cfg)
                        )
                    except ProtocolError:
                        cell.protocol_error = True
                        break
                else:
                    report = results[task_index[(pilot.name, sc.value, x_e, v_e)]]
                cell.m_states += 1
                cell.n_cells += len(report["grid"])
                for point in report["grid"]:
                    lab = point["label"]
                    cell.counts[lab] = cell.counts.get(lab, 0) + 1
                for zone, n in report["zone_counts"].items():
                    cell.zone_counts[zone] = cell.zone_counts.get(zone, 0) + n
                of_kind = report["of"]["kind"]
                if of_kind:
                    cell.of_counts[of_kind] = cell.of_counts.get(of_kind, 0) + 1
                if out_path is not None:
                    raw_dir = out_path / "raw" / pilot.name / sc.value
                    raw_dir.mkdir(parents=True, exist_ok=True)
                    raw_file = raw_dir / f"xe{x_e:g}_ve{v_e:g}.json"
                    raw_file.write_text(json.dumps(report, sort_keys=True, indent=1))
            cells[(sc.value, pilot.name)] = cell

    determinacy = _determinacy_summaries(config, pilots, scenario_types[0], states[0], sim_cfg)
    coverage = _coverage_summaries(config, scenario_types)

    report = CampaignReport(
        scenario_types=[s.value for s in scenario_types],
        autopilot_names=[p.name for p in pilots],
        cells=cells,
        determinacy=determinacy,
        coverage=coverage,
        meta={"seed": cfg.get("seed", 0), "dt": sim_cfg.dt, "workers": workers},
    )
    for pilot in pilots:
        if isinstance(pilot, ExternalAutopilot):
            pilot.close()
    return report


def _determinacy_summaries(config, pilots, scenario_type, state, sim_cfg) -> list[dict]:
    rows = []
    static = config.static_for(scenario_type)
    x_e, v_e = state
    for pilot, entry in zip(pilots, config.raw["autopilots"]):
        if isinstance(pilot, ExternalAutopilot):
            continue
        v0 = (entry.get("braking_check_v0") if isinstance(entry, dict) else None) or (
            0.8 * pilot.profile.v_max
        )
        rates = [r for _, r in pilot.rate_by_initial_speed] or [pilot.profile.b_max]
        guard = 1.5 * v0 * v0 / (2.0 * min(rates)) + v0 * sim_cfg.dt
        row = {"autopilot": pilot.name, "maneuver": "braking", "v0": v0}
        try:
            rep = determinacy_check_braking(pilot, v0, guard, dt=sim_cfg.dt)
            row.update(status="ok", max_deviation=rep.max_deviation,
                       tol=rep.tol, determinate=rep.determinate)
        except CheckAbortedError as exc:
            row.update(status="aborted", detail=str(exc))
        rows.append(row)

        boundary = most_critical(x_e, v_e, pilot.profile, static)
        probe = TestCase(
            static=static, x_e=x_e, v_e=v_e,
            x_a=boundary.x_hat_a + max(2.0 * static.vl * sim_cfg.dt, 1.0),
            x_f=boundary.x_hat_f + 1.0,
        )
        row = {"autopilot": pilot.name, "maneuver": "progress", "x_e": x_e, "v_e": v_e}
        try:
            rep = determinacy_check_progress(pilot, probe, cfg=sim_cfg)
            row.update(status="ok", max_deviation=rep.max_deviation, tol=rep.tol,
                       verdict_flips=rep.verdict_flips, determinate=rep.determinate)
        except CheckAbortedError as exc:
            row.update(status="inapplicable", detail=str(exc))
        rows.append(row)
    return rows


def _coverage_summaries(config, scenario_types) -> list[dict]:
    spec = config.partition_spec()
    profile = config.base_profile()
    x_e = config.raw["initial_states"][0][0]
    rows = []
    for sc in scenario_types:
        static = config.static_for(sc)
        part = build_partition(x_e, spec["speeds"], profile, static)
        cap = spec.get("x_f_cap") or 2.0 * profile.braking_distance(profile.v_max)
        result = coverage_ratio(part, cap, spec.get("steps", 100))
        rows.append(
            {
                "scenario_type": sc.value,
                "x_e": x_e,
                "speeds": list(spec["speeds"]),
                "ratio": result.ratio,
                "covered_volume": result.covered_volume,
                "safe_volume": result.safe_volume,
            }
        )
    return rows


# -- rendering -------------------------------------------------------------------


def format_pct(fraction: float) -> str:
    pct = fraction * 100.0
    return f"{pct:.2f}" if pct < 1.0 else f"{pct:.1f}"


def cell_text(cell: CampaignCell) -> str:
    if cell.protocol_error:
        return "protocol-error"
    of_parts = [
        f"{kind} ({cell.of_counts[kind]}/{cell.m_states})"
        for kind in OF_ORDER
        if cell.of_counts.get(kind)
    ]
    if of_parts:
        return " ".join(of_parts)
    parts = [
        f"{lab} ({format_pct(cell.frequency(lab))}%)"
        for lab in FAILURE_ORDER
        if cell.counts.get(lab)
    ]
    return " ".join(parts) if parts else "pass"


def render_report(report: CampaignReport, fmt: str = "markdown") -> str:
    if fmt == "json":
        return json.dumps(report.to_dict(), sort_keys=True, indent=2) + "\n"
    if fmt == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["scenario_type"] + report.autopilot_names)
        for sc in report.scenario_types:
            writer.writerow(
                [sc] + [cell_text(report.cells[(sc, ap)]) for ap in report.autopilot_names]
            )
        return buf.getvalue()
    if fmt == "markdown":
        lines = ["# Campaign report", ""]
        lines.append(f"Seed {report.meta.get('seed')}, dt {report.meta.get('dt')} s.")
        lines.append("")
        header = "| Scenario type | " + " | ".join(report.autopilot_names) + " |"
        lines.append(header)
        lines.append("|" + " --- |" * (len(report.autopilot_names) + 1))
        for sc in report.scenario_types:
            row = [cell_text(report.cells[(sc, ap)]) for ap in report.autopilot_names]
            lines.append("| " + sc + " | " + " | ".join(row) + " |")
        lines.append("")
        lines.append("## Determinacy")
        lines.append("")
        lines.append("| autopilot | maneuver | status | max deviation | determinate |")
        lines.append("| --- | --- | --- | --- | --- |")
        for row in report.determinacy:
            dev = row.get("max_deviation")
            dev_s = f"{dev:.3f}" if isinstance(dev, float) and math.isfinite(dev) else "-"
            det = row.get("determinate")
            det_s = "-" if det is None else ("yes" if det else "no")
            lines.append(
                f"| {row['autopilot']} | {row['maneuver']} | {row.get('status')} "
                f"| {dev_s} | {det_s} |"
            )
        lines.append("")
        lines.append("## Coverage")
        lines.append("")
        lines.append("| scenario type | speeds | ratio |")
        lines.append("| --- | --- | --- |")
        for row in report.coverage:
            speeds = ", ".join(f"{v:g}" for v in row["speeds"])
            lines.append(f"| {row['scenario_type']} | {speeds} | {row['ratio']:.4f} |")
        lines.append("")
        return "\n".join(lines)
    raise ValueError(f"unknown report format {fmt!r}")


def write_outputs(report: CampaignReport, out_dir: str | Path) -> dict[str, Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {}
    for fmt, name in (("csv", "summary.csv"), ("markdown", "report.md"), ("json", "report.json")):
        path = out / name
        path.write_text(render_report(report, fmt))
        paths[fmt] = path
    return paths


def report_from_raw(raw_dir: str | Path) -> CampaignReport:
    """Rebuild the summary matrix from persisted per-grid JSON files.

    Orders rows and columns alphabetically; determinacy and coverage sections
    are not persisted per grid and come back empty.
    """
    raw = Path(raw_dir)
    cells: dict[tuple[str, str], CampaignCell] = {}
    for grid_file in sorted(raw.glob("*/*/*.json")):
        data = json.loads(grid_file.read_text())
        ap = grid_file.parent.parent.name
        sc = grid_file.parent.name
        cell = cells.setdefault(
            (sc, ap), CampaignCell(autopilot=ap, scenario_type=sc)
        )
        cell.m_states += 1
        cell.n_cells += len(data["grid"])
        for point in data["grid"]:
            cell.counts[point["label"]] = cell.counts.get(point["label"], 0) + 1
        for zone, n in data["zone_counts"].items():
            cell.zone_counts[zone] = cell.zone_counts.get(zone, 0) + n
        if data["of"]["kind"]:
            kind = data["of"]["kind"]
            cell.of_counts[kind] = cell.of_counts.get(kind, 0) + 1
    if not cells:
        raise ConfigError(f"no raw grid files under {raw}")
    scenario_types = sorted({sc for sc, _ in cells})
    autopilot_names = sorted({ap for _, ap in cells})
    for sc in scenario_types:
        for ap in autopilot_names:
            cells.setdefault((sc, ap), CampaignCell(autopilot=ap, scenario_type=sc))
    return CampaignReport(
        scenario_types=scenario_types,
        autopilot_names=autopilot_names,
        cells=cells,
        determinacy=[],
        coverage=[],
        meta={"regenerated_from": str(raw)},
    )
