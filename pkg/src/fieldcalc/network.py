"""Whole-network small-step evolution driven by timed scenarios.

A network configuration pairs an environment (topology + sensors) with a
status field mapping every device to the time-tagged value-trees it has
received. Firing a device evaluates the program against the fresh part of
its stored environment and broadcasts the resulting tree to its current
neighbours, itself included. Environment changes rebuild topology and
sensors while retaining the stored context of surviving devices.

Scenarios script everything external: device motion as piecewise paths,
fire times, sensor readings. Timestamps are exact rationals so schedule
comparisons never suffer float drift.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field as dc_field
from fractions import Fraction
from typing import Optional

from .ast import Expr, Program, num
from .builtins import EvalError, SensorState
from .device import (
    DEFAULT_FUEL,
    ValueTree,
    evaluate_main,
    tree_to_json,
    value_to_json,
    value_to_text,
)


class WellFormednessError(ValueError):
    pass


class ScenarioError(ValueError):
    pass


class FireError(EvalError):
    """An evaluation error wrapped with the time and device of the fire."""


Timestamp = Fraction


def as_time(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, bool):
        raise ScenarioError(f"not a timestamp: {x!r}")
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, (float, str)):
        try:
            return Fraction(str(x))
        except (ValueError, ZeroDivisionError):
            raise ScenarioError(f"not a timestamp: {x!r}") from None
    raise ScenarioError(f"not a timestamp: {x!r}")


# ---------------------------------------------------------------------------
# network configurations

@dataclass(frozen=True)
class Stored:
    tree: ValueTree
    tag: Timestamp


@dataclass(frozen=True)
class NetEnv:
    topology: dict  # DeviceId -> frozenset of DeviceId
    sensors: dict  # DeviceId -> SensorState

    def validate(self):
        dom = set(self.topology)
        if dom != set(self.sensors):
            raise WellFormednessError("topology and sensors must share a domain")
        for d, nbrs in self.topology.items():
            if not set(nbrs) <= dom:
                raise WellFormednessError(f"topology of device {d} escapes the domain")

    @property
    def domain(self):
        return frozenset(self.topology)


@dataclass(frozen=True)
class NetConfig:
    env: NetEnv
    status: dict  # DeviceId -> (DeviceId -> Stored)
    clock: Timestamp = Fraction(0)


def empty_config() -> NetConfig:
    return NetConfig(NetEnv({}, {}), {})


def filter_old(status: dict, now: Timestamp, decay: Timestamp) -> dict:
    """Drop every stored tree whose tag is older than now - decay."""
    cutoff = now - decay
    return {
        d: {d2: s for d2, s in env.items() if s.tag >= cutoff}
        for d, env in status.items()
    }


def env_change(cfg: NetConfig, new_env: NetEnv, now: Optional[Timestamp] = None) -> NetConfig:
    new_env.validate()
    status = {d: cfg.status.get(d, {}) for d in new_env.domain}
    return NetConfig(new_env, status, cfg.clock if now is None else now)


def fire(cfg: NetConfig, d: int, program: Program, now: Timestamp,
         decay: Timestamp, fuel: int = DEFAULT_FUEL, rng=None):
    """One firing of device d: evaluate main against the fresh stored
    environment, broadcast the tree to current neighbours. Returns the
    updated configuration and the tree."""
    if d not in cfg.env.domain:
        raise ScenarioError(f"device {d} fires at t={now} but is not in the network")
    fresh = filter_old(cfg.status, now, decay)
    env = {d2: s.tree for d2, s in fresh.get(d, {}).items()}
    sensors = cfg.env.sensors.get(d) or SensorState()
    try:
        tree = evaluate_main(program, d, env, sensors, fuel, rng)
    except EvalError as e:
        raise FireError(f"t={now} device={d}: {e}") from e
    status = dict(cfg.status)
    for d2 in cfg.env.topology[d]:
        if d2 in status:
            status[d2] = {**status[d2], d: Stored(tree, now)}
    return NetConfig(cfg.env, status, now), tree


def snapshot(cfg: NetConfig) -> dict:
    """The observable field: each device's root of its own stored tree."""
    out = {}
    for d in sorted(cfg.env.domain):
        s = cfg.status.get(d, {}).get(d)
        if s is not None:
            out[d] = s.tree.root
    return out


# ---------------------------------------------------------------------------
# scenarios

@dataclass(frozen=True)
class PathSeg:
    start: Timestamp
    end: Timestamp
    waypoints: tuple  # of (x, y)


@dataclass(frozen=True)
class Scenario:
    devices: tuple
    radius: float
    decay: Timestamp
    paths: dict  # DeviceId -> tuple of PathSeg
    fires: tuple  # of (Timestamp, DeviceId), strictly increasing times
    sensor_scripts: dict = dc_field(default_factory=dict)
    # DeviceId -> {sensor name -> tuple of (start time or None, value)}


def _interp(seg: PathSeg, t: Timestamp):
    pts = seg.waypoints
    if len(pts) == 1 or seg.end == seg.start:
        return pts[0]
    frac = (t - seg.start) / (seg.end - seg.start)
    pos = frac * (len(pts) - 1)
    i = min(int(pos), len(pts) - 2)
    u = float(pos - i)
    (x0, y0), (x1, y1) = pts[i], pts[i + 1]
    return (x0 + u * (x1 - x0), y0 + u * (y1 - y0))


def position_at(sc: Scenario, d: int, t: Timestamp):
    """Position while active; None when no path segment covers t."""
    for seg in sc.paths.get(d, ()):
        if seg.start <= t <= seg.end:
            return _interp(seg, t)
    return None


def clamped_position_at(sc: Scenario, d: int, t: Timestamp):
    """Position at t, falling back to the nearest earlier segment end
    (or the very first waypoint when t precedes all segments)."""
    pos = position_at(sc, d, t)
    if pos is not None:
        return pos
    best = None
    first = None
    for seg in sc.paths.get(d, ()):
        if first is None or seg.start < first.start:
            first = seg
        if seg.end <= t and (best is None or seg.end > best.end):
            best = seg
    if best is not None:
        return best.waypoints[-1]
    if first is not None:
        return first.waypoints[0]
    return None


def topology_at(sc: Scenario, t: Timestamp) -> dict:
    pos = {}
    for d in sc.devices:
        p = position_at(sc, d, t)
        if p is not None:
            pos[d] = p
    topo = {}
    for d, p in pos.items():
        topo[d] = frozenset(
            d2 for d2, q in pos.items() if math.dist(p, q) <= sc.radius
        )
    return topo


def ranges_at(sc: Scenario, d: int, t: Timestamp, others=None) -> dict:
    """Distances from d to each other device at time t, using clamped
    positions for devices currently off. Shared by the simulator and the
    denotational evaluator so both sides sense identical ranges."""
    here = clamped_position_at(sc, d, t)
    if here is None:
        raise ScenarioError(f"device {d} has no path")
    out = {}
    for d2 in (sc.devices if others is None else others):
        there = clamped_position_at(sc, d2, t)
        if there is not None:
            out[d2] = math.dist(here, there)
    return out


def sample_script(steps, t: Timestamp):
    """Value of a piecewise-constant script at t; None before the first step."""
    current = None
    for start, v in steps:
        if start is None or start <= t:
            current = v
    return current


def sensors_at(sc: Scenario, d: int, t: Timestamp) -> SensorState:
    local = {}
    for name, steps in sc.sensor_scripts.get(d, {}).items():
        v = sample_script(steps, t)
        if v is not None:
            local[name] = v
    return SensorState(local=local, nbr={"nbr-range": ranges_at(sc, d, t)})


def env_at(sc: Scenario, t: Timestamp) -> NetEnv:
    topo = topology_at(sc, t)
    return NetEnv(topo, {d: sensors_at(sc, d, t) for d in topo})


def activation_changes(sc: Scenario):
    """Times at which the set of active devices may change: all segment
    borders, plus the midpoint of each gap between consecutive borders
    (activation is piecewise-constant between borders, so these samples
    observe every off interval)."""
    borders = set()
    for segs in sc.paths.values():
        for seg in segs:
            borders.add(seg.start)
            borders.add(seg.end)
    out = sorted(borders)
    times = set(borders)
    for a, b in zip(out, out[1:]):
        times.add((a + b) / 2)
    return sorted(times)


# ---------------------------------------------------------------------------
# running a scenario

@dataclass(frozen=True)
class FireRecord:
    t: Timestamp
    device: int
    root: Expr
    tree: ValueTree
    env_domain: frozenset


@dataclass
class FireTrace:
    records: list = dc_field(default_factory=list)

    def roots(self):
        return [r.root for r in self.records]

    def jsonl(self) -> str:
        lines = []
        for r in self.records:
            lines.append(json.dumps({
                "t": str(r.t),
                "device": r.device,
                "root": value_to_json(r.root),
                "tree": tree_to_json(r.tree),
                "env": sorted(r.env_domain),
            }, separators=(",", ":"), sort_keys=True))
        return "\n".join(lines) + ("\n" if lines else "")

    def csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf)
        w.writerow(["t", "device", "root"])
        for r in self.records:
            w.writerow([str(r.t), r.device, value_to_text(r.root)])
        return buf.getvalue()


def run_scenario(sc: Scenario, program: Program, fuel: int = DEFAULT_FUEL,
                 rng=None) -> FireTrace:
    """Interleave environment changes and fires, sorted time-wise.

    The environment is refreshed at every path-segment border and again
    right before each fire, so topology and sensors are always read at
    the fire instant."""
    events = [(t, 0, None) for t in activation_changes(sc)]
    events += [(t, 1, d) for t, d in sc.fires]
    events.sort(key=lambda e: (e[0], e[1]))
    cfg = empty_config()
    trace = FireTrace()
    for t, kind, d in events:
        cfg = env_change(cfg, env_at(sc, t), now=t)
        if kind == 1:
            used = frozenset(filter_old(cfg.status, t, sc.decay).get(d, {}))
            cfg, tree = fire(cfg, d, program, t, sc.decay, fuel, rng)
            trace.records.append(FireRecord(t, d, tree.root, tree, used))
    return trace


# ---------------------------------------------------------------------------
# scenario JSON

def _parse_scalar(v) -> Expr:
    from .ast import boolean
    from .parser import parse_value

    if isinstance(v, bool):
        return boolean(v)
    if isinstance(v, (int, float)):
        return num(v)
    if isinstance(v, str):
        return parse_value(v)
    raise ScenarioError(f"cannot read sensor value {v!r}")


def _parse_script(v):
    if isinstance(v, dict) and set(v) == {"steps"}:
        steps = []
        for step in v["steps"]:
            if not (isinstance(step, list) and len(step) == 2):
                raise ScenarioError(f"bad sensor step {step!r}")
            steps.append((as_time(step[0]), _parse_scalar(step[1])))
        steps.sort(key=lambda s: s[0])
        return tuple(steps)
    return ((None, _parse_scalar(v)),)


def scenario_from_json(obj) -> Scenario:
    if not isinstance(obj, dict):
        raise ScenarioError("scenario must be a JSON object")
    missing = {"devices", "radius", "decay", "fires"} - set(obj)
    if missing:
        raise ScenarioError(f"scenario lacks keys: {', '.join(sorted(missing))}")
    devices = tuple(int(d) for d in obj["devices"])
    if len(set(devices)) != len(devices):
        raise ScenarioError("duplicate device ids")
    paths = {}
    for key, segs in obj.get("paths", {}).items():
        d = int(key)
        if d not in devices:
            raise ScenarioError(f"path for unknown device {d}")
        out = []
        for seg in segs:
            start, end = as_time(seg["from"]), as_time(seg["to"])
            if end < start:
                raise ScenarioError(f"path segment of device {d} ends before it starts")
            pts = tuple((float(x), float(y)) for x, y in seg["waypoints"])
            if not pts:
                raise ScenarioError(f"empty waypoints for device {d}")
            out.append(PathSeg(start, end, pts))
        paths[d] = tuple(out)
    fires = []
    for f in obj["fires"]:
        d = int(f["device"])
        if d not in devices:
            raise ScenarioError(f"fire by unknown device {d}")
        fires.append((as_time(f["t"]), d))
    fires.sort(key=lambda f: f[0])
    for (t1, _), (t2, _) in zip(fires, fires[1:]):
        if t1 == t2:
            raise ScenarioError(f"two fires at the same instant t={t1}")
    sensors = {}
    for key, table in obj.get("sensors", {}).items():
        d = int(key)
        if d not in devices:
            raise ScenarioError(f"sensors for unknown device {d}")
        sensors[d] = {name: _parse_script(v) for name, v in table.items()}
    return Scenario(
        devices=devices,
        radius=float(obj["radius"]),
        decay=as_time(obj["decay"]),
        paths=paths,
        fires=tuple(fires),
        sensor_scripts=sensors,
    )


def load_scenario(path: str) -> Scenario:
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as e:
            raise ScenarioError(f"{path}: not valid JSON: {e}") from None
    return scenario_from_json(obj)
