"""Configuration files and run orchestration.

Config grammar
--------------
The file is ASCII text read line by line.

* Blank lines are ignored. ``#`` starts a comment that runs to the end of
  the line, anywhere on the line.
* ``[name]`` on its own line opens a section. Sections are ``run``,
  ``problem``, ``scheme``, ``analysis``, ``sweep``, ``compare`` and ``lm``.
  Lines before the first header belong to ``problem``.
* Any other line is ``key = value``. Whitespace around key and value is
  stripped. Values are not quoted and may not be empty.
* Keys are case-sensitive. Unknown keys and repeated keys are errors.
* Numbers use Python float syntax; nan and inf are rejected. Integers
  (``N``, ``points``, ``m_points``, ``threads``) must be integer literals.
  Booleans are ``true`` or ``false``.

The resolved configuration, with every default filled in, is written to
``manifest.json`` next to the outputs. Wall-clock time goes to
``timing.json`` so the manifest itself is reproducible.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import check_speed_bound, verify_theorem1
from .comparison import (
    converge_to_one_test,
    ordered_run_test,
    residuals,
    select_subsolution_params,
    stationary_speed_bound,
)
from .errors import FreeBoundaryError, ParseError, RangeError, UnknownKey
from .fbpde import InitialData, SchemeConfig, run, write_snapshot
from .nonlin import ProblemParams, parse_nonlinearity, support_radius_Lm
from .wave import solve_matching, sweep

COMMANDS = ("wave", "simulate", "verify", "compare", "sweep", "lm-table")
INITIAL_KINDS = ("ramp", "tanh", "wave")

SWEEP_HEADER = ("c", "alpha", "beta", "h")
LM_HEADER = ("m", "L_m")
PROFILE_HEADER = ("side", "x", "value", "slope")

# section -> key -> (type, default, check)
_POS = ("positive", lambda v: v > 0)
_NONNEG = ("nonnegative", lambda v: v >= 0)
_UNIT = ("in (0, 1)", lambda v: 0 < v < 1)
_ANY = ("", lambda v: True)

SCHEMA = {
    "run": {
        "command": (str, "simulate", ("one of " + ", ".join(COMMANDS), lambda v: v in COMMANDS)),
        "threads": (int, 1, ("at least 1", lambda v: v >= 1)),
    },
    "problem": {
        "f": (str, "logistic(1)", _ANY),
        "g": (str, "logistic(1)", _ANY),
        "d1": (float, 1.0, _POS),
        "d2": (float, 1.0, _POS),
        "mu1": (float, 1.0, _POS),
        "mu2": (float, 1.0, _POS),
        "initial": (str, "ramp", ("one of " + ", ".join(INITIAL_KINDS), lambda v: v in INITIAL_KINDS)),
        "width": (float, 10.0, _POS),
        "height_u": (float, 1.0, _NONNEG),
        "height_v": (float, 1.0, _NONNEG),
        "s0": (float, 0.0, _ANY),
    },
    "scheme": {
        "L": (float, 40.0, _POS),
        "N": (int, 400, ("at least 16", lambda v: v >= 16)),
        "dt": (float, 0.01, _POS),
        "T_end": (float, 10.0, _POS),
        "bc": (str, "neumann", _ANY),
        "advection": (str, "central", ("central or upwind", lambda v: v in ("central", "upwind"))),
        "snapshot_every": (float, 0.0, _NONNEG),
        "cfl_guard": (float, 1.0, _POS),
    },
    "analysis": {
        "tail_fraction": (float, 0.25, _UNIT),
        "burn_in": (float, 10.0, _NONNEG),
        "mono_tol": (float, 1e-4, _NONNEG),
        "final_tol": (float, 1e-2, _POS),
        "refine": (bool, False, _ANY),
        "p0": (float, 0.2, _UNIT),
        "q0": (float, 0.2, _UNIT),
        "stationary_l": (float, 0.0, _NONNEG),
    },
    "sweep": {
        "c_min": (float, -0.5, _ANY),
        "c_max": (float, 0.5, _ANY),
        "points": (int, 21, ("at least 2", lambda v: v >= 2)),
    },
    "compare": {
        "horizon": (float, 50.0, _POS),
        "scale_u": (float, 0.5, ("in [0, 1]", lambda v: 0 <= v <= 1)),
        "scale_v": (float, 2.0, ("at least 1", lambda v: v >= 1)),
        "cap_v": (float, 1.5, _POS),
        "shift": (float, 1.0, _NONNEG),
    },
    "lm": {
        "m_min": (float, 0.1, _UNIT),
        "m_max": (float, 0.9, _UNIT),
        "m_points": (int, 9, ("at least 1", lambda v: v >= 1)),
    },
}


@dataclass
class RunConfig:
    command: str = "simulate"
    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        section, name = key.split(".")
        return self.values[section][name]

    @property
    def params(self):
        v = self.values["problem"]
        return ProblemParams(v["d1"], v["d2"], v["mu1"], v["mu2"])

    @property
    def f(self):
        return parse_nonlinearity(self.values["problem"]["f"])

    @property
    def g(self):
        return parse_nonlinearity(self.values["problem"]["g"])

    def scheme(self, snapshot_every=None):
        v = self.values["scheme"]
        every = v["snapshot_every"] if snapshot_every is None else snapshot_every
        try:
            return SchemeConfig(
                L=v["L"],
                N=v["N"],
                dt=v["dt"],
                T_end=v["T_end"],
                bc=v["bc"],
                cfl_guard=v["cfl_guard"],
                advection=v["advection"],
                snapshot_every=every or None,
            )
        except ValueError as exc:
            raise RangeError(f"[scheme] {exc}") from exc

    def to_dict(self):
        d = {"command": self.command}
        d.update({k: dict(v) for k, v in self.values.items()})
        return d


def _parse_value(kind, text, line, key):
    if kind is str:
        return text
    if kind is bool:
        if text not in ("true", "false"):
            raise ParseError(f"{key} must be true or false", line)
        return text == "true"
    if kind is int:
        try:
            return int(text, 10)
        except ValueError:
            raise ParseError(f"{key} must be an integer, got {text!r}", line) from None
    try:
        v = float(text)
    except ValueError:
        raise ParseError(f"{key} must be a number, got {text!r}", line) from None
    if not math.isfinite(v):
        raise ParseError(f"{key} must be finite", line)
    return v


def load_config(text, command=None):
    """Parse a config document into a fully defaulted :class:`RunConfig`."""
    values = {s: {k: spec[1] for k, spec in keys.items()} for s, keys in SCHEMA.items()}
    seen = set()
    section = "problem"
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.isascii():
            raise ParseError("non-ASCII character", lineno)
        body = raw.split("#", 1)[0].strip()
        if not body:
            continue
        if body.startswith("["):
            if not body.endswith("]"):
                raise ParseError(f"bad section header {body!r}", lineno)
            section = body[1:-1].strip()
            if section not in SCHEMA:
                raise UnknownKey(f"unknown section [{section}]", lineno)
            continue
        if "=" not in body:
            raise ParseError(f"expected 'key = value', got {body!r}", lineno)
        key, val = (part.strip() for part in body.split("=", 1))
        if not key or not val:
            raise ParseError("empty key or value", lineno)
        if key not in SCHEMA[section]:
            raise UnknownKey(f"unknown key {key!r} in [{section}]", lineno)
        if (section, key) in seen:
            raise ParseError(f"duplicate key {key!r} in [{section}]", lineno)
        seen.add((section, key))
        kind, _, (what, ok) = SCHEMA[section][key]
        v = _parse_value(kind, val, lineno, key)
        if not ok(v):
            raise RangeError(f"{key} = {val} must be {what}", lineno)
        values[section][key] = v
    cmd = command if command is not None else values["run"]["command"]
    if cmd not in COMMANDS:
        raise RangeError(f"command must be one of {', '.join(COMMANDS)}")
    values["run"]["command"] = cmd
    cfg = RunConfig(cmd, values)
    # cross-field checks that do not need any solve
    for key in ("f", "g"):
        try:
            getattr(cfg, key)
        except (ValueError, OSError) as exc:
            raise ParseError(f"{key}: {exc}") from exc
    cfg.scheme()
    if values["sweep"]["c_min"] >= values["sweep"]["c_max"]:
        raise RangeError("sweep c_min must be below c_max")
    if values["lm"]["m_min"] > values["lm"]["m_max"]:
        raise RangeError("lm m_min must not exceed m_max")
    return cfg


# ---------------------------------------------------------------- artifacts

def _write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(x)) if not isinstance(x, str) else x for x in row])


def _write_json(path, obj):
    Path(path).write_text(json.dumps(obj, sort_keys=True, indent=2, default=_jsonable) + "\n")


def _jsonable(obj):
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _initial_data(cfg, wave=None):
    v = cfg.values["problem"]
    if v["initial"] == "wave":
        return InitialData.wave(wave if wave is not None else solve_matching(cfg.f, cfg.g, cfg.params), v["s0"])
    maker = InitialData.ramp if v["initial"] == "ramp" else InitialData.tanh
    return maker(v["width"], v["s0"], v["height_u"], v["height_v"])


def _profile_rows(wave):
    rows = []
    for side, prof in (("phi", wave.phi), ("psi", wave.psi)):
        for x in prof.x:
            rows.append((side, x, float(prof(x)), float(prof(x, 1))))
    return rows


def _cmd_wave(cfg, out):
    sol = solve_matching(cfg.f, cfg.g, cfg.params)
    (out / "wave.json").write_text(sol.to_json() + "\n")
    _write_csv(out / "profile.csv", PROFILE_HEADER, _profile_rows(sol))
    return {"c": sol.c, "alpha": sol.alpha, "beta": sol.beta}


def _simulate(cfg, out, snapshot_every=None, wave=None):
    scheme = cfg.scheme(snapshot_every)
    traj, snaps = run(scheme, _initial_data(cfg, wave), cfg.f, cfg.g, cfg.params)
    traj.to_csv(out / "trajectory.csv")
    snap_dir = out / "snapshots"
    snap_dir.mkdir(exist_ok=True)
    for k, s in enumerate(snaps):
        write_snapshot(s, snap_dir, f"snap_{k:04d}")
    return traj, snaps


def _cmd_simulate(cfg, out):
    traj, snaps = _simulate(cfg, out)
    return {"s_final": float(traj.s[-1]), "snapshots": len(snaps)}


def _default_every(cfg):
    v = cfg.values["scheme"]
    if v["snapshot_every"]:
        return v["snapshot_every"]
    # about 30 snapshots, on the step grid
    k = max(int(round(v["T_end"] / 30.0 / v["dt"])), 1)
    return k * v["dt"]


def _cmd_verify(cfg, out):
    f, g, p = cfg.f, cfg.g, cfg.params
    wave = solve_matching(f, g, p)
    (out / "wave.json").write_text(wave.to_json() + "\n")
    traj, snaps = _simulate(cfg, out, _default_every(cfg), wave)
    a = cfg.values["analysis"]
    rep = verify_theorem1(
        traj,
        snaps,
        wave,
        tail_fraction=a["tail_fraction"],
        burn_in=a["burn_in"],
        refine=a["refine"],
        mono_tol=a["mono_tol"],
        final_tol=a["final_tol"],
    )
    length = a["stationary_l"] or cfg.values["scheme"]["L"]
    first = snaps[0]
    bound = stationary_speed_bound(
        f,
        g,
        p,
        0.0,
        length,
        sup_u=float(first.u.max()),
        sup_v=float(first.v.max()),
        init_slope_u=float(np.max(np.abs(np.diff(first.u)))) / first.dy,
        init_slope_v=float(np.max(np.abs(np.diff(first.v)))) / first.dy,
    )
    ok, margin = check_speed_bound(traj, bound.H)
    conv = converge_to_one_test(snaps, a["p0"], a["q0"])
    out_d = rep.to_dict()
    out_d["speed_bound"] = {"H": bound.H, "ok": ok, "margin": margin, "slope_U": bound.slope_U, "slope_V": bound.slope_V}
    out_d["converge_to_one"] = {"reached": conv.reached, "M": conv.M, "T": conv.T}
    out_d["verdict"] = bool(rep.verdict and ok and conv.reached)
    _write_json(out / "report.json", out_d)
    rep.to_csv(out / "convergence.csv")
    return {"verdict": out_d["verdict"]}


def _cmd_compare(cfg, out):
    f, g, p = cfg.f, cfg.g, cfg.params
    c = cfg.values["compare"]
    base = _initial_data(cfg)
    low = InitialData(
        lambda y: c["scale_u"] * base.u0(y),
        lambda y: np.minimum(c["scale_v"] * base.v0(y), c["cap_v"]),
        base.s0 - c["shift"],
        "lowered",
    )
    scheme = cfg.scheme()
    order = ordered_run_test((scheme, base), (scheme, low), f, g, p, c["horizon"])
    _write_json(out / "ordering.json", order.to_dict())
    wave = solve_matching(f, g, p)
    sp = select_subsolution_params(wave, f, g, p)
    _write_json(out / "subsolution_params.json", sp.to_dict())
    res = residuals(sp, wave, f, g, p)
    (out / "residuals.json").write_text(res.to_json() + "\n")
    return {"max_violation": order.max_violation, "maxA": res.maxA, "minB": res.minB}


def _cmd_sweep(cfg, out):
    s = cfg.values["sweep"]
    speeds = np.linspace(s["c_min"], s["c_max"], s["points"])
    f, g, p = cfg.f, cfg.g, cfg.params
    threads = _threads(cfg)
    with ThreadPoolExecutor(max_workers=threads) as pool:
        parts = list(pool.map(lambda c: sweep(f, g, p, [c])[0], speeds))
    rows = sorted(parts, key=lambda r: r[0])
    _write_csv(out / "sweep.csv", SWEEP_HEADER, rows)
    return {"points": len(rows)}


def _cmd_lm(cfg, out):
    m = cfg.values["lm"]
    levels = np.linspace(m["m_min"], m["m_max"], m["m_points"])
    f, d1 = cfg.f, cfg.values["problem"]["d1"]
    rows = [(x, support_radius_Lm(f, d1, float(x))) for x in levels]
    _write_csv(out / "lm.csv", LM_HEADER, rows)
    return {"points": len(rows)}


def _threads(cfg):
    env = os.environ.get("FREEBOUND_THREADS")
    if env:
        try:
            return max(int(env), 1)
        except ValueError:
            pass
    return cfg.values["run"]["threads"]


DISPATCH = {
    "wave": _cmd_wave,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "compare": _cmd_compare,
    "sweep": _cmd_sweep,
    "lm-table": _cmd_lm,
}


def execute(cfg, out):
    """Run the configured command, writing artifacts under ``out``.

    Returns ``(status, summary)``; status is 0 on success. Module errors
    are caught and written to ``error.json``.
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "manifest.json", {"version": __version__, "config": cfg.to_dict()})
    start = time.time()
    try:
        summary = DISPATCH[cfg.command](cfg, out)
        status = 0
    except FreeBoundaryError as exc:
        summary = _error(exc)
        _write_json(out / "error.json", summary)
        status = 2
    _write_json(out / "timing.json", {"started": start, "elapsed": time.time() - start})
    return status, summary


def _error(exc):
    return {"error": type(exc).__name__, "message": str(exc), "line": getattr(exc, "line", None)}


def main(argv=None):
    parser = argparse.ArgumentParser(prog="freebound", description="Two-phase free-boundary wave and PDE experiments.")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to the config file")
    parser.add_argument("--out", default="out", help="output directory (default: out)")
    args = parser.parse_args(argv)
    try:
        cfg = load_config(Path(args.config).read_bytes().decode("latin-1"), command=args.command)
    except (FreeBoundaryError, OSError) as exc:
        print(json.dumps(_error(exc), sort_keys=True), file=sys.stderr)
        return 2
    status, summary = execute(cfg, args.out)
    stream = sys.stdout if status == 0 else sys.stderr
    print(json.dumps(summary, sort_keys=True, default=_jsonable), file=stream)
    return status


if __name__ == "__main__":
    sys.exit(main())
