"""Command line entry point: ``gpe-norm <scenario> --config run.json``."""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .errors import RegimeError, SolverFailure, StructuralFailure
from .functionals import ProblemParams, classify, default_constants, fiber
from .radial import GridError

SCENARIOS = ("soliton", "thresholds", "fiber", "minimize", "mountain-pass", "bubble-check",
             "sweep", "verify-all")
PHYSICAL = ("N", "p", "q", "alpha", "beta", "mu1", "mu2", "nu", "a", "b")
SOLITON_KEYS = ("N", "eta", "mu", "a")
SWEEP_AXES = ("a", "b", "nu", "p", "q")
FORMATS = ("json", "csv", "both")


class ConfigError(ValueError):
    """Malformed run configuration."""


@dataclass
class RunConfig:
    scenario: str
    physical: dict
    L: float | None = None
    M: int = 4096
    tol: float = 1e-8
    mp_tol: float = 1e-6
    seed: int = 0
    out: str = "out"
    format: str = "both"
    n_values: list = field(default_factory=lambda: [8, 16, 32, 64])
    sweep_axis: str | None = None
    sweep_values: list | None = None
    sweep_scenario: str = "minimize"
    workers: int = 1

    @classmethod
    def from_dict(cls, d: dict, scenario: str | None = None) -> "RunConfig":
        d = dict(d)
        scen = scenario or d.pop("scenario", None)
        d.pop("scenario", None)
        if scen not in SCENARIOS:
            raise ConfigError(f"unknown scenario {scen!r}; choose from {', '.join(SCENARIOS)}")
        inner = scen if scen != "sweep" else d.get("sweep_scenario", "minimize")
        need = () if scen == "verify-all" else (SOLITON_KEYS if inner == "soliton" else PHYSICAL)
        missing = [k for k in need if k not in d]
        if missing:
            raise ConfigError(f"missing physical parameters: {', '.join(missing)}")
        physical = {k: d.pop(k) for k in need}
        known = {f for f in cls.__dataclass_fields__ if f not in ("scenario", "physical")}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(unknown)}")
        cfg = cls(scen, physical, **d)
        cfg.check()
        return cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        phys = d.pop("physical")
        return {**phys, **d}

    def check(self):
        for name in ("tol", "mp_tol"):
            if not (getattr(self, name) > 0):
                raise ConfigError(f"{name} must be positive")
        if self.L is not None and not self.L > 0:
            raise ConfigError("L must be positive")
        if int(self.M) != self.M or int(self.M) < 64:
            raise ConfigError("M must be an integer of at least 64")
        if self.format not in FORMATS:
            raise ConfigError(f"format must be one of {FORMATS}")
        if not 0 <= int(self.seed) < 2**64:
            raise ConfigError("seed must be an unsigned 64-bit integer")
        if self.scenario == "sweep":
            if self.sweep_axis not in SWEEP_AXES:
                raise ConfigError(f"sweep_axis must be one of {SWEEP_AXES}")
            if not self.sweep_values:
                raise ConfigError("sweep_values must be a non-empty list")
            if list(self.sweep_values) != sorted(self.sweep_values):
                raise ConfigError("sweep_values must be sorted")
            if self.sweep_scenario not in ("thresholds", "minimize", "mountain-pass", "fiber"):
                raise ConfigError("sweep_scenario must be thresholds, minimize, mountain-pass or fiber")
        if self.scenario == "soliton" or (self.scenario == "sweep" and self.sweep_scenario == "soliton"):
            return
        if self.scenario != "verify-all":
            self.params().validate()

    def params(self) -> ProblemParams:
        ph = self.physical
        try:
            return ProblemParams(int(ph["N"]), *(float(ph[k]) for k in PHYSICAL[1:]))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"physical parameters must be numbers: {exc}") from exc

    def sha256(self) -> str:
        # output location and worker count do not change the results
        d = {k: v for k, v in self.to_dict().items() if k not in ("out", "workers")}
        blob = json.dumps(d, sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


@dataclass
class RunManifest:
    config_sha256: str
    version: str
    scenario: str
    status: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    files: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)


# ------------------------------------------------------------------ output

def _jsonable(x):
    from .verify import _jsonable as j
    return j(x)


class Writer:
    def __init__(self, out: Path, fmt: str):
        self.out, self.fmt, self.files = out, fmt, []
        out.mkdir(parents=True, exist_ok=True)

    def _record(self, path: Path):
        data = path.read_bytes()
        self.files.append({"path": path.name, "sha256": hashlib.sha256(data).hexdigest(),
                           "bytes": len(data)})

    def json(self, name: str, obj):
        if self.fmt == "csv":
            return
        path = self.out / name
        path.write_text(json.dumps(_jsonable(obj), sort_keys=True, indent=1) + "\n")
        self._record(path)

    def csv(self, name: str, header, rows):
        if self.fmt == "json":
            return
        path = self.out / name
        with open(path, "w", newline="\n") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_cell(v) for v in row) + "\n")
        self._record(path)

    def profile(self, name: str, pair):
        r = pair.grid.r
        self.csv(f"profile_{name}.csv", ("r", "u", "v"), zip(r, pair.u.values, pair.v.values))


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return "%.17g" % float(v)
    if v is None:
        return ""
    return str(v)


# --------------------------------------------------------------- scenarios

def _grid(cfg: RunConfig, P: ProblemParams):
    from .radial import make_grid
    from .solvers import default_grid

    if cfg.L is None:
        return default_grid(P, M=int(cfg.M))
    return make_grid(P.N, float(cfg.L), int(cfg.M))


def _thresholds(P: ProblemParams) -> dict:
    from .scalar import nu_threshold

    out = {}
    for name, (mu, eta, mass, w) in {"nu_u": (P.mu1, P.p, P.a, P.alpha),
                                     "nu_v": (P.mu2, P.q, P.b, P.beta)}.items():
        try:
            out[name] = nu_threshold(mu, eta, mass, P.N, w, with_up=False).value
        except SolverFailure as exc:
            out[name] = None
            out[name + "_error"] = str(exc)
    return out


def run_soliton(cfg: RunConfig, w: Writer) -> dict:
    from .scalar import scalar_ground_state

    ph = cfg.physical
    N, eta, mu, a = int(ph["N"]), float(ph["eta"]), float(ph["mu"]), float(ph["a"])
    if N not in (1, 2, 3, 4):
        raise ConfigError(f"dimension N must be in 1..4, got {N}")
    sg = scalar_ground_state(eta, mu, a, N)
    summary = {"lambda": sg.lam, "energy": sg.energy, "mass": sg.mass, "residual": sg.residual,
               "pohozaev": sg.pohozaev(), "grad_sq": sg.grad_sq}
    w.json("soliton.json", summary)
    r = sg.profile.grid.r
    w.csv("profile_soliton.csv", ("r", "u", "v"), zip(r, sg.profile.values, np.zeros_like(r)))
    return summary


def run_thresholds(cfg: RunConfig, w: Writer) -> dict:
    from .geometry import h_profile

    P = cfg.params()
    rep = h_profile(P, default_constants()).to_dict()
    rep.update(_thresholds(P))
    rep["params"] = P.to_dict()
    w.json("geometry.json", rep)
    return {k: rep[k] for k in ("feasible", "R0", "R1", "R", "k0", "T_ab", "nu_u", "nu_v")}


def run_fiber(cfg: RunConfig, w: Writer) -> dict:
    from .functionals import norm_tuple
    from .geometry import random_pair

    P = cfg.params()
    rng = np.random.default_rng(int(cfg.seed))
    pair = random_pair(_grid(cfg, P), rng, P.a, P.b, full_mass=True)
    fa = classify(pair, P)
    nt = norm_tuple(pair, P)
    ts = np.geomspace(1e-2, 1e2, 401)
    phis = [fiber(nt, P, t)[0] for t in ts]
    out = {"critical_points": fa.critical_points, "s": fa.s_crit, "t": fa.t_crit,
           "phi_s": fa.phi_at_s, "phi_t": fa.phi_at_t, "classification": fa.classification}
    w.json("fiber.json", out)
    w.csv("fiber.csv", ("t", "phi"), zip(ts, phis))
    return {"n_critical": len(fa.critical_points), "s": fa.s_crit, "t": fa.t_crit}


def _local(cfg: RunConfig, P: ProblemParams):
    from .geometry import h_profile
    from .solvers import local_minimize

    geo = h_profile(P, default_constants())
    base = local_minimize(P, default_constants(), geo, grid=_grid(cfg, P), tol=cfg.tol)
    return geo, base


def _summary(rec) -> dict:
    return {k: getattr(rec, k) for k in ("energy", "lambda1", "lambda2", "mass_u", "mass_v",
                                         "pohozaev_residual", "classification")}


def run_minimize(cfg: RunConfig, w: Writer) -> dict:
    geo, base = _local(cfg, cfg.params())
    w.json("geometry.json", geo.to_dict())
    w.json("solution_local.json", base.to_dict())
    w.profile("local", base.pair)
    return _summary(base)


def run_mountain_pass(cfg: RunConfig, w: Writer) -> dict:
    from .solvers import mountain_pass

    P = cfg.params()
    geo, base = _local(cfg, P)
    rec, path = mountain_pass(P, default_constants(), geo, base, tol=cfg.mp_tol)
    w.json("geometry.json", geo.to_dict())
    w.json("solution_local.json", base.to_dict())
    w.json("solution_mp.json", {**rec.to_dict(), "path": path.to_dict()})
    w.profile("local", base.pair)
    w.profile("mp", rec.pair)
    out = {"local_" + k: v for k, v in _summary(base).items()}
    out.update({"mp_" + k: v for k, v in _summary(rec).items()})
    out["k0"] = geo.k0
    return out


def run_bubble_check(cfg: RunConfig, w: Writer) -> dict:
    from .bubbles import (bubble_asymptotics, bubble_curve, build_bubbles, level_bound_check,
                          t_star)

    P = cfg.params()
    if not P.critical:
        raise RegimeError("bubble-check needs the Sobolev critical regime alpha+beta=2*")
    c = default_constants()
    geo, base = _local(cfg, P)
    fam = build_bubbles(P.N, [int(n) for n in cfg.n_values], base.pair.grid)
    rep = bubble_asymptotics(fam, c)
    curves = bubble_curve(base, fam, P, constants=c)
    lb = level_bound_check(base, fam, P, c, curves)
    w.json("solution_local.json", base.to_dict())
    w.json("bubbles.json", {"family": fam.to_dict(), "asymptotics": rep.to_dict(),
                            "t_star": t_star(P), "t_n": [cv.t_n for cv in curves],
                            "level_bound": lb.to_dict()})
    w.csv("curves.csv", ("n", "t", "H"),
          ((cv.n, t, h) for cv in curves for t, h in zip(cv.t, cv.H)))
    return {"t_star": t_star(P), "t_n_last": curves[-1].t_n, "margin_last": lb.margins[-1]}


RUNNERS = {"soliton": run_soliton, "thresholds": run_thresholds, "fiber": run_fiber,
           "minimize": run_minimize, "mountain-pass": run_mountain_pass,
           "bubble-check": run_bubble_check}


def _sweep_one(args):
    cfg_dict, scenario, axis, value, out = args
    d = dict(cfg_dict)
    d[axis] = value
    d.update(sweep_axis=None, sweep_values=None, out=out)
    row = {axis: value}
    files = []
    try:
        cfg = RunConfig.from_dict(d, scenario)
        w = Writer(Path(out), cfg.format)
        row.update(RUNNERS[scenario](cfg, w))
        row["status"] = "ok"
        sub = Path(out).name
        files = [{**f, "path": f"{sub}/{f['path']}"} for f in w.files]
    except (SolverFailure, StructuralFailure, RegimeError, ConfigError) as exc:
        row["status"] = f"failed: {type(exc).__name__}: {exc}"
    return row, files


def run_sweep(cfg: RunConfig, w: Writer) -> dict:
    base = cfg.to_dict()
    for k in ("scenario", "sweep_scenario", "workers"):
        base.pop(k, None)
    jobs = [(base, cfg.sweep_scenario, cfg.sweep_axis, v,
             str(w.out / f"{cfg.sweep_axis}_{i:03d}")) for i, v in enumerate(cfg.sweep_values)]
    if cfg.workers > 1:
        with ProcessPoolExecutor(max_workers=int(cfg.workers)) as ex:
            results = list(ex.map(_sweep_one, jobs))
    else:
        results = [_sweep_one(j) for j in jobs]
    rows = [r for r, _ in results]
    for _, files in results:
        w.files.extend(files)
    cols = [cfg.sweep_axis, "status"]
    for r in rows:
        cols += [k for k in r if k not in cols]
    w.csv("sweep.csv", cols, ([r.get(c) for c in cols] for r in rows))
    w.json("sweep.json", rows)
    failed = sum(r["status"] != "ok" for r in rows)
    return {"rows": len(rows), "failed": failed}


def run_verify_all(cfg: RunConfig, w: Writer) -> dict:
    from .verify import suite_json, verify_all

    results = verify_all(int(cfg.seed), progress=lambda r: print(r.line(), flush=True))
    path = w.out / "verify.json"
    path.write_text(suite_json(results))
    w._record(path)
    return {"passed": sum(r.passed for r in results), "total": len(results),
            "all_passed": all(r.passed for r in results)}


def run_scenario(cfg: RunConfig) -> RunManifest:
    """Execute one scenario, write its outputs and the manifest."""
    out = Path(cfg.out)
    w = Writer(out, cfg.format)
    man = RunManifest(cfg.sha256(), __version__, cfg.scenario)
    t0 = time.perf_counter()
    runner = {"sweep": run_sweep, "verify-all": run_verify_all}.get(cfg.scenario) or RUNNERS[cfg.scenario]
    try:
        summary = runner(cfg, w)
        man.status[cfg.scenario] = "ok"
        man.status["summary"] = _jsonable(summary)
    finally:
        man.timings[cfg.scenario] = time.perf_counter() - t0
        w.json("config.json", cfg.to_dict())
        man.files = w.files
        (out / "manifest.json").write_text(
            json.dumps(_jsonable(man.to_dict()), sort_keys=True, indent=1) + "\n")
    return man


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="gpe-norm", description=(
        "Normalized solutions of a coupled radial Gross-Pitaevskii system: "
        "geometry, local minimizers, mountain-pass points and critical bubble checks."))
    ap.add_argument("scenario", choices=SCENARIOS)
    ap.add_argument("--config", type=Path, help="flat JSON run configuration")
    ap.add_argument("--out", help="output directory (overrides the config)")
    ap.add_argument("--seed", type=int, help="64-bit seed (overrides the config)")
    ap.add_argument("--workers", type=int, help="sweep worker processes")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        raw = {}
        if args.config is not None:
            try:
                raw = json.loads(args.config.read_text())
            except (OSError, json.JSONDecodeError) as exc:
                raise ConfigError(f"cannot read config: {exc}") from exc
            if not isinstance(raw, dict):
                raise ConfigError("config must be a JSON object")
        elif args.scenario != "verify-all":
            raise ConfigError("--config is required for this scenario")
        for key in ("out", "seed", "workers"):
            if getattr(args, key) is not None:
                raw[key] = getattr(args, key)
        cfg = RunConfig.from_dict(raw, args.scenario)
        man = run_scenario(cfg)
    except (ConfigError, RegimeError, GridError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverFailure as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 1
    except StructuralFailure as exc:
        print(f"structural failure: {exc}", file=sys.stderr)
        return 3
    summary = man.status.get("summary", {})
    print(json.dumps(summary, sort_keys=True))
    if args.scenario == "verify-all" and not summary.get("all_passed", False):
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
