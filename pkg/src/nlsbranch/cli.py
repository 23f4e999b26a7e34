"""Command-line entry point: ``nlsbranch <command> [options]``.

Exit codes: 0 success, 1 usage error, 2 runtime error (error JSON on stderr).
Set ``NLSBRANCH_VERBOSE=1`` for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from datetime import datetime, timezone
from importlib.metadata import PackageNotFoundError, version
from pathlib import Path

import numpy as np

from .dichotomy import (SWEEP_HEADER, Classification, ExperimentConfig, Setup,
                        config_hash, exit_time_check, run_experiment, sweep)
from .errors import NLSBranchError
from .evolution import FieldState, conserved, evolve, gaussian
from .grid import (RadialGrid, grid_from_nodes, lr_norm, read_field_csv,
                   write_field_csv)
from .model import (NonlinearityModel, admissibility, critical_exponents,
                    region_boundary, region_csv)
from .modulation import decompose, initial_phase, write_series_csv
from .soliton import SolitonBranch, solve_profile, tail_slope
from .spectral import SpectralBranch, build_operators, unstable_eigenpair

log = logging.getLogger("nlsbranch")

COMMANDS = ("admissible", "region", "profile", "spectrum", "evolve",
            "decompose", "dichotomy", "sweep")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def tool_version() -> str:
    try:
        return version("artifact")
    except PackageNotFoundError:
        return "0+unknown"


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.generic):
        obj = obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


class Output:
    """Collects results for stdout or an output directory with a manifest."""

    def __init__(self, command: str, out: str | None, config: dict,
                 inputs: list[str]):
        self.command, self.config, self.inputs = command, config, inputs
        self.dir = Path(out) if out else None
        self.started = datetime.now(timezone.utc).isoformat()
        self.files: list[str] = []
        if self.dir is not None:
            self.dir.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path | None:
        if self.dir is None:
            return None
        self.files.append(name)
        return self.dir / name

    def json(self, name: str, data: dict) -> None:
        text = json.dumps(_clean(data), indent=2, sort_keys=True)
        p = self.path(name)
        if p is None:
            print(text)
        else:
            p.write_text(text + "\n")

    def finish(self) -> None:
        if self.dir is None:
            return
        manifest = {"command": self.command,
                    "config_hash": config_hash(self.config),
                    "config": self.config,
                    "tool_version": tool_version(),
                    "started": self.started,
                    "finished": datetime.now(timezone.utc).isoformat(),
                    "inputs": self.inputs, "outputs": sorted(self.files)}
        log.info("wrote %d outputs to %s", len(self.files), self.dir)
        (self.dir / "manifest.json").write_text(
            json.dumps(_clean(manifest), indent=2, sort_keys=True) + "\n")


def _load_config(args) -> dict:
    if getattr(args, "config", None):
        with open(args.config) as fh:
            return json.load(fh)
    return {}


def _model_grid(cfg: dict, args):
    if not cfg.get("model") and args.N is None:
        raise UsageError(f"{args.command} needs --N or a config with a model")
    mdict = cfg.get("model") or {"N": args.N, "m": args.m}
    model = NonlinearityModel.from_dict(mdict)
    gdict = cfg.get("grid") or {"R": args.R, "M": args.M}
    grid = RadialGrid.from_dict({**gdict, "N": model.N})
    return model, grid


# --- commands ----------------------------------------------------------------------------

def cmd_admissible(args, cfg):
    N = cfg.get("N", args.N)
    m1 = cfg.get("m1", args.m1)
    m2 = cfg.get("m2", args.m2 if args.m2 is not None else m1)
    if N is None or m1 is None:
        raise UsageError("admissible needs --N and --m1")
    rep = admissibility(int(N), float(m1), float(m2))
    data = rep.to_dict()
    o = Output("admissible", args.out, {"N": N, "m1": m1, "m2": m2}, [])
    o.json("admissible.json", data)
    o.finish()


def cmd_region(args, cfg):
    N = int(cfg.get("N", args.N if args.N is not None else 3))
    n = int(cfg.get("samples", args.samples))
    lo = 1 + 4 / N
    hi = critical_exponents(N).m_max if N >= 3 else lo + 4.0
    m2 = lo + (hi - lo) * (np.arange(1, n + 1) / (n + 1))
    rows = region_boundary(N, m2)
    text = region_csv(N, rows)
    o = Output("region", args.out, {"N": N, "samples": n}, [])
    p = o.path("region.csv")
    if p is None:
        sys.stdout.write(text)
    else:
        p.write_text(text, newline="")
    o.finish()


def cmd_profile(args, cfg):
    model, grid = _model_grid(cfg, args)
    omega = float(cfg.get("omega", args.omega))
    prof = solve_profile(model, omega, grid)
    data = {"omega": omega, "phi0": prof.phi0, "residual": prof.residual,
            "mass": prof.mass(), "tail_slope": tail_slope(prof)}
    o = Output("profile", args.out, {"model": model.to_dict(),
                                     "grid": grid.to_dict(), "omega": omega},
               [args.config] if args.config else [])
    o.json("profile.json", data)
    p = o.path("profile.csv")
    if p is not None:
        write_field_csv(p, grid, prof.phi)
    o.finish()


def cmd_spectrum(args, cfg):
    model, grid = _model_grid(cfg, args)
    omega = float(cfg.get("omega", args.omega))
    branch = SolitonBranch(model, grid)
    spec = unstable_eigenpair(build_operators(branch.point(omega), model, grid))
    d = spec.to_dict()
    data = {k: d[k] for k in ("omega", "e_plus", "gap_to_continuum",
                              "normalization_check")}
    data["residual"] = spec.residual
    o = Output("spectrum", args.out, {"model": model.to_dict(),
                                      "grid": grid.to_dict(), "omega": omega},
               [args.config] if args.config else [])
    o.json("spectrum.json", data)
    p = o.path("eigenfunction.csv")
    if p is not None:
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["r", "Y_re", "Y_im"])
            for r, a, b in zip(grid.r, spec.Y_re, spec.Y_im):
                w.writerow([repr(float(r)), repr(float(a)), repr(float(b))])
    o.finish()


def _initial_field(model, grid, init: dict):
    kind = init.get("type", "soliton")
    if kind == "gaussian":
        return gaussian(grid, float(init.get("amplitude", 1.0)),
                        float(init.get("b", 1.0)))
    if kind == "soliton":
        phi = solve_profile(model, float(init.get("omega", 1.0)), grid).phi
        return (float(init.get("scale", 1.0)) * phi).astype(complex)
    if kind == "file":
        r, u = read_field_csv(init["path"])
        grid_from_nodes(grid.N, r)
        return u
    raise NLSBranchError(f"unknown initial data type {kind!r}")


def cmd_evolve(args, cfg):
    if not cfg:
        raise UsageError("evolve needs --config")
    model, grid = _model_grid(cfg, args)
    u0 = _initial_field(model, grid, cfg.get("initial", {}))
    sponge = float(cfg.get("sponge", 0.0))
    state = FieldState(0.0, u0, float(cfg["dt"]), grid,
                       sponge=grid.sponge(sponge) if sponge > 0 else None)

    def obs(s):
        c = conserved(s, model)
        return (s.t, c.mass, c.energy, lr_norm(grid, s.u, 2),
                float(np.max(np.abs(s.u))))

    final, rec = evolve(state, model, float(cfg["T"]), {"row": obs},
                        stride=int(cfg.get("stride", 10)))
    o = Output("evolve", args.out, cfg, [args.config])
    p = o.path("evolve.csv")
    rows = rec["row"]
    if p is not None:
        with open(p, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "mass", "energy", "L2", "Linf"])
            for row in rows:
                w.writerow([repr(float(v)) for v in row])
        write_field_csv(o.path("final_field.csv"), grid, final.u)
    c0, c1 = rows[0], rows[-1]
    o.json("evolve.json", {"T": final.t, "steps": len(rows),
                           "mass_drift": (c1[1] - c0[1]) / c0[1] if c0[1] else 0.0,
                           "energy_drift": (c1[2] - c0[2]) / abs(c0[2])
                           if c0[2] else 0.0})
    o.finish()


def cmd_decompose(args, cfg):
    if not cfg:
        raise UsageError("decompose needs --config")
    model = NonlinearityModel.from_dict(cfg["model"])
    r, u = read_field_csv(cfg["field"])
    grid = grid_from_nodes(model.N, r)
    branch = SolitonBranch(model, grid, tuple(cfg.get("interval", (0.5, 2.0))))
    try:
        spectra = SpectralBranch(branch)
        omega = float(cfg.get("omega", 1.0))
        spectra.at(omega)
    except NLSBranchError:
        spectra = None
    omega = float(cfg.get("omega", 1.0))
    theta = cfg.get("theta")
    if theta is None:
        theta = initial_phase(u, branch.point(omega).phi, grid)
    ms = decompose(u, (float(theta), omega), branch, spectra)
    data = {"theta": ms.theta, "omega": ms.omega, "b_plus": ms.b_plus,
            "b_minus": ms.b_minus, "eta_L2": lr_norm(grid, ms.eta, 2),
            "orth_residuals": list(ms.orth_residuals),
            "newton_iterations": ms.newton_iterations}
    o = Output("decompose", args.out, cfg, [args.config, cfg["field"]])
    o.json("decompose.json", data)
    p = o.path("eta.csv")
    if p is not None:
        write_field_csv(p, grid, ms.eta)
    o.finish()


def cmd_dichotomy(args, cfg):
    if not cfg:
        raise UsageError("dichotomy needs --config")
    config = ExperimentConfig.from_dict(cfg)
    setup = Setup(config)
    outcome = run_experiment(config, setup)
    data = outcome.summary()
    if outcome.classification is Classification.ESCAPED and \
            math.isfinite(outcome.e2):
        data["exit_time_check"] = exit_time_check(outcome)
    o = Output("dichotomy", args.out, config.to_dict(), [args.config])
    o.json("outcome.json", data)
    p = o.path("series.csv")
    if p is not None:
        write_series_csv(p, outcome.series, setup.grid, setup.model)
    o.finish()


def cmd_sweep(args, cfg):
    if not cfg and cfg != []:
        raise UsageError("sweep needs --config")
    configs = cfg["configs"] if isinstance(cfg, dict) else cfg
    rows = sweep(configs, parallelism=args.parallel)
    o = Output("sweep", args.out, {"configs": configs}, [args.config])
    p = o.path("sweep.csv")
    if p is not None:
        with open(p, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=SWEEP_HEADER)
            w.writeheader()
            for row in rows:
                w.writerow({k: ("" if row[k] is None else row[k])
                            for k in SWEEP_HEADER})
    o.json("sweep.json", {"rows": rows})
    o.finish()
    if any(row["error"] for row in rows):
        return 2
    return 0


HANDLERS = {"admissible": cmd_admissible, "region": cmd_region,
            "profile": cmd_profile, "spectrum": cmd_spectrum,
            "evolve": cmd_evolve, "decompose": cmd_decompose,
            "dichotomy": cmd_dichotomy, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="nlsbranch", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", parser_class=_Parser)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON configuration file")
        s.add_argument("--out", help="output directory (default: stdout)")
        s.add_argument("--N", type=int)
        if name == "admissible":
            s.add_argument("--m1", type=float)
            s.add_argument("--m2", type=float)
        if name == "region":
            s.add_argument("--samples", type=int, default=50)
        if name in ("profile", "spectrum"):
            s.add_argument("--m", type=float, default=3.0)
            s.add_argument("--omega", type=float, default=1.0)
            s.add_argument("--R", type=float, default=20.0)
            s.add_argument("--M", type=int, default=1024)
        if name == "sweep":
            s.add_argument("--parallel", type=int, default=1)
    return p


def _fail(code: int, kind: str, message: str) -> int:
    sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    return code


def main(argv=None) -> int:
    if os.environ.get("NLSBRANCH_VERBOSE"):
        logging.basicConfig(level=logging.INFO, stream=sys.stderr)
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        cfg = _load_config(args)
        log.info("running %s", args.command)
        rc = HANDLERS[args.command](args, cfg)
        log.info("%s finished", args.command)
        return int(rc or 0)
    except UsageError as exc:
        return _fail(1, "usage", str(exc))
    except NLSBranchError as exc:
        return _fail(2, exc.code, str(exc))
    except (ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        return _fail(2, type(exc).__name__, str(exc))


if __name__ == "__main__":
    sys.exit(main())
