"""Perturbed-soliton experiments: prepare data, evolve, track the modulation
parameters and classify the run as converging to the branch or escaping
from it."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from enum import Enum

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (DomainError, NLSBranchError, NoRealEigenvalue,
                     NumericalBlowupSuspected, UnachievableAlpha,
                     WindowTooShort)
from .evolution import FieldState, evolve
from .grid import RadialGrid, h1_l1_norm, lr_norm
from .model import NonlinearityModel, admissibility
from .modulation import ModulationState, Tracker, decompose
from .soliton import SolitonBranch
from .spectral import Projections, SpectralBranch

SCHEMA_VERSION = 1

log = logging.getLogger(__name__)


def bracket(t):
    return math.sqrt(1.0 + t * t)


def config_hash(d: dict) -> str:
    """sha256 of the canonical JSON form; insensitive to key order."""
    blob = json.dumps(d, sort_keys=True, separators=(",", ":"), default=float)
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ExperimentConfig:
    model: dict
    grid: dict                        # {"N", "R", "M"} or {"N", "M", "h"}
    interval: tuple[float, float] = (0.5, 2.0)
    omega0: float = 1.0
    theta0: float = 0.0
    c_plus: float = 0.0
    c_minus: float = 0.0
    c_r: float = 0.0
    alpha: float | None = None        # rescale coefficients to this distance
    alpha0: float = 1e-2
    dt: float = 1e-3
    T_max: float = 10.0
    R0: float = 10.0
    stride: int = 10
    bump_center: float = 3.0
    bump_width: float = 1.0
    sponge: float = 0.0               # absorbing strength in the outer shell
    sponge_fraction: float = 0.1
    dist_constant: float = 1.0        # require dist(omega0, bd I) > C alpha0
    name: str = ""
    schema: int = SCHEMA_VERSION

    def __post_init__(self):
        self.interval = tuple(float(x) for x in self.interval)
        lo, hi = self.interval
        if not lo < self.omega0 < hi:
            raise DomainError("omega0 must lie inside the interval")
        if min(self.omega0 - lo, hi - self.omega0) <= self.dist_constant * self.alpha0:
            raise DomainError("omega0 is too close to the interval ends "
                              "for the neighbourhood scale alpha0")
        if self.dt <= 0 or self.T_max <= 0 or self.stride < 1:
            raise DomainError("need dt > 0, T_max > 0, stride >= 1")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["interval"] = list(self.interval)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {k: v for k, v in d.items() if k in cls.__dataclass_fields__}
        return cls(**known)

    def hash(self) -> str:
        return config_hash(self.to_dict())

    def build(self):
        model = NonlinearityModel.from_dict(self.model)
        grid = RadialGrid.from_dict({**self.grid, "N": model.N})
        return model, grid


class Classification(str, Enum):
    CONVERGED = "Converged"
    ESCAPED = "Escaped"
    UNDECIDED = "Undecided"


@dataclass
class RunOutcome:
    classification: Classification
    alpha: float
    alpha0: float
    e_plus0: float
    T_crit: float = math.inf
    T_exit: float = math.nan
    omega_exit: float = math.nan
    theta_exit: float = math.nan
    distance_exit: float = math.nan
    e2: float = math.nan
    growth_exponent: float = math.nan
    mu: float = math.nan
    mu_hat: float = math.nan
    T_dec: float | None = None
    T_end: float = math.nan
    note: str = ""
    config_hash: str = ""
    series: list[ModulationState] = field(default_factory=list, repr=False)
    times: list[float] = field(default_factory=list, repr=False)
    distances: list[float] = field(default_factory=list, repr=False)

    def summary(self) -> dict:
        out = {k: v for k, v in asdict(self).items()
               if k not in ("series", "times", "distances")}
        out["classification"] = self.classification.value
        return {k: (None if isinstance(v, float) and not math.isfinite(v) else v)
                for k, v in out.items()}


# --- data --------------------------------------------------------------------------

class Setup:
    """Branch, spectral data and the radiation bump for one configuration."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.model, self.grid = config.build()
        self.branch = SolitonBranch(self.model, self.grid, config.interval)
        try:
            self.spectra: SpectralBranch | None = SpectralBranch(self.branch)
            self.spectra.at(config.omega0)
        except NoRealEigenvalue:
            self.spectra = None
        self.sponge = (self.grid.sponge(config.sponge, config.sponge_fraction)
                       if config.sponge > 0 else None)

    @property
    def e_plus0(self) -> float:
        if self.spectra is None:
            return math.nan
        return self.spectra.at(self.config.omega0).e_plus

    def bump(self) -> np.ndarray:
        """Smooth radiation profile, unit L^2 before P_c."""
        c = self.config
        g = self.grid
        b = np.exp(-((g.r - c.bump_center) / c.bump_width) ** 2) * (1.0 + 0.5j)
        b /= lr_norm(g, b, 2)
        if self.spectra is None:
            return b
        P = Projections(g, self.branch.point(c.omega0),
                        self.spectra.at(c.omega0))
        return P.Pc(b)


def prepare_data(config: ExperimentConfig, setup: Setup | None = None):
    """u0 = (phi + c_+ Y_+ + c_- Y_- + c_r bump) e^{i theta0}.

    Returns (state, alpha) with alpha the H^1 + L^1 distance to the
    unperturbed soliton.
    """
    setup = setup or Setup(config)
    c, g = config, setup.grid
    phi = setup.branch.point(c.omega0).phi
    pert = c.c_r * setup.bump()
    if c.c_plus or c.c_minus:
        if setup.spectra is None:
            raise UnachievableAlpha("no real eigenpair on this branch")
        spec = setup.spectra.at(c.omega0)
        pert = pert + c.c_plus * spec.Y_plus + c.c_minus * spec.Y_minus
    size = h1_l1_norm(g, pert)
    if not size > 0:
        raise UnachievableAlpha("alpha = 0: the perturbation vanishes")
    if c.alpha is not None:
        if not c.alpha > 0:
            raise UnachievableAlpha("alpha must be positive")
        pert = pert * (c.alpha / size)
        size = h1_l1_norm(g, pert)
        if abs(size / c.alpha - 1) > 1e-2:
            raise UnachievableAlpha(f"measured alpha {size:.3e} off target")
    if size >= c.alpha0:
        raise UnachievableAlpha(f"alpha = {size:.3e} is not below alpha0")
    u0 = (phi + pert) * np.exp(1j * c.theta0)
    return FieldState(0.0, u0, c.dt, g, sponge=setup.sponge), size


# --- distance to the branch ------------------------------------------------------------

def branch_distance(u, branch: SolitonBranch, R0: float,
                    omega_guess: float | None = None, n_grid: int = 9):
    """inf over (omega in I, theta) of ||u - phi_omega e^{i theta}||_{L^2(r<R0)}.

    theta is eliminated in closed form; omega by a grid over I followed by a
    bounded scalar search around the best grid point. Returns
    (distance, omega, theta).
    """
    g = branch.grid
    mask = g.r < R0
    w = g.w[mask]
    um = np.asarray(u)[mask]
    uu = float(np.sum(w * np.abs(um) ** 2))
    lo, hi = branch.interval
    pad = 1e-6 * (hi - lo)

    def d2(om):
        phi = branch.profile(om).phi[mask]
        return uu + float(np.sum(w * phi * phi)) - 2 * abs(np.sum(w * um * phi))

    grid = list(np.linspace(lo + pad, hi - pad, n_grid))
    if omega_guess is not None and branch.contains(omega_guess):
        grid.append(float(omega_guess))
    grid.sort()
    vals = [d2(om) for om in grid]
    k = int(np.argmin(vals))
    a, b = grid[max(k - 1, 0)], grid[min(k + 1, len(grid) - 1)]
    res = minimize_scalar(d2, bounds=(a, b), method="bounded",
                          options={"xatol": 1e-8 * (hi - lo)})
    om, val = (res.x, res.fun) if res.fun < vals[k] else (grid[k], vals[k])
    phi = branch.profile(om).phi[mask]
    theta = float(np.angle(np.sum(w * um * phi)))
    return math.sqrt(max(val, 0.0)), float(om), theta


def _tracked_distance(u, ms: ModulationState, branch: SolitonBranch, R0: float):
    g = branch.grid
    mask = g.r < R0
    diff = u - branch.point(ms.omega).phi * np.exp(1j * ms.theta)
    return math.sqrt(float(np.sum(g.w[mask] * np.abs(diff[mask]) ** 2)))


# --- fits ------------------------------------------------------------------------------

def growth_fit(t, b_plus, window: tuple[float, float] | None = None) -> float:
    """Least-squares slope of log|b_+| against t over the window, which must
    span at least a decade of |b_+|."""
    t = np.asarray(t, dtype=float)
    b = np.abs(np.asarray(b_plus, dtype=float))
    sel = np.ones_like(t, dtype=bool) if window is None else \
        (t >= window[0]) & (t <= window[1])
    sel &= b > 0
    if sel.sum() < 3:
        raise WindowTooShort("fewer than three samples in the window")
    lb = np.log10(b[sel])
    if lb.max() - lb.min() < 1.0:
        raise WindowTooShort("|b_+| spans less than a decade")
    slope, _ = np.polyfit(t[sel], np.log(b[sel]), 1)
    if slope <= 0 or np.argmax(lb) < np.argmin(lb):
        raise WindowTooShort("|b_+| does not grow over the window")
    return float(slope)


def power_law_exponent(t, y) -> float:
    t = np.asarray(t, dtype=float)
    y = np.asarray(y, dtype=float)
    sel = (t > 0) & (y > 0)
    if sel.sum() < 3:
        raise WindowTooShort("too few positive samples for a power-law fit")
    slope, _ = np.polyfit(np.log(t[sel]), np.log(y[sel]), 1)
    return float(slope)


def exit_time_bound(T_crit: float, alpha: float, alpha0: float, e2: float) -> float:
    return T_crit + 5.0 / (4.0 * e2) * math.log(3.0 * alpha0 * bracket(T_crit) / alpha)


def exit_time_check(outcome: RunOutcome) -> dict:
    if outcome.classification is not Classification.ESCAPED:
        raise DomainError("exit-time check needs an escaped run")
    T_crit = outcome.T_crit if math.isfinite(outcome.T_crit) else 0.0
    bound = exit_time_bound(T_crit, outcome.alpha, outcome.alpha0, outcome.e2)
    return {"bound": bound, "observed": outcome.T_exit,
            "satisfied": bool(outcome.T_exit <= bound)}


# --- driver -------------------------------------------------------------------------------

def _mu(model: NonlinearityModel) -> float:
    try:
        return admissibility(model.N, model.m1, model.m2).mu
    except NLSBranchError:
        return math.nan


def run_experiment(config: ExperimentConfig, setup: Setup | None = None
                   ) -> RunOutcome:
    setup = setup or Setup(config)
    c, branch, spectra = config, setup.branch, setup.spectra
    state0, alpha = prepare_data(config, setup)
    ms0 = decompose(state0.u, (c.theta0, c.omega0), branch, spectra,
                    alpha_ref=alpha)
    tracker = Tracker(branch, spectra, (ms0.theta, ms0.omega), alpha)
    out = RunOutcome(Classification.UNDECIDED, alpha, c.alpha0, setup.e_plus0,
                     mu=_mu(setup.model), config_hash=c.hash())

    def observe(state):
        ms = tracker(state)
        if ms is not None:
            out.series.append(ms)
            d = _tracked_distance(state.u, ms, branch, c.R0)
            if not math.isfinite(out.T_crit) and \
                    abs(ms.b_plus) >= alpha / bracket(state.t):
                out.T_crit = state.t
        else:
            d = math.inf
        if d >= 2 * c.alpha0:
            guess = out.series[-1].omega if out.series else c.omega0
            d, om, th = branch_distance(state.u, branch, c.R0, guess)
            if d >= 2 * c.alpha0 and math.isnan(out.T_exit):
                out.T_exit, out.omega_exit, out.theta_exit = state.t, om, th
                out.distance_exit = d
        out.times.append(state.t)
        out.distances.append(d)
        return None

    def stop(state, records):
        return not math.isnan(out.T_exit)

    log.info("evolving to T=%g with alpha=%.3e", c.T_max, alpha)
    try:
        final, _ = evolve(state0, setup.model, c.T_max, {"m": observe},
                          stride=c.stride, stop=stop)
        out.T_end = final.t
    except NumericalBlowupSuspected as exc:
        out.note = f"overflow guard: {exc}"
        out.T_end = out.times[-1] if out.times else 0.0
    out.T_dec = tracker.diverged_at
    _classify(out, setup)
    log.info("%s: %s (T_crit=%s, T_exit=%s)", config.name or out.config_hash,
             out.classification.value, out.T_crit, out.T_exit)
    return out


def _classify(out: RunOutcome, setup: Setup) -> None:
    c = setup.config
    ser = out.series
    if not math.isnan(out.T_exit):
        out.classification = Classification.ESCAPED
        T_crit = out.T_crit if math.isfinite(out.T_crit) else 0.0
        pre = [m for m in ser if m.t >= T_crit]
        om = pre[0].omega if pre else c.omega0
        out.e2 = (setup.spectra.at(om).e_plus if setup.spectra is not None
                  else math.nan)
        try:
            out.growth_exponent = growth_fit([m.t for m in ser],
                                             [m.b_plus for m in ser],
                                             (T_crit, out.T_exit))
        except WindowTooShort as exc:
            out.note = (out.note + "; " if out.note else "") + str(exc)
        return
    reached = out.T_end >= c.T_max * (1 - 1e-12) and out.T_dec is None
    if not reached or math.isfinite(out.T_crit):
        return
    half = [m for m in ser if m.t >= 0.5 * c.T_max]
    p = setup.model.m2 + 1.0
    try:
        out.mu_hat = power_law_exponent([m.t for m in half],
                                        [lr_norm(setup.grid, m.eta, p) for m in half])
    except WindowTooShort:
        return
    mu = out.mu if math.isfinite(out.mu) else 0.0
    if out.mu_hat <= -0.5 * mu:
        out.classification = Classification.CONVERGED


# --- sweeps -----------------------------------------------------------------------------

def _sweep_row(cfg_dict: dict) -> dict:
    row = {"config_hash": config_hash(cfg_dict), "name": cfg_dict.get("name", ""),
           "classification": None, "T_crit": None, "T_exit": None,
           "growth_exponent": None, "mu_hat": None, "error": None}
    try:
        res = run_experiment(ExperimentConfig.from_dict(cfg_dict)).summary()
        for k in ("classification", "T_crit", "T_exit", "growth_exponent",
                  "mu_hat"):
            row[k] = res[k]
    except Exception as exc:  # per-row capture, the sweep carries on
        row["error"] = f"{type(exc).__name__}: {exc}"
    return row


def sweep(configs, parallelism: int = 1) -> list[dict]:
    """Run configs independently; rows come back in input order."""
    dicts = [c.to_dict() if isinstance(c, ExperimentConfig) else dict(c)
             for c in configs]
    if not dicts:
        return []
    if parallelism <= 1:
        return [_sweep_row(d) for d in dicts]
    with ProcessPoolExecutor(max_workers=parallelism) as ex:
        return list(ex.map(_sweep_row, dicts))


SWEEP_HEADER = ["config_hash", "name", "classification", "T_crit", "T_exit",
                "growth_exponent", "mu_hat", "error"]
