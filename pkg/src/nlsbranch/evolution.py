"""Time integration of the radial NLS  i u_t + lap u + f(|u|^2) u = 0.

The scheme is the implicit midpoint rule with the Delfour-Fortin-Payre
difference quotient for the nonlinearity,

    i (u^{n+1} - u^n) / dt + lap ubar + V ubar = 0,
    ubar = (u^{n+1} + u^n) / 2,
    V = (F(|u^{n+1}|^2) - F(|u^n|^2)) / (|u^{n+1}|^2 - |u^n|^2),

which conserves the discrete mass for any real V and the discrete energy
once the fixed point in V is converged. Each fixed-point sweep is one
complex tridiagonal solve.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Mapping

import numpy as np

from ._tridiag import tridiag_solve
from .errors import NonConvergence, NumericalBlowupSuspected
from .grid import RadialGrid
from .model import NonlinearityModel

MAX_ITER = 50
FP_TOL = 1e-12
GUARD_FACTOR = 1e3
# growth of max|u| beyond which a failed fixed point is read as collapse
COLLAPSE_FACTOR = 10.0
# step halvings tried before a fixed-point failure is reported
MAX_HALVINGS = 12
# a grown peak narrower than this many cells is an under-resolved collapse
RESOLUTION_CELLS = 4


@dataclass(frozen=True)
class FieldState:
    t: float
    u: np.ndarray
    dt: float
    grid: RadialGrid
    scheme: str = "midpoint-dfp"
    sponge: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        self.grid.check(self.u)
        if not np.all(np.isfinite(self.u)):
            raise ValueError("field has non-finite values")


@dataclass(frozen=True)
class ConservedPair:
    mass: float
    energy: float


def conserved(state: FieldState, model: NonlinearityModel) -> ConservedPair:
    """M = (1/2) sum w |u|^2,  E = (1/2) |grad u|^2 - sum w G(|u|)."""
    g, u = state.grid, state.u
    s = np.abs(u) ** 2
    mass = 0.5 * float(np.sum(g.w * s))
    energy = 0.5 * g.grad_sq(u) - 0.5 * float(np.sum(g.w * model.F(s)))
    return ConservedPair(mass, energy)


def dfp_potential(model: NonlinearityModel, s0, s1):
    """Difference quotient of F between s0 and s1, f at the midpoint when the
    two are too close for the quotient to be accurate."""
    ds = s1 - s0
    mid = 0.5 * (s0 + s1)
    close = np.abs(ds) <= 1e-5 * np.maximum(mid, 1e-300)
    safe = np.where(close, 1.0, ds)
    q = (model.F(s1) - model.F(s0)) / safe
    return np.where(close, model.f(mid), q)


def step(state: FieldState, model: NonlinearityModel,
         dt: float | None = None, tol: float = FP_TOL,
         max_iter: int = MAX_ITER) -> FieldState:
    """One implicit-midpoint step. ``dt`` may be negative (time reversal)."""
    dt = state.dt if dt is None else dt
    grid, u0 = state.grid, state.u
    sub, diag, sup = grid.lap_bands
    a = 0.5j * dt
    lsub, lsup = -a * sub, -a * sup
    base = 1.0 - a * diag
    if state.sponge is not None:
        base = base + 0.5 * dt * state.sponge
    s0 = np.abs(u0) ** 2
    v = u0
    for _ in range(max_iter):
        V = dfp_potential(model, s0, np.abs(v) ** 2)
        ubar = tridiag_solve(lsub, base - a * V, lsup, u0)
        new = 2.0 * ubar - u0
        err = np.max(np.abs(new - v))
        v = new
        if err <= tol * max(np.max(np.abs(new)), 1e-300):
            break
    else:
        raise NonConvergence(
            f"fixed point not converged at t={state.t} (last change {err:.2e})")
    return replace(state, t=state.t + dt, u=v)


Observer = Callable[[FieldState], object]


def _substep(state, model, dt, tol, depth):
    """One step of size dt, split in halves (recursively) when the fixed
    point fails. A final failure carries the last good field in args[1]."""
    try:
        return step(state, model, dt=dt, tol=tol)
    except NonConvergence as exc:
        if depth == 0:
            raise NonConvergence(str(exc), state.u) from exc
    half = _substep(state, model, 0.5 * dt, tol, depth - 1)
    return _substep(half, model, 0.5 * dt, tol, depth - 1)


def _half_width(grid: RadialGrid, u, umax: float) -> float:
    """Distance from the peak to where |u| first falls below half of it."""
    a = np.abs(u)
    k = int(np.argmax(a))
    below = np.nonzero(a[k:] < 0.5 * umax)[0]
    return grid.R if below.size == 0 else float(below[0]) * grid.h


def evolve(state: FieldState, model: NonlinearityModel, T: float,
           observers: Mapping[str, Observer] | None = None, stride: int = 1,
           guard: float = GUARD_FACTOR, tol: float = FP_TOL,
           stop: Callable[[FieldState, dict], bool] | None = None):
    """Step from ``state.t`` to ``T`` (dt adjusted down to land on T).

    Collapse is reported as NumericalBlowupSuspected when max|u| exceeds
    ``guard`` times its initial value, or when it has grown tenfold and the
    peak is narrower than a few cells (the only form collapse can take on a
    uniform grid, where mass per cell caps max|u|).

    Observers are called at t0 and every ``stride`` steps (and at the end);
    ``stop(state, records)`` may end the run early. Returns the final state
    and ``records``: name -> list, plus the list of observation times under
    ``"t"``.
    """
    if not T > state.t:
        raise ValueError("T must exceed the initial time")
    n = int(np.ceil((T - state.t) / state.dt - 1e-9))
    dt = (T - state.t) / n
    t0 = state.t
    state = replace(state, dt=dt)
    observers = dict(observers or {})
    records: dict[str, list] = {"t": []}
    for k in observers:
        records[k] = []
    umax0 = max(float(np.max(np.abs(state.u))), 1e-300)

    def observe(s):
        records["t"].append(s.t)
        for k, fn in observers.items():
            records[k].append(fn(s))

    observe(state)
    for i in range(1, n + 1):
        try:
            new = _substep(state, model, dt, tol, MAX_HALVINGS)
        except NonConvergence as exc:
            grown = float(np.max(np.abs(exc.args[1]))) / umax0 \
                if len(exc.args) > 1 else 0.0
            if grown > COLLAPSE_FACTOR:
                raise NumericalBlowupSuspected(
                    f"fixed point failed after max|u| grew {grown:.1f}x "
                    f"(t={state.t:.4g})") from exc
            raise
        state = replace(new, t=t0 + i * dt)
        umax = float(np.max(np.abs(state.u)))
        if not np.isfinite(umax) or umax > guard * umax0:
            raise NumericalBlowupSuspected(
                f"max|u| = {umax:.3e} exceeds {guard:g} x initial at t={state.t:.4g}")
        if umax > COLLAPSE_FACTOR * umax0:
            width = _half_width(state.grid, state.u, umax)
            if width < RESOLUTION_CELLS * state.grid.h:
                raise NumericalBlowupSuspected(
                    f"peak grew {umax / umax0:.1f}x with half-width "
                    f"{width / state.grid.h:.1f} cells at t={state.t:.4g}")
        if i % stride == 0 or i == n:
            observe(state)
            if stop is not None and stop(state, records):
                break
    return state, records


def gaussian(grid: RadialGrid, amplitude: float = 1.0, b: float = 1.0):
    """amplitude * exp(-r^2 / (4 b))."""
    return amplitude * np.exp(-grid.r ** 2 / (4.0 * b)).astype(complex)


def free_gaussian(grid: RadialGrid, t: float, amplitude: float = 1.0,
                  b: float = 1.0):
    """Exact solution of i u_t + lap u = 0 from :func:`gaussian` data."""
    z = b + 1j * t
    return amplitude * (b / z) ** (grid.N / 2.0) * np.exp(-grid.r ** 2 / (4.0 * z))
