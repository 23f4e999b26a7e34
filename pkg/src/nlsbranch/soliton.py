"""Ground states phi_omega of  lap phi - omega phi + f(phi^2) phi = 0.

The continuous radial ODE is shot from r = 0 to bracket phi(0); the shot is
then used as the starting point of Newton's method on the discrete boundary
value problem, so that profiles are exact stationary states of the discrete
evolution. Branch points carry d/domega and d^2/domega^2 of the profile.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq
from scipy.special import kve

from ._tridiag import tridiag_apply, tridiag_solve
from .errors import DomainError, NoConvergence, NoGroundState, SolveFailure
from .grid import RadialGrid, inner
from .model import NonlinearityModel

log = logging.getLogger(__name__)

FD_AGREEMENT = 1e-4


def schrodinger_bands(grid: RadialGrid, omega: float, V: np.ndarray):
    """Bands of -lap + omega - V."""
    sub, diag, sup = grid.lap_bands
    return -sub, -diag + omega - V, -sup


@dataclass
class SolitonProfile:
    omega: float
    phi: np.ndarray
    phi0: float
    residual: float
    grid: RadialGrid

    def mass(self) -> float:
        return 0.5 * inner(self.grid, self.phi, self.phi)


@dataclass
class BranchPoint:
    """Profile and its first two omega-derivatives at one frequency."""

    omega: float
    phi: np.ndarray
    dphi: np.ndarray
    d2phi: np.ndarray
    slope: float          # <d_omega phi, phi> = (1/2) d/domega ||phi||^2
    residual: float


class Stability(str, Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    DEGENERATE = "Degenerate"


# --- continuous shooting -------------------------------------------------------

def existence_scan(model: NonlinearityModel, omega: float) -> float | None:
    """Return some u1 > 0 with G(u1) > omega u1^2 / 2, or None."""
    u = np.logspace(-4, 4, 4001)
    ok = model.G(u) > 0.5 * omega * u * u
    return float(u[np.argmax(ok)]) if ok.any() else None


def one_dim_amplitude(model: NonlinearityModel, omega: float) -> float:
    """phi(0) of the N = 1 ground state: the first root of G(a) = omega a^2/2."""
    u1 = existence_scan(model, omega)
    if u1 is None:
        raise NoGroundState(f"no u1 with G(u1) > omega u1^2/2 at omega={omega}")

    def gap(a):
        return float(model.G(a)) - 0.5 * omega * a * a

    lo = u1
    while gap(lo) > 0 and lo > 1e-12:
        lo *= 0.5
    return brentq(gap, lo, u1, xtol=1e-15, rtol=1e-15)


def _shoot(model, omega, a, r_max, dense=False):
    N = model.N
    c = (omega * a - float(model.f(a * a)) * a) / (2.0 * N)
    r0 = 1e-4 / math.sqrt(max(omega, abs(c) / max(a, 1e-300), 1.0))
    y0 = [a + c * r0 * r0, 2.0 * c * r0]

    def rhs(r, y):
        return [y[1], -(N - 1) / r * y[1] + omega * y[0]
                - float(model.f(y[0] * y[0])) * y[0]]

    def crosses(r, y):
        return y[0]
    crosses.terminal, crosses.direction = True, -1

    def turns(r, y):
        return y[1]
    turns.terminal, turns.direction = True, 1

    def grows(r, y):
        return y[0] - 10.0 * a
    grows.terminal = True

    sol = solve_ivp(rhs, (r0, r_max), y0, method="DOP853", rtol=1e-12,
                    atol=1e-14 * a, events=(crosses, turns, grows),
                    dense_output=dense)
    if sol.t_events[0].size:
        return "over", sol.t_events[0][0], sol
    if sol.t_events[1].size or sol.t_events[2].size:
        r_ev = (sol.t_events[1] if sol.t_events[1].size else sol.t_events[2])[0]
        return "under", r_ev, sol
    return "none", r_max, sol


def shoot_amplitude(model, omega, r_max, max_iter=200):
    """Bisect phi(0) between shots that cross zero and shots that turn up.

    Returns (a, r_event, dense solution) for the longest-lived shot.
    """
    a0 = one_dim_amplitude(model, omega)
    outcome, r_ev, sol = _shoot(model, omega, a0, r_max)
    lo = hi = None
    if outcome == "under":
        lo, hi = a0, 2.0 * a0
        while _shoot(model, omega, hi, r_max)[0] == "under":
            lo, hi = hi, 2.0 * hi
            if hi > 1e8 * a0:
                raise NoConvergence("could not bracket phi(0) from above")
    elif outcome == "over":
        lo, hi = 0.5 * a0, a0
        while _shoot(model, omega, lo, r_max)[0] == "over":
            lo, hi = 0.5 * lo, lo
            if lo < 1e-8 * a0:
                raise NoConvergence("could not bracket phi(0) from below")
    else:
        _, r_ev, sol = _shoot(model, omega, a0, r_max, dense=True)
        return a0, r_ev, sol

    best = None
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        outcome, r_ev, _ = _shoot(model, omega, mid, r_max)
        if best is None or r_ev > best[1]:
            best = (mid, r_ev)
        if outcome == "over":
            hi = mid
        elif outcome == "under":
            lo = mid
        else:
            break
    if best is None:
        raise NoConvergence("bisection interval collapsed immediately")
    a = best[0]
    _, r_ev, sol = _shoot(model, omega, a, r_max, dense=True)
    return a, r_ev, sol


def _decaying_mode(N: int, k: float, r: np.ndarray) -> np.ndarray:
    """Decaying radial solution of lap psi = k^2 psi, scaled by exp(k r)."""
    nu = 0.5 * (N - 2)
    return r ** (-nu) * kve(nu, k * r)


def _initial_guess(model, omega, grid: RadialGrid):
    a, r_ev, sol = shoot_amplitude(model, omega, grid.R)
    r = grid.r
    vals = sol.sol(np.clip(r, sol.t[0], sol.t[-1]))[0]
    vals[r < sol.t[0]] = a
    # trust the shot while it is well above the bisection noise floor
    trusted = (r < r_ev) & (vals > 1e-4 * a)
    idx = np.flatnonzero(trusted)
    cut = idx[-1] if idx.size else 0
    k = math.sqrt(omega)
    tail = _decaying_mode(grid.N, k, r[cut:])
    phi = vals.copy()
    phi[cut:] = vals[cut] * tail / tail[0] * np.exp(-k * (r[cut:] - r[cut]))
    return a, phi


# --- discrete Newton ---------------------------------------------------------------

def profile_residual(model, omega, grid: RadialGrid, phi):
    return grid.lap(phi) - omega * phi + model.f(phi * phi) * phi


def newton_profile(model, omega, grid: RadialGrid, phi, max_iter=40):
    """Newton on the discrete profile equation; Jacobian is -L_+."""
    phi = np.array(phi, dtype=float)
    sub, diag, sup = grid.lap_bands
    last = math.inf
    for it in range(max_iter):
        F = profile_residual(model, omega, grid, phi)
        J_diag = diag - omega + model.dg(phi)
        delta = tridiag_solve(sub, J_diag, sup, -F)
        phi += delta
        step = float(np.max(np.abs(delta)))
        if step <= 1e-14 * float(np.max(np.abs(phi))):
            break
        if it > 5 and step > 0.5 * last and step < 1e-9 * np.max(np.abs(phi)):
            break   # stagnated at round-off
        last = step
    else:
        raise NoConvergence(f"profile Newton did not converge at omega={omega}")
    F = profile_residual(model, omega, grid, phi)
    return phi, float(np.max(np.abs(F)))


def _check_ground_state(phi, omega):
    if not np.all(phi > 0):
        raise NoConvergence(f"profile at omega={omega} is not positive")
    scale = float(phi.max())
    if np.any(np.diff(phi) > 1e-10 * scale):
        raise NoConvergence(f"profile at omega={omega} is not monotone")


def solve_profile(model: NonlinearityModel, omega: float, grid: RadialGrid,
                  tol: float = 1e-8) -> SolitonProfile:
    """Ground state at ``omega`` on ``grid``: shooting, then discrete Newton."""
    if not omega > 0:
        raise DomainError("omega must be positive")
    if grid.N != model.N:
        raise DomainError("grid and model dimensions differ")
    if existence_scan(model, omega) is None:
        raise NoGroundState(f"G(u) <= omega u^2/2 for all scanned u (omega={omega})")
    a, guess = _initial_guess(model, omega, grid)
    phi, res = newton_profile(model, omega, grid, guess)
    if res > tol:
        raise NoConvergence(f"residual {res:.3e} exceeds tol {tol:.1e}")
    _check_ground_state(phi, omega)
    return SolitonProfile(omega, phi, a, res, grid)


def tail_slope(profile: SolitonProfile, floor: float = 1e-12) -> float:
    """Least-squares slope of log phi over the last quarter of its support.

    The support ends where phi drops below ``floor * phi(0)`` or at 0.8 R,
    whichever comes first, to stay clear of the Dirichlet wall.
    """
    r, phi = profile.grid.r, profile.phi
    below = np.flatnonzero(phi < floor * phi[0])
    r_end = min(r[below[0]] if below.size else r[-1], 0.8 * profile.grid.R)
    sel = (r >= 0.75 * r_end) & (r <= r_end)
    return float(np.polyfit(r[sel], np.log(phi[sel]), 1)[0])


# --- branches ---------------------------------------------------------------------

class SolitonBranch:
    """Profiles over an interval of frequencies, solved on demand and cached.

    Anchors sit on a lattice in log omega around a fixed root (the geometric
    midpoint of the interval); the root is solved from scratch and each other
    anchor by Newton from its neighbour toward the root. A general omega is
    one Newton solve from its nearest anchor with a second-order Taylor
    predictor, so profiles depend on omega alone and not on query order.
    """

    def __init__(self, model: NonlinearityModel, grid: RadialGrid,
                 interval: tuple[float, float] | None = None,
                 tol: float = 1e-8, h_omega_rel: float = 1e-3,
                 max_cache: int = 512, spacing: float = 0.02):
        if grid.N != model.N:
            raise DomainError("grid and model dimensions differ")
        self.model, self.grid = model, grid
        self.interval = tuple(interval) if interval is not None else (0.0, math.inf)
        lo, hi = self.interval
        self.omega_root = math.sqrt(lo * hi) if lo > 0 and math.isfinite(hi) else 1.0
        self.tol = tol
        self.h_omega_rel = h_omega_rel
        self.max_cache = max_cache
        self.spacing = spacing
        self._anchors: dict[int, BranchPoint] = {}
        self._profiles: dict[float, SolitonProfile] = {}
        self._points: dict[float, BranchPoint] = {}

    def contains(self, omega: float) -> bool:
        lo, hi = self.interval
        return lo < omega < hi

    def _remember(self, cache: dict, key: float, value) -> None:
        if len(cache) >= self.max_cache:
            cache.pop(next(iter(cache)))
        cache[key] = value

    def _lattice(self, k: int) -> float:
        return self.omega_root * math.exp(k * self.spacing)

    def _continue(self, bp: BranchPoint | None, omega: float) -> SolitonProfile:
        if bp is not None:
            d = omega - bp.omega
            guess = bp.phi + d * bp.dphi + 0.5 * d * d * bp.d2phi
            try:
                phi, res = newton_profile(self.model, omega, self.grid, guess)
                _check_ground_state(phi, omega)
                if res <= self.tol:
                    return SolitonProfile(omega, phi, float(phi[0]), res, self.grid)
            except (NoConvergence, SolveFailure):
                pass
        return solve_profile(self.model, omega, self.grid, self.tol)

    def _anchor(self, k: int) -> BranchPoint:
        hit = self._anchors.get(k)
        if hit is not None:
            return hit
        if 0 not in self._anchors:
            self._anchors[0] = self._derivatives(self._continue(None, self.omega_root))
        step = 1 if k > 0 else -1
        i, prev = 0, self._anchors[0]
        while i != k:
            i += step
            if i not in self._anchors:
                self._anchors[i] = self._derivatives(
                    self._continue(prev, self._lattice(i)))
            prev = self._anchors[i]
        return prev

    def _derivatives(self, prof: SolitonProfile) -> BranchPoint:
        omega, phi = prof.omega, prof.phi
        bands = self.lplus_bands(omega, phi)
        dphi = _checked_solve(bands, -phi, omega)
        rhs = -2.0 * dphi + self.model.d2g(phi) * dphi * dphi
        d2phi = _checked_solve(bands, rhs, omega)
        return BranchPoint(omega, phi, dphi, d2phi,
                           inner(self.grid, dphi, phi), prof.residual)

    def profile(self, omega: float) -> SolitonProfile:
        omega = float(omega)
        hit = self._profiles.get(omega)
        if hit is not None:
            return hit
        k = int(round(math.log(omega / self.omega_root) / self.spacing))
        anchor = self._anchor(k)
        if anchor.omega == omega:
            prof = SolitonProfile(omega, anchor.phi, float(anchor.phi[0]),
                                  anchor.residual, self.grid)
        else:
            prof = self._continue(anchor, omega)
        self._remember(self._profiles, omega, prof)
        return prof

    def lplus_bands(self, omega: float, phi: np.ndarray):
        return schrodinger_bands(self.grid, omega, self.model.dg(phi))

    def point(self, omega: float) -> BranchPoint:
        omega = float(omega)
        hit = self._points.get(omega)
        if hit is not None:
            return hit
        bp = self._derivatives(self.profile(omega))
        self._remember(self._points, omega, bp)
        return bp

    def slope(self, omega: float) -> float:
        return self.point(omega).slope


def _checked_solve(bands, rhs, omega):
    x = tridiag_solve(*bands, rhs)
    if not np.all(np.isfinite(x)):
        raise SolveFailure(f"L_+ singular at omega={omega}")
    back = tridiag_apply(*bands, x)
    err = np.linalg.norm(back - rhs) / max(np.linalg.norm(rhs), 1e-300)
    if np.linalg.norm(x) > 1e12 * np.linalg.norm(rhs) or err > 1e-6:
        raise SolveFailure(f"L_+ numerically singular at omega={omega} "
                           "(near-degenerate branch point)")
    return x


@dataclass
class DomegaResult:
    dphi: np.ndarray          # from the linear solve L_+ x = -phi
    d2phi: np.ndarray         # from the differentiated linear solve
    dphi_fd: np.ndarray       # centered difference in omega
    d2phi_fd: np.ndarray      # centered second difference in omega
    agreement: float          # relative L^2 gap between the two dphi routes
    h_omega: float


def domega_profile(branch: SolitonBranch, omega: float,
                   h_omega: float | None = None) -> DomegaResult:
    """d_omega phi by two independent routes that must agree."""
    h = h_omega if h_omega is not None else branch.h_omega_rel * omega
    bp = branch.point(omega)
    p_plus = branch.profile(omega + h).phi
    p_minus = branch.profile(omega - h).phi
    fd = (p_plus - p_minus) / (2.0 * h)
    fd2 = (p_plus - 2.0 * bp.phi + p_minus) / (h * h)
    g = branch.grid
    gap = math.sqrt(inner(g, fd - bp.dphi, fd - bp.dphi)
                    / inner(g, bp.dphi, bp.dphi))
    if gap > max(FD_AGREEMENT, 10.0 * h * h):
        raise SolveFailure(f"d_omega phi routes disagree ({gap:.2e}) at "
                           f"omega={omega}")
    return DomegaResult(bp.dphi, bp.d2phi, fd, fd2, gap, h)


def d2omega_profile(branch: SolitonBranch, omega: float) -> np.ndarray:
    return branch.point(omega).d2phi


def stability_classification(branch: SolitonBranch, omega: float,
                             tol: float = 1e-3) -> Stability:
    """Sign of <d_omega phi, phi>; Degenerate when it is within tol ||phi||^2."""
    bp = branch.point(omega)
    norm2 = inner(branch.grid, bp.phi, bp.phi)
    if abs(bp.slope) < tol * norm2:
        return Stability.DEGENERATE
    return Stability.STABLE if bp.slope > 0 else Stability.UNSTABLE
