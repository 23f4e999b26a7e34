"""Modulation decomposition u = (phi_omega + b_+ Y_+ + b_- Y_- + eta) e^{i theta}.

(theta, omega) are fixed by the two symplectic orthogonality conditions
against the generalized kernel, b_+- by duality pairings with J Y_-+, and eta
is what remains. Fields use the complex storage of :mod:`spectral`.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NewtonDiverged, OutOfBranch
from .grid import RadialGrid, lr_norm
from .model import NonlinearityModel, admissibility
from .soliton import SolitonBranch
from .spectral import Projections, SpectralBranch, pair

NEWTON_MAX = 30
NEWTON_STEP_TOL = 1e-14


@dataclass
class ModulationState:
    t: float
    theta: float
    omega: float
    b_plus: float
    b_minus: float
    eta: np.ndarray = field(repr=False)
    orth_residuals: np.ndarray
    alpha_ref: float = math.nan
    newton_iterations: int = 0

    def epsilon(self, spectra: SpectralBranch | None) -> np.ndarray:
        if spectra is None:
            return self.eta
        spec = spectra.at(self.omega)
        return self.b_plus * spec.Y_plus + self.b_minus * spec.Y_minus + self.eta

    def reconstruct(self, branch: SolitonBranch,
                    spectra: SpectralBranch | None):
        phi = branch.point(self.omega).phi
        return (phi + self.epsilon(spectra)) * np.exp(1j * self.theta)

    def row(self, grid: RadialGrid, p: float, q: float) -> dict:
        lq = lr_norm(grid, self.eta, q) if math.isfinite(q) else math.nan
        return {"t": self.t, "theta": self.theta, "omega": self.omega,
                "b_plus": self.b_plus, "b_minus": self.b_minus,
                "eta_L2": lr_norm(grid, self.eta, 2),
                "eta_Lp": lr_norm(grid, self.eta, p), "eta_Lq": lq,
                "orth_max": float(np.max(np.abs(self.orth_residuals)))}


def initial_phase(u, phi, grid: RadialGrid) -> float:
    """Phase maximizing Re <u, phi e^{i theta}>."""
    return float(np.angle(np.sum(grid.w * u * phi)))


def decompose(u, guess: tuple[float, float], branch: SolitonBranch,
              spectra: SpectralBranch | None, t: float = 0.0,
              alpha_ref: float = math.nan) -> ModulationState:
    """Newton on rho(theta, omega) = (<Re w - phi, phi>, -<Im w, d phi>),
    w = u e^{-i theta}, then the b_+- and eta extraction.

    ``spectra=None`` is for branches without a real eigenpair; b_+- are then
    zero and eta = eps.
    """
    grid = branch.grid
    u = np.asarray(u, dtype=complex)
    grid.check(u)
    theta, omega = float(guess[0]), float(guess[1])
    w_ = grid.w
    prev = math.inf
    for it in range(1, NEWTON_MAX + 1):
        if not branch.contains(omega):
            raise OutOfBranch(f"omega = {omega:.6g} left {branch.interval}")
        bp = branch.point(omega)
        w = u * np.exp(-1j * theta)
        re, im = w.real - bp.phi, w.imag
        rho = np.array([np.dot(w_, re * bp.phi), -np.dot(w_, im * bp.dphi)])
        jac = np.array([
            [np.dot(w_, w.imag * bp.phi), -bp.slope + np.dot(w_, re * bp.dphi)],
            [np.dot(w_, w.real * bp.dphi), -np.dot(w_, im * bp.d2phi)]])
        try:
            d = np.linalg.solve(jac, -rho)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged("singular modulation Jacobian") from exc
        if not np.all(np.isfinite(d)) or abs(d[0]) > 1.0 or abs(d[1]) > 0.25 * omega:
            raise NewtonDiverged(f"modulation Newton step {d} too large")
        theta += d[0]
        omega += d[1]
        size = max(abs(d[0]), abs(d[1]) / omega)
        if size <= NEWTON_STEP_TOL * (1 + abs(theta)):
            break
        # round-off floor: steps tiny and no longer contracting
        if it > 1 and size <= 1e-10 and size > 0.25 * prev:
            break
        prev = size
    else:
        raise NewtonDiverged("modulation Newton did not converge")
    if not branch.contains(omega):
        raise OutOfBranch(f"omega = {omega:.6g} left {branch.interval}")
    bp = branch.point(omega)
    eps = u * np.exp(-1j * theta) - bp.phi
    if spectra is None:
        # stable branch: no real eigenpair, eps is all continuous spectrum
        orth = np.array([pair(grid, eps, bp.phi), pair(grid, eps, -1j * bp.dphi),
                         0.0, 0.0])
        return ModulationState(t, theta, omega, 0.0, 0.0, eps, orth,
                               alpha_ref, it)
    P = Projections(grid, bp, spectra.at(omega))
    _, _, bplus, bminus = P.coefficients(eps)
    eta = eps - bplus * P.Yp - bminus * P.Ym
    # eta carries the same kernel pairings as eps since Y_+- pair to zero there
    return ModulationState(t, theta, omega, float(bplus), float(bminus), eta,
                           P.orthogonality(eta), alpha_ref, it)


class Tracker:
    """Warm-started decomposition, usable as an evolution observer."""

    def __init__(self, branch: SolitonBranch, spectra: SpectralBranch,
                 guess: tuple[float, float], alpha_ref: float = math.nan):
        self.branch, self.spectra = branch, spectra
        self.theta, self.omega = guess
        self.t_last: float | None = None
        self.alpha_ref = alpha_ref
        self.diverged_at: float | None = None
        self.error: Exception | None = None

    def __call__(self, state) -> ModulationState | None:
        if self.diverged_at is not None:
            return None
        theta = self.theta
        if self.t_last is not None:
            theta += self.omega * (state.t - self.t_last)
        try:
            ms = decompose(state.u, (theta, self.omega), self.branch,
                           self.spectra, t=state.t, alpha_ref=self.alpha_ref)
        except (NewtonDiverged, OutOfBranch) as exc:
            self.diverged_at, self.error = state.t, exc
            return None
        self.theta, self.omega, self.t_last = ms.theta, ms.omega, state.t
        return ms


def track(states, branch: SolitonBranch, spectra: SpectralBranch,
          guess: tuple[float, float], alpha_ref: float = math.nan):
    """Decompose a sequence of FieldStates. Returns (series, T_dec) where
    T_dec is the time of the first failed decomposition, or None."""
    tr = Tracker(branch, spectra, guess, alpha_ref)
    out = []
    for s in states:
        ms = tr(s)
        if ms is None:
            break
        out.append(ms)
    return out, tr.diverged_at


# --- nonlinear remainder ---------------------------------------------------------

def _binomial_remainder(k: float, x):
    """(1 + x)^k - 1 - k x, by its series when |x| is small."""
    x = np.asarray(x, dtype=float)
    small = np.abs(x) < 0.1
    xs = np.where(small, x, 0.0)
    series = np.zeros_like(x)
    coef = k * (k - 1.0) / 2.0
    p = xs * xs
    for n in range(2, 24):
        series = series + coef * p
        coef *= (k - n) / (n + 1.0)
        p = p * xs
    with np.errstate(invalid="ignore"):
        direct = np.maximum(1.0 + x, 0.0) ** k - 1.0 - k * x
    return np.where(small, series, direct)


def nonlinear_remainder(eps, phi, model: NonlinearityModel):
    """N(eps) = g(phi + eps) - g(phi) - Dg(phi) eps and a pointwise bound fit.

    With s = phi^2, ds = 2 phi Re eps + |eps|^2 and f = sum c s^k,
      N = phi (f(s+ds) - f(s) - f'(s) ds + f'(s)|eps|^2) + (f(s+ds) - f(s)) eps,
    the first bracket taken through the binomial remainder so nothing cancels.

    Returns ``(N, report)``; ``report["C"]`` is the smallest constant with
    |N| <= C (A_1 phi^(m1-2)|eps|^2 + A_2 phi^(m2-2)|eps|^2 + |eps|^m1 + |eps|^m2),
    A_j = 1 when m_j > 2 and 0 otherwise.
    """
    eps = np.asarray(eps, dtype=complex)
    phi = np.asarray(phi, dtype=float)
    s = phi * phi
    a = np.abs(eps)
    a2 = a * a
    ds = 2.0 * phi * eps.real + a2
    ok = s > 1e-250
    s_safe = np.where(ok, s, 1.0)
    x = np.where(ok, ds / s_safe, 0.0)
    second = np.zeros_like(s)
    inc = np.zeros_like(s)
    for c, m in model.terms:
        k = 0.5 * (m - 1.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            sk = np.where(ok, s_safe ** k, 0.0)
            second = second + np.where(
                ok, c * sk * _binomial_remainder(k, x) + c * k * sk / s_safe * a2,
                0.0)
            inc = inc + np.where(ok, c * sk * np.expm1(k * np.log1p(np.maximum(x, -1.0))),
                                 c * np.maximum(s + ds, 0.0) ** k)
    N = phi * second + inc * eps
    m1, m2 = model.m1, model.m2
    with np.errstate(divide="ignore", invalid="ignore"):
        shape = a ** m1 + a ** m2
        for m in (m1, m2):
            if m > 2:
                shape = shape + phi ** (m - 2.0) * a2
        ratio = np.where(shape > 0, np.abs(N) / shape, 0.0)
    return N, {"C": float(np.max(ratio)) if ratio.size else 0.0,
               "max_abs": float(np.max(np.abs(N))) if N.size else 0.0}


# --- dynamic equations -------------------------------------------------------------

@dataclass
class DynamicResiduals:
    t: float
    r_omega: float
    r_theta: float
    r_bplus: float
    r_bminus: float
    omega_dot: float
    theta_dot_minus_omega: float
    bplus_relative: float      # |b_+' - e b_+| / (e |b_+|)

    def as_tuple(self):
        return (self.r_omega, self.r_theta, self.r_bplus, self.r_bminus)


def dynamic_residuals(series, branch: SolitonBranch, spectra: SpectralBranch
                      ) -> list[DynamicResiduals]:
    """Both sides of the four parameter equations at interior samples, with
    centered time differences for the derivatives.

    With e = e_+(omega), s = <d phi, phi>, the equations are
      omega' s        = omega' <eps,(dphi,0)> + (theta'-omega) <eps,(0,phi)>
                        - <N,(0,phi)>
      (theta'-omega) s = omega' <eps,(0,d2phi)> - (theta'-omega) <eps,(dphi,0)>
                        + <N,(dphi,0)>
      b_+' = e b_+ - (theta'-omega) <eps,Y_-> + <N,Y_-> - omega' <eps, J dY_->
      b_-' = -e b_- + (theta'-omega) <eps,Y_+> - <N,Y_+> + omega' <eps, J dY_+>
    """
    if len(series) < 3:
        raise ValueError("need at least three samples")
    grid, model = branch.grid, branch.model
    out = []
    for k in range(1, len(series) - 1):
        a, m, b = series[k - 1], series[k], series[k + 1]
        dt = b.t - a.t
        wd = (b.omega - a.omega) / dt
        td = (b.theta - a.theta) / dt - m.omega
        bpd = (b.b_plus - a.b_plus) / dt
        bmd = (b.b_minus - a.b_minus) / dt
        bp = branch.point(m.omega)
        spec = spectra.at(m.omega)
        dre, dim = spectra.derivative(m.omega)
        dYp, dYm = dre + 1j * dim, dre - 1j * dim
        eps = m.b_plus * spec.Y_plus + m.b_minus * spec.Y_minus + m.eta
        N, _ = nonlinear_remainder(eps, bp.phi, model)
        P = lambda f, g: pair(grid, f, g)
        kw, kt = bp.dphi.astype(complex), 1j * bp.phi
        s, e = bp.slope, spec.e_plus
        r_w = wd * s - (wd * P(eps, kw) + td * P(eps, kt) - P(N, kt))
        r_t = td * s - (wd * P(eps, 1j * bp.d2phi) - td * P(eps, kw) + P(N, kw))
        r_p = bpd - (e * m.b_plus - td * P(eps, spec.Y_minus) + P(N, spec.Y_minus)
                     - wd * P(eps, -1j * dYm))
        r_m = bmd - (-e * m.b_minus + td * P(eps, spec.Y_plus) - P(N, spec.Y_plus)
                     + wd * P(eps, -1j * dYp))
        rel = abs(bpd - e * m.b_plus) / (e * abs(m.b_plus)) if m.b_plus else math.nan
        out.append(DynamicResiduals(m.t, abs(r_w), abs(r_t), abs(r_p), abs(r_m),
                                    wd, td, rel))
    return out


def modulation_bound_constant(residuals: list[DynamicResiduals], series,
                              alpha: float, model: NonlinearityModel,
                              escape: bool = False) -> float:
    """Smallest C with |omega'| + |theta' - omega| <= C (alpha^m0 <t>^(-m0 sigma_q)
    [+ |b_+|^m0 in the escape regime]) along the series."""
    rep = admissibility(model.N, model.m1, model.m2)
    m0, sq = rep.m0, rep.sigma_q
    by_t = {ms.t: ms for ms in series}
    C = 0.0
    for r in residuals:
        rhs = alpha ** m0 * (1 + r.t * r.t) ** (-0.5 * m0 * sq)
        if escape:
            rhs += abs(by_t[r.t].b_plus) ** m0
        C = max(C, (abs(r.omega_dot) + abs(r.theta_dot_minus_omega)) / rhs)
    return C


# --- I/O -------------------------------------------------------------------------------

SERIES_HEADER = ["t", "theta", "omega", "b_plus", "b_minus", "eta_L2",
                 "eta_Lp", "eta_Lq", "orth_max"]


def series_exponents(model: NonlinearityModel) -> tuple[float, float]:
    """(p, q) used for the eta norms; q is NaN when the model has no q."""
    p = model.m2 + 1.0
    try:
        q = admissibility(model.N, model.m1, model.m2).q
    except Exception:
        q = math.nan
    return p, q


def write_series_csv(path, series, grid: RadialGrid, model: NonlinearityModel,
                     residuals: list[DynamicResiduals] | None = None) -> None:
    p, q = series_exponents(model)
    res = {r.t: r for r in residuals or []}
    header = SERIES_HEADER + (["r_omega", "r_theta", "r_bplus", "r_bminus"]
                              if residuals is not None else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for ms in series:
            row = ms.row(grid, p, q)
            vals = [row[k] for k in SERIES_HEADER]
            if residuals is not None:
                r = res.get(ms.t)
                vals += list(r.as_tuple()) if r else [math.nan] * 4
            w.writerow([repr(float(v)) for v in vals])
