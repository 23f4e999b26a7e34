"""Linearization about a soliton: L_+, L_-, the real eigenpair of JL and the
spectral projections onto the generalized kernel, the real eigenpair and the
continuous part.

Two-component real fields (a, b) are stored as complex arrays a + i b. Under
this identification the pairing is ``Re sum w f conj(g)`` and the symplectic
matrix J = [[0, 1], [-1, 0]] acts as multiplication by -i.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.linalg import eigh, eigh_tridiagonal
from scipy.sparse.linalg import splu

from ._tridiag import tridiag_apply
from .errors import (DegenerateNormalization, DegenerateSlope, DomainError,
                     NoConvergence, NoRealEigenvalue)
from .grid import RadialGrid, inner
from .model import NonlinearityModel
from .soliton import BranchPoint, SolitonBranch, schrodinger_bands


def pair(grid: RadialGrid, f, g) -> float:
    return float(np.real(np.sum(grid.w * f * np.conj(g))))


def J(f):
    return -1j * f


@dataclass
class LinearizedOperators:
    grid: RadialGrid
    omega: float
    phi: np.ndarray
    plus: tuple          # bands of L_+
    minus: tuple         # bands of L_-
    V_plus: np.ndarray   # L_+ = -lap + omega - V_plus
    V_minus: np.ndarray

    def L_plus(self, x):
        return tridiag_apply(*self.plus, x)

    def L_minus(self, x):
        return tridiag_apply(*self.minus, x)

    def JL(self, f):
        """JL (a, b) = (L_- b, -L_+ a)."""
        return self.L_minus(f.imag) - 1j * self.L_plus(f.real)

    def sparse(self, which: str) -> sp.csc_matrix:
        sub, diag, sup = self.plus if which == "plus" else self.minus
        return sp.diags([sub, diag, sup], [-1, 0, 1], format="csc")

    def block_matrix(self) -> np.ndarray:
        """Dense real 2M x 2M matrix of JL acting on (a, b)."""
        M = self.grid.M
        A = np.zeros((2 * M, 2 * M))
        A[:M, M:] = self.sparse("minus").toarray()
        A[M:, :M] = -self.sparse("plus").toarray()
        return A


def build_operators(point: BranchPoint | np.ndarray, model: NonlinearityModel,
                    grid: RadialGrid, omega: float | None = None
                    ) -> LinearizedOperators:
    """L_+ = -lap + omega - (f + 2 s f'), L_- = -lap + omega - f at s = phi^2."""
    if isinstance(point, BranchPoint):
        phi, omega = point.phi, point.omega
    else:
        phi = np.asarray(point)
        if omega is None:
            raise ValueError("omega is required with a bare profile")
    s = phi * phi
    V_minus = model.f(s)
    V_plus = V_minus + 2.0 * model.s_fprime(s)
    return LinearizedOperators(grid, omega, phi,
                               schrodinger_bands(grid, omega, V_plus),
                               schrodinger_bands(grid, omega, V_minus),
                               V_plus, V_minus)


def _symmetrized(grid: RadialGrid, bands):
    """Diagonal and off-diagonal of W^(1/2) L W^(-1/2) (symmetric)."""
    sub, diag, sup = bands
    w = grid.w
    return diag.copy(), sup * np.sqrt(w[:-1] / w[1:])


@dataclass
class DiscreteSpectrum:
    omega: float
    e_plus: float
    Y_re: np.ndarray
    Y_im: np.ndarray
    pre_normalization: float         # <Y_re, Y_im> before rescaling
    normalization: float             # 2 <Y_re, Y_im> after rescaling
    residual: float                  # max of the two eigen-equation residuals
    gap_to_continuum: float = math.nan
    kernel_eigenvalue: float = math.nan
    gap_ratio: float = math.nan
    composed_eigenvalues: np.ndarray | None = field(default=None, repr=False)

    @property
    def e_minus(self) -> float:
        return -self.e_plus

    @property
    def Y_plus(self) -> np.ndarray:
        return self.Y_re + 1j * self.Y_im

    @property
    def Y_minus(self) -> np.ndarray:
        return self.Y_re - 1j * self.Y_im

    def to_dict(self) -> dict:
        return {"omega": self.omega, "e_plus": self.e_plus,
                "gap_to_continuum": self.gap_to_continuum,
                "normalization_check": self.normalization,
                "pre_normalization": self.pre_normalization,
                "residual": self.residual,
                "kernel_eigenvalue": self.kernel_eigenvalue,
                "gap_ratio": self.gap_ratio}


def _normalize(ops, Y_re, Y_im, e, sign_ref=None):
    grid = ops.grid
    pre = inner(grid, Y_re, Y_im)
    if not pre > 0:
        raise DegenerateNormalization(
            f"<Y_re, Y_im> = {pre:.3e} <= 0 before normalization")
    c = 1.0 / math.sqrt(2.0 * pre)
    Y_re, Y_im = c * Y_re, c * Y_im
    if sign_ref is not None:
        flip = inner(grid, Y_re, sign_ref) < 0
    else:
        k = 0 if abs(Y_re[0]) > 1e-3 * np.max(np.abs(Y_re)) else np.argmax(np.abs(Y_re))
        flip = Y_re[k] < 0
    if flip:
        Y_re, Y_im = -Y_re, -Y_im
    res = max(np.max(np.abs(ops.L_minus(Y_im) - e * Y_re)),
              np.max(np.abs(ops.L_plus(Y_re) + e * Y_im)))
    return Y_re, Y_im, pre, 2.0 * inner(grid, Y_re, Y_im), float(res)


def composed_spectrum(ops: LinearizedOperators):
    """Eigen-decomposition of -L_- L_+ through a symmetric similarity.

    With L_- = Q diag(lam) Q^T (after the W^(1/2) similarity) and lam >= 0,
    the nonzero eigenvalues of -L_- L_+ are those of
    -D Q^T L_+ Q D, D = diag(sqrt(lam)), which is symmetric. Returns the
    eigenvalues (real, ascending) and a function mapping an eigenvector of
    the symmetric matrix back to Y_re.
    """
    grid = ops.grid
    dm, em = _symmetrized(grid, ops.minus)
    lam, Q = eigh_tridiagonal(dm, em)
    D = np.sqrt(np.clip(lam, 0.0, None))
    dp, ep = _symmetrized(grid, ops.plus)
    LQ = dp[:, None] * Q
    LQ[:-1] += ep[:, None] * Q[1:]
    LQ[1:] += ep[:, None] * Q[:-1]
    S = -(D[:, None] * (Q.T @ LQ) * D[None, :])
    vals, vecs = eigh(S)
    sw = np.sqrt(grid.w)

    def back(z):
        return (Q @ (D * z)) / sw

    return vals, vecs, back, float(np.max(np.abs(vals)))


def unstable_eigenpair(ops: LinearizedOperators, refine: bool = True,
                       guess: DiscreteSpectrum | None = None,
                       guess_grid: RadialGrid | None = None
                       ) -> DiscreteSpectrum:
    """Largest real eigenvalue e_+ of JL with Y_im = -L_+ Y_re / e_+ and
    2 <Y_re, Y_im> = 1.

    With ``guess`` (an eigenpair on ``guess_grid``) the dense solve is skipped:
    the guess is interpolated onto ``ops.grid`` and polished by Newton. The
    gap diagnostics are then left as NaN.
    """
    if guess is not None:
        src = guess_grid if guess_grid is not None else ops.grid
        r = ops.grid.r
        seed = DiscreteSpectrum(
            guess.omega, guess.e_plus,
            np.interp(r, src.r, guess.Y_re, right=0.0),
            np.interp(r, src.r, guess.Y_im, right=0.0), math.nan, math.nan,
            math.nan)
        return refine_eigenpair(ops, seed)
    vals, vecs, back, scale = composed_spectrum(ops)
    tol = max(1e-6, 1e3 * np.finfo(float).eps * scale)
    if not vals[-1] > tol:
        raise NoRealEigenvalue(
            f"no positive eigenvalue of -L_- L_+ above {tol:.1e} "
            f"(largest {vals[-1]:.3e}) at omega={ops.omega}")
    n_pos = int(np.sum(vals > tol))
    e2 = float(vals[-1])
    e = math.sqrt(e2)
    Y_re = back(vecs[:, -1])
    Y_im = -ops.L_plus(Y_re) / e
    Y_re, Y_im, pre, nrm, res = _normalize(ops, Y_re, Y_im, e)
    rest = vals[:-1]
    k0 = int(np.argmin(np.abs(rest)))
    kernel = float(rest[k0])
    cont = np.delete(rest, k0)
    gap = float(np.sqrt(-cont[cont < 0].max())) if np.any(cont < 0) else math.nan
    spec = DiscreteSpectrum(ops.omega, e, Y_re, Y_im, pre, nrm, res,
                            gap_to_continuum=gap, kernel_eigenvalue=kernel,
                            gap_ratio=e2 / max(abs(kernel), tol * 1e-6),
                            composed_eigenvalues=vals)
    if n_pos > 1:
        spec.gap_ratio = e2 / float(vals[-2])
    if refine:
        ref = refine_eigenpair(ops, spec)
        ref.gap_to_continuum, ref.kernel_eigenvalue = gap, kernel
        ref.gap_ratio, ref.composed_eigenvalues = spec.gap_ratio, vals
        spec = ref
    return spec


def _bordered_jacobian(ops, a, b, e, ra, rb) -> sp.csc_matrix:
    """Newton matrix with unknowns interleaved as (a_0, b_0, a_1, b_1, ..., e):
    banded apart from the last row and column. The diagonal dominates the
    band (|L_+-| diagonals ~ 1/h^2 against e), so LU without pivoting in the
    natural order is safe and keeps the fill linear in M."""
    M = ops.grid.M
    ia, ib, ie = 2 * np.arange(M), 2 * np.arange(M) + 1, 2 * M
    (ps, pd, pu), (ms, md, mu) = ops.plus, ops.minus
    rows = [ia, ia[1:], ia[:-1], ia, ib, ib[1:], ib[:-1], ib, ia, ib,
            np.full(M, ie), np.full(M, ie)]
    cols = [ia, ia[:-1], ia[1:], ib, ib, ib[:-1], ib[1:], ia,
            np.full(M, ie), np.full(M, ie), ia, ib]
    vals = [pd, ps, pu, np.full(M, e), md, ms, mu, np.full(M, -e), b, -a, ra, rb]
    return sp.csc_matrix((np.concatenate(vals),
                          (np.concatenate(rows), np.concatenate(cols))),
                         shape=(2 * M + 1, 2 * M + 1))


def refine_eigenpair(ops: LinearizedOperators, guess: DiscreteSpectrum,
                     max_iter: int = 30) -> DiscreteSpectrum:
    """Newton on L_+ a + e b = 0, L_- b - e a = 0 with a linear normalization.

    Used both to polish the dense eigenpair and to continue it to a nearby
    omega (``ops`` at the new frequency, ``guess`` from the old one).
    """
    grid = ops.grid
    M = grid.M
    a, b, e = guess.Y_re.copy(), guess.Y_im.copy(), guess.e_plus
    ra, rb = guess.Y_re * grid.w, guess.Y_im * grid.w
    target = float(ra @ guess.Y_re + rb @ guess.Y_im)
    for _ in range(max_iter):
        F = np.concatenate([ops.L_plus(a) + e * b, ops.L_minus(b) - e * a,
                            [ra @ a + rb @ b - target]])
        rhs = np.empty(2 * M + 1)
        rhs[0:2 * M:2], rhs[1:2 * M:2], rhs[-1] = -F[:M], -F[M:2 * M], -F[-1]
        x = splu(_bordered_jacobian(ops, a, b, e, ra, rb),
                 permc_spec="NATURAL", diag_pivot_thresh=0.0).solve(rhs)
        d = np.concatenate([x[0:2 * M:2], x[1:2 * M:2], x[-1:]])
        a += d[:M]
        b += d[M:2 * M]
        e += d[-1]
        if np.max(np.abs(d[:2 * M])) <= 1e-13 * np.max(np.abs(a)) and \
                abs(d[-1]) <= 1e-13 * abs(e):
            break
    else:
        raise NoConvergence(f"eigenpair Newton failed at omega={ops.omega}")
    if not e > 0:
        raise NoRealEigenvalue(f"continued eigenvalue {e:.3e} is not positive")
    Y_re, Y_im, pre, nrm, res = _normalize(ops, a, b, e, sign_ref=guess.Y_re)
    return DiscreteSpectrum(ops.omega, float(e), Y_re, Y_im, pre, nrm, res)


def block_eigenvalues(ops: LinearizedOperators) -> np.ndarray:
    """All eigenvalues of the dense 2M x 2M JL (independent oracle)."""
    return np.linalg.eigvals(ops.block_matrix())


# --- spectral data along a branch ----------------------------------------------

class SpectralBranch:
    """Eigenpairs along a soliton branch.

    Anchors sit on a fixed lattice in log omega with spacing ``spacing`` and
    come from the dense solve; every other frequency is one Newton
    refinement from its nearest anchor. Results therefore depend on omega
    alone, not on the order of queries.
    """

    def __init__(self, branch: SolitonBranch, spacing: float = 0.02,
                 h_omega_rel: float = 1e-3):
        if not spacing > 0:
            raise DomainError("anchor spacing must be positive")
        self.branch = branch
        self.spacing = spacing
        self.h_omega_rel = h_omega_rel
        self._anchors: dict[int, DiscreteSpectrum] = {}
        self._cache: dict[float, DiscreteSpectrum] = {}

    def operators(self, omega: float) -> LinearizedOperators:
        return build_operators(self.branch.point(omega), self.branch.model,
                               self.branch.grid)

    def anchor(self, omega: float) -> DiscreteSpectrum:
        k = int(round(math.log(omega / self.branch.omega_root) / self.spacing))
        hit = self._anchors.get(k)
        if hit is None:
            w = self.branch.omega_root * math.exp(k * self.spacing)
            hit = self._anchors[k] = unstable_eigenpair(self.operators(w))
        return hit

    def at(self, omega: float) -> DiscreteSpectrum:
        omega = float(omega)
        hit = self._cache.get(omega)
        if hit is not None:
            return hit
        anchor = self.anchor(omega)
        spec = anchor if anchor.omega == omega else \
            refine_eigenpair(self.operators(omega), anchor)
        if len(self._cache) > 256:
            self._cache.pop(next(iter(self._cache)))
        self._cache[omega] = spec
        return spec

    def derivative(self, omega: float):
        """Centered omega-differences of (Y_re, Y_im)."""
        h = self.h_omega_rel * omega
        sp_, sm = self.at(omega + h), self.at(omega - h)
        return (sp_.Y_re - sm.Y_re) / (2 * h), (sp_.Y_im - sm.Y_im) / (2 * h)

    def projections(self, omega: float) -> "Projections":
        return Projections(self.branch.grid, self.branch.point(omega),
                           self.at(omega))


# --- projections ---------------------------------------------------------------

class Projections:
    """P_0, P_1 and P_c = Id - P_0 - P_1 built from duality pairings with the
    adjoint (generalized) eigenfunctions J(0, phi), J(d phi, 0), J Y_+-."""

    def __init__(self, grid: RadialGrid, point: BranchPoint,
                 spectrum: DiscreteSpectrum, slope_tol: float = 1e-12):
        if abs(point.slope) < slope_tol:
            raise DegenerateSlope(f"|<d phi, phi>| = {abs(point.slope):.2e}")
        self.grid, self.point, self.spectrum = grid, point, spectrum
        self.k_omega = point.dphi.astype(complex)       # (d phi, 0)
        self.k_theta = 1j * point.phi                   # (0, phi)
        self.Yp, self.Ym = spectrum.Y_plus, spectrum.Y_minus
        self.n = 2.0 * inner(grid, spectrum.Y_re, spectrum.Y_im)
        self.adjoint = [J(self.k_theta), J(self.k_omega), J(self.Yp), J(self.Ym)]

    def coefficients(self, f):
        """(a, c, b_+, b_-) with P_0 f = a (d phi, 0) + c (0, phi) and
        P_1 f = b_+ Y_+ + b_- Y_-."""
        g, s = self.grid, self.point.slope
        a = pair(g, f, self.adjoint[0]) / s
        c = -pair(g, f, self.adjoint[1]) / s
        bp = -pair(g, f, self.adjoint[3]) / self.n
        bm = pair(g, f, self.adjoint[2]) / self.n
        return a, c, bp, bm

    def P0(self, f):
        a, c, _, _ = self.coefficients(f)
        return a * self.k_omega + c * self.k_theta

    def P1(self, f):
        _, _, bp, bm = self.coefficients(f)
        return bp * self.Yp + bm * self.Ym

    def Pc(self, f):
        a, c, bp, bm = self.coefficients(f)
        return f - a * self.k_omega - c * self.k_theta - bp * self.Yp - bm * self.Ym

    def orthogonality(self, f) -> np.ndarray:
        """Pairings of f with J(0,phi), J(d phi,0), J Y_+, J Y_-."""
        return np.array([pair(self.grid, f, a) for a in self.adjoint])


def project(projections: Projections, f, which: str):
    return {"P0": projections.P0, "P1": projections.P1,
            "Pc": projections.Pc}[which](np.asarray(f, dtype=complex))
