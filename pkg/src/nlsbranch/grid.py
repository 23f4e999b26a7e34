"""Staggered radial grid on [0, R] for radial functions on R^N.

Nodes sit at r_j = (j + 1/2) h, so the coordinate singularity at r = 0 is never
sampled. The Laplacian is written in flux form with face areas
``A_{j+1/2} = S_{N-1} r_{j+1/2}^(N-1)`` and cell volumes ``w_j`` as quadrature
weights; the flux through r = 0 vanishes (mirror symmetry) and the ghost value
beyond R is ``-u_{M-1}`` (homogeneous Dirichlet on the face r = R).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DomainError, GridMismatch
from .model import sphere_area


@dataclass(frozen=True)
class RadialGrid:
    N: int
    M: int
    h: float

    def __post_init__(self):
        if self.N < 1 or self.M < 2 or not self.h > 0:
            raise DomainError("need N >= 1, M >= 2, h > 0")

    @classmethod
    def from_radius(cls, N: int, R: float, M: int) -> "RadialGrid":
        return cls(int(N), int(M), float(R) / int(M))

    @classmethod
    def from_dict(cls, d: dict) -> "RadialGrid":
        if "h" in d:
            return cls(int(d["N"]), int(d["M"]), float(d["h"]))
        return cls.from_radius(d["N"], d["R"], d["M"])

    def to_dict(self) -> dict:
        return {"N": self.N, "M": self.M, "h": self.h}

    @property
    def R(self) -> float:
        return self.M * self.h

    @cached_property
    def r(self) -> np.ndarray:
        return (np.arange(self.M) + 0.5) * self.h

    @cached_property
    def faces(self) -> np.ndarray:
        """Outer face radii r_{j+1/2}, j = 0..M-1 (the last one is R)."""
        return (np.arange(self.M) + 1.0) * self.h

    @cached_property
    def area(self) -> np.ndarray:
        return sphere_area(self.N) * self.faces ** (self.N - 1)

    @cached_property
    def w(self) -> np.ndarray:
        """Cell volumes; they sum to the volume of the ball of radius R."""
        edges = np.arange(self.M + 1) * self.h
        vol = sphere_area(self.N) * edges ** self.N / self.N
        return np.diff(vol)

    @cached_property
    def lap_bands(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(sub, diag, sup) of the discrete Laplacian as a tridiagonal matrix."""
        A, w, h = self.area, self.w, self.h
        inner = A[:-1] / h                    # couplings across interior faces
        diag = np.zeros(self.M)
        diag[:-1] -= inner
        diag[1:] -= inner
        diag[-1] -= 2.0 * A[-1] / h           # Dirichlet ghost -u_{M-1}
        return inner / w[1:], diag / w, inner / w[:-1]

    def lap(self, f: np.ndarray) -> np.ndarray:
        sub, diag, sup = self.lap_bands
        out = diag * f
        out[:-1] += sup * f[1:]
        out[1:] += sub * f[:-1]
        return out

    def grad_sq(self, f: np.ndarray) -> float:
        """Discrete ||grad f||^2, equal to <-lap f, f> by summation by parts."""
        d = np.diff(f)
        A, h = self.area, self.h
        return float(np.sum(A[:-1] * np.abs(d) ** 2) / h
                     + 2.0 * A[-1] * abs(f[-1]) ** 2 / h)

    def check(self, *fields) -> None:
        for f in fields:
            if np.shape(f) != (self.M,):
                raise GridMismatch(
                    f"field of shape {np.shape(f)} on grid with M = {self.M}")

    def sponge(self, strength: float, fraction: float = 0.1) -> np.ndarray:
        """Absorbing rate gamma(r) >= 0, a quadratic ramp over the outer
        ``fraction`` of the radius. Breaks exact mass/energy conservation."""
        r0 = (1.0 - fraction) * self.R
        x = np.clip((self.r - r0) / (self.R - r0), 0.0, None)
        return strength * x ** 2


def laplacian(grid: RadialGrid) -> sp.csr_matrix:
    sub, diag, sup = grid.lap_bands
    return sp.diags([sub, diag, sup], [-1, 0, 1], format="csr")


def inner(grid: RadialGrid, f, g) -> float:
    """Real pairing Re sum w f conj(g); for complex f = f1 + i f2 this is
    <f1, g1> + <f2, g2>."""
    grid.check(f, g)
    return float(np.real(np.sum(grid.w * f * np.conj(g))))


def lr_norm(grid: RadialGrid, f, r_exp: float) -> float:
    if r_exp < 1:
        raise DomainError("r_exp must be >= 1")
    grid.check(f)
    return float(np.sum(grid.w * np.abs(f) ** r_exp) ** (1.0 / r_exp))


def local_l2(grid: RadialGrid, f, R0: float) -> float:
    if R0 > grid.R:
        raise DomainError("R0 exceeds the grid radius")
    grid.check(f)
    mask = grid.r < R0
    return float(np.sqrt(np.sum(grid.w[mask] * np.abs(f[mask]) ** 2)))


def h1_norm(grid: RadialGrid, f) -> float:
    return float(np.sqrt(lr_norm(grid, f, 2) ** 2 + grid.grad_sq(f)))


def h1_l1_norm(grid: RadialGrid, f) -> float:
    """||f||_{H^1} + ||f||_{L^1}, the distance used to size initial data."""
    return h1_norm(grid, f) + lr_norm(grid, f, 1)


def write_field_csv(path, grid: RadialGrid, values) -> None:
    values = np.asarray(values, dtype=complex)
    grid.check(values)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["r", "re", "im"])
        for r, v in zip(grid.r, values):
            w.writerow([repr(float(r)), repr(float(v.real)), repr(float(v.imag))])


def read_field_csv(path) -> tuple[np.ndarray, np.ndarray]:
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    return data[:, 0], data[:, 1] + 1j * data[:, 2]


def grid_from_nodes(N: int, r: np.ndarray) -> RadialGrid:
    """Recover the grid whose nodes are ``r`` (as written by write_field_csv)."""
    M = len(r)
    h = 2.0 * r[0]
    grid = RadialGrid(N, M, h)
    if not np.allclose(grid.r, r, rtol=1e-12, atol=1e-12 * h):
        raise GridMismatch("nodes are not a staggered uniform grid")
    return grid
