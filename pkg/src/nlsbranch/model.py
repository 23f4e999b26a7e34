"""Nonlinearity f(s), g(u) = f(|u|^2) u, its antiderivative, and the
exponent arithmetic that decides whether a nonlinearity is admissible.

A model is a finite sum of monomials ``f(s) = sum_j c_j s^((m_j - 1)/2)``, so
that on real arguments ``g(x) = sum_j c_j |x|^(m_j - 1) x``. The pure power
and the two-term (e.g. cubic-quintic) cases are the ones exposed.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple

import numpy as np

from .errors import DomainError, InadmissibleModel

DELTA_MAX = 1e-3
BISECT_TOL = 1e-9


def sphere_area(N: int) -> float:
    """Area of the unit sphere in R^N (equals 2 for N = 1)."""
    return 2.0 * math.pi ** (N / 2.0) / math.gamma(N / 2.0)


class CriticalExponents(NamedTuple):
    m_c: float
    m_max: float


def critical_exponents(N: int) -> CriticalExponents:
    """L^2-critical exponent ``1 + 4/N`` and energy-critical bound."""
    if N < 1:
        raise DomainError("N must be >= 1")
    m_max = (N + 2.0) / (N - 2.0) if N >= 3 else math.inf
    return CriticalExponents(1.0 + 4.0 / N, m_max)


def sigma(N: int, r: float) -> float:
    """Dispersive decay exponent sigma_r = N (1/2 - 1/r)."""
    return N * (0.5 - 1.0 / r)


@dataclass(frozen=True)
class NonlinearityModel:
    """f(s) = sum c_j s^((m_j-1)/2) in dimension N.

    ``terms`` holds ``(c_j, m_j)`` pairs. Use :meth:`pure_power` or
    :meth:`two_term` rather than building the tuple by hand.
    """

    N: int
    terms: tuple[tuple[float, float], ...]
    kind: str = "pure"

    def __post_init__(self):
        if self.N < 1:
            raise DomainError("N must be >= 1")
        if not self.terms:
            raise DomainError("at least one term is required")
        for _, m in self.terms:
            if not m > 1.0:
                raise InadmissibleModel(f"exponent {m} must exceed 1")
        m_max = critical_exponents(self.N).m_max
        if self.m2 >= m_max:
            raise InadmissibleModel(
                f"m2 = {self.m2} is energy supercritical (m_max = {m_max})")

    @classmethod
    def pure_power(cls, N: int, m: float, coefficient: float = 1.0):
        return cls(N, ((float(coefficient), float(m)),), "pure")

    @classmethod
    def two_term(cls, N: int, c1: float, m1: float, c2: float, m2: float):
        if m1 > m2:
            c1, m1, c2, m2 = c2, m2, c1, m1
        return cls(N, ((float(c1), float(m1)), (float(c2), float(m2))),
                   "two-term")

    @classmethod
    def from_dict(cls, d: dict) -> "NonlinearityModel":
        N = int(d["N"])
        if d.get("kind", "pure") == "pure":
            return cls.pure_power(N, d["m"], d.get("c", 1.0))
        return cls.two_term(N, d["c1"], d["m1"], d["c2"], d["m2"])

    def to_dict(self) -> dict:
        if self.kind == "pure":
            (c, m), = self.terms
            return {"N": self.N, "kind": "pure", "m": m, "c": c}
        (c1, m1), (c2, m2) = self.terms
        return {"N": self.N, "kind": "two-term",
                "c1": c1, "m1": m1, "c2": c2, "m2": m2}

    @property
    def m1(self) -> float:
        return min(m for _, m in self.terms)

    @property
    def m2(self) -> float:
        return max(m for _, m in self.terms)

    # --- pointwise evaluation -------------------------------------------
    def f(self, s):
        s = np.asarray(s, dtype=float)
        return sum(c * s ** ((m - 1.0) / 2.0) for c, m in self.terms)

    def s_fprime(self, s):
        """s f'(s), written so it stays finite at s = 0 for every m > 1."""
        s = np.asarray(s, dtype=float)
        return sum(c * 0.5 * (m - 1.0) * s ** ((m - 1.0) / 2.0)
                   for c, m in self.terms)

    def F(self, s):
        """Antiderivative of f: F(s) = int_0^s f, so G(x) = F(x^2)/2."""
        s = np.asarray(s, dtype=float)
        return sum(c * 2.0 / (m + 1.0) * s ** ((m + 1.0) / 2.0)
                   for c, m in self.terms)

    def g(self, u):
        u = np.asarray(u)
        return self.f(np.abs(u) ** 2) * u

    def G(self, s):
        s = np.asarray(s, dtype=float)
        if np.any(s < 0):
            raise DomainError("G is defined for s >= 0")
        return sum(c * s ** (m + 1.0) / (m + 1.0) for c, m in self.terms)

    def dg(self, x):
        """Derivative of g on real arguments, f(x^2) + 2 x^2 f'(x^2)."""
        a = np.abs(np.asarray(x, dtype=float))
        return sum(c * m * a ** (m - 1.0) for c, m in self.terms)

    def d2g(self, x):
        x = np.asarray(x, dtype=float)
        a = np.abs(x)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = sum(c * m * (m - 1.0) * a ** (m - 2.0) for c, m in self.terms)
        return np.nan_to_num(out * np.sign(x), nan=0.0, posinf=0.0, neginf=0.0)


def evaluate_g(model: NonlinearityModel, u):
    return model.g(u)


def evaluate_G(model: NonlinearityModel, s):
    return model.G(s)


# --- admissibility -----------------------------------------------------------

@dataclass
class AdmissibilityReport:
    N: int
    m1: float
    m2: float
    cond1: bool
    cond2: bool
    p: float
    sigma_p: float
    m0: float
    sigma_q: float = math.nan
    q: float = math.nan
    delta: float = 0.0
    mu: float = math.nan
    admissible: bool = False
    reasons: list[str] = field(default_factory=list)
    arith_facts: list[tuple[str, bool]] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = {k: getattr(self, k) for k in (
            "N", "m1", "m2", "cond1", "cond2", "p", "sigma_p", "m0",
            "sigma_q", "q", "delta", "mu", "admissible", "reasons")}
        d["arith_facts"] = [[n, ok] for n, ok in self.arith_facts]
        for k, v in d.items():
            if isinstance(v, float) and not math.isfinite(v):
                d[k] = None
        return d


def cond1_bound(N: int, m2: float) -> float:
    return 1.0 + 2.0 / N * (1.0 + sigma(N, m2 + 1.0))


def _cond2_gap(N: int, m1: float) -> float:
    return m1 - 1.0 - 2.0 / N * (1.0 + 2.0 / (min(2.0, m1) + 1.0))


def cond2_bound(N: int) -> float:
    """Smallest m1 with m1 > 1 + (2/N)(1 + 2/(min{2, m1} + 1)).

    Implicit in m1 while m1 < 2, hence the bisection. The gap is increasing in
    m1, so the root is unique.
    """
    lo, hi = 1.0, 1.0 + 2.0 / N * 2.0
    while _cond2_gap(N, hi) <= 0:
        hi *= 2.0
    while hi - lo > BISECT_TOL:
        mid = 0.5 * (lo + hi)
        if _cond2_gap(N, mid) > 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def admissibility(N: int, m1: float, m2: float) -> AdmissibilityReport:
    """Decide conditions 1 and 2 and select sigma_q, q and the decay rate mu."""
    if not (1.0 < m1 <= m2):
        raise DomainError("need 1 < m1 <= m2")
    m_max = critical_exponents(N).m_max
    if m2 >= m_max:
        raise InadmissibleModel(
            f"m2 = {m2} >= m_max = {m_max} (energy supercritical)")
    p = m2 + 1.0
    s_p = sigma(N, p)
    m0 = min(2.0, m1)
    c1 = m1 > 1.0 + 2.0 / N * (1.0 + s_p)
    c2 = m1 > 1.0 + 2.0 / N * (1.0 + 2.0 / (m0 + 1.0))
    rep = AdmissibilityReport(N, m1, m2, c1, c2, p, s_p, m0)
    if not c1:
        rep.reasons.append("condition 1 fails: m1 <= 1 + (2/N)(1 + sigma_p)")
    if not c2:
        rep.reasons.append("condition 2 fails: m1 <= 1 + (2/N)(1 + 2/(m0+1))")
    if N < 2:
        rep.reasons.append("q selection requires N >= 2")

    thresh = 2.0 / (m0 + 1.0)
    cap = min(1.0, N / 2.0 * (m1 - 1.0) - 1.0)
    if s_p > thresh:
        s_q, delta = s_p, 0.0
    else:
        room = cap - thresh
        delta = min(DELTA_MAX, 0.5 * room) if room > 0 else 0.0
        s_q = thresh + delta
    feasible = N >= 2 and s_q < cap and (m0 + 1.0) * s_q > 2.0
    if N >= 2 and s_q < N / 2.0:
        rep.sigma_q, rep.delta = s_q, delta
        rep.q = 1.0 / (0.5 - s_q / N)
        rep.mu = min(s_p, m0 * s_q - 1.0)
    if not feasible and N >= 2:
        rep.reasons.append("no sigma_q in [sigma_p, 1) with (m0+1) sigma_q > 2")
    rep.admissible = bool(c1 and c2 and feasible)
    if rep.admissible:
        rep.arith_facts = arithmetic_facts(rep)
    return rep


def arithmetic_facts(report: AdmissibilityReport) -> list[tuple[str, bool]]:
    """The exponent inequalities used by the bootstrap, per j in {1, 2}."""
    if not math.isfinite(report.sigma_q):
        raise InadmissibleModel("sigma_q undefined for this triple")
    N, s_p, s_q, m0, q = (report.N, report.sigma_p, report.sigma_q,
                          report.m0, report.q)
    facts = [("Arith8", (m0 + 1.0) * s_q > 2.0),
             ("Arith8:sigma_q>1/2", s_q > 0.5),
             ("Arith2", report.m1 > 1.0 + 2.0 / N * (1.0 + s_q))]
    for j, mj in ((1, report.m1), (2, report.m2)):
        m_th_sp = N / 2.0 * (mj - 1.0) - s_p      # m_j theta_j sigma_p
        m_tth_sp = N / 2.0 * (mj - 1.0) - s_q     # m_j theta~_j sigma_p
        theta_t = m_tth_sp / (mj * s_p)
        facts += [
            (f"Arith3[j={j}]:m*theta*sigma_p>1", m_th_sp > 1.0),
            (f"Arith3[j={j}]:m*theta>1", m_th_sp / s_p > 1.0),
            (f"Arith5[j={j}]",
             2.0 * (1.0 - 1.0 / q) < 1.0 + 2.0 / N < mj),
            (f"Arith7new[j={j}]:m*theta~*sigma_p>1", m_tth_sp > 1.0),
            (f"Arith7new[j={j}]:m*theta~>1/m0", m_tth_sp / s_p > 1.0 / m0),
            (f"Arith6[j={j}]",
             (1.0 - theta_t) * mj * m0 / 2.0 + mj * theta_t > 1.0),
        ]
    return facts


# --- region tables --------------------------------------------------------------

class RegionRow(NamedTuple):
    m2: float
    bound1: float
    bound2: float


def region_boundary(N: int, m2_samples: Iterable[float]) -> list[RegionRow]:
    """Lower boundaries in m1 of conditions 1 and 2 for each sampled m2.

    Admissible m1 lie strictly above both bounds and at most m2.
    """
    if N < 2:
        raise DomainError("q selection requires N >= 2")
    m_max = critical_exponents(N).m_max
    b2 = cond2_bound(N)
    rows = []
    for m2 in m2_samples:
        m2 = float(m2)
        if not (1.0 < m2 < m_max):
            raise DomainError(f"m2 = {m2} outside (1, {m_max})")
        rows.append(RegionRow(m2, cond1_bound(N, m2), b2))
    return rows


def region_csv(N: int, rows: list[RegionRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["N", "m2", "bound1", "bound2"])
    for r in rows:
        w.writerow([N, repr(r.m2), repr(r.bound1), repr(r.bound2)])
    return buf.getvalue()
