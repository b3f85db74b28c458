"""Numerical oracles for classical inequalities used by the stability proofs.

Every oracle returns a slack that is nonnegative when the inequality holds:
``rhs - lhs`` for upper bounds, ``lhs - rhs`` for Jensen and the two
Poincare-type bounds. :func:`run_suite` draws seeded random inputs and
reports the worst slack per inequality.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .comparison import KINF, ComparisonClassError, extended_inverse
from .field import (
    DIRICHLET,
    DIRICHLET_ZERO,
    BC,
    NEUMANN,
    NormSpec,
    d1_array,
    norm,
    random_bandlimited,
    trapezoid,
)

SCALAR_TOL = 1e-12


@dataclass(frozen=True)
class InequalityCase:
    name: str
    inputs: dict
    slack: float


def young(a, b, omega, p):
    """Slack of ``ab <= (omega/p) a^p + omega^{-1/(p-1)} ((p-1)/p) b^{p/(p-1)}``.

    The bound is the weighted Young inequality and holds for ``p > 1``; for
    ``0 < p < 1`` the right-hand side can fall below ``ab`` and the slack is
    then negative.
    """
    if a < 0 or b < 0:
        raise ValueError("young needs a, b >= 0")
    if not (omega > 0 and p > 0) or p == 1:
        raise ValueError("young needs omega > 0, p > 0, p != 1")
    r = p / (p - 1.0)
    rhs = (omega / p) * a ** p + omega ** (-1.0 / (p - 1.0)) * ((p - 1.0) / p) * b ** r
    return rhs - a * b


def kinf_ineq(a, b, g, omega):
    """Slack of ``ab <= omega a g(a) + b g^{-1}(b / omega)``."""
    if g.tag != KINF:
        raise ComparisonClassError("kinf_ineq needs a Kinf function")
    if a < 0 or b < 0 or not omega > 0:
        raise ValueError("kinf_ineq needs a, b >= 0 and omega > 0")
    return omega * a * float(g(a)) + b * float(extended_inverse(g, b / omega)) - a * b


def jensen(fconv, x, rng=None):
    """Slack of ``int f(x) >= L f(mean(x))``.

    With ``rng`` given, convexity of ``fconv`` is spot-checked at three
    random midpoints of pairs of node values and a ``ValueError`` is raised
    if it fails.
    """
    v, L = x.values, x.L
    if rng is not None:
        lo, hi = float(np.min(v)), float(np.max(v))
        span = max(hi - lo, 1.0)
        for _ in range(3):
            s, t = rng.uniform(lo - span, hi + span, 2)
            lam = rng.uniform()
            mid = lam * s + (1 - lam) * t
            lhs = float(fconv(np.array(mid)))
            rhs = lam * float(fconv(np.array(s))) + (1 - lam) * float(fconv(np.array(t)))
            if lhs > rhs + 1e-12 * max(1.0, abs(rhs)):
                raise ValueError("fconv failed a convexity spot check")
    integral = float(trapezoid(np.asarray(fconv(v), dtype=float), x.h))
    mean = float(trapezoid(v, x.h)) / L
    return integral - L * float(fconv(np.array(mean)))


def _dirichlet_energy(x):
    return float(trapezoid(d1_array(x.values, x.h, x.bc) ** 2, x.h))


def poincare(x):
    """Slack of ``(4 L^2 / pi^2) int x_l^2 >= int x^2``.

    The constant is valid for functions vanishing at one end at least;
    others are rejected because constants violate the bound.
    """
    if not (x.bc.left == DIRICHLET or x.bc.right == DIRICHLET
            or abs(x.values[0]) <= 1e-12 or abs(x.values[-1]) <= 1e-12):
        raise ValueError("poincare needs x(0) = 0 or x(L) = 0")
    energy = 4.0 * x.L ** 2 / math.pi ** 2 * _dirichlet_energy(x)
    return energy - float(trapezoid(x.values ** 2, x.h))


def friedrichs(x):
    """Slack of ``(L^2 / pi^2) int x_l^2 >= int x^2`` for Dirichlet data."""
    if x.bc != DIRICHLET_ZERO:
        raise ValueError("friedrichs needs Dirichlet conditions at both ends")
    return x.L ** 2 / math.pi ** 2 * _dirichlet_energy(x) - float(trapezoid(x.values ** 2, x.h))


def agmon(x):
    """Slack of ``|x|_Linf^2 <= x(0)^2 + 2 |x|_L2 |x_l|_L2``."""
    l2 = norm(x, NormSpec.lp(2))
    dl2 = math.sqrt(_dirichlet_energy(x))
    return float(x.values[0]) ** 2 + 2.0 * l2 * dl2 - norm(x, NormSpec.linf()) ** 2


# ---------------------------------------------------------------------------
# Randomised suite
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SuiteRow:
    name: str
    n_cases: int
    worst_slack: float
    tol: float

    @property
    def passed(self):
        return self.worst_slack >= -self.tol

    def to_dict(self):
        return {
            "check": self.name,
            "status": "pass" if self.passed else "fail",
            "worst_slack": self.worst_slack,
            "n_cases": self.n_cases,
            "tol": self.tol,
        }


_CONVEX = (
    lambda s: s ** 2,
    lambda s: np.abs(s),
    lambda s: np.exp(s),
    lambda s: s ** 4 - s,
)

_ONE_SIDED = (BC(DIRICHLET, NEUMANN), BC(NEUMANN, DIRICHLET))


def _random_g(rng):
    from . import comparison as cf

    kind = rng.integers(3)
    if kind == 0:
        return cf.power(float(rng.uniform(0.3, 4.0)), float(rng.uniform(0.2, 5.0)))
    if kind == 1:
        return cf.linear(float(rng.uniform(0.1, 10.0)))
    return cf.poly2_4(float(rng.uniform(0.0, 3.0)), float(rng.uniform(0.1, 3.0)))


def run_suite(seed=0, n_scalar=1000, n_grid=200, N=256, L=math.pi):
    """Evaluate every oracle on seeded random inputs.

    Scalar cases (Young with ``p > 1``, the Kinf inequality) are held to
    ``1e-12``, grid cases to ``10 h^2``. Returns ``(rows, seconds)``.
    """
    start = time.perf_counter()
    rng = np.random.default_rng(seed)
    rows = []

    worst = math.inf
    for _ in range(n_scalar):
        a, b = rng.uniform(0, 10, 2)
        omega = float(rng.uniform(0.05, 10))
        p = float(rng.uniform(1.05, 6))
        worst = min(worst, young(a, b, omega, p))
    rows.append(SuiteRow("Young", n_scalar, worst, SCALAR_TOL))

    worst = math.inf
    for _ in range(n_scalar):
        a, b = rng.uniform(0, 10, 2)
        omega = float(rng.uniform(0.05, 10))
        worst = min(worst, kinf_ineq(a, b, _random_g(rng), omega))
    rows.append(SuiteRow("KinfIneq", n_scalar, worst, SCALAR_TOL))

    h2 = (L / N) ** 2
    fields = []
    for _ in range(n_grid):
        cutoff = int(rng.integers(1, 9))
        amp = float(rng.uniform(0.1, 3.0))
        fields.append(random_bandlimited(L, N, cutoff, amp, rng))
    one_sided = []
    for k in range(n_grid):
        cutoff = int(rng.integers(1, 9))
        amp = float(rng.uniform(0.1, 3.0))
        one_sided.append(random_bandlimited(L, N, cutoff, amp, rng, _ONE_SIDED[k % 2]))
    neumann = []
    for _ in range(n_grid):
        cutoff = int(rng.integers(1, 9))
        amp = float(rng.uniform(0.1, 3.0))
        neumann.append(random_bandlimited(L, N, cutoff, amp, rng, BC(NEUMANN, NEUMANN)))

    js = [jensen(_CONVEX[k % len(_CONVEX)], x, rng) for k, x in enumerate(fields + neumann)]
    rows.append(SuiteRow("Jensen", len(js), min(js), 10 * h2))
    ps = [poincare(x) for x in fields + one_sided]
    rows.append(SuiteRow("Poincare", len(ps), min(ps), 10 * h2))
    fs = [friedrichs(x) for x in fields]
    rows.append(SuiteRow("Friedrichs", len(fs), min(fs), 10 * h2))
    ag = [agmon(x) for x in fields + one_sided + neumann]
    rows.append(SuiteRow("Agmon", len(ag), min(ag), 10 * h2))
    return rows, time.perf_counter() - start
