"""Comparison-function algebra and the small-gain construction.

A :class:`ComparisonFn` is a closed-form scalar map on ``[0, inf)`` that
carries a class tag (``zero``, ``PD``, ``K`` or ``Kinf``) and its limit at
infinity.  Tags are validated by sampling when the object is built.

On top of that this module provides the extended inverse
``omega_inv(s) = sup{v >= 0 : s >= omega(v)}``, gain chains and the
small-gain test, the choice of the weighting exponent, the weights of the
composite Lyapunov function and its evaluation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ComparisonClassError, NumericError
from .quadrature import adaptive_simpson, adaptive_simpson_cumulative

ZERO = "zero"
PD = "PD"
K = "K"
KINF = "Kinf"
_TAGS = (ZERO, PD, K, KINF)

# 64 log-spaced validation points in [1e-6, 1e6].
SAMPLE_GRID = np.logspace(-6.0, 6.0, 64)

INVERSE_RTOL = 1e-10
MAX_BISECTIONS = 200
_FMAX = float(np.finfo(float).max)
_FTINY = float(np.finfo(float).tiny)


@dataclass(frozen=True)
class ComparisonFn:
    """A tagged scalar comparison function.

    Parameters
    ----------
    func : callable
        Vectorised map from nonnegative reals to reals.  It is never called
        with ``inf``; the extended value at infinity is ``sup_limit``.
    tag : str
        One of ``"zero"``, ``"PD"``, ``"K"``, ``"Kinf"``.
    sup_limit : float
        Limit of ``func`` at infinity (``inf`` allowed).
    name : str
        Human-readable description used in reports.
    """

    func: Callable[[np.ndarray], np.ndarray]
    tag: str
    sup_limit: float
    name: str = "fn"

    def __post_init__(self):
        if self.tag not in _TAGS:
            raise ComparisonClassError(f"unknown class tag {self.tag!r}")
        if self.tag == KINF and not math.isinf(self.sup_limit):
            raise ComparisonClassError(f"{self.name}: Kinf requires an infinite limit")
        self._validate()

    def _validate(self):
        s = SAMPLE_GRID
        with np.errstate(over="ignore", invalid="ignore"):
            v = np.asarray(self.func(s), dtype=float)
            v0 = float(np.asarray(self.func(np.zeros(1)), dtype=float)[0])
        if self.tag == ZERO:
            if np.any(v != 0.0) or v0 != 0.0:
                raise ComparisonClassError(f"{self.name}: zero-tagged map is not identically 0")
            return
        if v0 != 0.0:
            raise ComparisonClassError(f"{self.name}: value at 0 is {v0}, expected 0")
        if not np.all(v > 0.0):
            raise ComparisonClassError(f"{self.name}: not positive definite on samples")
        if self.tag == PD:
            return
        finite = np.isfinite(v)
        steps = np.diff(v[finite])
        slack = 1e-12 * np.maximum(1.0, np.abs(v[finite][1:]))
        if np.any(steps < -slack) or not np.any(steps > 0.0):
            raise ComparisonClassError(f"{self.name}: not increasing on samples")
        if not math.isinf(self.sup_limit) and np.any(v > self.sup_limit * (1 + 1e-12)):
            raise ComparisonClassError(f"{self.name}: samples exceed the declared limit")

    def __call__(self, s):
        """Evaluate on scalars or arrays; ``inf`` maps to ``sup_limit``."""
        arr = np.asarray(s, dtype=float)
        inf = np.isinf(arr)
        with np.errstate(over="ignore", invalid="ignore"):
            out = np.asarray(self.func(np.where(inf, 0.0, arr)), dtype=float)
        out = np.where(inf, self.sup_limit, out)
        return float(out) if out.ndim == 0 else out

    @property
    def is_bounded(self):
        return not math.isinf(self.sup_limit)

    def scaled(self, c):
        """Return ``c * self`` for ``c > 0``."""
        if c <= 0:
            raise ValueError("scale must be positive")
        f = self.func
        return ComparisonFn(lambda s: c * f(s), self.tag, c * self.sup_limit, f"{c:g}*{self.name}")


# ---------------------------------------------------------------------------
# Named forms (the closure needed for the two interconnection examples)
# ---------------------------------------------------------------------------

def zero():
    return ComparisonFn(lambda s: np.zeros_like(np.asarray(s, dtype=float)), ZERO, 0.0, "0")


def linear(k=1.0):
    if k <= 0:
        raise ComparisonClassError("linear form needs k > 0")
    return ComparisonFn(lambda s: k * np.asarray(s, dtype=float), KINF, math.inf, f"{k:g}*s")


def identity():
    return linear(1.0)


def power(p, coeff=1.0):
    """``coeff * s**p``."""
    if p <= 0 or coeff <= 0:
        raise ComparisonClassError("power form needs p > 0 and coeff > 0")
    return ComparisonFn(
        lambda s: coeff * np.asarray(s, dtype=float) ** p, KINF, math.inf, f"{coeff:g}*s^{p:g}"
    )


def rational_sq(coeff=1.0):
    """``coeff * s**2 / (1 + s**2)``; class K, bounded by ``coeff``."""
    if coeff <= 0:
        raise ComparisonClassError("rational_sq form needs coeff > 0")

    def f(s):
        with np.errstate(over="ignore", invalid="ignore"):
            s2 = np.asarray(s, dtype=float) ** 2
            return np.where(np.isinf(s2), coeff, coeff * s2 / (1.0 + s2))

    return ComparisonFn(f, K, float(coeff), f"{coeff:g}*s^2/(1+s^2)")


def log_pow(p=2.0):
    """``ln(1 + s**p)``."""
    if p <= 0:
        raise ComparisonClassError("log_pow form needs p > 0")
    def f(s):
        s = np.asarray(s, dtype=float)
        big = s > 1.0
        with np.errstate(divide="ignore", over="ignore"):
            # p ln s + ln(1 + s^-p) keeps large arguments finite.
            tail = p * np.log(np.where(big, s, 1.0)) + np.log1p(np.where(big, s, 1.0) ** -p)
            return np.where(big, tail, np.log1p(np.where(big, 0.0, s) ** p))

    return ComparisonFn(f, KINF, math.inf, f"ln(1+s^{p:g})")


def log_sq():
    return log_pow(2.0)


def poly2_4(c2, c4):
    """``c2 * s**2 + c4 * s**4`` with nonnegative coefficients."""
    if c2 < 0 or c4 < 0 or (c2 == 0 and c4 == 0):
        raise ComparisonClassError(
            f"poly2_4 needs nonnegative, not both zero coefficients (got {c2}, {c4})"
        )

    def f(s):
        s2 = np.asarray(s, dtype=float) ** 2
        return c2 * s2 + c4 * s2 * s2

    return ComparisonFn(f, KINF, math.inf, f"{c2:g}*s^2+{c4:g}*s^4")


_FORMS = {
    "zero": (zero, ()),
    "linear": (linear, ("k",)),
    "power": (power, ("p", "coeff")),
    "rational_sq": (rational_sq, ("coeff",)),
    "log_sq": (log_sq, ()),
    "log_pow": (log_pow, ("p",)),
    "poly2_4": (poly2_4, ("c2", "c4")),
}


def from_config(spec):
    """Build a comparison function from ``{"form": name, **params}``."""
    spec = dict(spec)
    form = spec.pop("form", None)
    if form not in _FORMS:
        raise ValueError(f"unknown comparison form {form!r}; known: {sorted(_FORMS)}")
    factory, names = _FORMS[form]
    unknown = set(spec) - set(names)
    if unknown:
        raise ValueError(f"unexpected parameters for {form}: {sorted(unknown)}")
    return factory(**{k: float(v) for k, v in spec.items()})


# ---------------------------------------------------------------------------
# Extended inverse
# ---------------------------------------------------------------------------

def extended_inverse(omega, s, rtol=INVERSE_RTOL):
    """Evaluate ``sup{v >= 0 : s >= omega(v)}``.

    Returns ``inf`` where ``s`` reaches the limit of ``omega``; elsewhere the
    unique preimage found by bracket doubling from ``[0, 1]`` and bisection.
    Bracket halving handles tiny targets. A preimage too large for a float
    (doubling overflows, or ``omega`` overflows before reaching ``s``) is
    also reported as ``inf``.

    Raises
    ------
    ComparisonClassError
        If ``omega`` is not of class K or Kinf.
    NumericError
        If bisection exceeds 200 iterations.
    """
    if omega.tag not in (K, KINF):
        raise ComparisonClassError(f"extended inverse needs a K function, got {omega.tag}")
    s_arr = np.asarray(s, dtype=float)
    flat = np.atleast_1d(s_arr).ravel()
    out = np.full(flat.shape, math.inf)
    out[flat <= 0.0] = 0.0
    work = (flat > 0.0) & (flat < omega.sup_limit)
    if work.any():
        out[work] = _bisect_inverse(omega.func, flat[work], rtol)
    if s_arr.ndim == 0:
        return float(out[0])
    return out.reshape(s_arr.shape)


def _bisect_inverse(func, target, rtol):
    lo = np.zeros_like(target)
    hi = np.ones_like(target)
    with np.errstate(over="ignore", invalid="ignore"):
        while True:
            short = (func(hi) < target) & np.isfinite(hi)
            if not short.any():
                break
            lo = np.where(short, hi, lo)
            # Cap at the largest float once, then give up to inf.
            grown = np.where(hi == _FMAX, math.inf, np.minimum(2.0 * hi, _FMAX))
            hi = np.where(short, grown, hi)
        # Halve the bracket for tiny targets so bisection starts within a factor 2.
        while True:
            tall = (lo == 0.0) & (hi > 0.0) & (func(0.5 * hi) >= target)
            if not tall.any():
                break
            hi = np.where(tall, 0.5 * hi, hi)
        lo = np.where((lo == 0.0) & np.isfinite(hi), 0.5 * hi, lo)
        beyond = ~np.isfinite(hi)
        hi = np.where(beyond, 1.0, hi)
        lo = np.where(beyond, 1.0, lo)
        for _ in range(MAX_BISECTIONS):
            # Below the normal range the preimage is zero to float resolution.
            if np.all((hi - lo <= rtol * hi) | (hi <= _FTINY)):
                # A preimage past the float range shows up as an overflowing end.
                ok = np.isfinite(func(hi)) & ~beyond
                return np.where(ok, 0.5 * lo + 0.5 * hi, math.inf)
            mid = 0.5 * lo + 0.5 * hi
            below = func(mid) <= target
            lo = np.where(below, mid, lo)
            hi = np.where(below, hi, mid)
    raise NumericError("extended inverse: bisection did not converge in 200 iterations")


def inverse_fn(omega, name=None):
    """Wrap ``extended_inverse(omega, .)`` of a Kinf map as a Kinf ComparisonFn."""
    if omega.tag != KINF:
        raise ComparisonClassError(f"{omega.name} is not invertible on [0, inf) (tag {omega.tag})")
    return ComparisonFn(
        lambda s: extended_inverse(omega, s), KINF, math.inf, name or f"inv({omega.name})"
    )


# ---------------------------------------------------------------------------
# Gain chains and the small-gain condition
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Stage:
    """One link of a gain chain: ``scale * fn(s)`` or ``scale * fn_inv(s)``."""

    fn: ComparisonFn
    inverse: bool = False
    scale: float = 1.0

    def __post_init__(self):
        if self.inverse and self.fn.tag not in (K, KINF):
            raise ComparisonClassError(f"cannot invert {self.fn.name} (tag {self.fn.tag})")

    def __call__(self, s):
        v = extended_inverse(self.fn, s) if self.inverse else self.fn(s)
        return self.scale * np.asarray(v, dtype=float)

    @property
    def label(self):
        core = f"inv({self.fn.name})" if self.inverse else self.fn.name
        return core if self.scale == 1.0 else f"{self.scale:g}*{core}"


@dataclass(frozen=True)
class GainChain:
    """A composition of stages, applied in list order (first stage innermost)."""

    stages: tuple
    c_sg: float

    def __post_init__(self):
        if not self.c_sg > 1.0:
            raise ValueError(f"small-gain constant must exceed 1, got {self.c_sg}")
        object.__setattr__(self, "stages", tuple(self.stages))

    @classmethod
    def from_gains(cls, alpha1, sigma1, psi11, psi12, alpha2, sigma2, psi21, psi22, c_sg):
        """Build the chain from both certificates' gains.

        The composition is ``inv(psi11) o psi12 o inv(alpha1) o c sigma1 o
        inv(psi21) o psi22 o inv(alpha2) o c sigma2``.
        """
        stages = (
            Stage(sigma2, scale=c_sg),
            Stage(alpha2, inverse=True),
            Stage(psi22),
            Stage(psi21, inverse=True),
            Stage(sigma1, scale=c_sg),
            Stage(alpha1, inverse=True),
            Stage(psi12),
            Stage(psi11, inverse=True),
        )
        return cls(stages, c_sg)

    @classmethod
    def from_certificates(cls, cert1, cert2, c_sg):
        return cls.from_gains(
            cert1.alpha, cert1.sigma, cert1.psi1, cert1.psi2,
            cert2.alpha, cert2.sigma, cert2.psi1, cert2.psi2,
            c_sg,
        )

    def __call__(self, s):
        v = np.asarray(s, dtype=float)
        for stage in self.stages:
            v = stage(v)
        return float(v) if v.ndim == 0 else v

    def describe(self):
        return " o ".join(st.label for st in reversed(self.stages))


@dataclass(frozen=True)
class SmallGainReport:
    holds: bool
    worst_ratio: float
    worst_s: float

    def to_dict(self):
        return {"holds": self.holds, "worst_ratio": self.worst_ratio, "worst_s": self.worst_s}


def check_small_gain(chain, s_grid):
    """Test ``chain(s) <= s`` at every grid point.

    An infinite chain value (an extended inverse saturating) is a violation.
    """
    s = np.asarray(s_grid, dtype=float)
    if s.size == 0:
        raise ValueError("s_grid must be nonempty")
    if np.any(s <= 0) or np.any(np.diff(s) <= 0):
        raise ValueError("s_grid must be positive and strictly ascending")
    values = np.asarray(chain(s), dtype=float)
    ratio = values / s
    k = int(np.argmax(ratio))
    holds = bool(np.all(np.isfinite(values)) and np.all(values <= s))
    return SmallGainReport(holds=holds, worst_ratio=float(ratio[k]), worst_s=float(s[k]))


# ---------------------------------------------------------------------------
# Weighting exponent and composite Lyapunov function
# ---------------------------------------------------------------------------

def psi_feasible(psi, c_sg):
    """Both inequalities for the weighting exponent ``psi`` when ``c_sg <= 2``."""
    if psi <= 0:
        return False
    return psi ** (-psi / (psi + 1.0)) < c_sg / (psi + 1.0) <= 1.0


def select_psi(c_sg, cap=1e6, n_scan=200):
    """Smallest admissible weighting exponent for the small-gain constant ``c_sg``.

    Returns 0 when ``c_sg > 2``.  Otherwise scans a geometric grid on
    ``[c_sg - 1, cap]`` and bisects the first feasible cell down to the
    boundary of the strict inequality, returning a feasible point.
    """
    if not c_sg > 1.0:
        raise ValueError("c_sg must exceed 1")
    if c_sg > 2.0:
        return 0.0
    grid = np.geomspace(c_sg - 1.0, cap, n_scan)
    feasible = [psi_feasible(p, c_sg) for p in grid]
    if not any(feasible):
        raise NumericError(f"no admissible psi below {cap:g} for c_sg={c_sg}")
    j = feasible.index(True)
    if j == 0:
        return float(grid[0])
    lo, hi = float(grid[j - 1]), float(grid[j])
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if psi_feasible(mid, c_sg):
            hi = mid
        else:
            lo = mid
        if hi - lo <= 1e-12 * hi:
            break
    return hi


@dataclass(frozen=True)
class LambdaWeights:
    lambda_1: ComparisonFn
    lambda_2: ComparisonFn
    psi_exponent: float = 0.0


def _pow_or_inf(base, exponent):
    try:
        return base ** exponent
    except OverflowError:
        return math.inf


def _weight(alpha, psi_2, sigma_other, psi_1, psi):
    if psi_1.tag != KINF or (psi > 0 and psi_2.tag != KINF):
        raise ComparisonClassError("sandwich bounds must be Kinf to be inverted")

    def f(s):
        s = np.asarray(s, dtype=float)
        w = np.asarray(sigma_other(extended_inverse(psi_1, s)), dtype=float) ** (psi + 1.0)
        if psi > 0:
            w = w * np.asarray(alpha(extended_inverse(psi_2, s)), dtype=float) ** psi
        return w

    sup = _pow_or_inf(sigma_other.sup_limit, psi + 1.0)
    if psi > 0:
        sup *= _pow_or_inf(alpha.sup_limit, psi)
    name = f"[{sigma_other.name}](inv {psi_1.name})^{psi + 1:g}"
    return ComparisonFn(f, K, sup, name)


def build_lambda(cert_1, cert_2, psi):
    """Weights of the composite Lyapunov function.

    ``lambda_i(s) = alpha_i(psi_i2^-1(s))**psi * sigma_{3-i}(psi_i1^-1(s))**(psi+1)``;
    for ``psi = 0`` the ``alpha_i`` factor is dropped.
    """
    if psi < 0:
        raise ValueError("psi must be nonnegative")
    lam1 = _weight(cert_1.alpha, cert_1.psi2, cert_2.sigma, cert_1.psi1, psi)
    lam2 = _weight(cert_2.alpha, cert_2.psi2, cert_1.sigma, cert_2.psi1, psi)
    return LambdaWeights(lam1, lam2, float(psi))


def composite_V(weights, v1, v2, rtol=1e-8):
    """``int_0^v1 lambda_1 + int_0^v2 lambda_2`` by adaptive Simpson."""
    if v1 < 0 or v2 < 0:
        raise ValueError("Lyapunov values must be nonnegative")
    total = 0.0
    for lam, v in ((weights.lambda_1, v1), (weights.lambda_2, v2)):
        if v > 0:
            total += adaptive_simpson(lam, 0.0, float(v), rtol=rtol)
    return total


def composite_V_series(weights, v1, v2, rtol=1e-8):
    """``composite_V`` at many pairs at once, e.g. along a trajectory."""
    v1 = np.asarray(v1, dtype=float)
    v2 = np.asarray(v2, dtype=float)
    if np.any(v1 < 0) or np.any(v2 < 0):
        raise ValueError("Lyapunov values must be nonnegative")
    return (adaptive_simpson_cumulative(weights.lambda_1, v1, rtol)
            + adaptive_simpson_cumulative(weights.lambda_2, v2, rtol))


def check_alpsig(cert_1, cert_2):
    """Existence condition: for each i, alpha_i unbounded or sigma_{3-i} * kappa_i(1) finite."""
    return _alpsig_one(cert_1, cert_2) and _alpsig_one(cert_2, cert_1)


def _alpsig_one(own, other):
    if math.isinf(own.alpha.sup_limit):
        return True
    k1 = float(own.kappa(1.0))
    if k1 == 0.0:
        return True
    return math.isfinite(other.sigma.sup_limit * k1)


def log_grid(lo=1e-4, hi=1e4, n=64):
    return np.geomspace(lo, hi, n)
