"""Lyapunov functionals, dissipation certificates and hypothesis checks.

A :class:`DissipationCertificate` claims

    dV/dt <= -alpha(|x|_X) + sigma(|w|_W) + kappa(|u|_U)

along solutions, where ``w`` is the input of the subsystem (the other
subsystem's state in an interconnection) and ``u`` an optional external
input. :func:`check_dissipation` tests that claim step by step on a
simulated trajectory. The ``*_certificate`` builders turn the hypotheses
of the three parabolic stability results (reaction bound ``eta``,
splitting constant ``epsilon``, Young weights ``omega``) into explicit
certificates whose right-hand sides can be checked that way.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import comparison as cf
from .comparison import KINF, PD, ZERO, ComparisonClassError, ComparisonFn
from .field import (
    UNCONSTRAINED,
    NormSpec,
    d1_array,
    d2_array,
    norm_array,
    trapezoid,
)

POWER_SOBOLEV = "PowerSobolev"
LOG_LP = "LogLp"
LOG_SOBOLEV = "LogSobolev"
_FORMS = (POWER_SOBOLEV, LOG_LP, LOG_SOBOLEV)

ISS = "ISS"
IISS = "iISS"


# ---------------------------------------------------------------------------
# Lyapunov functionals
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LyapunovFunctional:
    """``V = Z`` or ``V = ln(1 + Z)`` with ``Z`` a ``2q``-th power norm.

    ``PowerSobolev``: ``Z = int x_l^{2q}``, ``V = Z``.
    ``LogLp``: ``Z = int x^{2q}``, ``V = ln(1 + Z)``.
    ``LogSobolev``: ``Z = int x_l^{2q}``, ``V = ln(1 + Z)``.
    """

    form: str
    q: int = 1
    L: float = math.pi

    def __post_init__(self):
        if self.form not in _FORMS:
            raise ValueError(f"unknown functional form {self.form!r}")
        if int(self.q) != self.q or self.q < 1:
            raise ValueError("q must be a positive integer")

    @classmethod
    def power_sobolev(cls, q=1, L=math.pi):
        return cls(POWER_SOBOLEV, int(q), float(L))

    @classmethod
    def log_lp(cls, q=1, L=math.pi):
        return cls(LOG_LP, int(q), float(L))

    @classmethod
    def log_sobolev(cls, q=1, L=math.pi):
        return cls(LOG_SOBOLEV, int(q), float(L))

    @property
    def state_norm(self):
        """The norm whose ``2q``-th power is ``Z``."""
        if self.form == LOG_LP:
            return NormSpec.lp(2 * self.q)
        return NormSpec.sobolev(self.q)

    @property
    def psi(self):
        """``V = psi(|x|)`` exactly, so this is both sandwich bound."""
        p = 2.0 * self.q
        return cf.power(p) if self.form == POWER_SOBOLEV else cf.log_pow(p)

    def Z_array(self, values, h, bc=UNCONSTRAINED):
        x = np.asarray(values, dtype=float)
        base = x if self.form == LOG_LP else d1_array(x, h, bc)
        return trapezoid(base ** (2 * self.q), h)

    def values_array(self, values, h, bc=UNCONSTRAINED):
        Z = self.Z_array(values, h, bc)
        return Z if self.form == POWER_SOBOLEV else np.log1p(Z)


def eval_V(V, x):
    """Value of the functional ``V`` at the grid function ``x``."""
    if abs(x.L - V.L) > 1e-12 * V.L:
        raise ValueError("grid function and functional live on different domains")
    return float(V.values_array(x.values, x.h, x.bc))


# ---------------------------------------------------------------------------
# Certificates
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipationCertificate:
    """Claimed dissipation inequality for one (sub)system."""

    V: LyapunovFunctional
    alpha: ComparisonFn
    sigma: ComparisonFn
    state_norm: NormSpec
    input_norm: NormSpec
    kappa: ComparisonFn = field(default_factory=cf.zero)
    external_norm: NormSpec | None = None
    psi1: ComparisonFn | None = None
    psi2: ComparisonFn | None = None
    name: str = "certificate"

    def __post_init__(self):
        if self.psi1 is None:
            object.__setattr__(self, "psi1", self.V.psi)
        if self.psi2 is None:
            object.__setattr__(self, "psi2", self.V.psi)
        if self.alpha.tag == ZERO:
            raise ComparisonClassError(f"{self.name}: alpha must be positive definite")
        for fn, label in ((self.sigma, "sigma"), (self.kappa, "kappa")):
            if fn.tag == PD:
                raise ComparisonClassError(f"{self.name}: {label} must be class K or zero")
        for fn in (self.psi1, self.psi2):
            if fn.tag != KINF:
                raise ComparisonClassError(f"{self.name}: sandwich bounds must be Kinf")
        s = cf.SAMPLE_GRID
        if np.any(self.psi1(s) > self.psi2(s) * (1 + 1e-12)):
            raise ComparisonClassError(f"{self.name}: psi1 exceeds psi2 on samples")

    def rhs(self, x_norm, w_norm, u_norm=0.0):
        return -self.alpha(x_norm) + self.sigma(w_norm) + self.kappa(u_norm)

    def with_sigma(self, sigma, name=None):
        return DissipationCertificate(
            self.V, self.alpha, sigma, self.state_norm, self.input_norm, self.kappa,
            self.external_norm, self.psi1, self.psi2, name or self.name,
        )


def _fn(func, tag, sup, name):
    return ComparisonFn(func, tag, sup, name)


def _agmon_scale(L):
    """Factor ``k`` with ``|u|_Linf <= k |u|_H10`` from Agmon plus Friedrichs."""
    return math.sqrt(L * L / (math.pi * math.pi) + 1.0)


def _input_channel(sigma, input_space, L):
    if input_space == "Linf":
        return sigma, NormSpec.linf()
    if input_space == "H10":
        k = _agmon_scale(L)
        f = sigma.func
        return _fn(lambda r: f(k * np.asarray(r, dtype=float)), sigma.tag, sigma.sup_limit,
                   f"{sigma.name}({k:.6g}r)"), NormSpec.h10()
    raise ValueError(f"unknown input space {input_space!r}")


def hat_alpha(eta, c_diff, epsilon, q, L, s):
    """``(pi^2 / (q^2 L^2)) (c - epsilon) s + L eta(s / L)``."""
    s = np.asarray(s, dtype=float)
    out = (math.pi ** 2 / (q * q * L * L)) * (c_diff - epsilon) * s + L * np.asarray(eta(s / L))
    return float(out) if out.ndim == 0 else out


def hat_alpha_nonnegative(eta, c_diff, epsilon, q, L, s_grid=None, atol=1e-12):
    s = cf.log_grid(1e-6, 1e6, 200) if s_grid is None else np.asarray(s_grid, dtype=float)
    v = hat_alpha(eta, c_diff, epsilon, q, L, s)
    return bool(np.all(v >= -atol * np.maximum(1.0, np.abs(v))))


def _young_growth(q, omega, omega2, epsilon, L):
    """Coefficient of ``V`` left after the Young splitting, before ``2q(2q-1)``."""
    base = (omega / 2.0 - epsilon) * math.pi ** 2 / (q * q * L * L)
    if q == 1:
        return base
    if omega2 is None or not omega2 > 0:
        raise ValueError("q > 1 needs a positive omega2")
    return base + omega2 ** (1.0 / (q - 1)) * (q - 1) / (2.0 * omega * q)


def sobolev_iss_certificate(c_diff, eta, epsilon, omega, L, q=1, omega2=None):
    """Certificate for ``x_t = c x_ll + f(x, x_l) + u`` with ``V = |x|^{2q}_{W^{1,2q}_0}``.

    For ``q = 1`` the right-hand side is
    ``2 (omega/2 - epsilon) (pi/L)^2 V - 2 hat_alpha(V) + |u|^2_{L2} / omega``.
    For ``q > 1`` the bracket gains the Young term in ``omega2`` and the
    whole estimate is multiplied by ``2q(2q - 1)``; the input enters as
    ``|u|^{2q}_{L2q} / (2 omega omega2 q)``.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    grow = _young_growth(q, omega, omega2, epsilon, L)
    scale = 2.0 if q == 1 else 2.0 * q * (2 * q - 1)
    p = 2 * q

    def alpha(s):
        V = np.asarray(s, dtype=float) ** p
        return scale * (hat_alpha(eta, c_diff, epsilon, q, L, V) - grow * V)

    if q == 1:
        sigma = cf.power(2.0, 1.0 / omega)
    else:
        sigma = cf.power(float(p), scale / (2.0 * omega * omega2 * q))
    V = LyapunovFunctional.power_sobolev(q, L)
    return DissipationCertificate(
        V=V,
        alpha=_fn(alpha, PD, math.inf, "sobolev-iss alpha"),
        sigma=sigma,
        state_norm=V.state_norm,
        input_norm=NormSpec.lp(p),
        name="sobolev-iss",
    )


def lp_iiss_certificate(c_diff, q, L, sigma, alpha=None, friedrichs=False, input_space="Linf"):
    """Certificate for ``x_t = c x_ll + f(x, u)`` with ``V = ln(1 + |x|^{2q}_{L2q})``.

    ``sigma`` is the gain of the pointwise bound
    ``2q y^{2q-1} f(y, u) <= -alpha(y^{2q}) + y^{2q} sigma(|u|)``.
    Without ``alpha`` the dissipation comes from diffusion alone, with the
    Poincare constant ``pi^2 / (4 L^2)`` or, for Dirichlet data at both ends
    (``friedrichs=True``), ``pi^2 / L^2``. With a convex ``alpha`` the rate
    is ``L alpha(Z / L) / (1 + Z)`` instead. ``input_space="H10"`` rescales
    the input through ``|u|_Linf <= sqrt(L^2/pi^2 + 1) |u|_H10``.
    """
    p = 2 * q
    if alpha is None:
        ineq = 1.0 if friedrichs else 0.25
        rate = (2.0 * (2 * q - 1) * c_diff / q) * (math.pi ** 2 / L ** 2) * ineq

        def a_fn(s):
            Z = np.asarray(s, dtype=float) ** p
            return rate * Z / (1.0 + Z)

        a = _fn(a_fn, cf.K, rate, f"{rate:.6g}*Z/(1+Z)")
    else:
        af = alpha.func

        def a_fn(s):
            Z = np.asarray(s, dtype=float) ** p
            return L * np.asarray(af(Z / L)) / (1.0 + Z)

        sup = math.inf if alpha.tag == KINF else L * alpha.sup_limit
        a = _fn(a_fn, PD, sup, "L*alpha(Z/L)/(1+Z)")
    sig, in_norm = _input_channel(sigma, input_space, L)
    V = LyapunovFunctional.log_lp(q, L)
    return DissipationCertificate(
        V=V, alpha=a, sigma=sig, state_norm=V.state_norm, input_norm=in_norm, name="lp-iiss",
    )


def bilinear_iiss_certificate(c_diff, eta, epsilon, omega, L, q=1, omega2=None, input_space="Linf"):
    """Certificate for ``x_t = c x_ll + f(x, x_l) + x_l u``.

    The functional is ``V = ln(1 + |x|^{2q}_{W^{1,2q}_0})``.

    The decay bound of :func:`sobolev_iss_certificate` is divided by
    ``1 + Z``; the input enters as ``|u|^2_Linf / omega`` for ``q = 1`` and
    as ``2q(2q-1) |u|^{2q}_Linf / (2 omega omega2 q)`` otherwise.
    """
    if not omega > 0:
        raise ValueError("omega must be positive")
    grow = _young_growth(q, omega, omega2, epsilon, L)
    scale = 2.0 if q == 1 else 2.0 * q * (2 * q - 1)
    p = 2 * q

    def alpha(s):
        Z = np.asarray(s, dtype=float) ** p
        return scale * (hat_alpha(eta, c_diff, epsilon, q, L, Z) - grow * Z) / (1.0 + Z)

    if q == 1:
        sigma = cf.power(2.0, 1.0 / omega)
    else:
        sigma = cf.power(float(p), scale / (2.0 * omega * omega2 * q))
    sig, in_norm = _input_channel(sigma, input_space, L)
    V = LyapunovFunctional.log_sobolev(q, L)
    return DissipationCertificate(
        V=V,
        alpha=_fn(alpha, PD, math.inf, "bilinear-iiss alpha"),
        sigma=sig,
        state_norm=V.state_norm,
        input_norm=in_norm,
        name="bilinear-iiss",
    )


# ---------------------------------------------------------------------------
# Checks along trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipationReport:
    name: str
    violations: list
    worst_excess: float
    worst_time: float
    n_checked: int
    tol: float

    @property
    def passed(self):
        return not self.violations

    def to_dict(self):
        return {
            "check": self.name,
            "status": "pass" if self.passed else "fail",
            "worst_violation": self.worst_excess,
            "time": self.worst_time,
            "n_violations": len(self.violations),
            "n_checked": self.n_checked,
            "tol": self.tol,
        }


def default_tol(dt, h):
    """Discretisation allowance ``10 dt + 10 h^2``."""
    return 10.0 * dt + 10.0 * h * h


def V_series(V, traj, component=0):
    return V.values_array(traj.states[component], traj.h, traj.bcs[component])


def lie_derivative(V, traj, k, component=0):
    """Forward difference ``(V(x_{k+1}) - V(x_k)) / dt``."""
    if not 0 <= k < len(traj) - 1:
        raise IndexError(f"step index {k} outside [0, {len(traj) - 1})")
    x = traj.states[component][k:k + 2]
    v = V.values_array(x, traj.h, traj.bcs[component])
    return float((v[1] - v[0]) / traj.dt)


def check_dissipation(cert, traj, inputs=None, tol=None, component=0, input_bc=None,
                      external=None):
    """Compare the numerical ``dV/dt`` with the certificate at every step.

    Parameters
    ----------
    cert : DissipationCertificate
    traj : Trajectory
    inputs : array of shape ``(n_times, N + 1)``, optional
        Input field ``w`` per recorded time; defaults to the input the
        simulation applied to ``component``. For an interconnection pass the
        other subsystem's states.
    tol : float, optional
        Allowance added to the right-hand side; defaults to ``10 dt + 10 h^2``.
    input_bc : BC, optional
        Boundary tag used when differentiating ``inputs``.
    external : array, optional
        External input fed through ``kappa``.

    Returns
    -------
    DissipationReport
        ``violations`` lists ``(t_k, lhs, rhs)`` wherever ``lhs > rhs + tol``.

    Notes
    -----
    The input is held constant over each step, so the forward difference
    over ``[t_k, t_{k+1}]`` is compared with the mean of the right-hand side
    at ``(x_k, w_k)`` and ``(x_{k+1}, w_k)``.
    """
    h = traj.h
    tol = default_tol(traj.dt, h) if tol is None else float(tol)
    w = traj.inputs[component] if inputs is None else np.asarray(inputs, dtype=float)
    wbc = UNCONSTRAINED if input_bc is None else input_bc
    x = traj.states[component]
    bc = traj.bcs[component]
    v = cert.V.values_array(x, h, bc)
    lhs = np.diff(v) / traj.dt
    xn = norm_array(x, h, cert.state_norm, bc)
    wn = norm_array(w[:-1], h, cert.input_norm, wbc)
    if external is not None and cert.external_norm is not None:
        un = norm_array(np.asarray(external, dtype=float)[:-1], h, cert.external_norm)
    else:
        un = np.zeros_like(wn)
    gain = np.asarray(cert.sigma(wn)) + np.asarray(cert.kappa(un))
    rhs = gain - 0.5 * (np.asarray(cert.alpha(xn[:-1])) + np.asarray(cert.alpha(xn[1:])))
    excess = lhs - rhs
    bad = np.nonzero(excess > tol)[0]
    k = int(np.argmax(excess)) if excess.size else 0
    return DissipationReport(
        name=cert.name,
        violations=[(float(traj.times[j]), float(lhs[j]), float(rhs[j])) for j in bad],
        worst_excess=float(excess[k]) if excess.size else 0.0,
        worst_time=float(traj.times[k]) if excess.size else 0.0,
        n_checked=int(excess.size),
        tol=tol,
    )


def monotonicity_violations(times, values, tol):
    """``(t_k, increase)`` wherever ``values[k+1] - values[k] > tol``."""
    inc = np.diff(np.asarray(values, dtype=float))
    return [(float(times[j]), float(inc[j])) for j in np.nonzero(inc > tol)[0]]


# ---------------------------------------------------------------------------
# Hypothesis checks
# ---------------------------------------------------------------------------

def check_assumption_f(spec, eta, q, samples, tol_factor=10.0):
    """Test ``int x_l^{2q-2} x_ll f(x, x_l) >= int eta(x_l^{2q})`` on samples.

    The reaction is evaluated with zero input. Each comparison allows
    ``tol_factor * h^2 * max(1, |lhs|, |rhs|)``.
    """
    for x in samples:
        v, h = x.values, x.h
        xl = d1_array(v, h, x.bc)
        xll = d2_array(v, h, x.bc)
        f = np.asarray(spec.reaction(v, xl, np.zeros_like(v)), dtype=float)
        lhs = float(trapezoid(xl ** (2 * q - 2) * xll * f, h))
        rhs = float(trapezoid(np.asarray(eta(xl ** (2 * q)), dtype=float) * np.ones_like(v), h))
        if lhs < rhs - tol_factor * h * h * max(1.0, abs(lhs), abs(rhs)):
            return False
    return True


def check_scalar_condition(q, f_scalar, alpha, sigma, y_grid, u_grid, rtol=1e-12):
    """Test ``2q y^{2q-1} f(y, u) <= -alpha(y^{2q}) + y^{2q} sigma(|u|)`` on a grid.

    ``alpha`` and ``sigma`` may be comparison functions or plain callables.
    """
    Y, U = np.meshgrid(np.asarray(y_grid, dtype=float), np.asarray(u_grid, dtype=float))
    W = Y ** (2 * q)
    lhs = 2 * q * Y ** (2 * q - 1) * np.asarray(f_scalar(Y, U), dtype=float)
    rhs = -np.asarray(alpha(W), dtype=float) + W * np.asarray(sigma(np.abs(U)), dtype=float)
    slack = rtol * np.maximum(1.0, np.maximum(np.abs(lhs), np.abs(rhs)))
    return bool(np.all(lhs <= rhs + slack))


def check_g_condition(g, hat_alpha_fn, q, L, s_grid, rtol=1e-8):
    """Test ``L s g(s) = hat_alpha(L s^{2q/(2q-1)})`` on ``s_grid``."""
    if g.tag != KINF:
        raise ComparisonClassError("g must be class Kinf")
    s = np.asarray(s_grid, dtype=float)
    lhs = L * s * np.asarray(g(s), dtype=float)
    rhs = np.asarray(hat_alpha_fn(L * s ** (2.0 * q / (2.0 * q - 1.0))), dtype=float)
    return bool(np.all(np.abs(lhs - rhs) <= rtol * np.maximum(np.abs(lhs), np.abs(rhs))))


def check_iss_gate(alpha, sigma):
    """``ISS`` if alpha is unbounded or its limit reaches sigma's, else ``iISS``."""
    if math.isinf(alpha.sup_limit):
        return ISS
    return ISS if alpha.sup_limit >= sigma.sup_limit else IISS
