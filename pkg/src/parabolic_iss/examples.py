"""The two interconnected reaction-diffusion examples on ``(0, pi)``.

Both have Dirichlet conditions and share the second subsystem

    x2_t = x2_ll + a x2 - b x2 x2_l^2 + |x1| / sqrt(1 + x1^2).

The first subsystem is ``x1_t = x1_ll + x1 x2^4`` in example 1 (state
space ``L2``) and ``x1_t = x1_ll + x1_l x2^2`` in example 2 (state space
``H10``). The second subsystem's state space is ``H10`` in both.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import comparison as cf
from .certify import DissipationCertificate, LyapunovFunctional
from .comparison import ComparisonClassError, GainChain, check_small_gain
from .field import DIRICHLET_ZERO, NormSpec, random_bandlimited, sine_modes
from .pde import InterconnectionSpec, SystemSpec

PI = math.pi
L = PI
# Smallest small-gain constant tried when asking whether any c > 1 works;
# the chain is monotone in c, so this decides existence.
C_SG_EXISTENCE = 1.0 + 1e-6


def x1_reaction_ex1(x, x_l, u):
    return x * u ** 4


def x1_reaction_ex2(x, x_l, u):
    return x_l * u


def x2_reaction(a, b):
    def f(x, x_l, u):
        return a * x - b * x * x_l ** 2 + u

    return f


def coupling_to_x1_ex1(x1, x1_l, x2, x2_l):
    return x2


def coupling_to_x1_ex2(x1, x1_l, x2, x2_l):
    return x2 ** 2


def coupling_to_x2(x1, x1_l, x2, x2_l):
    return np.abs(x1) / np.sqrt(1.0 + x1 ** 2)


def x1_system(example):
    if example == 1:
        return SystemSpec(1.0, x1_reaction_ex1, DIRICHLET_ZERO, L,
                          NormSpec.lp(2), NormSpec.h10(), name="x1")
    return SystemSpec(1.0, x1_reaction_ex2, DIRICHLET_ZERO, L,
                      NormSpec.h10(), NormSpec.h10(), name="x1")


def x2_system(a, b, example=1):
    in_norm = NormSpec.lp(2) if example == 1 else NormSpec.h10()
    return SystemSpec(1.0, x2_reaction(a, b), DIRICHLET_ZERO, L,
                      NormSpec.h10(), in_norm, name="x2")


def interconnection(example, a, b):
    c1 = coupling_to_x1_ex1 if example == 1 else coupling_to_x1_ex2
    return InterconnectionSpec(x1_system(example), x2_system(a, b, example), c1, coupling_to_x2)


def x1_certificate(example):
    """Gains of the first subsystem with the second subsystem's state as input."""
    if example == 1:
        V = LyapunovFunctional.log_lp(1, L)
        return DissipationCertificate(V, cf.rational_sq(2.0), cf.power(4.0, 8.0),
                                      NormSpec.lp(2), NormSpec.h10(), name="x1")
    V = LyapunovFunctional.log_sobolev(1, L)
    return DissipationCertificate(V, cf.rational_sq(1.0), cf.power(4.0, 4.0),
                                  NormSpec.h10(), NormSpec.h10(), name="x1")


def x2_alpha(a, b, omega):
    """``2(1 - a - omega/2) s^2 + (2b / 3 pi) s^4``; raises unless ``omega <= 2(1 - a)``."""
    return cf.poly2_4(2.0 * (1.0 - a) - omega, 2.0 * b / (3.0 * PI))


def x2_certificate(a, b, omega, example=1):
    V = LyapunovFunctional.power_sobolev(1, L)
    in_norm = NormSpec.lp(2) if example == 1 else NormSpec.h10()
    return DissipationCertificate(V, x2_alpha(a, b, omega), cf.rational_sq(PI / omega),
                                  NormSpec.h10(), in_norm, name="x2")


def gain_chain(example, a, b, omega, c_sg):
    """Small-gain chain with ``alpha2`` replaced by its quartic part ``(2b / 3 pi) s^4``.

    Raises ``ComparisonClassError`` if the second certificate is invalid
    (``omega > 2(1 - a)``) or ``b = 0``.
    """
    c1 = x1_certificate(example)
    c2 = x2_certificate(a, b, omega, example)
    quartic = cf.power(4.0, 2.0 * b / (3.0 * PI))
    return GainChain.from_gains(c1.alpha, c1.sigma, c1.psi1, c1.psi2,
                                quartic, c2.sigma, c2.psi1, c2.psi2, c_sg)


def small_gain_exists(example, a, b, omega, s_grid=None):
    """Whether some ``c > 1`` passes the small-gain test for these parameters."""
    s = cf.log_grid() if s_grid is None else s_grid
    try:
        chain = gain_chain(example, a, b, omega, C_SG_EXISTENCE)
    except ComparisonClassError:
        return False
    return check_small_gain(chain, s).holds


def closed_form_criterion(a, b, omega):
    """``6 pi^2 / b < omega <= 2 (1 - a)``."""
    return b > 0 and 6.0 * PI ** 2 / b < omega and omega <= 2.0 * (1.0 - a)


def default_omega(a, b):
    """Midpoint of ``(6 pi^2 / b, 2(1 - a)]``, capped at its right end."""
    top = 2.0 * (1.0 - a)
    if b <= 0:
        return top
    return min(top, 0.5 * (6.0 * PI ** 2 / b + top))


def default_c_sg(b, omega):
    """1% below the largest admissible constant ``sqrt(b omega / 6 pi^2)``."""
    c = 0.99 * math.sqrt(max(b * omega, 0.0) / (6.0 * PI ** 2))
    return c if c > 1.0 else C_SG_EXISTENCE


def composite_closed_form(example, omega, v1, v2):
    """Composite value for ``psi = 0`` weights in closed form."""
    k = 8.0 if example == 1 else 4.0
    return (PI / omega) * _v_plus_expm1(v1) + (k / 3.0) * v2 ** 3


def _v_plus_expm1(v):
    """``v + e^{-v} - 1`` without cancellation for small ``v``."""
    if v < 1e-3:
        return v * v * (0.5 - v * (1.0 / 6.0 - v * (1.0 / 24.0 - v / 120.0)))
    return v + math.expm1(-v)


@dataclass(frozen=True)
class ExampleSetup:
    example: int
    a: float
    b: float
    omega: float
    c_sg: float
    ic: InterconnectionSpec
    cert1: DissipationCertificate
    cert2: DissipationCertificate
    chain: GainChain


def setup(example, a, b, omega=None, c_sg=None):
    """Systems, certificates and chain; ``omega``/``c_sg`` default as documented."""
    if example not in (1, 2):
        raise ValueError("example must be 1 or 2")
    omega = default_omega(a, b) if omega is None else float(omega)
    c_sg = default_c_sg(b, omega) if c_sg is None else float(c_sg)
    return ExampleSetup(
        example, a, b, omega, c_sg,
        interconnection(example, a, b),
        x1_certificate(example),
        x2_certificate(a, b, omega, example),
        gain_chain(example, a, b, omega, c_sg),
    )


def initial_state(family, N, rng=None, **params):
    """Dirichlet initial state on ``(0, pi)``.

    ``family="sine_modes"`` takes ``modes=[(n, amplitude), ...]``;
    ``family="random_bandlimited"`` takes ``cutoff`` and ``amplitude``.
    """
    if family == "sine_modes":
        return sine_modes(L, N, params["modes"], DIRICHLET_ZERO)
    if family == "random_bandlimited":
        if rng is None:
            raise ValueError("random_bandlimited needs an rng")
        return random_bandlimited(L, N, int(params["cutoff"]), float(params["amplitude"]), rng,
                                  DIRICHLET_ZERO)
    raise ValueError(f"unknown initial-condition family {family!r}")
