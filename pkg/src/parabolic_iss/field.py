"""Grid functions on ``(0, L)``, finite-difference derivatives and norms.

Functions are sampled at ``l_j = j h``, ``j = 0..N``, ``h = L / N``.
Integrals use the composite trapezoid rule on the node values; first
derivatives use central differences in the interior and second-order
one-sided stencils at the ends (a Neumann end uses the mirrored ghost
node instead, which makes the end derivative exactly zero).

The array helpers (``d1_array``, ``trapezoid`` ...) accept stacks of
states with the spatial index last, which the simulation and certificate
code use to evaluate whole trajectories at once.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .comparison import KINF, extended_inverse

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
FREE = "free"
_END_KINDS = (DIRICHLET, NEUMANN, FREE)


@dataclass(frozen=True)
class BC:
    """Boundary condition tag, one kind per endpoint."""

    left: str
    right: str

    def __post_init__(self):
        if self.left not in _END_KINDS or self.right not in _END_KINDS:
            raise ValueError(f"unknown boundary kind in {self}")

    @property
    def tag(self):
        if self.left == self.right == DIRICHLET:
            return "DirichletZero"
        if self.left == self.right == NEUMANN:
            return "NeumannZero"
        return f"Mixed({self.left},{self.right})"

    @classmethod
    def parse(cls, tag):
        if tag == "DirichletZero":
            return DIRICHLET_ZERO
        if tag == "NeumannZero":
            return NEUMANN_ZERO
        m = re.fullmatch(r"Mixed\((\w+),(\w+)\)", tag)
        if not m:
            raise ValueError(f"cannot parse boundary tag {tag!r}")
        return cls(m.group(1), m.group(2))


DIRICHLET_ZERO = BC(DIRICHLET, DIRICHLET)
NEUMANN_ZERO = BC(NEUMANN, NEUMANN)
UNCONSTRAINED = BC(FREE, FREE)


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Node values of a function on ``(0, L)`` plus its boundary tag."""

    values: np.ndarray
    L: float
    bc: BC = UNCONSTRAINED

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 1 or v.size < 9:
            raise ValueError("a grid function needs N >= 8 (at least 9 nodes)")
        if not self.L > 0:
            raise ValueError("domain length must be positive")
        scale = max(1.0, float(np.max(np.abs(v))))
        for end, idx in ((self.bc.left, 0), (self.bc.right, -1)):
            if end == DIRICHLET:
                if abs(v[idx]) > 1e-12 * scale:
                    raise ValueError(f"Dirichlet end value {v[idx]:.3g} is not zero")
                v[idx] = 0.0
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self):
        return self.values.size - 1

    @property
    def h(self):
        return self.L / self.N

    @property
    def nodes(self):
        return np.linspace(0.0, self.L, self.N + 1)

    @classmethod
    def from_callable(cls, f, L, N, bc=UNCONSTRAINED):
        """Sample ``f`` on the grid; Dirichlet ends are pinned to zero."""
        l = np.linspace(0.0, L, N + 1)
        v = np.array(np.broadcast_to(f(l), l.shape), dtype=float)
        if bc.left == DIRICHLET:
            v[0] = 0.0
        if bc.right == DIRICHLET:
            v[-1] = 0.0
        return cls(v, L, bc)

    @classmethod
    def zeros(cls, L, N, bc=UNCONSTRAINED):
        return cls(np.zeros(N + 1), L, bc)

    def with_values(self, values, bc=None):
        return GridFunction(values, self.L, self.bc if bc is None else bc)

    def __mul__(self, c):
        return self.with_values(self.values * float(c))

    __rmul__ = __mul__

    def __add__(self, other):
        _check_same_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other):
        _check_same_grid(self, other)
        return self.with_values(self.values - other.values)

    def __neg__(self):
        return self.with_values(-self.values)

    # -- serialisation -----------------------------------------------------
    def to_csv(self, path):
        path = Path(path)
        lines = [f"# L={self.L!r} N={self.N} bc={self.bc.tag}"]
        lines += [f"{l:.17g},{v:.17g}" for l, v in zip(self.nodes, self.values)]
        try:
            path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        except OSError as exc:
            raise OSError(f"cannot write grid function to {path}: {exc}") from exc

    @classmethod
    def from_csv(cls, path):
        text = Path(path).read_text(encoding="utf-8").splitlines()
        m = re.fullmatch(r"#\s*L=(\S+)\s+N=(\d+)\s+bc=(\S+)", text[0].strip())
        if not m:
            raise ValueError(f"{path}: missing '# L=.. N=.. bc=..' header")
        L, N, bc = float(m.group(1)), int(m.group(2)), BC.parse(m.group(3))
        rows = np.array([[float(c) for c in line.split(",")] for line in text[1:] if line.strip()])
        if rows.shape != (N + 1, 2):
            raise ValueError(f"{path}: expected {N + 1} rows, found {rows.shape[0]}")
        return cls(rows[:, 1], L, bc)


def _check_same_grid(a, b):
    if a.N != b.N or a.L != b.L:
        raise ValueError("grid functions live on different grids")


# ---------------------------------------------------------------------------
# Array-level stencils (last axis is space)
# ---------------------------------------------------------------------------

def trapezoid(values, h):
    v = np.asarray(values, dtype=float)
    return h * (v.sum(axis=-1) - 0.5 * (v[..., 0] + v[..., -1]))


def d1_array(values, h, bc=UNCONSTRAINED):
    x = np.asarray(values, dtype=float)
    d = np.empty_like(x)
    d[..., 1:-1] = (x[..., 2:] - x[..., :-2]) / (2.0 * h)
    if bc.left == NEUMANN:
        d[..., 0] = 0.0
    else:
        d[..., 0] = (-3.0 * x[..., 0] + 4.0 * x[..., 1] - x[..., 2]) / (2.0 * h)
    if bc.right == NEUMANN:
        d[..., -1] = 0.0
    else:
        d[..., -1] = (3.0 * x[..., -1] - 4.0 * x[..., -2] + x[..., -3]) / (2.0 * h)
    return d


def d2_array(values, h, bc=UNCONSTRAINED):
    x = np.asarray(values, dtype=float)
    d = np.empty_like(x)
    h2 = h * h
    d[..., 1:-1] = (x[..., :-2] - 2.0 * x[..., 1:-1] + x[..., 2:]) / h2
    if bc.left == NEUMANN:
        d[..., 0] = 2.0 * (x[..., 1] - x[..., 0]) / h2
    else:
        d[..., 0] = (2.0 * x[..., 0] - 5.0 * x[..., 1] + 4.0 * x[..., 2] - x[..., 3]) / h2
    if bc.right == NEUMANN:
        d[..., -1] = 2.0 * (x[..., -2] - x[..., -1]) / h2
    else:
        d[..., -1] = (2.0 * x[..., -1] - 5.0 * x[..., -2] + 4.0 * x[..., -3] - x[..., -4]) / h2
    return d


def d1(x):
    """First derivative as a grid function with unconstrained ends."""
    return x.with_values(d1_array(x.values, x.h, x.bc), bc=UNCONSTRAINED)


def d2(x):
    """Second derivative as a grid function with unconstrained ends."""
    return x.with_values(d2_array(x.values, x.h, x.bc), bc=UNCONSTRAINED)


# ---------------------------------------------------------------------------
# Norms
# ---------------------------------------------------------------------------

LP, SOBOLEV, LINF, UG = "Lp", "Sobolev", "Linf", "Ug"


@dataclass(frozen=True)
class NormSpec:
    """Which norm to take.

    ``Lp`` uses ``p``; ``Sobolev`` is the seminorm ``||x_l||_{L_2q}`` with
    integer ``q``; ``Ug`` is the integral ``int |u_l| g^-1(|u_l|) dl``.
    """

    kind: str
    p: float = 2.0
    q: int = 1
    g: object = None

    def __post_init__(self):
        if self.kind == LP and not self.p >= 1:
            raise ValueError("Lp norm needs p >= 1")
        if self.kind == SOBOLEV and (int(self.q) != self.q or self.q < 1):
            raise ValueError("Sobolev seminorm needs an integer q >= 1")
        if self.kind == UG and (self.g is None or self.g.tag != KINF):
            raise ValueError("Ug norm needs a Kinf function g")
        if self.kind not in (LP, SOBOLEV, LINF, UG):
            raise ValueError(f"unknown norm kind {self.kind!r}")

    @classmethod
    def lp(cls, p=2.0):
        return cls(LP, p=float(p))

    @classmethod
    def sobolev(cls, q=1):
        return cls(SOBOLEV, q=int(q))

    @classmethod
    def h10(cls):
        return cls(SOBOLEV, q=1)

    @classmethod
    def linf(cls):
        return cls(LINF)

    @classmethod
    def ug(cls, g):
        return cls(UG, g=g)

    @property
    def label(self):
        if self.kind == LP:
            return "L2" if self.p == 2 else f"L{self.p:g}"
        if self.kind == SOBOLEV:
            return "H10" if self.q == 1 else f"W1_{2 * self.q}"
        if self.kind == LINF:
            return "Linf"
        return "Ug"

    @classmethod
    def parse(cls, text):
        t = text.strip()
        if t in ("L2", "H10", "Linf"):
            return {"L2": cls.lp(2), "H10": cls.h10(), "Linf": cls.linf()}[t]
        m = re.fullmatch(r"L(\d+(?:\.\d+)?)", t)
        if m:
            return cls.lp(float(m.group(1)))
        m = re.fullmatch(r"W1_(\d+)", t)
        if m and int(m.group(1)) % 2 == 0:
            return cls.sobolev(int(m.group(1)) // 2)
        raise ValueError(f"unknown norm label {text!r}")


def norm_array(values, h, spec, bc=UNCONSTRAINED):
    """Norm of a stack of node-value arrays (last axis is space)."""
    x = np.asarray(values, dtype=float)
    if spec.kind == LP:
        return trapezoid(np.abs(x) ** spec.p, h) ** (1.0 / spec.p)
    if spec.kind == SOBOLEV:
        p = 2 * spec.q
        return trapezoid(np.abs(d1_array(x, h, bc)) ** p, h) ** (1.0 / p)
    if spec.kind == LINF:
        return np.max(np.abs(x), axis=-1)
    # Ug
    ends = np.abs(np.stack([x[..., 0], x[..., -1]]))
    if np.any(ends > 1e-12):
        raise ValueError("Ug input must vanish at both ends")
    du = np.abs(d1_array(x, h, bc))
    return trapezoid(du * extended_inverse(spec.g, du), h)


def norm(x, spec):
    return float(norm_array(x.values, x.h, spec, x.bc))


def product_norm(x1, n1, x2, n2):
    """Norm on the product space: the sum of the two component norms."""
    return norm(x1, n1) + norm(x2, n2)


# ---------------------------------------------------------------------------
# Initial-condition families
# ---------------------------------------------------------------------------

def _mode(k, l, L, bc):
    """k-th eigenfunction (k >= 1) of -d2/dl2 compatible with ``bc``."""
    left_d = bc.left == DIRICHLET
    right_d = bc.right == DIRICHLET
    if left_d and right_d:
        return np.sin(k * math.pi * l / L)
    if not left_d and not right_d:
        return np.cos((k - 1) * math.pi * l / L)
    if left_d:
        return np.sin((k - 0.5) * math.pi * l / L)
    return np.cos((k - 0.5) * math.pi * l / L)


def sine_modes(L, N, modes, bc=DIRICHLET_ZERO):
    """Sum of ``amplitude * mode_n`` for ``(n, amplitude)`` in ``modes``."""
    l = np.linspace(0.0, L, N + 1)
    v = np.zeros_like(l)
    for n, amp in modes:
        v += float(amp) * _mode(int(n), l, L, bc)
    return GridFunction.from_callable(lambda _: v, L, N, bc)


def random_bandlimited(L, N, cutoff, amplitude, rng, bc=DIRICHLET_ZERO):
    """Random combination of the first ``cutoff`` modes with sup-norm ``amplitude``.

    Mode ``k`` gets an independent standard normal coefficient scaled by
    ``1/k``.
    """
    l = np.linspace(0.0, L, N + 1)
    coeffs = rng.standard_normal(int(cutoff)) / np.arange(1, cutoff + 1)
    v = sum(c * _mode(k + 1, l, L, bc) for k, c in enumerate(coeffs))
    peak = float(np.max(np.abs(v)))
    if peak > 0:
        v = v * (amplitude / peak)
    return GridFunction.from_callable(lambda _: v, L, N, bc)
