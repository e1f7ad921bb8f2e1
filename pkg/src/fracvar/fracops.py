"""Discrete fractional operators on a uniform grid.

Left-sided operators are truncated Grünwald-Letnikov sums with the Caputo
correction for a nonzero initial value; right-sided operators reuse the same
kernel on the reflected axis ``t -> a + b - t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np

__all__ = [
    "Grid",
    "FracOrder",
    "SampledSignal",
    "OrderError",
    "PoleError",
    "gamma",
    "rgamma",
    "gl_weights",
    "caputo_left",
    "gl_left",
    "rl_right_derivative",
    "rl_right_integral",
    "caputo_right",
    "caputo_left_higher",
]


class OrderError(ValueError):
    """Fractional order outside the range an operator supports."""


class PoleError(ValueError):
    """Gamma function requested at a non-positive integer."""


# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEFFS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _is_pole(x: float) -> bool:
    return x <= 0.0 and x == math.floor(x)


def _lanczos(z: float) -> float:
    # Gamma(z) for z >= 0.5
    z -= 1.0
    acc = _LANCZOS_COEFFS[0]
    for i, c in enumerate(_LANCZOS_COEFFS[1:], start=1):
        acc += c / (z + i)
    t = z + _LANCZOS_G + 0.5
    # split the power to keep t**(z + 0.5) from overflowing before exp(-t)
    half = t ** (0.5 * (z + 0.5))
    return _SQRT_2PI * half * (half * math.exp(-t)) * acc


def _gamma_scalar(x: float) -> float:
    if _is_pole(x):
        raise PoleError(f"gamma has a pole at {x!r}")
    if x < 0.5:
        return math.pi / (math.sin(math.pi * x) * _lanczos(1.0 - x))
    return _lanczos(x)


def _rgamma_scalar(x: float) -> float:
    if _is_pole(x):
        return 0.0
    if x < 0.5:
        # 1/Gamma(x) = sin(pi x) Gamma(1 - x) / pi, finite through the poles
        return math.sin(math.pi * x) * _lanczos(1.0 - x) / math.pi
    return 1.0 / _lanczos(x)


def gamma(x):
    """Gamma function via the Lanczos approximation.

    Accepts a scalar or an array. Raises :class:`PoleError` at non-positive
    integers.
    """
    if np.ndim(x) == 0:
        return _gamma_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([_gamma_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


def rgamma(x):
    """Reciprocal gamma ``1/Gamma(x)``, equal to 0 at the poles."""
    if np.ndim(x) == 0:
        return _rgamma_scalar(float(x))
    arr = np.asarray(x, dtype=float)
    return np.array([_rgamma_scalar(v) for v in arr.ravel()]).reshape(arr.shape)


@dataclass(frozen=True)
class Grid:
    """Uniform partition ``t_j = a + j*h`` of ``[a, b]`` into ``n`` cells."""

    a: float
    b: float
    n: int

    def __post_init__(self):
        if not (math.isfinite(self.a) and math.isfinite(self.b)):
            raise ValueError("grid endpoints must be finite")
        if not self.b > self.a:
            raise ValueError(f"need b > a, got a={self.a}, b={self.b}")
        if int(self.n) != self.n or self.n < 2:
            raise ValueError(f"need an integer n >= 2, got {self.n}")
        object.__setattr__(self, "n", int(self.n))

    @property
    def h(self) -> float:
        return (self.b - self.a) / self.n

    @cached_property
    def nodes(self) -> np.ndarray:
        t = self.a + self.h * np.arange(self.n + 1)
        t[-1] = self.b
        t.flags.writeable = False
        return t

    def __len__(self) -> int:
        return self.n + 1


@dataclass(frozen=True)
class FracOrder:
    """Order ``alpha > 0`` with its integer band ``i``, ``alpha in (i-1, i]``."""

    alpha: float

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha > 0):
            raise OrderError(f"order must be positive, got {self.alpha}")

    @property
    def band(self) -> int:
        return max(1, math.ceil(self.alpha))

    @property
    def fractional_part(self) -> float:
        return self.alpha - (self.band - 1)


def _as_order(alpha) -> FracOrder:
    return alpha if isinstance(alpha, FracOrder) else FracOrder(float(alpha))


@dataclass(frozen=True, eq=False)
class SampledSignal:
    """Samples of a function on every node of a grid.

    ``flagged`` lists node indices that carry a convention value rather than
    an approximation of the operator (singular or starved endpoints).
    """

    grid: Grid
    values: np.ndarray
    flagged: tuple[int, ...] = field(default=())

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.grid.n + 1,):
            raise ValueError(
                f"expected {self.grid.n + 1} samples, got shape {vals.shape}"
            )
        if not np.all(np.isfinite(vals)):
            raise ValueError("sampled values must be finite")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "flagged", tuple(sorted(set(self.flagged))))

    @classmethod
    def from_function(cls, grid: Grid, func) -> SampledSignal:
        return cls(grid, np.broadcast_to(func(grid.nodes), (grid.n + 1,)))

    @property
    def t(self) -> np.ndarray:
        return self.grid.nodes

    def reflected(self) -> SampledSignal:
        """Samples of ``phi(a + b - t)`` on the same grid."""
        n = self.grid.n
        return SampledSignal(
            self.grid, self.values[::-1], tuple(n - j for j in self.flagged)
        )

    def __len__(self) -> int:
        return len(self.values)


@lru_cache(maxsize=64)
def _weights_cached(alpha: float, m: int) -> np.ndarray:
    w = np.empty(m + 1)
    w[0] = 1.0
    for k in range(1, m + 1):
        w[k] = w[k - 1] * (k - 1 - alpha) / k
    w.flags.writeable = False
    return w


def gl_weights(alpha: float, m: int) -> np.ndarray:
    """Grünwald-Letnikov weights ``w_k = (-1)^k binom(alpha, k)``, k = 0..m.

    Built with the recurrence ``w_k = w_{k-1} (k - 1 - alpha) / k`` so no
    gamma quotients are formed. Negative ``alpha`` gives fractional-integral
    weights. The returned array is read-only and cached.
    """
    if int(m) != m or m < 0:
        raise ValueError(f"need an integer m >= 0, got {m}")
    return _weights_cached(float(alpha), int(m))


def gl_left(values: np.ndarray, alpha: float, h: float) -> np.ndarray:
    """Raw left GL sums ``h^-alpha * sum_{k<=j} w_k v_{j-k}`` for every j."""
    v = np.asarray(values, dtype=float)
    w = gl_weights(alpha, len(v) - 1)
    return np.convolve(w, v)[: len(v)] / h**alpha


def caputo_left(x: SampledSignal, alpha) -> SampledSignal:
    """Left Caputo derivative of order ``0 < alpha <= 1`` by truncated GL.

    ``D x(t_j) = h^-alpha sum_k w_k x(t_{j-k}) - x(a) (t_j - a)^-alpha / Gamma(1 - alpha)``
    for j >= 1. Node 0, where the correction is singular, repeats the value at
    node 1 and is flagged.
    """
    order = _as_order(alpha)
    if order.alpha > 1:
        raise OrderError(f"caputo_left needs 0 < alpha <= 1, got {order.alpha}")
    grid = x.grid
    al = order.alpha
    out = gl_left(x.values, al, grid.h)
    tau = grid.nodes[1:] - grid.a
    out[1:] -= x.values[0] * rgamma(1.0 - al) * tau ** (-al)
    out[0] = out[1]
    return SampledSignal(grid, out, (0,))


def rl_right_derivative(phi: SampledSignal, alpha) -> SampledSignal:
    """Right Riemann-Liouville derivative ``D_{b-}^alpha``, 0 < alpha < 1.

    ``h^-alpha sum_{k=0}^{n-j} w_k phi(t_{j+k})``. Node n sees only one term
    and is flagged.
    """
    order = _as_order(alpha)
    if not order.alpha < 1:
        raise OrderError(f"rl_right_derivative needs 0 < alpha < 1, got {order.alpha}")
    out = gl_left(phi.values[::-1], order.alpha, phi.grid.h)[::-1]
    return SampledSignal(phi.grid, out, (phi.grid.n,))


def rl_right_integral(phi: SampledSignal, beta: float) -> SampledSignal:
    """Right Riemann-Liouville integral ``I_{b-}^beta``, 0 < beta < 1.

    GL sum with weights of order ``-beta``; node n sees only ``h^beta phi(b)``.
    """
    if not 0 < beta < 1:
        raise OrderError(f"rl_right_integral needs 0 < beta < 1, got {beta}")
    out = gl_left(phi.values[::-1], -beta, phi.grid.h)[::-1]
    return SampledSignal(phi.grid, out)


def caputo_right(phi: SampledSignal, alpha) -> SampledSignal:
    """Right Caputo derivative from the right RL derivative minus its boundary term.

    ``cD_{b-} phi(t) = D_{b-} phi(t) - phi(b) / (Gamma(1 - alpha) (b - t)^alpha)``.
    Node n, where the term is singular, repeats node n-1 and is flagged.
    """
    order = _as_order(alpha)
    rl = rl_right_derivative(phi, order)
    grid = phi.grid
    out = np.array(rl.values)
    dist = grid.b - grid.nodes[:-1]
    out[:-1] -= phi.values[-1] * rgamma(1.0 - order.alpha) * dist ** (-order.alpha)
    out[-1] = out[-2]
    return SampledSignal(grid, out, (grid.n,))


def caputo_left_higher(x: SampledSignal, alpha, initial_derivs) -> SampledSignal:
    """Left Caputo derivative of order ``alpha in (i-1, i)``, i >= 2.

    Applies the GL sum of order alpha to ``x`` minus its degree ``i-1`` Taylor
    polynomial at ``a`` built from ``initial_derivs = (x(a), x'(a), ...)``.
    Node 0 repeats node 1 and is flagged.
    """
    order = _as_order(alpha)
    band = order.band
    if band < 2 or order.alpha == band:
        raise OrderError(
            f"caputo_left_higher needs a non-integer order above 1, got {order.alpha}"
        )
    derivs = list(initial_derivs)
    if len(derivs) < band:
        raise ValueError(
            f"order {order.alpha} needs {band} initial derivatives, got {len(derivs)}"
        )
    grid = x.grid
    tau = grid.nodes - grid.a
    taylor = sum(d * tau**k / math.factorial(k) for k, d in enumerate(derivs[:band]))
    out = gl_left(x.values - taylor, order.alpha, grid.h)
    out[0] = out[1]
    return SampledSignal(grid, out, (0,))
