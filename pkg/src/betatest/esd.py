"""Limiting spectral distribution of the Beta matrix and quadrature against it.

Serves as an independent numerical check on the closed-form centering
constants in :mod:`betatest.pillai`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DegenerateDesignError, IntegrandError

DEFAULT_NODES = 512
MAX_NODES = 1 << 17
CONVERGENCE_TOL = 1e-10


@dataclass(frozen=True)
class EsdParams:
    y1: float
    y2: float

    def __post_init__(self) -> None:
        if not (self.y1 > 0 and self.y2 > 0):
            raise ValueError(f"ratios must be positive, got y1={self.y1}, y2={self.y2}")
        if self.h2 <= 0:
            raise DegenerateDesignError(
                f"h^2 = y1 + y2 - y1*y2 = {self.h2:.6g} <= 0: support collapses"
            )

    @property
    def alpha(self) -> float:
        return self.y1 / self.y2

    @property
    def h2(self) -> float:
        return self.y1 + self.y2 - self.y1 * self.y2

    @property
    def h(self) -> float:
        return math.sqrt(self.h2)

    @property
    def x_l(self) -> float:
        return self.y2 * (self.h - self.y1) ** 2 / (self.y1 + self.y2) ** 2

    @property
    def x_r(self) -> float:
        return self.y2 * (self.h + self.y1) ** 2 / (self.y1 + self.y2) ** 2

    @property
    def mass0(self) -> float:
        return max(0.0, (self.y1 - 1) / self.y1)

    @property
    def mass1(self) -> float:
        return max(0.0, (self.y2 - 1) / self.y2)

    def to_dict(self) -> dict:
        return {
            "y1": self.y1,
            "y2": self.y2,
            "alpha": self.alpha,
            "h": self.h,
            "x_l": self.x_l,
            "x_r": self.x_r,
            "mass0": self.mass0,
            "mass1": self.mass1,
        }


def esd_density(x, params: EsdParams):
    """Continuous part of the limiting density; zero outside (x_l, x_r).

    Accepts a scalar or an array.
    """
    xa = np.asarray(x, dtype=float)
    xl, xr = params.x_l, params.x_r
    inside = (xa > xl) & (xa < xr)
    xs = np.where(inside, xa, 0.5 * (xl + xr))
    dens = (params.alpha + 1) * np.sqrt((xr - xs) * (xs - xl)) / (
        2 * math.pi * params.y1 * xs * (1 - xs)
    )
    out = np.where(inside, dens, 0.0)
    return float(out) if out.ndim == 0 else out


def _anchors(params: EsdParams, g: Callable) -> tuple[float, float]:
    # pole anchors: 0 and 1 when g is finite there, else the support edges,
    # else no subtraction (slower convergence, still correct)
    for pts in ((0.0, 1.0), (params.x_l, params.x_r)):
        with np.errstate(all="ignore"):
            vals = np.asarray(g(np.array(pts)), dtype=float)
        if vals.shape == (2,) and np.all(np.isfinite(vals)):
            return float(vals[0]), float(vals[1])
        if vals.shape == () and np.isfinite(vals):
            return float(vals), float(vals)
    return 0.0, 0.0


def _chebyshev_rule(params: EsdParams, nodes: int, g: Callable) -> float:
    """One pass of the pole-subtracted rule.

    The density is ``C sqrt((x_r-x)(x-x_l)) / (x(1-x))`` and ``1/(x(1-x))``
    has poles that touch the support as y1 or y2 approach 1.  Writing
    ``g/(x(1-x)) = a/x + b/(1-x) + (g-a)/x + (g-b)/(1-x)`` leaves two pole
    terms with closed-form integrals and a remainder that second-kind
    Chebyshev-Gauss integrates spectrally.
    """
    xl, xr = params.x_l, params.x_r
    a, b = _anchors(params, g)
    k = np.arange(1, nodes + 1)
    theta = k * math.pi / (nodes + 1)
    w = math.pi / (nodes + 1) * np.sin(theta) ** 2
    half = 0.5 * (xr - xl)
    x = 0.5 * (xl + xr) + half * np.cos(theta)
    gx = np.asarray(g(x), dtype=float)
    if gx.shape != x.shape:
        gx = np.broadcast_to(gx, x.shape)
    if not np.all(np.isfinite(gx)):
        bad = x[~np.isfinite(gx)][0]
        raise IntegrandError(f"integrand is not finite at x={bad!r}")
    rest = (gx - a) / x + (gx - b) / (1 - x)
    pole0 = math.pi / 2 * (math.sqrt(xr) - math.sqrt(xl)) ** 2
    pole1 = math.pi / 2 * (math.sqrt(1 - xl) - math.sqrt(1 - xr)) ** 2
    scale = (params.alpha + 1) / (2 * math.pi * params.y1)
    return float(scale * (a * pole0 + b * pole1 + half**2 * np.sum(w * rest)))


def integrate_esd(g: Callable, params: EsdParams, nodes: int = DEFAULT_NODES) -> float:
    """Integrate ``g`` against the continuous part of the limiting density.

    ``g`` must accept a numpy array.  The rule is doubled until two successive
    values agree to 1e-10; point masses at 0 and 1 are not included.
    """
    if nodes < 16:
        raise ValueError(f"nodes must be >= 16, got {nodes}")
    prev = _chebyshev_rule(params, nodes, g)
    n = nodes
    while n < MAX_NODES:
        n *= 2
        cur = _chebyshev_rule(params, n, g)
        if abs(cur - prev) < CONVERGENCE_TOL:
            return cur
        prev = cur
    return prev


def density_grid(params: EsdParams, points: int) -> tuple[np.ndarray, np.ndarray]:
    """Equally spaced (x, density) pairs over the closed support."""
    if points < 2:
        raise ValueError(f"grid needs at least 2 points, got {points}")
    x = np.linspace(params.x_l, params.x_r, points)
    return x, esd_density(x, params)
