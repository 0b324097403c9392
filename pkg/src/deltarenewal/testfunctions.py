"""Compactly supported polynomial bumps used as test functions for weak pairings."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import SmoothnessError


@dataclass(frozen=True)
class Bump1D:
    """``s^moment (1 - s^2)^power`` with ``s = (z - center) / radius`` on ``|s| < 1``.

    The bump is ``C^(power-1)``; asking for a derivative of order ``>= power`` is an error.
    """

    center: float
    radius: float
    power: int = 8
    moment: int = 0

    def _poly(self, order: int) -> np.ndarray:
        if order >= self.power:
            raise SmoothnessError(f"bump of power {self.power} has no continuous derivative {order}")
        c = P.polypow([1.0, 0.0, -1.0], self.power)
        c = P.polymul(c, [0.0] * self.moment + [1.0])
        return P.polyder(c, order) if order else c

    def derivative(self, order: int = 0):
        c = self._poly(order)
        scale = self.radius ** (-order)

        def f(z):
            s = (np.asarray(z, float) - self.center) / self.radius
            return np.where(np.abs(s) < 1.0, P.polyval(s, c) * scale, 0.0)

        return f

    def __call__(self, z):
        return self.derivative(0)(z)

    @property
    def support(self) -> tuple[float, float]:
        return self.center - self.radius, self.center + self.radius

    def taylor_at_center(self, order: int) -> float:
        """``d^order/dz^order`` at the center."""
        return float(self.derivative(order)(self.center))


@dataclass(frozen=True)
class Bump2D:
    """Separable test function ``phi(x, t) = bx(x) bt(t)``."""

    bx: Bump1D
    bt: Bump1D

    def derivative(self, ix: int = 0, it: int = 0):
        fx, ft = self.bx.derivative(ix), self.bt.derivative(it)
        return lambda x, t: fx(x) * ft(t)

    def __call__(self, x, t):
        return self.derivative(0, 0)(x, t)

    @property
    def support(self) -> tuple[float, float, float, float]:
        """``(x_lo, x_hi, t_lo, t_hi)``."""
        return self.bx.support + self.bt.support

    @classmethod
    def around(cls, x: float, t: float, rx: float, rt: float | None = None, power: int = 8) -> "Bump2D":
        return cls(Bump1D(x, rx, power), Bump1D(t, rx if rt is None else rt, power))
