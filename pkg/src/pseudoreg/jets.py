"""Two-parameter first-order jet arithmetic.

A ``Jet2`` carries a truncated Taylor expansion ``v + a*eps + b*eta + c*eps*eta``
with the nilpotency relations ``eps**2 = eta**2 = 0``.  Pushing such numbers
through an ordinary numeric routine yields the exact value, the two first-order
directional derivatives, and the mixed second derivative of the routine with
respect to the two perturbation parameters.  Coefficients are plain floats; the
arithmetic is a rational-function calculus, so results are exact up to rounding
for any composition of +, -, *, /.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Jet2:
    v: float
    a: float = 0.0
    b: float = 0.0
    c: float = 0.0

    @staticmethod
    def lift(x) -> "Jet2":
        return x if isinstance(x, Jet2) else Jet2(float(x))

    def __add__(self, other):
        o = Jet2.lift(other)
        return Jet2(self.v + o.v, self.a + o.a, self.b + o.b, self.c + o.c)

    __radd__ = __add__

    def __neg__(self):
        return Jet2(-self.v, -self.a, -self.b, -self.c)

    def __sub__(self, other):
        return self + (-Jet2.lift(other))

    def __rsub__(self, other):
        return Jet2.lift(other) + (-self)

    def __mul__(self, other):
        o = Jet2.lift(other)
        return Jet2(
            self.v * o.v,
            self.v * o.a + self.a * o.v,
            self.v * o.b + self.b * o.v,
            self.v * o.c + self.c * o.v + self.a * o.b + o.a * self.b,
        )

    __rmul__ = __mul__

    def reciprocal(self):
        iv = 1.0 / self.v
        iv2 = iv * iv
        # d(1/y) = -y'/y^2; mixed term from differentiating -b/v^2 w.r.t. eps.
        return Jet2(
            iv,
            -self.a * iv2,
            -self.b * iv2,
            -self.c * iv2 + 2.0 * self.a * self.b * iv2 * iv,
        )

    def __truediv__(self, other):
        return self * Jet2.lift(other).reciprocal()

    def __rtruediv__(self, other):
        return Jet2.lift(other) * self.reciprocal()


EPS = Jet2(0.0, 1.0, 0.0, 0.0)
ETA = Jet2(0.0, 0.0, 1.0, 0.0)
