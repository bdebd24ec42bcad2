"""Closed-form differentiation of functions ``rho^a F(phi)`` with trigonometric ``F``.

``F`` is a finite sum ``sum_w C_w cos(w phi) + S_w sin(w phi)``; Cartesian
derivatives of such a term are sums of terms of the same kind with exponent
``a - 1``, which is all the corner-singular fields need.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


def _close(a, b):
    return abs(a - b) < 1e-13


@dataclass
class Trig:
    """Trigonometric series: ``terms[w] = (C, S)``."""

    terms: dict = field(default_factory=dict)

    @classmethod
    def cos(cls, w, c=1.0):
        return cls({w: (c, 0.0)})

    @classmethod
    def sin(cls, w, c=1.0):
        return cls({w: (0.0, c)})

    def _add(self, w, c, s, out):
        for key in out:
            if _close(key, w):
                c0, s0 = out[key]
                out[key] = (c0 + c, s0 + s)
                return
        out[w] = (c, s)

    def __add__(self, other):
        out = dict(self.terms)
        for w, (c, s) in other.terms.items():
            self._add(w, c, s, out)
        return Trig(out)

    def scale(self, a):
        return Trig({w: (a * c, a * s) for w, (c, s) in self.terms.items()})

    def diff(self):
        return Trig({w: (w * s, -w * c) for w, (c, s) in self.terms.items()})

    def times_cos(self):
        out: dict = {}
        for w, (c, s) in self.terms.items():
            # cos x cos wx = (cos(w-1)x + cos(w+1)x)/2, cos x sin wx = (sin(w+1)x + sin(w-1)x)/2
            self._add(w + 1, 0.5 * c, 0.5 * s, out)
            self._add(w - 1, 0.5 * c, 0.5 * s, out)
        return Trig(out)

    def times_sin(self):
        out: dict = {}
        for w, (c, s) in self.terms.items():
            # sin x cos wx = (sin(w+1)x - sin(w-1)x)/2, sin x sin wx = (cos(w-1)x - cos(w+1)x)/2
            self._add(w + 1, -0.5 * s, 0.5 * c, out)
            self._add(w - 1, 0.5 * s, -0.5 * c, out)
        return Trig(out)

    def __call__(self, phi):
        phi = np.asarray(phi, dtype=float)
        out = np.zeros_like(phi)
        for w, (c, s) in self.terms.items():
            if c:
                out += c * np.cos(w * phi)
            if s:
                out += s * np.sin(w * phi)
        return out


@dataclass
class PolarTerm:
    """``rho^a F(phi)``."""

    a: float
    F: Trig

    def grad(self):
        """Cartesian partials ``(d/dx, d/dy)`` as PolarTerms with exponent ``a - 1``."""
        Fp = self.F.diff()
        dx = self.F.times_cos().scale(self.a) + Fp.times_sin().scale(-1.0)
        dy = self.F.times_sin().scale(self.a) + Fp.times_cos()
        return PolarTerm(self.a - 1, dx), PolarTerm(self.a - 1, dy)

    def __call__(self, rho, phi):
        return rho ** self.a * self.F(phi)


def polar_coordinates(x, branch_cut: float = 1.5 * np.pi):
    """``(rho, phi)`` with ``phi`` in ``[0, 2 pi)``; raises at the origin."""
    x = np.asarray(x, dtype=float)
    rho = np.hypot(x[..., 0], x[..., 1])
    if np.any(rho == 0.0):
        raise ValueError("field is singular at the re-entrant corner (0, 0)")
    phi = np.arctan2(x[..., 1], x[..., 0])
    phi = np.where(phi < 0, phi + 2 * np.pi, phi)
    return rho, phi
