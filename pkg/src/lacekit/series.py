"""Truncated exact power series and site-indexed series."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .lattice import StepKernel, kernel_from_json, _sym_images


class ActivityPoly:
    """Polynomial in the activity with exact rational coefficients.

    Coefficients above ``max_order`` are dropped; binary operations use the
    smaller truncation of the two operands.
    """

    __slots__ = ("coeffs", "max_order")

    def __init__(self, coeffs: Iterable = (), max_order: int = 0):
        c = [Fraction(v) for v in coeffs][: max_order + 1]
        c += [Fraction(0)] * (max_order + 1 - len(c))
        self.coeffs = tuple(c)
        self.max_order = int(max_order)

    @classmethod
    def zero(cls, max_order: int) -> "ActivityPoly":
        return cls((), max_order)

    @classmethod
    def one(cls, max_order: int) -> "ActivityPoly":
        return cls((1,), max_order)

    @classmethod
    def monomial(cls, power: int, coeff, max_order: int) -> "ActivityPoly":
        c = [0] * (max_order + 1)
        if power <= max_order:
            c[power] = coeff
        return cls(c, max_order)

    def __getitem__(self, n: int) -> Fraction:
        return self.coeffs[n] if 0 <= n <= self.max_order else Fraction(0)

    def _coerce(self, other):
        if isinstance(other, ActivityPoly):
            return other
        return ActivityPoly((other,), self.max_order)

    def __add__(self, other):
        o = self._coerce(other)
        m = min(self.max_order, o.max_order)
        return ActivityPoly((self[i] + o[i] for i in range(m + 1)), m)

    __radd__ = __add__

    def __neg__(self):
        return ActivityPoly((-c for c in self.coeffs), self.max_order)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def __mul__(self, other):
        if not isinstance(other, ActivityPoly):
            v = Fraction(other)
            return ActivityPoly((c * v for c in self.coeffs), self.max_order)
        m = min(self.max_order, other.max_order)
        out = [Fraction(0)] * (m + 1)
        for i, a in enumerate(self.coeffs[: m + 1]):
            if a:
                for j in range(m + 1 - i):
                    b = other.coeffs[j]
                    if b:
                        out[i + j] += a * b
        return ActivityPoly(out, m)

    __rmul__ = __mul__

    def shift(self, k: int = 1) -> "ActivityPoly":
        """Multiply by p^k."""
        return ActivityPoly([0] * k + list(self.coeffs), self.max_order)

    def truncate(self, m: int) -> "ActivityPoly":
        return ActivityPoly(self.coeffs, min(m, self.max_order))

    def inverse(self) -> "ActivityPoly":
        """Multiplicative inverse as a truncated series (needs a nonzero constant term)."""
        if self[0] == 0:
            raise ZeroDivisionError("series with zero constant term is not invertible")
        m = self.max_order
        inv = [Fraction(0)] * (m + 1)
        inv[0] = 1 / self[0]
        for n in range(1, m + 1):
            inv[n] = -sum((self[k] * inv[n - k] for k in range(1, n + 1)), Fraction(0)) / self[0]
        return ActivityPoly(inv, m)

    def compose(self, inner: "ActivityPoly") -> "ActivityPoly":
        """self(inner(p)) for an inner series with zero constant term."""
        if inner[0] != 0:
            raise ValueError("inner series must vanish at zero")
        m = min(self.max_order, inner.max_order)
        out = ActivityPoly.zero(m)
        power = ActivityPoly.one(m)
        for n in range(m + 1):
            if self[n]:
                out = out + power * self[n]
            power = power * inner
        return out

    def reversion(self) -> "ActivityPoly":
        """Compositional inverse of z = c1 p + c2 p^2 + ... (c1 != 0)."""
        if self[0] != 0 or self[1] == 0:
            raise ValueError("series reversion needs z = c1 p + ... with c1 != 0")
        m = self.max_order
        # fixed point p = (z - sum_{k>=2} c_k p^k) / c1, one order gained per pass
        z = ActivityPoly.monomial(1, 1, m)
        p = z * (1 / self[1])
        rest = ActivityPoly([0, 0] + list(self.coeffs[2:]), m)
        for _ in range(m):
            p = (z - rest.compose(p)) * (1 / self[1])
        return p

    def __call__(self, p):
        """Evaluate by Horner's rule (exact for rational p)."""
        acc = 0 * p if not isinstance(p, Fraction) else Fraction(0)
        for c in reversed(self.coeffs):
            acc = acc * p + (c if isinstance(p, Fraction) or isinstance(p, int) else float(c))
        return acc

    def __eq__(self, other):
        if not isinstance(other, ActivityPoly):
            other = self._coerce(other)
        m = max(self.max_order, other.max_order)
        return all(self[i] == other[i] for i in range(m + 1))

    def __hash__(self):
        return hash(self.coeffs)

    def is_zero(self) -> bool:
        return not any(self.coeffs)

    def nonnegative(self) -> bool:
        return all(c >= 0 for c in self.coeffs)

    def __repr__(self):
        terms = [f"{c}*p^{i}" for i, c in enumerate(self.coeffs) if c]
        return f"ActivityPoly({' + '.join(terms) or '0'}; O(p^{self.max_order + 1}))"

    def to_strings(self) -> list:
        return [f"{c.numerator}/{c.denominator}" for c in self.coeffs]

    @classmethod
    def from_strings(cls, items, max_order=None) -> "ActivityPoly":
        vals = [Fraction(s) for s in items]
        return cls(vals, len(vals) - 1 if max_order is None else max_order)


MODELS = ("SAW", "LT", "LA", "RW", "PSI", "PI")


@dataclass
class SiteSeries:
    """Map site -> ActivityPoly with truncation bookkeeping.

    ``radius`` is the sup-norm range within which every stored coefficient
    (up to ``max_order``) is complete. Sites absent from ``entries`` are zero.
    """

    kernel: StepKernel
    model: str
    max_order: int
    radius: int
    entries: dict = field(default_factory=dict)
    variable: str = "p"

    def __getitem__(self, x) -> ActivityPoly:
        return self.entries.get(tuple(x), ActivityPoly.zero(self.max_order))

    def sites(self) -> list:
        return sorted(self.entries)

    def _merge_meta(self, other: "SiteSeries"):
        if other.kernel is not self.kernel and other.kernel.weights != self.kernel.weights:
            raise ValueError("series built on different kernels")
        return min(self.max_order, other.max_order), min(self.radius, other.radius)

    def __add__(self, other: "SiteSeries") -> "SiteSeries":
        m, r = self._merge_meta(other)
        out = {}
        for x in set(self.entries) | set(other.entries):
            v = self[x].truncate(m) + other[x].truncate(m)
            if not v.is_zero():
                out[x] = v
        return SiteSeries(self.kernel, self.model, m, r, out, self.variable)

    def __neg__(self):
        return SiteSeries(self.kernel, self.model, self.max_order, self.radius,
                          {x: -v for x, v in self.entries.items()}, self.variable)

    def __sub__(self, other):
        return self + (-other)

    def scale(self, c) -> "SiteSeries":
        """Multiply every entry by a scalar or an ActivityPoly."""
        out = {}
        for x, v in self.entries.items():
            w = v * c
            if not w.is_zero():
                out[x] = w
        m = self.max_order if not isinstance(c, ActivityPoly) else min(self.max_order, c.max_order)
        return SiteSeries(self.kernel, self.model, m, self.radius, out, self.variable)

    def convolve(self, other: "SiteSeries") -> "SiteSeries":
        """Lattice convolution with coefficientwise series products.

        Completeness: a coefficient at x of the product is complete when the
        factors are complete on the sites it involves; callers pass series
        whose supports at each order are finite and fully stored.
        """
        m, r = self._merge_meta(other)
        out: dict = {}
        for y, a in self.entries.items():
            a = a.truncate(m)
            for z, b in other.entries.items():
                prod = a * b.truncate(m)
                if prod.is_zero():
                    continue
                x = tuple(i + j for i, j in zip(y, z))
                out[x] = out[x] + prod if x in out else prod
        out = {x: v for x, v in out.items() if not v.is_zero()}
        return SiteSeries(self.kernel, self.model, m, r, out, self.variable)

    def step(self) -> "SiteSeries":
        """Convolve with pD (one extra power of the activity)."""
        out: dict = {}
        for y, a in self.entries.items():
            sh = a.shift(1)
            if sh.is_zero():
                continue
            for e, w in self.kernel.weights.items():
                x = tuple(i + j for i, j in zip(y, e))
                v = sh * w
                out[x] = out[x] + v if x in out else v
        out = {x: v for x, v in out.items() if not v.is_zero()}
        return SiteSeries(self.kernel, self.model, self.max_order, self.radius, out, self.variable)

    def total(self) -> ActivityPoly:
        acc = ActivityPoly.zero(self.max_order)
        for v in self.entries.values():
            acc = acc + v
        return acc

    def second_moment(self) -> ActivityPoly:
        acc = ActivityPoly.zero(self.max_order)
        for x, v in self.entries.items():
            acc = acc + v * sum(c * c for c in x)
        return acc

    def evaluate(self, p) -> dict:
        return {x: v(p) for x, v in self.entries.items()}

    def is_symmetric(self) -> bool:
        for x, v in self.entries.items():
            for y in _sym_images(x):
                if self[y] != v:
                    return False
        return True

    def to_field(self, torus, p: float, provenance: str = "series-evaluated"):
        """Evaluate at activity ``p`` and place on a torus (sites must fit)."""
        from .lattice import ScalarField
        vals = np.zeros(torus.shape)
        for x, v in self.entries.items():
            if max(abs(c) for c in x) * 2 >= torus.side:
                raise ValueError("torus too small for the series support")
            vals[torus.index(x)] += float(v(Fraction(p) if not isinstance(p, float) else p))
        return ScalarField(torus, vals, provenance, True)

    def to_json(self) -> dict:
        return {"model": self.model, "kernel": self.kernel.to_json(), "max_order": self.max_order,
                "radius": self.radius, "variable": self.variable,
                "entries": [{"x": list(x), "coeffs": v.to_strings()} for x, v in sorted(self.entries.items())]}

    def save(self, path):
        Path(path).write_text(json.dumps(self.to_json()))

    @classmethod
    def from_json(cls, doc) -> "SiteSeries":
        if isinstance(doc, (str, Path)):
            doc = json.loads(Path(doc).read_text())
        need = {"model", "kernel", "max_order", "radius", "entries"}
        if not need <= set(doc):
            raise ValueError(f"series JSON lacks {sorted(need - set(doc))}")
        k = kernel_from_json(doc["kernel"])
        m = int(doc["max_order"])
        ent = {tuple(e["x"]): ActivityPoly.from_strings(e["coeffs"], m) for e in doc["entries"]}
        return cls(k, doc["model"], m, int(doc["radius"]), ent, doc.get("variable", "p"))
