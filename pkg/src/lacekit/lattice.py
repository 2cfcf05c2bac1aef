"""Spread-out step kernels, torus geometry, scalar fields and convolution.

The kernel weights are stored as exact ``Fraction`` objects so that the
enumeration layer can build exact series; floating mirrors are derived on
demand for the spectral code.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Callable, Mapping

import numpy as np

Site = tuple


def _sym_images(x):
    """All images of ``x`` under coordinate permutations and sign flips."""
    out = set()
    for perm in itertools.permutations(x):
        for signs in itertools.product((1, -1), repeat=len(x)):
            out.add(tuple(s * c for s, c in zip(signs, perm)))
    return out


@dataclass(frozen=True)
class StepKernel:
    """Normalized, lattice-symmetric step distribution D on Z^d.

    Attributes
    ----------
    d, L : int
        Dimension and spread parameter.
    profile : str or dict
        ``"uniform"`` or a tabulated description (kept for serialization).
    weights : dict
        Offset tuple -> ``Fraction``. Zero weights are omitted.
    sigma2 : Fraction
        Sum of |x|^2 D(x).
    exclude_origin : bool
        Whether D(0) was forced to zero before normalization.
    """

    d: int
    L: int
    profile: object
    weights: Mapping[Site, Fraction]
    sigma2: Fraction
    exclude_origin: bool = False

    @property
    def support(self) -> list:
        return sorted(self.weights)

    @property
    def offsets(self) -> np.ndarray:
        return np.array(self.support, dtype=np.int64).reshape(-1, self.d)

    @property
    def float_weights(self) -> np.ndarray:
        return np.array([float(self.weights[x]) for x in self.support])

    @property
    def max_weight(self) -> Fraction:
        return max(self.weights.values())

    def weight(self, x) -> Fraction:
        return self.weights.get(tuple(x), Fraction(0))

    def common_denominator(self) -> int:
        den = 1
        for w in self.weights.values():
            den = den * w.denominator // math.gcd(den, w.denominator)
        return den

    def on_torus(self, torus: "Torus") -> "ScalarField":
        """Place D on ``torus`` (offsets reduced mod the side)."""
        if torus.d != self.d:
            raise ValueError("kernel and torus dimensions differ")
        if torus.side <= 2 * self.L:
            raise ValueError("torus side must exceed 2L to avoid aliasing the kernel")
        vals = np.zeros(torus.shape)
        for x, w in self.weights.items():
            vals[tuple(c % torus.side for c in x)] += float(w)
        return ScalarField(torus, vals, provenance="analytic", symmetric=True)

    def to_json(self) -> dict:
        prof = self.profile
        if not isinstance(prof, str):
            prof = {"table": [{"x": list(x), "h": str(v)} for x, v in sorted(prof.items())]}
        return {"profile": prof, "L": self.L, "d": self.d, "exclude_origin": self.exclude_origin}


def build_kernel(profile="uniform", L: int = 1, d: int = 1, exclude_origin: bool = False) -> StepKernel:
    """Construct the spread-out kernel ``D(x) = h(x/L) / sum_y h(y/L)``.

    Parameters
    ----------
    profile : "uniform", mapping or callable
        ``"uniform"`` is the box profile on [-1, 1]^d. A mapping gives h
        sampled at integer offsets x (i.e. the value h(x/L)); a callable is
        evaluated at the rescaled point ``tuple(Fraction(c, L) for c in x)``.
    L, d : int
    exclude_origin : bool
        Drop the origin from the support before normalizing.
    """
    if int(L) != L or L < 1 or int(d) != d or d < 1:
        raise ValueError("need integers L >= 1 and d >= 1")
    L, d = int(L), int(d)
    raw: dict = {}
    table = None
    for x in itertools.product(range(-L, L + 1), repeat=d):
        if profile == "uniform":
            h = Fraction(1)
        elif callable(profile):
            h = Fraction(profile(tuple(Fraction(c, L) for c in x)))
        elif isinstance(profile, Mapping):
            h = Fraction(profile.get(tuple(x), 0))
        else:
            raise ValueError(f"unknown kernel profile {profile!r}")
        if h < 0:
            raise ValueError(f"profile is negative at {x}")
        if exclude_origin and not any(x):
            h = Fraction(0)
        if h:
            raw[tuple(x)] = h
    if isinstance(profile, Mapping):
        extra = [x for x in profile if max(abs(c) for c in x) > L]
        if any(Fraction(profile[x]) for x in extra):
            raise ValueError("tabulated profile has weight outside [-L, L]^d")
        table = {tuple(x): Fraction(v) for x, v in profile.items()}
    total = sum(raw.values(), Fraction(0))
    if total == 0:
        raise ValueError("profile samples sum to zero; kernel cannot be normalized")
    weights = {x: h / total for x, h in raw.items()}
    for x, w in weights.items():
        for y in _sym_images(x):
            if weights.get(y, Fraction(0)) != w:
                raise ValueError(f"profile is not lattice-symmetric at {x} vs {y}")
    sigma2 = sum((sum(c * c for c in x) * w for x, w in weights.items()), Fraction(0))
    prof = "uniform" if profile == "uniform" else (table if table is not None else "callable")
    return StepKernel(d, L, prof, weights, sigma2, bool(exclude_origin))


def kernel_from_json(doc) -> StepKernel:
    """Build a kernel from the JSON document ``{profile, L, d, exclude_origin}``."""
    if isinstance(doc, (str, Path)):
        doc = json.loads(Path(doc).read_text())
    if not isinstance(doc, dict):
        raise ValueError("kernel spec must be a JSON object")
    allowed = {"profile", "L", "d", "exclude_origin"}
    unknown = set(doc) - allowed
    if unknown:
        raise ValueError(f"unknown kernel keys: {sorted(unknown)}")
    for key in ("L", "d"):
        if not isinstance(doc.get(key), int) or isinstance(doc.get(key), bool):
            raise ValueError(f"kernel field {key!r} must be an integer")
    prof = doc.get("profile", "uniform")
    if isinstance(prof, dict):
        if set(prof) != {"table"} or not isinstance(prof["table"], list):
            raise ValueError("tabulated profile must be {'table': [{x, h}, ...]}")
        prof = {tuple(e["x"]): Fraction(e["h"]) for e in prof["table"]}
    elif prof != "uniform":
        raise ValueError(f"unknown profile {prof!r}")
    excl = doc.get("exclude_origin", False)
    if not isinstance(excl, bool):
        raise ValueError("exclude_origin must be a boolean")
    return build_kernel(prof, doc["L"], doc["d"], exclude_origin=excl)


def kernel_fourier(k: StepKernel, momentum) -> np.ndarray | float:
    """D-hat(k) = sum_x D(x) cos(k.x). ``momentum`` may be (..., d)."""
    q = np.asarray(momentum, dtype=float)
    if q.shape[-1] != k.d:
        raise ValueError(f"momentum needs {k.d} components")
    phase = q @ k.offsets.T.astype(float)
    val = np.cos(phase) @ k.float_weights
    return float(val) if np.ndim(val) == 0 else val


def verify_kernel_bounds(k: StepKernel, resolution: int = 200) -> dict:
    """Grid estimates of the infrared constants of the kernel.

    ``delta2_est`` is the infimum of (1 - D-hat)/(L^2 |k|^2) over grid points
    with 0 < |k| <= 1/L, ``delta3_est`` the infimum of 1 - D-hat over grid
    points with |k| >= 1/L. Grid points are midpoints of ``resolution``
    cells per axis of [-pi, pi]; a refined ball grid is added for the small-k
    region so that it is never empty.
    """
    n = int(resolution)
    axis = -np.pi + (np.arange(n) + 0.5) * (2 * np.pi / n)
    grids = np.meshgrid(*([axis] * k.d), indexing="ij")
    pts = np.stack([g.ravel() for g in grids], axis=-1)
    norms = np.linalg.norm(pts, axis=1)
    one_minus = 1.0 - kernel_fourier(k, pts)
    big = norms >= 1.0 / k.L
    small = ~big & (norms > 0)
    # extra radial samples so the small-k set is populated at coarse resolution
    rad = np.linspace(1e-3, 1.0, 64) / k.L
    dirs = np.eye(k.d)
    if k.d > 1:
        dirs = np.vstack([dirs, np.ones((1, k.d)) / math.sqrt(k.d)])
    extra = (rad[:, None, None] * dirs[None, :, :]).reshape(-1, k.d)
    pts_s = np.vstack([pts[small], extra])
    om_s = np.concatenate([one_minus[small], 1.0 - kernel_fourier(k, extra)])
    ratio = om_s / (k.L ** 2 * np.sum(pts_s ** 2, axis=1))
    delta2 = float(ratio.min())
    delta3 = float(one_minus[big].min()) if big.any() else math.inf
    violations = [tuple(p) for p in pts_s[ratio <= 1e-12]]
    violations += [tuple(p) for p in pts[big][one_minus[big] <= 1e-12]]
    return {"delta2_est": delta2, "delta3_est": delta3, "violations": violations}


@dataclass(frozen=True)
class Torus:
    """Periodic box (Z/NZ)^d with representatives in (-N/2, N/2]."""

    d: int
    side: int

    def __post_init__(self):
        if self.d < 1 or self.side < 1:
            raise ValueError("torus needs d >= 1 and side >= 1")

    @property
    def shape(self) -> tuple:
        return (self.side,) * self.d

    @property
    def volume(self) -> int:
        return self.side ** self.d

    def rep(self, c):
        """Reduce integer coordinates into (-N/2, N/2]."""
        c = np.mod(np.asarray(c), self.side)
        return np.where(c > self.side // 2, c - self.side, c)

    def index(self, x) -> tuple:
        """Array index of the site with coordinates ``x``."""
        return tuple(int(c) % self.side for c in x)

    def coord(self, idx) -> tuple:
        return tuple(int(v) for v in self.rep(np.asarray(idx)))

    def coords(self) -> np.ndarray:
        """Representative coordinates, shape ``shape + (d,)``."""
        ax = self.rep(np.arange(self.side))
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(grids, axis=-1)

    def norm(self) -> np.ndarray:
        """Euclidean norm of the representative of every site."""
        return np.sqrt(np.sum(self.coords().astype(float) ** 2, axis=-1))

    def supnorm(self) -> np.ndarray:
        return np.max(np.abs(self.coords()), axis=-1)

    def momenta(self) -> np.ndarray:
        """Fourier momenta 2 pi m / N in FFT layout, shape ``shape + (d,)``."""
        ax = 2 * np.pi * np.fft.fftfreq(self.side)
        grids = np.meshgrid(*([ax] * self.d), indexing="ij")
        return np.stack(grids, axis=-1)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """Real values on a torus with a provenance tag.

    ``variance`` carries per-site Monte Carlo variances when relevant.
    """

    torus: Torus
    values: np.ndarray
    provenance: str = "analytic"
    symmetric: bool = False
    variance: np.ndarray | None = field(default=None)

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.torus.shape:
            raise ValueError(f"field shape {vals.shape} does not match torus {self.torus.shape}")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        if self.variance is not None:
            var = np.array(self.variance, dtype=float)
            var.setflags(write=False)
            object.__setattr__(self, "variance", var)

    def __getitem__(self, x) -> float:
        return float(self.values[self.torus.index(x)])

    def reflected(self) -> np.ndarray:
        """Values of x -> f(-x)."""
        v = self.values
        for ax in range(v.ndim):
            v = np.roll(np.flip(v, axis=ax), 1, axis=ax)
        return v

    def is_symmetric(self, atol: float = 0.0) -> bool:
        return bool(np.max(np.abs(self.values - self.reflected())) <= atol)

    def total(self) -> float:
        return float(self.values.sum())

    def with_values(self, values, provenance=None, symmetric=None) -> "ScalarField":
        return ScalarField(self.torus, values, provenance or self.provenance,
                           self.symmetric if symmetric is None else symmetric)

    def save(self, path) -> None:
        """Write little-endian float64 values plus a ``<path>.json`` header."""
        path = Path(path)
        self.values.astype("<f8").tofile(path)
        header = {"d": self.torus.d, "side": self.torus.side, "symmetric": self.symmetric,
                  "provenance": self.provenance}
        Path(str(path) + ".json").write_text(json.dumps(header, indent=1))

    @classmethod
    def load(cls, path) -> "ScalarField":
        path = Path(path)
        header = json.loads(Path(str(path) + ".json").read_text())
        missing = {"d", "side", "symmetric", "provenance"} - set(header)
        if missing:
            raise ValueError(f"field header lacks {sorted(missing)}")
        torus = Torus(int(header["d"]), int(header["side"]))
        vals = np.fromfile(path, dtype="<f8")
        if vals.size != torus.volume:
            raise ValueError("field file size does not match its header")
        return cls(torus, vals.reshape(torus.shape), header["provenance"], bool(header["symmetric"]))


def delta_field(torus: Torus) -> ScalarField:
    v = np.zeros(torus.shape)
    v[(0,) * torus.d] = 1.0
    return ScalarField(torus, v, "analytic", True)


def power_law_field(torus: Torus, q: float, amplitude: float = 1.0) -> ScalarField:
    """``amplitude * (|x| + 1)^(-q)`` with |x| the representative's norm."""
    return ScalarField(torus, amplitude * (torus.norm() + 1.0) ** (-q), f"power-law({q})", True)


def _check_same(f: ScalarField, g: ScalarField):
    if f.torus != g.torus:
        raise ValueError("fields live on different tori")


def fft_convolve(a: np.ndarray, b: np.ndarray, axes=None) -> np.ndarray:
    """Periodic convolution of real arrays through real FFTs."""
    if axes is None:
        axes = tuple(range(a.ndim))
    shape = [a.shape[ax] for ax in axes]
    fa = np.fft.rfftn(a, axes=axes)
    fb = np.fft.rfftn(b, axes=axes)
    return np.fft.irfftn(fa * fb, s=shape, axes=axes)


def convolve(f: ScalarField, g: ScalarField, method: str = "spectral") -> ScalarField:
    """Periodic convolution ``(f*g)(x) = sum_y f(x-y) g(y)`` on a common torus.

    The direct path pairs y with -y so that symmetric inputs give an exactly
    symmetric output.
    """
    _check_same(f, g)
    if method == "spectral":
        out = fft_convolve(f.values, g.values)
    elif method == "direct":
        out = _direct_convolve(f.values, g.values)
    else:
        raise ValueError(f"unknown convolution method {method!r}")
    sym = f.symmetric and g.symmetric
    return ScalarField(f.torus, out, "convolution", sym)


def _direct_convolve(fv: np.ndarray, gv: np.ndarray) -> np.ndarray:
    n = fv.shape[0]
    d = fv.ndim
    out = np.zeros_like(fv)
    done = set()
    for idx in itertools.product(range(n), repeat=d):
        if idx in done:
            continue
        neg = tuple((-c) % n for c in idx)
        done.add(idx)
        done.add(neg)
        gy, gneg = gv[idx], gv[neg]
        if gy == 0 and gneg == 0:
            continue
        a = np.roll(fv, idx, axis=tuple(range(d)))
        if neg == idx:
            out += gy * a
        else:
            b = np.roll(fv, neg, axis=tuple(range(d)))
            if gy == gneg:
                out += gy * (a + b)
            else:
                out += gy * a + gneg * b
    return out


def convolution_exponent(a: float, b: float, d: int) -> float:
    """Decay exponent of (|x|+1)^-a * (|x|+1)^-b in the two regimes."""
    if not (a >= b > 0):
        raise ValueError("need a >= b > 0")
    if a > d:
        return float(b)
    if a < d < a + b:
        return float(a + b - d)
    raise ValueError(f"exponents a={a}, b={b} are outside both regimes for d={d}")


def _padded_fields(d: int, side: int, pad: int, qf: float, qg: float, af: float = 1.0):
    """Power laws on a torus ``pad`` times larger than the box of ``side``."""
    t = Torus(d, pad * side)
    return t, power_law_field(t, qf, af), power_law_field(t, qg)


def decay_convolution_check(a: float, b: float, box: Torus, pad: int = 4) -> dict:
    """Measure sup_x (f*g)(x) (|x|+1)^e for f, g power laws.

    The box fixes the range of x (sup-norm at most side/2). The convolution
    itself is computed on a torus ``pad`` times larger, which keeps the
    periodic images far from the box so that the values approximate the
    Z^d convolution. The same measurement is repeated for the doubled box.
    """
    e = convolution_exponent(a, b, box.d)
    consts = []
    for side in (box.side, 2 * box.side):
        t, f, g = _padded_fields(box.d, side, pad, a, b)
        w = convolve(f, g).values * (t.norm() + 1.0) ** e
        consts.append(float(w[t.supnorm() <= side // 2].max()))
    c0, c1 = consts
    return {"measured_constant": c0, "doubled_constant": c1, "predicted_exponent": e,
            "relative_change": abs(c1 - c0) / c0, "finite": bool(np.isfinite(c0) and np.isfinite(c1))}


def fit_decay_exponent(r: np.ndarray, v: np.ndarray) -> tuple[float, float]:
    """Least-squares fit ``v ~ C (r+1)^(-e)`` in log-log; returns (e, C)."""
    mask = v > 0
    x = np.log(r[mask] + 1.0)
    y = np.log(v[mask])
    slope, icept = np.polyfit(x, y, 1)
    return float(-slope), float(math.exp(icept))


def main_term_check(s: float, box: Torus, amplitude: float = 1.0, pad: int = 4) -> dict:
    """Split (f*g) into A (sum g) (|x|+1)^(2-d) plus an error term.

    ``g = (|x|+1)^-(d+s)`` and ``f = A (|x|+1)^-(d-2)``. Over the middle
    decade side/20 <= |x| <= side/2 the error is fitted to a power law on
    log-binned maxima, and its constant at the predicted exponent
    d-2+min(s,2) is measured for the box and for the doubled box. The
    convolution is computed on a padded torus as in
    :func:`decay_convolution_check`.
    """
    d = box.d
    if d <= 2:
        raise ValueError("main-term split needs d > 2")
    if s == 2:
        raise ValueError("s = 2 carries a logarithm; use s != 2")
    target = d - 2 + min(s, 2.0)
    consts, exps = [], []
    for side in (box.side, 2 * box.side):
        t, f, g = _padded_fields(d, side, pad, d - 2, d + s, amplitude)
        r = t.norm()
        resid = np.abs(convolve(f, g).values - amplitude * g.total() * (r + 1.0) ** (2 - d))
        lo, hi = side / 20.0, side / 2.0
        edges = np.geomspace(lo, hi, 12)
        rb, vb = [], []
        for r0, r1 in zip(edges[:-1], edges[1:]):
            m = (r >= r0) & (r < r1)
            if m.any():
                rb.append(math.sqrt(r0 * r1))
                vb.append(resid[m].max())
        exps.append(fit_decay_exponent(np.array(rb), np.array(vb))[0])
        sel = (r >= lo) & (r <= hi)
        consts.append(float((resid[sel] * (r[sel] + 1.0) ** target).max()))
    return {"predicted_min_exponent": target, "fitted_exponent": exps[0],
            "fitted_exponent_doubled": exps[1], "constant": consts[0],
            "constant_doubled": consts[1],
            "relative_change": abs(consts[1] - consts[0]) / consts[0]}
