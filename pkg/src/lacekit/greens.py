"""Random-walk two-point function S_mu and its heat-kernel representation.

S_mu is the Green's function of the walk with step kernel D,
S_mu-hat(k) = 1 / (1 - mu D-hat(k)). It is evaluated spectrally on a torus.
The continuous-time kernel

    I_{t,mu}(x) = e^{-t} sum_n (t mu)^n / n! D^{*n}(x)

gives S_mu(x) as an integral over t. The module also provides the Gaussian
asymptote of S_1, the split of the t-integral at T_x and the large
deviation bounds on I_{t,1}.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

import numpy as np
from scipy import integrate, special, stats

from .lattice import ScalarField, StepKernel, Torus

TAIL_MASS = 1e-10
LD_SLACK = 1e-10
EXACT_VOLUME_LIMIT = 4_000_000


class GreensError(ValueError):
    """Precondition violation (parameter outside the supported regime)."""


class TruncationError(GreensError):
    """Poisson truncation leaves more than the allowed tail mass."""


@dataclass(frozen=True, eq=False)
class GreensResult:
    """S_mu on a torus.

    Attributes
    ----------
    field : ScalarField
    mu : float
    image_corrected : bool
        Whether the periodic images and the zero-mode constant were removed.
    zero_mode_shift : float
        Constant by which the k = 0 exclusion lowers the torus field relative
        to the Z^d function (estimated from the continuum periodic Green's
        function). Zero for mu < 1.
    sigma2 : float
    """

    field: ScalarField
    mu: float
    image_corrected: bool
    zero_mode_shift: float
    sigma2: float


@dataclass(frozen=True, eq=False)
class HeatSlice:
    """I_{t,mu} on a torus, with the Poisson truncation used and its tail mass."""

    t: float
    mu: float
    field: ScalarField
    truncation: int | None = None
    tail_mass: float = 0.0


def _mu(mu) -> float:
    m = float(Fraction(mu)) if isinstance(mu, (Fraction, int, str)) else float(mu)
    if not 0.0 <= m <= 1.0:
        raise GreensError(f"mu must lie in [0, 1], got {m}")
    return m


def a_d(d: int) -> float:
    """Constant d Gamma(d/2 - 1) / (2 pi^{d/2}) of the Gaussian asymptote."""
    if d <= 2:
        raise GreensError("the asymptote needs d > 2")
    return d * math.gamma(d / 2 - 1) / (2 * math.pi ** (d / 2))


def dhat_on_torus(kernel: StepKernel, torus: Torus) -> np.ndarray:
    """D-hat at the torus momenta in FFT layout (real by symmetry)."""
    return np.fft.fftn(kernel.on_torus(torus).values).real


def periodic_correction(d: int, side: int, sigma2: float) -> np.ndarray:
    """Continuum periodic Green's function minus the free one, on the torus.

    Returns c(x) = (2d/sigma2) [g_per(x) - g_free(x)], where g_per is the
    zero-mean Green's function of -Laplacian on the periodic box of the given
    side and g_free(r) = Gamma(d/2 - 1) / (4 pi^{d/2} r^{d-2}). Computed by
    Ewald splitting of the heat kernel at s0 = side^2 / (16 pi); the value at
    the origin is the regular limit.
    """
    if d <= 2:
        raise GreensError("periodic correction needs d > 2")
    torus = Torus(d, side)
    a = d / 2 - 1
    s0 = side ** 2 / (16 * math.pi)
    pref = math.pi ** (-d / 2) / 4
    x = torus.coords().astype(float)
    out = np.zeros(torus.shape)
    # real-space images; n = 0 enters as (image - free) which is regular at 0
    for n in np.ndindex(*(3,) * d):
        shift = (np.array(n) - 1) * side
        r2 = np.sum((x + shift) ** 2, axis=-1)
        z = r2 / (4 * s0)
        if not any(n_i != 1 for n_i in n):
            with np.errstate(divide="ignore", invalid="ignore"):
                term = -pref * math.gamma(a) * special.gammainc(a, z) * r2 ** (-a)
            term[r2 == 0] = -pref * (4 * s0) ** (-a) / a
        else:
            term = pref * math.gamma(a) * special.gammaincc(a, z) * r2 ** (-a)
        out += term
    k2 = np.sum(torus.momenta() ** 2, axis=-1)
    with np.errstate(divide="ignore"):
        spec = np.exp(-s0 * k2) / k2
    spec[(0,) * d] = 0.0
    out += np.fft.ifftn(spec).real - s0 / torus.volume
    return (2 * d / sigma2) * out


def greens_torus(kernel: StepKernel, mu, torus: Torus, image_correct: bool = False) -> GreensResult:
    """S_mu on ``torus`` by inverse FFT of 1 / (1 - mu D-hat).

    At mu = 1 the k = 0 mode is excluded. ``image_correct`` (mu = 1 only)
    subtracts the periodic images and the zero-mode constant using the
    continuum periodic Green's function, so that the result approximates the
    Z^d function.
    """
    m = _mu(mu)
    d = kernel.d
    if torus.d != d:
        raise GreensError("kernel and torus dimensions differ")
    if m == 1.0 and d <= 2:
        raise GreensError("mu = 1 requires d > 2 (the walk is recurrent)")
    if image_correct and m != 1.0:
        raise GreensError("image correction applies at mu = 1 only")
    sigma2 = float(kernel.sigma2)
    denom = 1.0 - m * dhat_on_torus(kernel, torus)
    shift = 0.0
    if m == 1.0:
        denom[(0,) * d] = np.inf
    vals = np.fft.ifftn(1.0 / denom).real
    if m == 1.0:
        corr = periodic_correction(d, torus.side, sigma2)
        shift = float(-corr[(0,) * d])
        if image_correct:
            vals = vals - corr
    if m == 0.0:
        vals = np.zeros(torus.shape)
        vals[(0,) * d] = 1.0
    prov = "spectral+images" if image_correct else "spectral"
    return GreensResult(ScalarField(torus, vals, prov, True), m, bool(image_correct), shift, sigma2)


def greens_asymptote(kernel: StepKernel, x) -> float:
    """a_d / (sigma^2 (|x| + 1)^{d-2})."""
    d = kernel.d
    if d <= 2:
        raise GreensError("the asymptote needs d > 2")
    r = math.sqrt(sum(float(c) ** 2 for c in x))
    return a_d(d) / (float(kernel.sigma2) * (r + 1) ** (d - 2))


def asymptote_ratios(result: GreensResult, rmin: float, rmax: float) -> dict:
    """S_1(x) sigma^2 (|x| + 1)^{d-2} / a_d for every site with rmin <= |x| <= rmax.

    Returns a dict with the sorted radii, the ratios and their extremes.
    """
    torus = result.field.torus
    d = torus.d
    r = torus.norm()
    sel = (r >= rmin) & (r <= rmax)
    ratio = result.field.values[sel] * result.sigma2 * (r[sel] + 1) ** (d - 2) / a_d(d)
    order = np.argsort(r[sel], kind="stable")
    return {"radius": r[sel][order], "ratio": ratio[order],
            "min": float(ratio.min()), "max": float(ratio.max())}


def sle_residual(result: GreensResult, kernel: StepKernel) -> float:
    """max |S - delta - mu D * S| on the torus."""
    torus = result.field.torus
    dh = dhat_on_torus(kernel, torus)
    conv = np.fft.ifftn(dh * np.fft.fftn(result.field.values)).real
    delta = np.zeros(torus.shape)
    delta[(0,) * torus.d] = 1.0
    return float(np.max(np.abs(result.field.values - delta - result.mu * conv)))


# ---------------------------------------------------------------- heat kernel

def default_truncation(t: float, mu: float = 1.0, tail: float = TAIL_MASS * 1e-2) -> int:
    """Smallest n >= t + 10 sqrt(t) with Poisson(t mu) tail mass below ``tail``."""
    base = math.ceil(t + 10 * math.sqrt(t))
    lam = t * mu
    if lam == 0:
        return base
    return max(base, int(stats.poisson.isf(tail, lam)) + 1)


def poisson_tail(truncation: int, t: float, mu: float) -> float:
    """Mass of Poisson(t mu) above ``truncation``, times e^{-t(1-mu)}."""
    lam = t * mu
    if lam == 0:
        return 0.0
    return float(stats.poisson.sf(truncation, lam)) * math.exp(-t * (1 - mu))


def poisson_kernel(kernel: StepKernel, t: float, mu, torus: Torus, truncation: int | None = None) -> HeatSlice:
    """I_{t,mu} from the truncated series e^{-t} sum_{n<=M} (t mu)^n/n! D^{*n}.

    D^{*n} is taken spectrally (D-hat^n); the series is summed by Horner's
    rule with Poisson weights. Raises ``TruncationError`` if M < t + 10 sqrt(t)
    or the dropped tail mass exceeds 1e-10.
    """
    m = _mu(mu)
    t = float(t)
    if t < 0:
        raise GreensError("t must be nonnegative")
    M = default_truncation(t, m) if truncation is None else int(truncation)
    tail = poisson_tail(M, t, m)
    if M < t + 10 * math.sqrt(t) or tail > TAIL_MASS:
        raise TruncationError(f"truncation {M} leaves Poisson tail mass {tail:.3e} at t={t}")
    dh = dhat_on_torus(kernel, torus)
    lam = t * m
    n = np.arange(M + 1)
    w = stats.poisson.pmf(n, lam) * math.exp(-t * (1 - m)) if lam > 0 else np.eye(1, M + 1)[0]
    acc = np.full(dh.shape, w[M])
    for j in range(M - 1, -1, -1):
        acc = acc * dh + w[j]
    vals = np.maximum(np.fft.ifftn(acc).real, 0.0)
    return HeatSlice(t, m, ScalarField(torus, vals, "spectral", True), M, tail)


def heat_kernel(kernel: StepKernel, t: float, mu, torus: Torus) -> HeatSlice:
    """I_{t,mu} in closed spectral form exp(-t (1 - mu D-hat))."""
    m = _mu(mu)
    dh = dhat_on_torus(kernel, torus)
    vals = np.maximum(np.fft.ifftn(np.exp(-float(t) * (1 - m * dh))).real, 0.0)
    return HeatSlice(float(t), m, ScalarField(torus, vals, "spectral", True))


class PointHeat:
    """Fast t -> I_{t,mu}(x) at one site of a torus.

    With ``drop_zero_mode`` the k = 0 term is omitted, which makes the
    t-integral converge at mu = 1.
    """

    def __init__(self, kernel: StepKernel, torus: Torus, x, mu=1.0, drop_zero_mode: bool = False):
        m = _mu(mu)
        lam = 1.0 - m * dhat_on_torus(kernel, torus)
        phase = torus.momenta() @ np.asarray(x, dtype=float)
        w = np.cos(phase) / torus.volume
        keep = np.ones(torus.shape, dtype=bool)
        if drop_zero_mode:
            keep[(0,) * torus.d] = False
        self.lam = lam[keep].ravel()
        self.w = w[keep].ravel()
        self.lam_min = float(self.lam.min()) if self.lam.size else math.inf

    def __call__(self, t: float) -> float:
        return float(np.dot(self.w, np.exp(-t * self.lam)))

    def integral_exact(self, a: float, b: float = math.inf) -> float:
        """Mode-by-mode closed form of the t-integral over [a, b]."""
        lam = self.lam
        ea = np.exp(-a * lam)
        eb = np.zeros_like(lam) if math.isinf(b) else np.exp(-b * lam)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = np.where(lam > 0, (ea - eb) / lam, (b - a) if not math.isinf(b) else np.inf)
        return float(np.dot(self.w, val))


def _panels(a: float, b: float, first: float) -> list:
    """Log-spaced panel edges covering [a, b]."""
    edges = [a]
    h = max(first, a)
    while edges[-1] < b:
        nxt = max(edges[-1] * 2.0, edges[-1] + h) if edges[-1] > 0 else h
        edges.append(min(nxt, b))
    return edges


def integrate_t(f, a: float, b: float, rtol: float = 1e-8, first: float = 0.5) -> float:
    """Adaptive quadrature of f over [a, b] on log-spaced panels (b may be inf
    only through a finite cutoff supplied by the caller)."""
    total = 0.0
    edges = _panels(a, b, first)
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, lo, hi, epsrel=rtol, epsabs=1e-15, limit=200)
        total += val
    return total


# ------------------------------------------------------- Gaussian asymptotics

def gaussian_density(t: float, x, d: int, sigma2: float) -> float:
    """p_t(x) = (d / (2 pi sigma^2 t))^{d/2} exp(-d |x|^2 / (2 t sigma^2))."""
    if t <= 0:
        return 0.0
    r2 = float(sum(float(c) ** 2 for c in np.atleast_1d(x)))
    return (d / (2 * math.pi * sigma2 * t)) ** (d / 2) * math.exp(-d * r2 / (2 * t * sigma2))


def gaussian_tail_integral(x, d: int, sigma2: float, T: float = 0.0) -> float:
    """Closed form of int_T^inf p_t(x) dt (d > 2, x != 0)."""
    if d <= 2:
        raise GreensError("the t-integral of p_t converges only for d > 2")
    r2 = float(sum(float(c) ** 2 for c in np.atleast_1d(x)))
    if r2 == 0:
        raise GreensError("x = 0 is outside the asymptotic regime")
    b = d * r2 / (2 * sigma2)
    a = d / 2 - 1
    lower = math.gamma(a) if T <= 0 else math.gamma(a) * float(special.gammainc(a, b / T))
    return (d / (2 * math.pi * sigma2)) ** (d / 2) * b ** (1 - d / 2) * lower


def gaussian_tail_quadrature(x, d: int, sigma2: float, T: float = 0.0, rtol: float = 1e-10) -> float:
    """int_T^inf p_t(x) dt by quadrature on log-spaced panels in t."""
    r2 = float(sum(float(c) ** 2 for c in np.atleast_1d(x)))
    scale = d * r2 / (2 * sigma2)
    f = lambda t: gaussian_density(t, x, d, sigma2)  # noqa: E731
    lo = max(T, 0.0)
    total = 0.0
    edges = [lo] + [scale * 2.0 ** j for j in range(-8, 80) if scale * 2.0 ** j > lo]
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(f, a, b, epsrel=rtol, epsabs=0.0, limit=200)[0]
    # the remainder beyond the last edge decays like t^{1-d/2}
    tmax = edges[-1]
    total += (d / (2 * math.pi * sigma2)) ** (d / 2) * tmax ** (1 - d / 2) / (d / 2 - 1)
    return total


def split_time(x, sigma2: float, d: int, alpha: float = 0.1) -> float:
    """T_x = (|x| / sigma)^{2 - 2 alpha / d}."""
    r = math.sqrt(sum(float(c) ** 2 for c in x))
    return (r / math.sqrt(sigma2)) ** (2 - 2 * alpha / d)


def gaussian_split(kernel: StepKernel, x, torus: Torus, alpha: float = 0.1, rtol: float = 1e-8) -> dict:
    """Split S_1(x) at T_x into S^< and S^> and compare S^> with the Gaussian.

    Both pieces come from adaptive t-quadrature of I_{t,1}(x) on ``torus``
    with the zero mode dropped, so S_less + S_greater reproduces the torus
    Green's function. ``S_greater_corrected`` removes the periodic images
    and is the Z^d estimate used for the residual
    S^> - int_{T_x}^inf p_t(x) dt. ``fitted_c`` is |residual| L^d T_x^{d/2}.
    """
    d = kernel.d
    if d <= 2:
        raise GreensError("the Gaussian split needs d > 2")
    r = math.sqrt(sum(float(c) ** 2 for c in x))
    if r == 0:
        raise GreensError("x = 0 is outside the asymptotic regime")
    if r < kernel.L:
        raise GreensError("the Gaussian split needs |x| >= L")
    sigma2 = float(kernel.sigma2)
    T = split_time(x, sigma2, d, alpha)
    heat = PointHeat(kernel, torus, x, 1.0, drop_zero_mode=True)
    s_less = integrate_t(heat, 0.0, T, rtol, first=min(0.5, T))
    tmax = T + 40.0 / heat.lam_min
    s_greater = integrate_t(heat, T, tmax, rtol, first=T)
    corr = float(periodic_correction(d, torus.side, sigma2)[torus.index(x)])
    s_greater_z = s_greater - corr
    ptail = float(gaussian_tail_integral(x, d, sigma2, T))
    resid = s_greater_z - ptail
    return {
        "x": [int(c) for c in x], "T_x": T, "alpha": alpha,
        "S_less": s_less, "S_greater": s_greater, "S_greater_corrected": s_greater_z,
        "torus_total": s_less + s_greater, "p_t_integral": ptail, "residual": resid,
        "fitted_c": abs(resid) * kernel.L ** d * T ** (d / 2),
        "small_time_bound": (r + 1) ** (-(d + 2)),
        "small_time_bound_holds": bool(s_less <= (r + 1) ** (-(d + 2))),
    }


def small_time_bound_check(kernel: StepKernel, xs, torus: Torus, alpha: float = 0.1, rtol: float = 1e-8) -> dict:
    """S^<(x; T_x) <= (|x|+1)^{-(d+2)} at each site of ``xs``."""
    d = kernel.d
    rows = []
    for x in xs:
        r = math.sqrt(sum(float(c) ** 2 for c in x))
        T = split_time(x, float(kernel.sigma2), d, alpha)
        heat = PointHeat(kernel, torus, x, 1.0)
        s_less = integrate_t(heat, 0.0, T, rtol, first=min(0.5, T))
        bound = (r + 1) ** (-(d + 2))
        rows.append({"x": [int(c) for c in x], "T_x": T, "S_less": s_less, "bound": bound,
                     "holds": bool(s_less <= bound)})
    return {"ok": all(r["holds"] for r in rows), "rows": rows,
            "worst_ratio": max(r["S_less"] / r["bound"] for r in rows) if rows else 0.0}


# --------------------------------------------------------- large deviations

def _exact_torus(kernel: StepKernel, reach: int):
    """Smallest torus on which walks of ``reach`` lattice units do not wrap."""
    side = 2 * reach + 1
    return Torus(kernel.d, side), Torus(kernel.d, side).volume <= EXACT_VOLUME_LIMIT


def large_deviation_check(kernel: StepKernel, t_grid, x_grid, slack: float = LD_SLACK) -> dict:
    """Check both large-deviation bounds on I_{t,1}(x) over a (t, x) grid.

    Bound 1 (all t): I <= exp(-|x|_inf / L + sigma^2 t / (d L^2)).
    Bound 2 (t >= t0 = d L |x|_inf / (2 sigma^2)): I <= exp(-d |x|_inf^2 / (4 sigma^2 t)).

    Values are the truncated Poisson series on a torus wide enough that no
    retained walk wraps, so they equal the Z^d series up to the reported tail
    mass (which can only raise the true value; it is added before comparing).
    If that torus would be too large, a smaller torus is used and ``exact``
    is False; torus values dominate Z^d values, so a pass remains valid.
    """
    d, L = kernel.d, kernel.L
    sigma2 = float(kernel.sigma2)
    xs = [tuple(int(c) for c in x) for x in x_grid]
    xmax = max((max(abs(c) for c in x) for x in xs), default=0)
    rows, worst = [], -math.inf
    exact_all = True
    for t in t_grid:
        t = float(t)
        M = default_truncation(t, 1.0)
        torus, exact = _exact_torus(kernel, M * L + xmax)
        if not exact:
            side = int(round(EXACT_VOLUME_LIMIT ** (1 / d)))
            torus = Torus(d, max(side, 2 * xmax + 2 * L + 1))
            exact_all = False
        hs = poisson_kernel(kernel, t, 1.0, torus, M)
        for x in xs:
            val = hs.field[x] + hs.tail_mass
            sup = max((abs(c) for c in x), default=0)
            b1 = math.exp(-sup / L + sigma2 * t / (d * L * L))
            t0 = d * L * sup / (2 * sigma2)
            b2 = math.exp(-d * sup * sup / (4 * sigma2 * t)) if t > 0 else 0.0
            ok1 = val <= b1 + slack
            applies2 = t >= t0
            ok2 = (not applies2) or val <= b2 + slack
            worst = max(worst, val - b1, (val - b2) if applies2 else -math.inf)
            rows.append({"t": t, "x": list(x), "I": val, "bound1": b1, "bound2": b2 if applies2 else None,
                         "ok1": bool(ok1), "ok2": bool(ok2), "nonnegative": bool(hs.field[x] >= 0)})
    violations = [r for r in rows if not (r["ok1"] and r["ok2"] and r["nonnegative"])]
    return {"ok": not violations, "points": len(rows), "violations": violations,
            "max_excess": worst, "exact": exact_all, "rows": rows}


def mgf_check(kernel: StepKernel, t: float, s: float) -> dict:
    """sum_x e^{s x_1} I_{t,1}(x) against exp[t sum_x D(x)(cosh(s x_1) - 1)].

    I is the truncated Poisson series on a non-wrapping torus; |s| <= 1/L.
    """
    if abs(s) > 1.0 / kernel.L + 1e-15:
        raise GreensError("the moment identity is checked for |s| <= 1/L")
    M = default_truncation(t, 1.0)
    torus, exact = _exact_torus(kernel, M * kernel.L)
    if not exact:
        raise GreensError("torus for an exact moment check is too large; lower t")
    hs = poisson_kernel(kernel, t, 1.0, torus, M)
    x1 = torus.coords()[..., 0].astype(float)
    lhs = float(np.sum(np.exp(s * x1) * hs.field.values))
    expo = sum(float(w) * (math.cosh(s * x[0]) - 1) for x, w in kernel.weights.items())
    rhs = math.exp(t * expo)
    return {"lhs": lhs, "rhs": rhs, "rel_error": abs(lhs - rhs) / rhs, "tail_mass": hs.tail_mass}
