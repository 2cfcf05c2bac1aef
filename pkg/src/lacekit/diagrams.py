"""Diagram evaluation: power-law lines, open diagrams S, T, H, the model
kernels A^(0), A^(i), A^end, the M^(N) recursion and condition sums.

Two-site functions F(x, y) on a torus are stored as arrays of shape
``torus.shape + torus.shape`` (first block x, second block y). Kernel
applications are products with difference arrays followed by convolutions
along one block, done with FFTs on the product torus.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import GuardError
from .lattice import ScalarField, StepKernel, Torus, convolve, delta_field, fft_convolve, power_law_field
from .series import ActivityPoly, SiteSeries

MODELS = ("SAW", "LT", "LA", "PERC")
TWO_SITE_LIMIT = 4096  # max torus volume for two-site arrays
A2_LIMIT = 1024  # max volume for the cubic-cost percolation A_2 term


class RegimeError(ValueError):
    """Raised when line exponents fall outside the convergent regime."""


@dataclass
class LineField:
    """A symmetric nonnegative line with a role tag."""

    field: ScalarField
    role: str = "power-law"
    meta: dict = field(default_factory=dict)

    @property
    def values(self) -> np.ndarray:
        return self.field.values

    @property
    def torus(self) -> Torus:
        return self.field.torus


def power_law_line(torus: Torus, q: float, amplitude: float = 1.0) -> LineField:
    return LineField(power_law_field(torus, q, amplitude), "power-law", {"q": q})


def tilde_line(line: LineField | ScalarField, kernel: StepKernel, p: float) -> LineField:
    """Kernel-smeared line (pD * f)."""
    f = line.field if isinstance(line, LineField) else line
    kd = kernel.on_torus(f.torus).values * float(p)
    vals = fft_convolve(kd, f.values)
    return LineField(f.with_values(np.clip(vals, 0, None), "tilde", True), "tilde",
                     {"p": float(p), "source": getattr(line, "role", "field")})


def _vals(f) -> np.ndarray:
    if isinstance(f, LineField):
        return f.values
    if isinstance(f, ScalarField):
        return f.values
    return np.asarray(f, dtype=float)


def check_regime(q1: float, q2: float, d: int) -> None:
    """2 q1 + d > 2 q1 + q2 > 2 d together with q2 <= q1 < d."""
    if not (2 * q1 + d > 2 * q1 + q2 > 2 * d):
        raise RegimeError(f"(q1, q2) = ({q1}, {q2}) violates 2q1+d > 2q1+q2 > 2d in d = {d}")
    if not (q2 <= q1 < d):
        raise RegimeError(f"(q1, q2) = ({q1}, {q2}) violates q2 <= q1 < d")


# ---------------------------------------------------------------- open diagrams

def S_field(f1, f2) -> np.ndarray:
    """s(z) with S(x, y) = s(y - x) = (f2 * f1 * f1)(y - x) for symmetric lines."""
    a, b = _vals(f1), _vals(f2)
    return fft_convolve(fft_convolve(b, a), a)


def _box_mask(t: Torus, half: int) -> np.ndarray:
    return t.supnorm() <= half


def open_diagram_S(q1: float, q2: float, d: int, side: int, pad: int = 2) -> dict:
    """Sbar and the fitted constant in S(x, y) <= C (|x - y| + 1)^-(2q1+q2-2d),
    measured on the box |x - y| <= side/2 at ``side`` and ``2 side``."""
    check_regime(q1, q2, d)
    e = 2 * q1 + q2 - 2 * d
    rows = []
    for s in (side, 2 * side):
        t = Torus(d, pad * s)
        sv = S_field(power_law_field(t, q1), power_law_field(t, q2))
        m = _box_mask(t, s // 2)
        rows.append({"side": s, "Sbar": float(sv[m].max()), "S_origin": float(sv.flat[0]),
                     "bound_constant": float((sv * (t.norm() + 1.0) ** e)[m].max())})
    c0, c1 = rows[0]["bound_constant"], rows[1]["bound_constant"]
    return {"q1": q1, "q2": q2, "d": d, "exponent": e, "Sbar": rows[0]["Sbar"],
            "bound_constant": c0, "doubled_bound_constant": c1,
            "relative_change": abs(c1 - c0) / c0, "runs": rows}


def T_row(f1, f2, x_index) -> np.ndarray:
    """T(x, .) for one x: sum_{u,v} {f1(u) f2(v) + f2(u) f1(v)} f1(u-v) f2(y-u) f1(x-v)."""
    a, b = _vals(f1), _vals(f2)
    fx = np.roll(a, shift=tuple(int(i) for i in x_index), axis=tuple(range(a.ndim)))  # f1(x - v) as a function of v
    h = a * fft_convolve(b * fx, a) + b * fft_convolve(a * fx, a)
    return fft_convolve(b, h)


def H_value(f, z, w, x, y) -> float:
    """H(z, w, x, y) = sum_{u,v} f(z-u) f(y-u) f(w-v) f(x-v) f(u-v) (torus indices)."""
    a = _vals(f)
    ax = tuple(range(a.ndim))
    sh = lambda p: np.roll(a, shift=tuple(int(i) for i in p), axis=ax)
    au = sh(z) * sh(y)
    bv = sh(w) * sh(x)
    return float(np.sum(au * fft_convolve(a, bv)))


def _sample_points(d: int, side: int, k: int, rng) -> list:
    pts = [tuple([0] * d)]
    r = 1
    while r <= side // 2 and len(pts) < k:
        pts.append(tuple([r] + [0] * (d - 1)))
        pts.append(tuple([r] * d))
        r *= 2
    while len(pts) < k:
        pts.append(tuple(int(c) for c in rng.integers(-(side // 2), side // 2 + 1, size=d)))
    return pts[:k]


def open_diagram_T_and_H(q1: float, q2: float | None = None, d: int = 3, side: int = 16,
                         pad: int = 2, n_x: int = 6, n_h: int = 12, seed: int = 0) -> dict:
    """Fitted constants for T(x, y) <= (C/2) Sbar {mixed powers} and
    H <= C Sbar / ((|y-z|+1)^q (|x-w|+1)^q), at ``side`` and ``2 side``.

    H uses the single exponent q1.
    """
    q2 = q1 if q2 is None else q2
    check_regime(q1, q2, d)
    check_regime(q1, q1, d)
    rng = np.random.default_rng(seed)
    xs = _sample_points(d, side, n_x, rng)
    hs = [tuple(_sample_points(d, side, 1, rng)[0] if i == 0 else
                tuple(int(c) for c in rng.integers(-(side // 2), side // 2 + 1, size=d)) for i in range(4))
          for _ in range(n_h)]
    runs = []
    for s in (side, 2 * side):
        t = Torus(d, pad * s)
        f1, f2 = power_law_field(t, q1), power_law_field(t, q2)
        box = _box_mask(t, s // 2)
        sbar = float(S_field(f1, f2)[box].max())
        sbar_h = float(S_field(f1, f1)[box].max())
        nrm = t.norm() + 1.0
        ct, t00 = 0.0, None
        for x in xs:
            row = T_row(f1, f2, t.index(x))
            nx = np.linalg.norm(x) + 1.0
            bound = 0.5 * sbar * (nx ** -q1 * nrm ** -q2 + nx ** -q2 * nrm ** -q1)
            ct = max(ct, float((row / bound)[box].max()))
            if not any(x):
                t00 = float(row.flat[0])
        ch = 0.0
        for z, w, x, y in hs:
            hv = H_value(f1, t.index(z), t.index(w), t.index(x), t.index(y))
            den = (np.linalg.norm(np.subtract(y, z)) + 1) ** q1 * (np.linalg.norm(np.subtract(x, w)) + 1) ** q1
            ch = max(ch, hv * den / sbar_h)
        runs.append({"side": s, "Sbar": sbar, "Sbar_H": sbar_h, "T_constant": ct, "H_constant": ch, "T00": t00})
    r0, r1 = runs
    return {"q1": q1, "q2": q2, "d": d, "runs": runs, "T00": r0["T00"],
            "T_constant": r0["T_constant"], "H_constant": r0["H_constant"],
            "T_relative_change": abs(r1["T_constant"] - r0["T_constant"]) / r0["T_constant"],
            "H_relative_change": abs(r1["H_constant"] - r0["H_constant"]) / r0["H_constant"]}


# ---------------------------------------------------------------- model kernels

def _diff_array(f: np.ndarray, t: Torus) -> np.ndarray:
    """F(u, v) = f(v - u) as a two-site array."""
    d, n = t.d, t.side
    idx = []
    for i in range(d):
        shape_u = [1] * (2 * d)
        shape_u[i] = n
        shape_v = [1] * (2 * d)
        shape_v[d + i] = n
        u = np.arange(n).reshape(shape_u)
        v = np.arange(n).reshape(shape_v)
        idx.append((v - u) % n)
    return f[tuple(idx)]


def _conv_block(M: np.ndarray, f: np.ndarray, block: int) -> np.ndarray:
    """Convolve a two-site array with f along block 0 (first site) or 1."""
    d = f.ndim
    axes = tuple(range(d)) if block == 0 else tuple(range(d, 2 * d))
    shape = [1] * (2 * d)
    for i, ax in enumerate(axes):
        shape[ax] = f.shape[i]
    fa = np.fft.rfftn(M, axes=axes)
    ff = np.fft.rfftn(f.reshape(shape), axes=axes)
    return np.fft.irfftn(fa * ff, s=[M.shape[a] for a in axes], axes=axes)


def _swap(M: np.ndarray) -> np.ndarray:
    d = M.ndim // 2
    return np.transpose(M, tuple(range(d, 2 * d)) + tuple(range(d)))


def _outer(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return np.multiply.outer(a, b)


@dataclass
class KernelSpec:
    """Model tag and named lines on a common torus.

    SAW: ``sigma``. LT/LA: ``rho`` and ``rho_tilde``. PERC: ``tau`` and
    ``tau_tilde``.
    """

    model: str
    lines: dict

    def __post_init__(self):
        self.model = self.model.upper()
        if self.model not in MODELS:
            raise ValueError(f"model must be one of {MODELS}")
        need = {"SAW": {"sigma"}, "LT": {"rho", "rho_tilde"}, "LA": {"rho", "rho_tilde"},
                "PERC": {"tau", "tau_tilde"}}[self.model]
        missing = need - set(self.lines)
        if missing:
            raise ValueError(f"{self.model} kernels need lines {sorted(missing)}")
        tori = {self._field(k).torus for k in self.lines}
        if len(tori) != 1:
            raise ValueError("lines live on different tori")
        self.torus = tori.pop()

    def _field(self, name) -> ScalarField:
        f = self.lines[name]
        return f.field if isinstance(f, LineField) else f

    def line(self, name) -> np.ndarray:
        return self._field(name).values


def power_law_spec(model: str, torus: Torus, q: float, kernel: StepKernel | None = None,
                   p: float = 1.0) -> KernelSpec:
    """Kernel spec with every line the power law (|x|+1)^-q; smeared lines use
    pD * line when a kernel is given, else the line itself."""
    base = power_law_line(torus, q)
    tl = tilde_line(base, kernel, p) if kernel is not None else LineField(base.field, "tilde", {"q": q})
    model = model.upper()
    if model == "SAW":
        return KernelSpec(model, {"sigma": base})
    if model in ("LT", "LA"):
        return KernelSpec(model, {"rho": base, "rho_tilde": tl})
    return KernelSpec(model, {"tau": base, "tau_tilde": tl})


def _rho2(spec: KernelSpec) -> np.ndarray:
    r = spec.line("rho")
    return fft_convolve(r, r)


def kernel_A0(spec: KernelSpec) -> np.ndarray:
    """A^(0)(x, y) as a two-site array (LT, LA, PERC)."""
    t = spec.torus
    if t.volume > TWO_SITE_LIMIT:
        raise GuardError(f"torus volume {t.volume} exceeds the two-site limit {TWO_SITE_LIMIT}")
    if spec.model == "LT":
        return _outer(spec.line("rho_tilde"), _rho2(spec))
    if spec.model == "LA":
        r = spec.line("rho")
        return _outer(r, r)
    if spec.model == "PERC":
        tau, tt = spec.line("tau"), spec.line("tau_tilde")
        K = _outer(tau, tau) * _diff_array(tau, t)
        return _conv_block(_conv_block(K, tt, 0), tau, 1)
    raise ValueError("SAW has no A^(0); its recursion starts at M^(2)")


def saw_M2(spec: KernelSpec) -> np.ndarray:
    s = spec.line("sigma")
    sp = s - delta_field(spec.torus).values
    return _outer(sp * sp, s)


def apply_kernel(spec: KernelSpec, M: np.ndarray, which: str = "i", A0: np.ndarray | None = None) -> np.ndarray:
    """sum_{u,v} M(u, v) A(u, v, x, y) for A = A^(i) (``which='i'``) or A^end."""
    t = spec.torus
    if spec.model == "SAW":
        s = spec.line("sigma")
        sp = s - delta_field(t).values
        W = M * _diff_array(sp, t)  # W(u, x) = M(u, x) sigma'(x - u)
        return _swap(_conv_block(W, s, 0))
    if spec.model in ("LT", "LA"):
        r, rt, r2 = spec.line("rho"), spec.line("rho_tilde"), _rho2(spec)
        W = M * _diff_array(r, t)
        R1 = _conv_block(_conv_block(W, rt, 0), r2, 1)  # [y, x]
        R2 = _conv_block(_conv_block(W, r2, 0), rt, 1)  # [y, x]
        return _swap(R1 + R2)
    tau, tt = spec.line("tau"), spec.line("tau_tilde")
    Dt = _diff_array(tau, t)
    W = M * Dt
    if which == "end":
        return _conv_block(_conv_block(W, tau, 0), tau, 1)
    X = _conv_block(_conv_block(W, tau, 0), tau, 1) * Dt  # [a, b]
    A1 = _swap(_conv_block(_conv_block(X, tau, 0), tt, 1))
    return A1 + _perc_A2(spec, M, A0)


def _perc_A2(spec: KernelSpec, M: np.ndarray, A0: np.ndarray | None) -> np.ndarray:
    """sum_{u,v} M(u,v) tau(y-u) A^(0)(x-v, u-v)."""
    t = spec.torus
    V = t.volume
    if V > A2_LIMIT:
        raise GuardError(f"percolation A_2 needs volume <= {A2_LIMIT} (cubic cost)")
    A0 = kernel_A0(spec) if A0 is None else A0
    A0f = A0.reshape(V, V)
    Mf = M.reshape(V, V)
    co = t.coords().reshape(V, t.d) % t.side
    lin = lambda c: np.ravel_multi_index(tuple(c[..., i] for i in range(t.d)), t.shape)
    D = lin((co[:, None, :] - co[None, :, :]) % t.side)  # D[x, v] = index of x - v
    G = np.empty((V, V))
    for u in range(V):
        G[u] = A0f[D, D[u][None, :]] @ Mf[u]
    G = G.reshape(t.shape + t.shape)  # [u, x]
    return _swap(_conv_block(G, spec.line("tau"), 0))


def direct_kernel_value(spec: KernelSpec, name: str, u, v=None, x=None, y=None) -> float:
    """Kernel value at one argument tuple by explicit lattice sums (wiring oracle)."""
    t = spec.torus
    co = t.coords()
    ax = tuple(range(t.d))
    at = lambda f, z: float(f[t.index(z)])
    sh = lambda f, z: np.roll(f, shift=t.index(z), axis=ax)  # g(a) = f(a - z)
    refl = lambda f: f  # lines are symmetric
    sub = lambda a, b: tuple(i - j for i, j in zip(a, b))
    m = spec.model
    if m == "SAW" and name == "A":
        s = spec.line("sigma")
        sp = s - delta_field(t).values
        return at(sp, sub(v, u)) * at(s, sub(y, u)) * float(tuple(v) == tuple(x))
    if m in ("LT", "LA"):
        r, rt = spec.line("rho"), spec.line("rho_tilde")
        r2 = lambda z: float(np.sum(r * sh(r, z)))  # sum_a rho(a) rho(z - a)
        if name == "A0":
            xx, yy = u, v
            return at(rt, xx) * r2(yy) if m == "LT" else at(r, xx) * at(r, yy)
        return at(r, sub(v, u)) * (at(rt, sub(y, u)) * r2(sub(x, v)) + at(rt, sub(x, v)) * r2(sub(y, u)))
    if m == "PERC":
        tau, tt = spec.line("tau"), spec.line("tau_tilde")
        if name == "A0":
            xx, yy = u, v
            # sum_{a,b} tau(a) tau(b) tau(a-b) ttilde(x-a) tau(y-b)
            fa = tau * sh(refl(tt), xx)
            fb = tau * sh(refl(tau), yy)
            return float(np.sum(fa * fft_convolve(tau, fb)))
        if name == "Aend":
            return at(tau, sub(u, v)) * at(tau, sub(u, x)) * at(tau, sub(v, y))
        if name == "A1":
            fa = sh(tau, u) * sh(tau, y)
            fb = sh(tau, v) * sh(tt, x)
            return at(tau, sub(u, v)) * float(np.sum(fa * fft_convolve(tau, fb)))
        if name == "A2":
            fa = sh(tau, u) * sh(tau, v)
            fb = sh(tau, v) * sh(tt, x)
            return at(tau, sub(y, u)) * float(np.sum(fa * fft_convolve(tau, fb)))
    raise ValueError(f"unknown kernel {name!r} for {m}")


def model_kernels(spec: KernelSpec, samples) -> dict:
    """Direct kernel values at sample tuples (u, v, x, y); A^(0) at (x, y) = (u, v)."""
    names = {"SAW": ["A"], "LT": ["A0", "A"], "LA": ["A0", "A"], "PERC": ["A0", "A1", "A2", "Aend"]}[spec.model]
    out = {n: [] for n in names}
    for smp in samples:
        u, v, x, y = smp
        for n in names:
            out[n].append(direct_kernel_value(spec, n, u, v, x, y) if n != "A0"
                          else direct_kernel_value(spec, n, u, v))
    return out


# ---------------------------------------------------------------- M recursion

GROWTH_EXPONENT = {"SAW": lambda q, d: 3 * q, "LT": lambda q, d: 3 * q - d,
                   "LA": lambda q, d: 3 * q - d, "PERC": lambda q, d: 2 * q}


def _diag(M: np.ndarray) -> np.ndarray:
    t_shape = M.shape[: M.ndim // 2]
    V = int(np.prod(t_shape))
    return np.diagonal(M.reshape(V, V)).reshape(t_shape).copy()


def m_diagonals(spec: KernelSpec, N: int) -> dict:
    """{n: M^(n)(x, x)} for the model's recursion up to N.

    SAW starts at n = 2 with M^(2) = sigma'(x)^2 sigma(y); LT/LA start at
    n = 0 with M^(0) = A^(0); PERC reports M^(0)(x,x) = (1-delta) tau(x)^2 and
    M^(n), n >= 1, built from A^(0), (A_1 + A_2)^(n-1) and A^end.
    """
    if N > 6:
        raise ValueError("N is limited to 6")
    t = spec.torus
    if t.volume > TWO_SITE_LIMIT:
        raise GuardError(f"torus volume {t.volume} exceeds the two-site limit {TWO_SITE_LIMIT}")
    out = {}
    if spec.model == "SAW":
        M = saw_M2(spec)
        out[2] = _diag(M)
        for n in range(3, N + 1):
            M = apply_kernel(spec, M)
            out[n] = _diag(M)
        return out
    if spec.model in ("LT", "LA"):
        M = kernel_A0(spec)
        out[0] = _diag(M)
        for n in range(1, N + 1):
            M = apply_kernel(spec, M)
            out[n] = _diag(M)
        return out
    tau = spec.line("tau")
    out[0] = np.where(t.supnorm() == 0, 0.0, tau * tau)
    A0 = kernel_A0(spec)
    M = A0
    for n in range(1, N + 1):
        out[n] = _diag(apply_kernel(spec, M, "end"))
        if n < N:
            M = apply_kernel(spec, M, "i", A0)
    return out


def m_recursion(spec: KernelSpec, N: int, q: float | None = None, box_fraction: float = 0.25) -> dict:
    """M^(n)(x, x) fields and growth ratios sup_x M^(n)(x,x)(|x|+1)^e over the
    previous order, with x restricted to |x| <= box_fraction * side."""
    diags = m_diagonals(spec, N)
    t = spec.torus
    q = q if q is not None else _infer_q(spec)
    e = GROWTH_EXPONENT[spec.model](q, t.d)
    m = t.supnorm() <= max(1, int(box_fraction * t.side))
    w = (t.norm() + 1.0) ** e
    sups = {n: float((v * w)[m].max()) for n, v in diags.items()}
    ns = sorted(sups)
    ratios = {n: sups[n] / sups[n - 1] for n in ns if n - 1 in sups and sups[n - 1] > 0}
    return {"model": spec.model, "exponent": e, "sup_weighted": sups, "growth_ratio": ratios,
            "diagonals": diags, "nonnegative": all(bool((v >= -1e-12 * max(1.0, v.max())).all()) for v in diags.values())}


def _infer_q(spec: KernelSpec) -> float:
    for f in spec.lines.values():
        if isinstance(f, LineField) and "q" in f.meta:
            return float(f.meta["q"])
    raise ValueError("line exponent q unknown; pass q explicitly")


# ---------------------------------------------------------------- condition sums

def condition_sums(f, radii=None) -> dict:
    """Bubble, triangle and square sums of a symmetric nonnegative field.

    The field is truncated to sup-norm balls of radius r/4, r/2 and r (r the
    largest radius fitting the torus) and zero-padded before convolving, so
    every value is a genuine finite-box lattice sum. ``increment_ratio`` is
    (S(r) - S(r/2)) / (S(r/2) - S(r/4)); values below one indicate convergence.
    """
    fs = f.field if isinstance(f, LineField) else f
    t = fs.torus
    v = fs.values
    R = t.side // 2
    radii = radii or [max(R // 4, 1), max(R // 2, 1), R]
    sup = t.supnorm()
    out = {"radii": list(radii), "bubble": [], "triangle": [], "square": []}
    big = Torus(t.d, 2 * t.side)
    for r in radii:
        g = np.zeros(big.shape)
        co = t.coords()[sup <= r]
        vals = v[sup <= r]
        g[tuple((co % big.side).T)] = vals
        ff = fft_convolve(g, g)
        out["bubble"].append(float(np.sum(g * g)))
        out["triangle"].append(float(np.sum(ff * g)))
        out["square"].append(float(np.sum(ff * ff)))
    diag = {}
    for k in ("bubble", "triangle", "square"):
        s = out[k]
        d1, d2 = s[1] - s[0], s[2] - s[1]
        ratio = d2 / d1 if d1 > 0 else (0.0 if d2 <= 0 else float("inf"))
        diag[k] = {"increment_ratio": ratio, "converging": bool(ratio < 1.0)}
        out[k + "_value"] = s[-1]
    out["diagnostics"] = diag
    return out


def condition_sums_power_law(q: float, d: int, side: int) -> dict:
    return condition_sums(power_law_line(Torus(d, side), q))


# ---------------------------------------------------------------- exact SAW M series

def _scaled_array(series: SiteSeries, box: list, index: dict, K: int) -> tuple:
    den = series.kernel.common_denominator()
    arr = np.zeros((len(box), K + 1), dtype=object)
    for x, poly in series.entries.items():
        if x in index:
            for k in range(K + 1):
                c = poly[k] * den**k
                if c.denominator != 1:
                    raise ValueError("series coefficients are not integral after scaling")
                arr[index[x], k] = int(c)
    return arr, den


def saw_M_series(sigma: SiteSeries, n: int) -> dict:
    """Exact series of the SAW diagram bound M^(n)(x, x), n >= 2.

    M^(2)(x, y) = sigma'(x)^2 sigma(y) and
    M^(n)(x, y) = sum_u M^(n-1)(u, x) sigma'(x - u) sigma(y - u).
    Coefficients of p^k are scaled by den^k to integers and products are
    truncated at the series order.
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    cache = sigma.__dict__.setdefault("_saw_M_cache", {})
    if n in cache:
        return cache[n]
    K = sigma.max_order
    L = max(max(abs(c) for c in x) for x in sigma.kernel.weights)
    R = K * max(L, 1)
    import itertools
    box = [tuple(c) for c in itertools.product(range(-R, R + 1), repeat=sigma.kernel.d)]
    index = {x: i for i, x in enumerate(box)}
    s, den = _scaled_array(sigma, box, index, K)
    sp = s.copy()
    o = index[tuple([0] * sigma.kernel.d)]
    sp[o, 0] -= 1
    nbx = len(box)
    # difference lookup: diff[x, u] = index of x - u (or -1 outside the box)
    diff = np.full((nbx, nbx), -1, dtype=np.int64)
    for i, x in enumerate(box):
        for j, u in enumerate(box):
            k = index.get(tuple(a - b for a, b in zip(x, u)))
            if k is not None:
                diff[i, j] = k
    zero = np.zeros(K + 1, dtype=object)
    spad = np.vstack([s, zero[None, :]])  # row -1 is zero
    sppad = np.vstack([sp, zero[None, :]])
    SP = sppad[diff]  # SP[x, u, k] = sigma'(x - u)
    SG = spad[diff]  # SG[y, u, k] = sigma(y - u)

    def trunc_mul(a, b):
        out = np.zeros(np.broadcast_shapes(a.shape, b.shape), dtype=object)
        for i in range(K + 1):
            for j in range(K + 1 - i):
                out[..., i + j] += a[..., i] * b[..., j]
        return out

    if "_full" in cache:
        m0, M = cache["_full"]
    else:
        m0 = 2
        M = trunc_mul(trunc_mul(sp, sp)[:, None, :], s[None, :, :])  # M[x, y, k]
        cache[2] = _diag_dict(M, box, den, K)
    for m in range(m0 + 1, n + 1):
        new = np.zeros_like(M)
        # new[x, y] = sum_u M[u, x] SP[x, u] SG[y, u]
        W = trunc_mul(np.transpose(M, (1, 0, 2)), SP)  # W[x, u]
        for i in range(K + 1):
            Wi = _as_int(W[:, :, i])
            for j in range(K + 1 - i):
                Sj = _as_int(SG[:, :, j].T)
                if Wi.dtype != object and Sj.dtype != object and _safe(Wi, Sj):
                    new[:, :, i + j] += Wi.dot(Sj).astype(object)
                else:
                    new[:, :, i + j] += Wi.astype(object).dot(Sj.astype(object))
        M = new
        cache[m] = _diag_dict(M, box, den, K)
    cache["_full"] = (n, M)
    return cache[n]


def _as_int(a: np.ndarray) -> np.ndarray:
    m = max((abs(int(v)) for v in a.flat), default=0)
    return a.astype(np.int64) if m < 2**62 else a


def _safe(a: np.ndarray, b: np.ndarray) -> bool:
    ma = int(np.abs(a).max()) if a.size else 0
    mb = int(np.abs(b).max()) if b.size else 0
    return ma * mb * max(a.shape[1], 1) < 2**62


def _diag_dict(M, box, den, K) -> dict:
    out = {}
    for i, x in enumerate(box):
        c = M[i, i]
        if any(c):
            out[x] = ActivityPoly([Fraction(int(c[k]), den**k) for k in range(K + 1)], K)
    return out


# ---------------------------------------------------------------- domination checks

def lt_la_domination(model: str, kernel: StepKernel, max_order: int, p, side: int | None = None) -> dict:
    """Compare psi^(N)(x) with the M-bound at activity p: M^(N-1)(x,x) for LT and
    M^(N)(x,x) for LA, using truncated two-point series as lines."""
    from .enumerate import psi_levels, two_point_series
    model = model.upper()
    if model not in ("LT", "LA"):
        raise ValueError("model must be LT or LA")
    L = max(max(abs(c) for c in x) for x in kernel.weights)
    R = max_order * max(L, 1)
    side = side or 4 * R + 2
    t = Torus(kernel.d, side)
    rho_s = two_point_series(model, kernel, max_order)
    rho = rho_s.to_field(t, float(p))
    spec = KernelSpec(model, {"rho": LineField(rho, "two-point"), "rho_tilde": tilde_line(rho, kernel, float(p))})
    psis = psi_levels(model, kernel, max_order)
    Nmax = max([n for n in psis if n >= 1], default=1)
    diags = m_diagonals(spec, Nmax if model == "LA" else max(Nmax - 1, 0))
    rows, ok = [], True
    for N, ps in psis.items():
        if N < 1:
            continue
        bound = diags[N - 1] if model == "LT" else diags[N]
        for x, poly in ps.entries.items():
            val = float(poly(Fraction(p)))
            b = float(bound[t.index(x)])
            good = val <= b * (1 + 1e-9) + 1e-15
            ok &= good
            rows.append({"N": N, "x": list(x), "psi": val, "bound": b, "ok": good})
    return {"model": model, "p": float(p), "side": side, "ok": bool(ok), "rows": rows}


def perc_graph_kernels(T: np.ndarray, P: np.ndarray, origin: int = 0) -> dict:
    """Percolation diagram kernels on a finite graph from the two-point matrix
    T[a, b] = tau(a, b) and bond probabilities P[a, w] = p_{aw}.

    The smeared line is Ttil[a, x] = sum_w P[a, w] T[w, x]; lines out of the
    origin use T[origin, .]."""
    t0 = T[origin]
    Tt = P @ T
    A0 = np.einsum("a,b,ab,ax,by->xy", t0, t0, T, Tt, T)
    A1 = np.einsum("uv,ua,vb,ab,ay,bx->uvxy", T, T, T, T, T, Tt)
    A2 = np.einsum("yu,ua,va,ab,vb,bx->uvxy", T, T, T, T, T, Tt)
    Aend = np.einsum("uv,ux,vy->uvxy", T, T, T)
    return {"A0": A0, "A": A1 + A2, "Aend": Aend, "Ttil": Tt}


def perc_graph_M(T, P, N: int, origin: int = 0) -> dict:
    """{n: M^(n)(x, x)} on a finite graph; n = 0 gives (1 - delta) tau(0, x)^2."""
    k = perc_graph_kernels(T, P, origin)
    out = {0: np.where(np.arange(T.shape[0]) == origin, 0.0, T[origin] ** 2)}
    M = k["A0"]
    full = {}
    for n in range(1, N + 1):
        Mn = np.einsum("uv,uvxy->xy", M, k["Aend"])
        out[n] = np.diagonal(Mn).copy()
        full[n] = Mn
        M = np.einsum("uv,uvxy->xy", M, k["A"])
    out["Ttil"] = k["Ttil"]
    return out


def perc_graph_domination(g, N: int, p_values=(0.1, 0.3, 0.5), remainder: bool = True) -> dict:
    """psi^(n)(0, x) <= M^(n)(x, x), psi^(0) <= tau^2 and
    R^(n)(0, x) <= sum_u M^(n)(u, u) Ttil(u, x) on a finite graph at sampled p."""
    from .perc_exact import psi_n_all, remainder_all, two_point_all
    taus = [two_point_all(g, v) for v in range(g.ns)]
    psis = {n: psi_n_all(g, n) for n in range(N + 1)}
    rems = {n: remainder_all(g, n) for n in range(1, N + 1)} if remainder else {}
    rows, ok = [], True
    for p in p_values:
        pf = Fraction(p).limit_denominator(10**6)
        T = np.array([[float(taus[a][b](pf)) for b in range(g.ns)] for a in range(g.ns)])
        P = np.zeros((g.ns, g.ns))
        for a, b, w in g.bonds:
            P[a, b] = P[b, a] = float(w * pf)
        Ms = perc_graph_M(T, P, N, g.origin)
        for n in range(N + 1):
            for x in range(g.ns):
                val = float(psis[n][x](pf))
                b = float(Ms[n][x])
                good = val <= b * (1 + 1e-9) + 1e-15
                ok &= good
                rows.append({"kind": "psi", "n": n, "p": float(p), "x": x, "value": val, "bound": b, "ok": good})
        for n, R in rems.items():
            bnd = np.array(Ms[n]) @ Ms["Ttil"]
            for x in range(g.ns):
                val = float(R[x](pf))
                good = val <= bnd[x] * (1 + 1e-9) + 1e-15
                ok &= good
                rows.append({"kind": "remainder", "n": n, "p": float(p), "x": x, "value": val,
                             "bound": float(bnd[x]), "ok": good})
    return {"ok": bool(ok), "rows": rows}
