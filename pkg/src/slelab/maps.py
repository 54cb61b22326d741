"""Special functions and the conformal maps that turn SLE hitting laws
into linear functionals.

For 4 < kappa < 8 the map F'(u) ~ u^(alpha-1) (u-1)^(beta-1) sends the
upper half-plane onto an isosceles triangle; the three-way swallowing
probabilities of a point z are the barycentric coordinates of F(z).
"""

from dataclasses import dataclass, field
from functools import lru_cache
import math
import cmath

import numpy as np
from scipy.special import roots_jacobi

# ---------------------------------------------------------------- special functions


def beta_fn(a, b):
    if a <= 0 or b <= 0:
        raise ValueError("beta_fn needs a, b > 0")
    if a + b < 170.0:
        return math.gamma(a) * math.gamma(b) / math.gamma(a + b)
    return math.exp(math.lgamma(a) + math.lgamma(b) - math.lgamma(a + b))


def _betacf(a, b, x):
    # modified Lentz evaluation of the incomplete beta continued fraction
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 10000):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-16:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def reg_incomplete_beta(a, b, x):
    """Regularized incomplete beta I_x(a, b)."""
    if a <= 0 or b <= 0:
        raise ValueError("reg_incomplete_beta needs a, b > 0")
    if not 0.0 <= x <= 1.0:
        raise ValueError("reg_incomplete_beta needs x in [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    lbt = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
           + a * math.log(x) + b * math.log1p(-x))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(lbt) * _betacf(a, b, x) / a
    return 1.0 - math.exp(lbt) * _betacf(b, a, 1.0 - x) / b


def inverse_incomplete_beta(a, b, q):
    """x with I_x(a, b) = q, by bisection on the monotone CDF."""
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must lie in [0, 1]")
    lo, hi = 0.0, 1.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if reg_incomplete_beta(a, b, mid) < q:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-16:
            break
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------- quadrature


def _upper(z):
    # pin signed zeros so principal logs of boundary points stay on the H side
    z = complex(z)
    return complex(z.real, abs(z.imag)) if z.imag == 0.0 else z


def _cpow(u, p):
    return np.exp(p * np.log(u))


@lru_cache(maxsize=64)
def _jacobi_rule(gamma, n=24):
    # nodes/weights on [0, 1] for weight s^(gamma-1)
    t, w = roots_jacobi(n, 0.0, gamma - 1.0)
    return 0.5 * (t + 1.0), w * 0.5 ** gamma


@lru_cache(maxsize=4)
def _legendre_rule(n=24):
    t, w = np.polynomial.legendre.leggauss(n)
    return 0.5 * (t + 1.0), 0.5 * w


def _singular_segment(p, z, gamma, smooth):
    """Integral from prevertex p to z of s^(gamma-1) * smooth(u) along the segment,
    where u = p + s*dir and the caller has folded dir^(gamma-1) into smooth.

    The first piece uses Gauss-Jacobi for the endpoint power; the remainder
    is cut geometrically so long rays stay accurate.
    """
    length = abs(z - p)
    if length == 0.0:
        return 0j
    direction = (z - p) / length
    first = min(length, 0.25)
    s, w = _jacobi_rule(gamma)
    total = first ** gamma * np.sum(w * smooth(p + first * s * direction))
    xs, ws = _legendre_rule()
    lo = first
    while lo < length:
        hi = min(2.0 * lo, length)
        u = p + (lo + (hi - lo) * xs) * direction
        total += (hi - lo) * np.sum(ws * (lo + (hi - lo) * xs) ** (gamma - 1.0) * smooth(u))
        lo = hi
    return total * direction


# ---------------------------------------------------------------- triangle map


@dataclass(frozen=True)
class TriangleGeometry:
    kappa: float
    alpha: float
    beta: float
    a: complex
    b: complex
    c: complex
    norm_const: complex
    beta_ab: float = field(repr=False)

    @property
    def vertices(self):
        return (self.a, self.b, self.c)

    @property
    def area(self):
        return 0.5 * abs(((self.b - self.a).conjugate() * (self.c - self.a)).imag)

    def angles(self):
        def at(p, q, r):
            return abs(cmath.phase((q - p) / (r - p)))
        return (at(self.a, self.b, self.c), at(self.b, self.c, self.a), at(self.c, self.a, self.b))


@lru_cache(maxsize=32)
def triangle_geometry(kappa):
    """Isosceles target triangle: a = F(0) = 1, c = F(inf) = 0, b = F(1) above."""
    kappa = float(kappa)
    if not 4.0 < kappa < 8.0:
        raise ValueError("triangle geometry needs 4 < kappa < 8")
    alpha = 1.0 - 4.0 / kappa
    beta = 8.0 / kappa - 1.0
    bab = beta_fn(alpha, beta)
    rot = 1.0 - cmath.exp(1j * math.pi * beta)
    norm = -1.0 / (bab * rot)
    return TriangleGeometry(kappa, alpha, beta, 1.0 + 0j, 1.0 / rot, 0j, norm, bab)


def _integrand_parts(geom):
    al, be = geom.alpha, geom.beta

    def near0(direction):
        fac = direction ** (al - 1.0)
        return lambda u: fac * _cpow(u - 1.0, be - 1.0)

    def near1(direction):
        fac = direction ** (be - 1.0)
        return lambda u: fac * _cpow(u, al - 1.0)

    return near0, near1


def sc_triangle_map(geom, z):
    """F(z) = a + K * integral_0^z u^(alpha-1) (u-1)^(beta-1) du."""
    z = _upper(z)
    if z.imag < 0:
        raise ValueError("sc_triangle_map needs Im z >= 0")
    if z == 0:
        return geom.a
    if z == 1:
        return geom.b
    near0, near1 = _integrand_parts(geom)
    if z.real <= 0.5:
        direction = z / abs(z)
        return geom.a + geom.norm_const * _singular_segment(0j, z, geom.alpha, near0(direction))
    direction = (z - 1) / abs(z - 1)
    return geom.b + geom.norm_const * _singular_segment(1 + 0j, z, geom.beta, near1(direction))


def sc_derivative(geom, z):
    z = _upper(z)
    return geom.norm_const * z ** (geom.alpha - 1.0) * (z - 1.0) ** (geom.beta - 1.0)


def barycentric(geom, w, tol=1e-9):
    """Coordinates (la, lb, lc) of w with respect to (a, b, c)."""
    a, b, c = geom.vertices
    m = np.array([[a.real, b.real, c.real], [a.imag, b.imag, c.imag], [1.0, 1.0, 1.0]])
    lam = np.linalg.solve(m, np.array([w.real, w.imag, 1.0]))
    if lam.min() < -tol:
        raise ValueError(f"point {w} lies outside the triangle")
    lam = np.clip(lam, 0.0, None)
    return tuple(lam / lam.sum())


@lru_cache(maxsize=16)
def _seed_table(kappa):
    geom = triangle_geometry(kappa)
    zs = []
    for r in np.logspace(-5, 5, 41):
        for th in np.linspace(0.02, math.pi - 0.02, 25):
            zs.append(r * cmath.exp(1j * th))
    for r in np.logspace(-5, -0.5, 19):
        for th in np.linspace(0.02, math.pi - 0.02, 25):
            zs.append(1 + r * cmath.exp(1j * th))
    zs = np.array(zs)
    ws = np.array([sc_triangle_map(geom, z) for z in zs])
    return zs, ws


def sc_inverse(geom, w, tol=1e-12, maxiter=100):
    """z in the closed upper half-plane with F(z) = w, by damped Newton."""
    zs, ws = _seed_table(geom.kappa)
    z = zs[np.argmin(np.abs(ws - w))]
    res = sc_triangle_map(geom, z) - w
    for _ in range(maxiter):
        if abs(res) <= tol:
            return z
        step = res / sc_derivative(geom, z)
        lam = 1.0
        while True:
            cand = z - lam * step
            if cand.imag >= 0:
                cres = sc_triangle_map(geom, cand) - w
                if abs(cres) < abs(res) or lam < 1e-6:
                    break
            lam *= 0.5
        z, res = cand, cres
    if abs(res) <= 1e-8:
        return z
    raise ArithmeticError(f"sc_inverse did not converge at w={w}, residual {abs(res):.3g}")


def cardy_cdf(kappa, x):
    """CDF of the law of 1/gamma at the first hit of [1, inf): Beta(alpha, beta)."""
    if not 4.0 < kappa < 8.0:
        raise ValueError("cardy_cdf needs 4 < kappa < 8")
    return reg_incomplete_beta(1.0 - 4.0 / kappa, 8.0 / kappa - 1.0, x)


def edge_fraction(geom, w):
    """Normalized distance of w from b along the side (b, c)."""
    return abs(w - geom.b) / abs(geom.c - geom.b)


# ---------------------------------------------------------------- kappa = 8 half-strip


def halfstrip_map(z):
    """Conformal map of H onto {0 < Re < 1, Im > 0} with 0 -> 1, inf -> 0, 1 -> i*inf."""
    z = _upper(z)
    if z.imag < 0:
        raise ValueError("halfstrip_map needs Im z >= 0")
    if z == 1:
        raise ValueError("halfstrip_map is singular at z = 1")
    s = cmath.sqrt(z)
    r = (s - 1.0) / (s + 1.0)
    return -1j / math.pi * cmath.log(_upper(r))


def halfstrip_inverse(w):
    q = cmath.exp(1j * math.pi * w)
    s = (1.0 + q) / (1.0 - q)
    return _upper(s * s)


def halfstrip_quadrature(z):
    """Same map as an explicit integral 1 - (i/pi) int_0^z u^(-1/2) (u-1)^(-1) du.

    Path: up the imaginary axis to height max(1, Im z), then straight to z,
    which keeps well clear of the pole at 1.
    """
    z = _upper(z)
    top = 1j * max(1.0, z.imag)
    direction = 1j
    first = _singular_segment(0j, top, 0.5,
                              lambda u: direction ** -0.5 / (u - 1.0))
    xs, ws = _legendre_rule()
    tail = 0j
    if z != top:
        n = max(1, int(math.ceil(abs(z - top) / 0.5)))
        for k in range(n):
            p = top + (z - top) * k / n
            q = top + (z - top) * (k + 1) / n
            u = p + (q - p) * xs
            tail += (q - p) * np.sum(ws * _cpow(u, -0.5) / (u - 1.0))
    return 1.0 - 1j / math.pi * (first + tail)


# ---------------------------------------------------------------- SLE(kappa, rho)


def kappa_rho_exponents(kappa, rho):
    """Exponents (p, q) of F'(z) ~ z^p (1-z)^q making F of the normalized point a local martingale."""
    return -4.0 / kappa, 2.0 * (rho - kappa + 4.0) / kappa


def kappa_rho_integral(kappa, z):
    """int_0^z w^(-4/kappa) (1-w)^(4/kappa-1) dw for rho = kappa/2 - 2."""
    z = _upper(z)
    p = 1.0 - 4.0 / kappa
    q = 4.0 / kappa
    if z == 0:
        return 0j
    if z.real <= 0.5:
        direction = z / abs(z)
        fac = direction ** (p - 1.0)
        return _singular_segment(0j, z, p, lambda u: fac * _cpow(1.0 - u, q - 1.0))
    # start from 1, where the integral equals B(p, q)
    direction = (z - 1) / abs(z - 1)
    # (1-u)^(q-1) = (-(u-1))^(q-1); for u - 1 = s*direction in H, -(u-1) has arg in [-pi, 0]
    fac = cmath.exp(1j * (q - 1.0) * (cmath.phase(direction) - math.pi))
    return beta_fn(p, q) + _singular_segment(1 + 0j, z, q, lambda u: fac * _cpow(u, p - 1.0))


def kappa_rho_boundary_prob(kappa, z, start="0+"):
    """P(z lies to the right of the right boundary) for SLE(kappa, kappa/2 - 2).

    start="0+" is the scale-invariant (0, 0+) start: 1 - arg(z)/pi.
    start="unit" is the (W, O) = (0, 1) start, evaluated through the
    degenerate-triangle map and the linear functional that flattens it.
    """
    if kappa <= 4:
        raise ValueError("kappa_rho_boundary_prob needs kappa > 4")
    z = _upper(z)
    if z.imag <= 0:
        raise ValueError("kappa_rho_boundary_prob needs Im z > 0")
    if start == "0+":
        return 1.0 - cmath.phase(z) / math.pi
    if start != "unit":
        raise ValueError("start must be '0+' or 'unit'")
    h = kappa_rho_integral(kappa, z)
    theta = math.pi * (1.0 - 4.0 / kappa)
    phi = h.real - h.imag * math.cos(theta) / math.sin(theta)
    return phi / beta_fn(1.0 - 4.0 / kappa, 4.0 / kappa)


def degenerate_triangle_contains(kappa, w):
    """Membership in {arg w <= pi(1-4/kappa), arg(w-1) >= pi(1-4/kappa)}."""
    theta = math.pi * (1.0 - 4.0 / kappa)
    w = _upper(w)
    return cmath.phase(w) <= theta + 1e-12 and cmath.phase(_upper(w - 1)) >= theta - 1e-12


# ---------------------------------------------------------------- region catalog


@dataclass(frozen=True)
class RegionDescription:
    kappa: float
    tag: str
    vertices: tuple
    angles: tuple
    bounded: bool
    note: str


def region_description(kappa):
    """Shape of F(H) for the local-martingale map at a given kappa."""
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    pi = math.pi
    if kappa < 8.0 / 3.0:
        return RegionDescription(kappa, "NON_UNIVALENT", (), (), False,
                                 "F is not one-to-one")
    if kappa < 4.0:
        return RegionDescription(kappa, "STRIPLIKE_83_4", ("inf", 0.0, "inf"),
                                 ((4.0 / kappa - 1.0) * pi, 4.0 / kappa * pi), False,
                                 "Im < 1, -(4/kappa - 1)pi < arg < (4/kappa)pi")
    if kappa == 4.0:
        return RegionDescription(kappa, "SLIT_LOG", ("-inf", "0", "inf"), (pi, 0.0), False,
                                 "F = log, image is the strip 0 < Im < pi")
    if kappa < 8.0:
        g = triangle_geometry(kappa)
        return RegionDescription(kappa, "TRIANGLE", g.vertices,
                                 (g.alpha * pi, g.beta * pi, g.alpha * pi), True,
                                 "isosceles triangle with apex b")
    if kappa == 8.0:
        return RegionDescription(kappa, "HALF_STRIP", (1.0, "i*inf", 0.0), (pi / 2, 0.0, pi / 2),
                                 False, "0 < Re < 1, Im > 0")
    return RegionDescription(kappa, "UNBOUNDED_K_GT_8", (1.0, "inf", 0.0),
                             ((1.0 - 4.0 / kappa) * pi, (1.0 - 8.0 / kappa) * pi), False,
                             "0 < arg < (1-4/kappa)pi, (4/kappa)pi < arg(z-1) < pi")


def region_svg(kappa, size=320):
    """Static outline of F(H) for the region catalog."""
    desc = region_description(kappa)
    pad = 20
    if desc.tag == "TRIANGLE":
        pts = [desc.vertices[0], desc.vertices[1], desc.vertices[2]]
        ys = [p.imag for p in pts]
        scale = (size - 2 * pad) / max(1.0, max(ys))
        poly = " ".join(f"{pad + p.real * scale:.2f},{size - pad - p.imag * scale:.2f}" for p in pts)
        body = f'<polygon points="{poly}" fill="#dde8f4" stroke="#234"/>'
    elif desc.tag == "HALF_STRIP":
        w = size - 2 * pad
        body = (f'<polyline points="{pad},{pad} {pad},{size - pad} {pad + w},{size - pad} '
                f'{pad + w},{pad}" fill="#dde8f4" stroke="#234"/>')
    else:
        body = f'<text x="{pad}" y="{size // 2}" font-size="12">{desc.tag}: {desc.note}</text>'
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{size}" height="{size}">'
            f'<title>kappa={kappa:g} {desc.tag}</title>{body}</svg>\n')
