"""Driving processes for Loewner chains.

Chordal driving is scaled Brownian motion.  SLE(kappa, rho) driving is built
from a Bessel gap Z = O - W sampled with exact squared-Bessel transitions;
the force point O integrates 2/Z and W = O - Z.  Radial driving is the
chordal one wrapped onto the unit circle.
"""

from dataclasses import dataclass
import csv
import math

import numpy as np

from .streams import as_rng


@dataclass(frozen=True)
class DrivingPath:
    kappa: float
    dt: float
    values: np.ndarray
    rho: float | None = None
    o_values: np.ndarray | None = None
    z_values: np.ndarray | None = None

    def __post_init__(self):
        if self.values[0] != 0.0:
            raise ValueError("driving paths start at W_0 = 0")
        if self.o_values is not None:
            if not (len(self.o_values) == len(self.z_values) == len(self.values)):
                raise ValueError("O and Z tracks must match the driving length")

    @property
    def n_steps(self):
        return len(self.values) - 1

    @property
    def times(self):
        return self.dt * np.arange(len(self.values))

    def midpoints(self):
        """Per-step constant driving value used by the slit-map stepper."""
        return 0.5 * (self.values[1:] + self.values[:-1])


@dataclass(frozen=True)
class RadialDriving:
    kappa: float
    dt: float
    xi: np.ndarray

    @property
    def n_steps(self):
        return len(self.xi) - 1


def _n_steps(T, dt):
    if dt <= 0 or T < dt:
        raise ValueError("need dt > 0 and T >= dt")
    return int(round(T / dt))


def brownian_driving(kappa, T, dt, seed):
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    n = _n_steps(T, dt)
    rng = as_rng(seed)
    w = np.empty(n + 1)
    w[0] = 0.0
    np.cumsum(math.sqrt(kappa * dt) * rng.standard_normal(n), out=w[1:])
    return DrivingPath(kappa, dt, w)


def bessel_dimension(kappa, rho):
    return 1.0 + 2.0 * (rho + 2.0) / kappa


def besq_step(rng, x, d, h):
    """Exact squared-Bessel transition of dimension d over time h from x >= 0.

    Noncentral chi-square as a Poisson mixture of central ones.
    """
    k = rng.poisson(x / (2.0 * h)) if x > 0 else 0
    return 2.0 * h * rng.gamma(0.5 * d + k)


def _inv_integral(z0, z1, h):
    # integral of 1/Z over [0, h] for Z linear between z0 and z1
    if z0 <= 0.0 or z1 <= 0.0:
        # Bessel-like sqrt profile away from a zero endpoint
        zmax = max(z0, z1)
        return 2.0 * h / zmax if zmax > 0 else math.inf
    if abs(z1 - z0) < 1e-9 * z0:
        return 2.0 * h / (z0 + z1)
    return h * math.log(z1 / z0) / (z1 - z0)


def kappa_rho_driving(kappa, rho, T, dt, seed, z0=0.0):
    """Driving triple (W, O, Z) for SLE(kappa, rho) started from (0, z0).

    z0 = 0 encodes the (0, 0+) start.
    """
    if kappa <= 0:
        raise ValueError("kappa must be positive")
    if rho <= -2:
        raise ValueError("rho must satisfy rho > -2")
    if z0 < 0:
        raise ValueError("z0 must be nonnegative")
    n = _n_steps(T, dt)
    rng = as_rng(seed)
    d = bessel_dimension(kappa, rho)
    sk = math.sqrt(kappa)
    z = np.empty(n + 1)
    o = np.empty(n + 1)
    z[0] = z0
    o[0] = z0
    xsq = (z0 / sk) ** 2
    for k in range(n):
        xsq = besq_step(rng, xsq, d, dt)
        z[k + 1] = sk * math.sqrt(xsq)
        o[k + 1] = o[k] + 2.0 * _inv_integral(z[k], z[k + 1], dt)
    w = o - z
    w[0] = 0.0
    # O = W + Z then Z = O - W: both relations hold bit-exactly and W <= O
    o = w + z
    return DrivingPath(kappa, dt, w, rho=rho, o_values=o, z_values=o - w)


def radial_driving(kappa, T, dt, seed):
    path = brownian_driving(kappa, T, dt, seed)
    return RadialDriving(kappa, dt, np.exp(1j * path.values))


def dump_csv(path, filename):
    cols = ["t", "W"]
    data = [path.times, path.values]
    if path.o_values is not None:
        cols += ["O", "Z"]
        data += [path.o_values, path.z_values]
    with open(filename, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["# kappa=%r dt=%r rho=%r" % (path.kappa, path.dt, path.rho)])
        out.writerow(cols)
        for row in zip(*data):
            out.writerow([repr(float(v)) for v in row])


def load_csv(filename):
    with open(filename, newline="") as fh:
        rows = list(csv.reader(fh))
    meta = dict(kv.split("=") for kv in rows[0][0].lstrip("# ").split())
    cols = rows[1]
    table = np.array([[float(v) for v in r] for r in rows[2:]])
    rho = None if meta["rho"] == "None" else float(meta["rho"])
    kw = {}
    if "O" in cols:
        kw = dict(o_values=table[:, cols.index("O")], z_values=table[:, cols.index("Z")])
    return DrivingPath(float(meta["kappa"]), float(meta["dt"]),
                       table[:, cols.index("W")], rho=rho, **kw)
