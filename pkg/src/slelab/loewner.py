"""Chordal and radial Loewner chains.

Two families of operations live here.  The path-based ones (chordal_step,
evolve_tracked, compute_trace, hit_of_ray, classify_*) run the classical
absolute-time slit-map scheme on a stored DrivingPath; they are exact
per-step and deterministic given the path.  The chain-based ones
(chain_three_way, chain_side, chain_hit) drive a renormalized chain
directly from a random generator and are what the experiments use, since
they resolve swallowing events without the 2*sqrt(dt) window.
"""

from dataclasses import dataclass
from enum import Enum
import cmath
import math

import numpy as np

from . import _kernels as K
from .driving import DrivingPath, RadialDriving
from .streams import as_rng


class ThreeWayOutcome(Enum):
    Z_FIRST = K.Z_FIRST
    SIMULTANEOUS = K.SIMULTANEOUS
    ONE_FIRST = K.ONE_FIRST
    UNDECIDED = K.UNDECIDED


class SideOutcome(Enum):
    LEFT = K.LEFT
    RIGHT = K.RIGHT
    UNDECIDED = K.UNDECIDED


class HorizonExceeded(RuntimeError):
    pass


@dataclass(frozen=True)
class TrackedPointState:
    origin: complex
    image: complex
    swallow_step: int | None

    @property
    def alive(self):
        return self.swallow_step is None


@dataclass(frozen=True)
class TraceSample:
    times: np.ndarray
    points: np.ndarray


def _check_upper(points):
    z = np.asarray(points, dtype=np.complex128).ravel()
    if np.any(z.imag < 0):
        raise ValueError("tracked points must satisfy Im z >= 0")
    return z


# ---------------------------------------------------------------- absolute-time slit maps


def chordal_step(g, w_const, dt):
    """Exact flow of dg/dt = 2/(g - w) over dt with constant w."""
    if dt <= 0:
        raise ValueError("dt must be positive")
    g = complex(g)
    if g.imag < 0:
        raise ValueError("chordal_step needs Im g >= 0")
    dd = g - w_const
    return w_const + complex(K.csqrt_up(dd * dd + 4.0 * dt, dd))


def evolve_tracked(path: DrivingPath, points, horizon_steps=None, eps_sw=1e-6):
    """Flow each point for horizon_steps steps, recording the first swallow step."""
    z = _check_upper(points)
    n = path.n_steps if horizon_steps is None else int(horizon_steps)
    if n > path.n_steps:
        raise ValueError("horizon exceeds the path length")
    g, step = K.slit_evolve(path.values, path.dt, z, n, eps_sw, True)
    return [TrackedPointState(complex(z0), complex(gi), None if s < 0 else int(s))
            for z0, gi, s in zip(z, g, step)]


def compute_trace(path: DrivingPath, step_index):
    """gamma(t_k), recovered by undoing the first k slit maps from the driving point."""
    if not 0 <= step_index <= path.n_steps:
        raise ValueError("step_index out of range")
    return complex(K.slit_trace(path.values, path.dt, int(step_index)))


def trace_sample(path: DrivingPath, stride=1):
    idx = np.arange(0, path.n_steps + 1, stride)
    pts = np.array([compute_trace(path, k) for k in idx])
    return TraceSample(idx * path.dt, pts)


def hit_of_ray(path: DrivingPath, eps_sw=1e-6):
    """Step at which the boundary point 1 is swallowed and the trace position there."""
    state = evolve_tracked(path, [1.0 + 0j], eps_sw=eps_sw)[0]
    if state.alive:
        raise HorizonExceeded("point 1 was not swallowed within the path")
    tip = compute_trace(path, state.swallow_step)
    return state.swallow_step, tip.real


def classify_three_way(path: DrivingPath, z, eps_sw=1e-6):
    """Order of the swallow times of z and 1; same step counts as simultaneous."""
    sz, s1 = evolve_tracked(path, [z, 1.0 + 0j], eps_sw=eps_sw)
    if sz.alive and s1.alive:
        raise HorizonExceeded("neither z nor 1 was swallowed within the path")
    if s1.alive or (not sz.alive and sz.swallow_step < s1.swallow_step):
        return ThreeWayOutcome.Z_FIRST
    if sz.alive or sz.swallow_step > s1.swallow_step:
        return ThreeWayOutcome.ONE_FIRST
    return ThreeWayOutcome.SIMULTANEOUS


def classify_side(path: DrivingPath, z, horizon_steps=None):
    """Side of the trace by arg(g_T(z) - W_T) with a dead band between pi/4 and 3pi/4."""
    z = _check_upper([z])
    n = path.n_steps if horizon_steps is None else int(horizon_steps)
    g, _ = K.slit_evolve(path.values, path.dt, z, n, 0.0, False)
    a = cmath.phase(complex(g[0]) - path.values[n])
    if a > 0.75 * math.pi:
        return SideOutcome.LEFT
    if a < 0.25 * math.pi:
        return SideOutcome.RIGHT
    return SideOutcome.UNDECIDED


def absorbed_under_kappa_rho(path: DrivingPath, z, horizon_steps=None, eps_sw=1e-6):
    """True if z is swallowed within the horizon, False if its normalized image
    (g - W)/(O - W) has settled near 1, None when neither holds."""
    if path.o_values is None:
        raise ValueError("path carries no force-point track")
    z = _check_upper([z])
    n = path.n_steps if horizon_steps is None else int(horizon_steps)
    g, step = K.slit_evolve(path.values, path.dt, z, n, eps_sw, True)
    if step[0] >= 0:
        return True
    gap = path.z_values[n]
    if gap > 0 and abs((complex(g[0]) - path.values[n]) / gap - 1.0) < 0.5:
        return False
    return None


# ---------------------------------------------------------------- radial


def evolve_radial(path: RadialDriving, z, horizon_steps=None, eps_rad=1e-4, hfrac=0.05):
    z = complex(z)
    if abs(z) >= 1:
        raise ValueError("evolve_radial needs |z| < 1")
    n = path.n_steps if horizon_steps is None else int(horizon_steps)
    phase = np.unwrap(np.angle(path.xi))
    g, step, monotone = K.radial_evolve(phase, path.dt, z, n, eps_rad, hfrac)
    if not monotone:
        raise AssertionError("|g_t(z)| decreased during radial evolution")
    return TrackedPointState(z, complex(g), None if step < 0 else int(step))


# ---------------------------------------------------------------- renormalized chain


@dataclass(frozen=True)
class ChainSettings:
    """Discretization of the renormalized chain.

    du: coarse step in renormalized time.  eps0, rinf, eps1: exit radii at the
    tip, at infinity and at the marker.  cref, maxdepth: bridge refinement
    near the tip.  umax: renormalized-time horizon.
    """
    du: float = 8e-3
    eps0: float = 1e-8
    rinf: float = 1e8
    eps1: float = 1e-8
    cref: float = 1.0
    maxdepth: int = 200
    umax: float = 1e4
    rfar: float = 1e6
    dnear: float = 1e-6
    side_eps: float = 1e-3 * math.pi


def _reflections(kappa, rho, settings):
    # rescaling moves are needed exactly where log|x| or log|x-1| is driftless
    far = abs(kappa / 2 - 2 - rho) < 1e-12
    near = abs(kappa / 2 - 4 - rho) < 1e-12
    return (settings.rfar if far else 0.0), (settings.dnear if near else 0.0)


def chain_three_way(kappa, points, rng, settings=ChainSettings(), rho=0.0):
    """Outcome codes (Z_FIRST, SIMULTANEOUS, ONE_FIRST, UNDECIDED) for one chain.

    With rho != 0 the marker is the force point and Z_FIRST means absorbed.
    """
    z = _check_upper(points)
    rfar, dnear = _reflections(kappa, rho, settings)
    out, steps, _ = K.renorm_classify(as_rng(rng), float(kappa), float(rho), settings.du, z,
                                      settings.umax, settings.eps0, settings.rinf, settings.eps1,
                                      settings.maxdepth, settings.cref, False, 0.0, rfar, dnear)
    return out, steps


def chain_side(kappa, points, rng, settings=ChainSettings()):
    """LEFT/RIGHT codes from the limit of arg x (pi or 0)."""
    z = _check_upper(points)
    rfar, dnear = _reflections(kappa, 0.0, settings)
    out, steps, _ = K.renorm_classify(as_rng(rng), float(kappa), 0.0, settings.du, z,
                                      settings.umax, 0.0, 0.0, 0.0, settings.maxdepth,
                                      settings.cref, True, settings.side_eps, rfar, dnear)
    return out, steps


def chain_hit(kappa, rng, settings=ChainSettings(), shrink=55.0, probe=100.0, jump=0.05,
              maxsteps=50_000_000):
    """Position of the first hit of [1, inf) by the trace."""
    loc, steps, flag = K.renorm_hit(as_rng(rng), float(kappa), settings.du, shrink, maxsteps,
                                    probe, jump)
    if flag:
        raise HorizonExceeded("marker scale did not collapse within maxsteps")
    return loc, steps


def normalized_flow_classify(kappa, w0, dt, seed, horizon=1e4, eps0=1e-8, rinf=1e8, eps1=1e-8):
    """Classify by simulating the autonomous SDE of the normalized point itself."""
    w0 = complex(w0)
    if w0.imag < 0:
        raise ValueError("w0 must lie in the closed upper half-plane")
    code, _ = K.flow_sde_classify(as_rng(seed), float(kappa), float(dt), w0, float(horizon),
                                  eps0, rinf, eps1)
    return ThreeWayOutcome(code)


def normalized_flow_path(kappa, w0, dt, seed, n_steps):
    """Trajectory of the normalized point under the autonomous SDE, without exit rules."""
    return K.flow_sde_path(as_rng(seed), float(kappa), float(dt), complex(w0), int(n_steps))
