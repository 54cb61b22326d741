"""Replicated experiments against the exact hitting laws.

Every experiment is a pure function of its ExperimentConfig.  Replica i
draws from replica_rng(seed, i, tag) with a tag fixed per experiment and
role, results are stored by replica index and reduced in index order, so
the shard count only changes wall time.
"""

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import partial
import cmath
import math

import numpy as np
from scipy import stats

from . import _kernels as K
from . import loewner, maps
from .driving import brownian_driving, kappa_rho_driving, radial_driving
from .streams import replica_rng, stream_tag

Z99 = 2.5758293035489004


class Kind(Enum):
    CARDY = "cardy"
    THREE_WAY = "three-way"
    AREA_PARTITION = "area"
    LEFT_SIDE = "left-side"
    HALF_STRIP_K8 = "half-strip"
    KAPPA_RHO = "kappa-rho"
    RADIAL_K2 = "radial"


@dataclass(frozen=True)
class ExperimentConfig:
    """One experiment.

    dt is the coarse step of the renormalized chain for the chordal
    experiments and the plain time step for the radial one.  horizon_T is
    the renormalized-time horizon (chordal) or T0 (radial).
    """
    kind: Kind
    kappa: float
    rho: float | None = None
    dt: float = 8e-3
    horizon_T: float = 1e4
    n_replicas: int = 1000
    seed: int = 1
    test_points: tuple = ()
    grid_resolution: int = 64
    shards: int = 1
    exit_eps: float = 1e-8
    start_radius: float = 1e3
    r_stop: float = 0.1

    def __post_init__(self):
        if self.n_replicas < 1:
            raise ValueError("n_replicas must be at least 1")
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.shards < 1:
            raise ValueError("shards must be at least 1")
        if self.rho is not None and self.rho <= -2:
            raise ValueError("rho must satisfy rho > -2")
        for z in self.test_points:
            if complex(z).imag < 0:
                raise ValueError("test points must lie in the closed upper half-plane")


@dataclass(frozen=True)
class EstimateWithCI:
    estimate: float
    half_width: float
    n: int

    def covers(self, target, widen=1.0):
        return abs(self.estimate - target) <= widen * self.half_width


@dataclass(frozen=True)
class GoFResult:
    statistic: float
    p_value: float
    n: int
    kind: str


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    rows: list
    gates: dict
    summary: dict = field(default_factory=dict)

    @property
    def passed(self):
        return all(self.gates.values())


def proportion_ci(k, n):
    """99% normal interval with continuity correction."""
    if n <= 0:
        raise ValueError("empty sample")
    p = k / n
    return EstimateWithCI(p, Z99 * math.sqrt(p * (1.0 - p) / n) + 0.5 / n, n)


def mean_ci(values):
    v = np.asarray(values, dtype=float)
    if v.size < 2:
        raise ValueError("need at least two values")
    return EstimateWithCI(float(v.mean()), Z99 * float(v.std(ddof=1)) / math.sqrt(v.size), v.size)


def gof_test(data, target, kind="KS"):
    """KS of samples against a CDF callable, or Pearson chi-square of counts
    against target proportions."""
    data = np.asarray(data, dtype=float)
    if data.size == 0:
        raise ValueError("empty input")
    if kind == "KS":
        x = np.sort(data)
        n = x.size
        f = np.array([target(v) for v in x])
        i = np.arange(1, n + 1)
        d = float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))
        return GoFResult(d, float(stats.kstwo.sf(d, n)), n, "KS")
    if kind == "CHI2":
        n = data.sum()
        expected = n * np.asarray(target, dtype=float)
        keep = expected > 0
        if np.any(data[~keep] > 0):
            return GoFResult(math.inf, 0.0, int(n), "CHI2")
        chi = float(np.sum((data[keep] - expected[keep]) ** 2 / expected[keep]))
        dof = int(keep.sum()) - 1
        p = float(stats.chi2.sf(chi, dof)) if dof > 0 else 1.0
        return GoFResult(chi, p, int(n), "CHI2")
    raise ValueError("kind must be KS or CHI2")


# ---------------------------------------------------------------- replica plumbing


def _run_block(fn, seed, tag, lo, hi):
    return [fn(replica_rng(seed, i, tag)) for i in range(lo, hi)]


def map_replicas(fn, n, seed, tag, shards=1):
    """[fn(rng_0), ..., fn(rng_{n-1})] in replica order, split over shards processes."""
    if shards == 1:
        return _run_block(fn, seed, tag, 0, n)
    edges = np.linspace(0, n, shards + 1).astype(int)
    with ProcessPoolExecutor(shards) as pool:
        parts = pool.map(_run_block, [fn] * shards, [seed] * shards, [tag] * shards,
                         edges[:-1], edges[1:])
        return [r for part in parts for r in part]


def _settings(cfg, **kw):
    return loewner.ChainSettings(du=cfg.dt, umax=cfg.horizon_T, eps0=cfg.exit_eps,
                                 eps1=cfg.exit_eps, rinf=1.0 / cfg.exit_eps, **kw)


def _cx(z):
    return f"{z.real!r}{z.imag:+.17g}j"


# ---------------------------------------------------------------- default test points


def default_points(kind, kappa):
    if kind in (Kind.THREE_WAY, Kind.AREA_PARTITION):
        geom = maps.triangle_geometry(kappa)
        bary = [(1 / 3, 1 / 3, 1 / 3), (0.6, 0.2, 0.2), (0.2, 0.6, 0.2), (0.2, 0.2, 0.6),
                (0.45, 0.1, 0.45)]
        return tuple(maps.sc_inverse(geom, la * geom.a + lb * geom.b + lc * geom.c)
                     for la, lb, lc in bary)
    if kind is Kind.LEFT_SIDE:
        return tuple(cmath.exp(1j * math.pi * f) for f in (1 / 6, 1 / 3, 1 / 2, 2 / 3))
    if kind is Kind.HALF_STRIP_K8:
        return tuple(maps.halfstrip_inverse(r + 0.5j) for r in (0.2, 0.4, 0.6, 0.8))
    if kind is Kind.KAPPA_RHO:
        return tuple(cmath.exp(1j * math.pi * f) for f in (0.25, 0.5, 0.75))
    if kind is Kind.RADIAL_K2:
        return (0.5j, 0j)
    return ()


def _points(cfg):
    return tuple(complex(z) for z in (cfg.test_points or default_points(cfg.kind, cfg.kappa)))


# ---------------------------------------------------------------- Cardy / Beta law


def _cardy_replica(kappa, settings, rng):
    return loewner.chain_hit(kappa, rng, settings)[0]


def run_cardy(cfg, ks_max=0.035, mean_tol=0.02):
    if not 4 < cfg.kappa < 8:
        raise ValueError("cardy needs 4 < kappa < 8")
    geom = maps.triangle_geometry(cfg.kappa)
    fn = partial(_cardy_replica, cfg.kappa, _settings(cfg))
    loc = np.array(map_replicas(fn, cfg.n_replicas, cfg.seed, stream_tag("cardy", cfg.kappa),
                                cfg.shards))
    inv = 1.0 / loc
    ks = gof_test(inv, lambda v: maps.cardy_cdf(cfg.kappa, v))
    edge = np.array([maps.edge_fraction(geom, maps.sc_triangle_map(geom, complex(x))) for x in loc])
    ks_edge = gof_test(edge, lambda v: min(max(v, 0.0), 1.0))
    target_mean = geom.alpha / (geom.alpha + geom.beta)
    m = mean_ci(inv)
    rows = [dict(statistic="ks_inverse_hit", value=ks.statistic, p_value=ks.p_value, n=ks.n),
            dict(statistic="ks_edge_fraction", value=ks_edge.statistic, p_value=ks_edge.p_value,
                 n=ks_edge.n),
            dict(statistic="mean_inverse_hit", value=m.estimate, half_width=m.half_width,
                 target=target_mean, n=m.n)]
    gates = {"ks_inverse_hit": ks.statistic <= ks_max,
             "ks_edge_fraction": ks_edge.statistic <= ks_max,
             "mean_inverse_hit": abs(m.estimate - target_mean) <= mean_tol}
    return ExperimentResult(cfg, rows, gates, dict(samples=inv))


# ---------------------------------------------------------------- barycentric three-way law


def _three_way_replica(kappa, points, settings, rho, rng):
    return loewner.chain_three_way(kappa, points, rng, settings, rho=rho)[0]


def _flow_replica(kappa, w0, dt, umax, eps, rng):
    return K.flow_sde_classify(rng, kappa, dt, w0, umax, eps, 1.0 / eps, eps)[0]


def three_way_counts(cfg, points, rho=0.0, tag="three-way"):
    fn = partial(_three_way_replica, cfg.kappa, np.array(points), _settings(cfg), rho)
    out = np.array(map_replicas(fn, cfg.n_replicas, cfg.seed, stream_tag(tag, cfg.kappa, rho),
                                cfg.shards))
    return np.stack([np.bincount(out[:, j], minlength=4) for j in range(len(points))])


def flow_counts(cfg, z):
    fn = partial(_flow_replica, cfg.kappa, complex(z), cfg.dt, cfg.horizon_T, cfg.exit_eps)
    out = map_replicas(fn, cfg.n_replicas, cfg.seed, stream_tag("flow", cfg.kappa, _cx(z)),
                       cfg.shards)
    return np.bincount(np.array(out), minlength=4)


def run_three_way(cfg, p_min=0.01, cross=True):
    if not 4 < cfg.kappa < 8:
        raise ValueError("three-way needs 4 < kappa < 8")
    geom = maps.triangle_geometry(cfg.kappa)
    points = _points(cfg)
    counts = three_way_counts(cfg, points)
    rows, gates = [], {}
    for j, z in enumerate(points):
        target = maps.barycentric(geom, maps.sc_triangle_map(geom, z))
        c = counts[j]
        g = gof_test(c[:3], target, "CHI2")
        row = dict(z=_cx(z), n_z_first=int(c[0]), n_simultaneous=int(c[1]),
                   n_one_first=int(c[2]), n_undecided=int(c[3]),
                   target_z_first=target[0], target_simultaneous=target[1],
                   target_one_first=target[2], chi2=g.statistic, p_value=g.p_value)
        gates[f"chi2[{_cx(z)}]"] = g.p_value > p_min
        gates[f"undecided[{_cx(z)}]"] = c[3] < 0.01 * cfg.n_replicas
        if cross:
            f = flow_counts(cfg, z)
            table = np.array([c[:3], f[:3]])
            table = table[:, table.sum(axis=0) > 0]
            pc = stats.chi2_contingency(table)[1] if table.shape[1] > 1 else 1.0
            row.update(flow_z_first=int(f[0]), flow_simultaneous=int(f[1]),
                       flow_one_first=int(f[2]), flow_undecided=int(f[3]), cross_p_value=pc)
            gates[f"cross[{_cx(z)}]"] = pc > p_min
        rows.append(row)
    return ExperimentResult(cfg, rows, gates)


# ---------------------------------------------------------------- area thirds


def area_grid(geom, n):
    """Cells of an n x n grid over the triangle's bounding box, clipped to the
    triangle; returns pullbacks of cell centroids and the clipped areas."""
    from shapely.geometry import Polygon, box
    tri = Polygon([(v.real, v.imag) for v in geom.vertices])
    x0, y0, x1, y1 = tri.bounds
    hx, hy = (x1 - x0) / n, (y1 - y0) / n
    pts, wts = [], []
    for i in range(n):
        for j in range(n):
            cell = box(x0 + i * hx, y0 + j * hy, x0 + (i + 1) * hx, y0 + (j + 1) * hy)
            piece = cell.intersection(tri)
            if piece.area > 0:
                c = piece.centroid
                pts.append(maps.sc_inverse(geom, complex(c.x, c.y)))
                wts.append(piece.area)
    return np.array(pts), np.array(wts)


def _area_replica(kappa, points, weights, settings, rng):
    out = loewner.chain_three_way(kappa, points, rng, settings)[0]
    return tuple(float(weights[out == k].sum()) for k in range(4))


def run_area_partition(cfg, tol=0.025):
    if not 4 < cfg.kappa < 8:
        raise ValueError("area needs 4 < kappa < 8")
    geom = maps.triangle_geometry(cfg.kappa)
    pts, wts = area_grid(geom, cfg.grid_resolution)
    fn = partial(_area_replica, cfg.kappa, pts, wts, _settings(cfg))
    areas = np.array(map_replicas(fn, cfg.n_replicas, cfg.seed, stream_tag("area", cfg.kappa),
                                  cfg.shards))
    total = wts.sum()
    partition_ok = bool(np.allclose(areas.sum(axis=1), total, rtol=1e-12, atol=0))
    rows, gates = [], {"partition": partition_ok, "area_matches_triangle":
                       abs(total - geom.area) < 1e-9 * geom.area}
    for k, name in enumerate(("z_first", "simultaneous", "one_first")):
        m = mean_ci(areas[:, k])
        rows.append(dict(region=name, mean_area=m.estimate, half_width=m.half_width,
                         target=geom.area / 3, relative_error=(m.estimate - geom.area / 3) / geom.area))
        gates[f"area[{name}]"] = abs(m.estimate - geom.area / 3) <= tol * geom.area
    gates["undecided"] = areas[:, 3].sum() < 0.01 * total * cfg.n_replicas
    return ExperimentResult(cfg, rows, gates, dict(n_cells=len(pts)))


# ---------------------------------------------------------------- proportion experiments


def _proportion_rows(points, hits, n_dec, undecided, targets, cfg):
    rows, gates = [], {}
    for z, k, nd, u, t in zip(points, hits, n_dec, undecided, targets):
        est = proportion_ci(int(k), int(nd))
        sd = math.sqrt(max(t * (1 - t), 1e-300) / nd)
        rows.append(dict(z=_cx(z), estimate=est.estimate, half_width=est.half_width, target=t,
                         z_score=(est.estimate - t) / sd, n=int(nd), n_undecided=int(u)))
        gates[f"ci[{_cx(z)}]"] = est.covers(t)
        gates[f"undecided[{_cx(z)}]"] = u < 0.01 * cfg.n_replicas
    return rows, gates


def _side_replica(points, settings, rng):
    return loewner.chain_side(4.0, points, rng, settings)[0]


def run_left_side(cfg):
    if cfg.kappa != 4:
        raise ValueError("left-side needs kappa = 4")
    points = _points(cfg)
    fn = partial(_side_replica, np.array(points), _settings(cfg))
    out = np.array(map_replicas(fn, cfg.n_replicas, cfg.seed, stream_tag("left-side"), cfg.shards))
    left = (out == K.LEFT).sum(axis=0)
    und = (out == K.UNDECIDED).sum(axis=0)
    targets = [cmath.phase(z) / math.pi for z in points]
    rows, gates = _proportion_rows(points, left, cfg.n_replicas - und, und, targets, cfg)
    return ExperimentResult(cfg, rows, gates)


def run_halfstrip(cfg):
    if cfg.kappa != 8:
        raise ValueError("half-strip needs kappa = 8")
    points = _points(cfg)
    counts = three_way_counts(cfg, points, tag="half-strip")
    und = counts[:, 3]
    targets = [maps.halfstrip_map(z).real for z in points]
    rows, gates = _proportion_rows(points, counts[:, 0], cfg.n_replicas - und, und, targets, cfg)
    return ExperimentResult(cfg, rows, gates)


def _absorbed_pair(kappa, z, T, dt, rng):
    # the same horizon under rho = 0 force-point driving and plain driving
    s = int(rng.integers(2**62))
    a = loewner.absorbed_under_kappa_rho(kappa_rho_driving(kappa, 0.0, T, dt, s), z)
    b = loewner.evolve_tracked(brownian_driving(kappa, T, dt, s + 1), [z])[0]
    return (a is True, not b.alive)


def kappa_rho_control(kappa, seed, n_paths=400, T=1.0, dt=1e-3, z=1j):
    """rho = 0 must reproduce plain SLE: driving increments and absorption at a horizon."""
    rng = replica_rng(seed, 0, stream_tag("rho0-increments"))
    w = kappa_rho_driving(kappa, 0.0, 20.0, dt, rng).values
    inc = np.diff(w) / math.sqrt(kappa * dt)
    ks = stats.kstest(inc, "norm")
    ref = np.diff(brownian_driving(kappa, 20.0, dt, rng).values) / math.sqrt(kappa * dt)
    ks2 = stats.ks_2samp(inc, ref)
    fn = partial(_absorbed_pair, kappa, z, T, dt)
    pairs = np.array(map_replicas(fn, n_paths, seed, stream_tag("rho0-absorb", kappa)))
    k_rho, k_plain = pairs.sum(axis=0)
    table = np.array([[k_rho, n_paths - k_rho], [k_plain, n_paths - k_plain]])
    p_abs = float(stats.fisher_exact(table)[1])
    return dict(ks_increments=ks.statistic, p_increments=float(ks.pvalue),
                ks_two_sample=ks2.statistic, p_two_sample=float(ks2.pvalue),
                absorbed_rho0=int(k_rho), absorbed_plain=int(k_plain), n_paths=n_paths,
                p_absorbed=p_abs)


def run_kappa_rho(cfg, control=True):
    rho = cfg.kappa / 2 - 2 if cfg.rho is None else cfg.rho
    if cfg.kappa <= 4:
        raise ValueError("kappa-rho needs kappa > 4")
    if abs(rho - (cfg.kappa / 2 - 2)) > 1e-12:
        raise ValueError("the exact law is known for rho = kappa/2 - 2 only")
    points = _points(cfg)
    # (0, 0+) start seen from a marker at 1: points at large radius
    far = [cfg.start_radius * z for z in points]
    c = replace(cfg, rho=rho)
    counts = three_way_counts(c, far, rho=rho, tag="kappa-rho")
    und = counts[:, 3]
    targets = [1.0 - maps.kappa_rho_boundary_prob(cfg.kappa, z, "unit") for z in far]
    rows, gates = _proportion_rows(points, counts[:, 0], cfg.n_replicas - und, und, targets, cfg)
    for row, z in zip(rows, points):
        row["target_limit"] = cmath.phase(z) / math.pi
    summary = {}
    if control:
        summary = kappa_rho_control(cfg.kappa, cfg.seed)
        gates["rho0_increments"] = summary["p_increments"] > 0.01
        gates["rho0_two_sample"] = summary["p_two_sample"] > 0.01
        gates["rho0_absorbed"] = summary["p_absorbed"] > 0.01
    return ExperimentResult(c, rows, gates, summary)


# ---------------------------------------------------------------- radial kappa = 2


def _radial_replica(kappa, T, dt, z, checkpoints, r_stop, rng):
    path = radial_driving(kappa, T, dt, rng)
    phase = np.unwrap(np.angle(path.xi))
    return K.radial_stopped_martingale(phase, dt, complex(z), checkpoints, r_stop, 0.05)


def run_radial_check(cfg, n_checkpoints=5, widen=3.0):
    """Mean of 1/(g~ - 1) stopped near 1 against its starting value."""
    if cfg.kappa != 2:
        raise ValueError("radial check needs kappa = 2")
    n_steps = int(round(cfg.horizon_T / cfg.dt))
    checkpoints = np.unique(np.linspace(0, n_steps, n_checkpoints + 1).astype(np.int64)[1:])
    rows, gates = [], {}
    for z in _points(cfg):
        f0 = 1.0 / (z - 1.0)
        fn = partial(_radial_replica, cfg.kappa, cfg.horizon_T, cfg.dt, z, checkpoints, cfg.r_stop)
        vals = np.array(map_replicas(fn, cfg.n_replicas, cfg.seed,
                                     stream_tag("radial", _cx(z)), cfg.shards))
        for i, k in enumerate(checkpoints):
            re, im = mean_ci(vals[:, i].real), mean_ci(vals[:, i].imag)
            drift = complex(re.estimate, im.estimate) - f0
            rows.append(dict(z=_cx(z), t=k * cfg.dt, mean_re=re.estimate, mean_im=im.estimate,
                             target_re=f0.real, target_im=f0.imag, drift=abs(drift),
                             half_width_re=re.half_width, half_width_im=im.half_width))
            if z == 0:
                gates[f"exact[{_cx(z)},{k}]"] = drift == 0
            else:
                gates[f"drift[{_cx(z)},{k}]"] = (abs(drift.real) <= widen * re.half_width and
                                                abs(drift.imag) <= widen * im.half_width)
    return ExperimentResult(cfg, rows, gates)


RUNNERS = {Kind.CARDY: run_cardy, Kind.THREE_WAY: run_three_way,
           Kind.AREA_PARTITION: run_area_partition, Kind.LEFT_SIDE: run_left_side,
           Kind.HALF_STRIP_K8: run_halfstrip, Kind.KAPPA_RHO: run_kappa_rho,
           Kind.RADIAL_K2: run_radial_check}


def run(cfg):
    return RUNNERS[cfg.kind](cfg)


def run_with_ladder(cfg, factor=4, thin=1):
    """Run at dt and at dt/factor (with n/thin replicas); both must pass."""
    fine = replace(cfg, dt=cfg.dt / factor, n_replicas=max(1, cfg.n_replicas // thin))
    return run(cfg), run(fine)
