import math
from dataclasses import replace

import numpy as np
import pytest
from scipy import stats

from slelab import maps, montecarlo as mc
from slelab.montecarlo import ExperimentConfig, Kind


def test_ks_hand_computed():
    r = mc.gof_test([0.25, 0.75], lambda x: x)
    assert r.statistic == pytest.approx(0.25)
    assert r.kind == "KS" and r.n == 2


def test_chi_square_exact_counts():
    r = mc.gof_test([25, 25, 50], [0.25, 0.25, 0.5], "CHI2")
    assert r.statistic == 0 and r.p_value == 1


def test_chi_square_impossible_cell():
    r = mc.gof_test([1, 9], [0.0, 1.0], "CHI2")
    assert r.p_value == 0


def test_ks_under_the_null():
    x = np.random.default_rng(0).beta(1 / 3, 1 / 3, 10_000)
    r = mc.gof_test(x, lambda v: maps.cardy_cdf(6, v))
    assert r.p_value > 0.001


def test_ks_matches_scipy():
    x = np.random.default_rng(1).random(500)
    r = mc.gof_test(x, lambda v: v)
    ref = stats.kstest(x, "uniform")
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-15)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_gof_rejects_bad_input():
    with pytest.raises(ValueError):
        mc.gof_test([], lambda v: v)
    with pytest.raises(ValueError):
        mc.gof_test([1, 2], [0.5, 0.5], "G")


def test_proportion_interval():
    e = mc.proportion_ci(50, 100)
    assert e.estimate == 0.5
    assert e.half_width == pytest.approx(2.5758293 * 0.05 + 0.005, rel=1e-7)
    assert e.covers(0.6) and not e.covers(0.7)
    with pytest.raises(ValueError):
        mc.proportion_ci(0, 0)


def _square(rng):
    return float(rng.random()) ** 2


def test_map_replicas_order_and_shards():
    one = mc.map_replicas(_square, 37, 5, 9, shards=1)
    four = mc.map_replicas(_square, 37, 5, 9, shards=4)
    assert one == four and len(one) == 37
    assert one != mc.map_replicas(_square, 37, 6, 9)


@pytest.mark.parametrize("kw,msg", [(dict(rho=-2.5), "rho > -2"), (dict(n_replicas=0), "n_replicas"),
                                    (dict(dt=0.0), "dt"), (dict(shards=0), "shards"),
                                    (dict(test_points=(-1j,)), "upper half-plane")])
def test_config_validation(kw, msg):
    with pytest.raises(ValueError, match=msg):
        ExperimentConfig(kind=Kind.CARDY, kappa=6, **kw)


def test_default_points_are_valid():
    g = maps.triangle_geometry(6)
    for z in mc.default_points(Kind.THREE_WAY, 6):
        assert z.imag > 0
        lam = maps.barycentric(g, maps.sc_triangle_map(g, z))
        assert min(lam) >= 0.1 - 1e-9
    re = [maps.halfstrip_map(z).real for z in mc.default_points(Kind.HALF_STRIP_K8, 8)]
    assert re == pytest.approx([0.2, 0.4, 0.6, 0.8], abs=1e-12)


def test_runs_are_bit_identical():
    cfg = ExperimentConfig(kind=Kind.LEFT_SIDE, kappa=4, n_replicas=60, seed=3)
    assert mc.run(cfg).rows == mc.run(cfg).rows


def test_area_partition_identity():
    cfg = ExperimentConfig(kind=Kind.AREA_PARTITION, kappa=6, n_replicas=8, grid_resolution=12,
                           exit_eps=1e-6)
    r = mc.run(cfg)
    assert r.gates["partition"] and r.gates["area_matches_triangle"]


def test_area_grid_covers_triangle():
    g = maps.triangle_geometry(16 / 3)
    pts, wts = mc.area_grid(g, 10)
    assert wts.sum() == pytest.approx(g.area, rel=1e-12)
    assert np.all(pts.imag >= 0)


def test_radial_origin_has_no_drift():
    cfg = ExperimentConfig(kind=Kind.RADIAL_K2, kappa=2, dt=1e-3, horizon_T=0.05, n_replicas=20,
                           test_points=(0j,))
    r = mc.run(cfg)
    assert all(row["drift"] == 0 for row in r.rows) and r.passed


def test_radial_interval_scales_with_root_n():
    base = ExperimentConfig(kind=Kind.RADIAL_K2, kappa=2, dt=1e-3, horizon_T=0.05,
                            n_replicas=2000, test_points=(0.5j,))
    w1 = mc.run(base).rows[-1]["half_width_re"]
    w2 = mc.run(replace(base, n_replicas=8000)).rows[-1]["half_width_re"]
    assert w2 / w1 == pytest.approx(0.5, rel=0.1)


def test_cardy_runner_small():
    r = mc.run(ExperimentConfig(kind=Kind.CARDY, kappa=6, n_replicas=300, seed=2))
    mean_row = r.rows[2]
    assert abs(mean_row["value"] - 0.5) <= mean_row["half_width"] * 1.5
    below = np.mean(r.summary["samples"] <= 0.5)
    assert below == pytest.approx(0.5, abs=3 * 0.5 / math.sqrt(300))


def test_three_way_centroid_thirds():
    g = maps.triangle_geometry(6)
    z = maps.sc_inverse(g, (g.a + g.b + g.c) / 3)
    cfg = ExperimentConfig(kind=Kind.THREE_WAY, kappa=6, n_replicas=600, test_points=(z,))
    row = mc.run(cfg).rows[0]
    targets = (row["target_z_first"], row["target_simultaneous"], row["target_one_first"])
    assert targets == pytest.approx((1 / 3,) * 3, abs=1e-9)
    assert row["p_value"] > 0.01 and row["cross_p_value"] > 0.01


def test_halfstrip_point_at_three_tenths():
    z = maps.halfstrip_inverse(0.3 + 0.5j)
    cfg = ExperimentConfig(kind=Kind.HALF_STRIP_K8, kappa=8, n_replicas=1000, test_points=(z,))
    row = mc.run(cfg).rows[0]
    assert row["target"] == pytest.approx(0.3)
    assert abs(row["estimate"] - 0.3) <= row["half_width"]


def test_kappa_rho_at_sixty_degrees():
    z = complex(math.cos(math.pi / 3), math.sin(math.pi / 3))
    cfg = ExperimentConfig(kind=Kind.KAPPA_RHO, kappa=6, rho=1, n_replicas=1000, test_points=(z,))
    r = mc.run_kappa_rho(cfg, control=False)
    row = r.rows[0]
    assert row["target_limit"] == pytest.approx(1 / 3)
    assert abs(row["estimate"] - row["target"]) <= row["half_width"]


def test_kappa_rho_rejects_other_rho():
    cfg = ExperimentConfig(kind=Kind.KAPPA_RHO, kappa=6, rho=0.5, n_replicas=10)
    with pytest.raises(ValueError):
        mc.run(cfg)


def test_rho_zero_control_matches_plain_sle():
    s = mc.kappa_rho_control(6.0, 1, n_paths=200)
    assert s["p_increments"] > 0.01 and s["p_two_sample"] > 0.01 and s["p_absorbed"] > 0.01


def test_ladder_refines_the_step():
    cfg = ExperimentConfig(kind=Kind.LEFT_SIDE, kappa=4, n_replicas=40, test_points=(1j,))
    coarse, fine = mc.run_with_ladder(cfg)
    assert fine.config.dt == cfg.dt / 4 and fine.config.n_replicas == 40
    assert coarse.config == cfg
    _, thinned = mc.run_with_ladder(cfg, thin=4)
    assert thinned.config.n_replicas == 10


@pytest.mark.slow
def test_interval_calibration():
    # the 99% interval should cover the exact value in at least 95 of 100 repetitions
    hits = 0
    for rep in range(100):
        cfg = ExperimentConfig(kind=Kind.LEFT_SIDE, kappa=4, n_replicas=100, seed=1000 + rep,
                               test_points=(complex(0.5, 0.8),))
        row = mc.run(cfg).rows[0]
        hits += abs(row["estimate"] - row["target"]) <= row["half_width"]
    assert hits >= 95
