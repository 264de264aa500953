import math

import numpy as np
import pytest

from surrolab.augment import AugmentOp
from surrolab.dataset import DegenerateLabels, denormalize, fit_norm, normalize
from surrolab.lattice import CrackConfig, make_geometry, random_crack_config
from surrolab.oracle import (
    OracleConfig,
    agreement_check,
    agreement_table,
    generate_dataset,
    oracle_label,
)


def reference_label(cfg: CrackConfig, oc: OracleConfig) -> float:
    """Plain loop over bricks; coordinates measured from the plan centre, y up."""
    g = cfg.geometry
    cy, cx = (g.plan_height - 1) / 2, (g.plan_width - 1) / 2
    total = oc.baseline
    for lv in range(g.levels):
        for r in range(g.plan_height):
            for c in range(g.plan_width):
                if cfg.cells[lv, r, c] != 1:
                    continue
                x, y = c - cx, cy - r
                total += math.exp(-(x * x + y * y) / (2 * oc.radial_scale**2))
                if oc.directional_mode == "odd_x":
                    total += oc.break_weight * x
                elif oc.directional_mode == "saddle":
                    total += oc.break_weight * x * y
    return total


def invariant_ops_by_sampling(oc, geom, n=20):
    cfgs = [random_crack_config(geom, 0.3, s) for s in range(n)]
    return {op for op in AugmentOp if agreement_check(oc, cfgs, op)["max_abs"] < 1e-9}


@pytest.fixture(scope="module")
def geom():
    return make_geometry(9, 9, 2, {"kind": "disk", "radius": 4.0})


def test_center_crack_single_brick():
    g = make_geometry(5, 5, 1, "full")
    cells = -np.ones((1, 5, 5), dtype=np.int8)
    cells[0, 2, 2] = 1
    oc = OracleConfig(baseline=0.7, radial_scale=1.3)
    assert oracle_label(CrackConfig(g, cells), oc) == pytest.approx(1.7, abs=1e-15)


@pytest.mark.parametrize("mode,kappa", [("none", 0.0), ("odd_x", 0.1), ("saddle", 0.05)])
def test_matches_reference_loop(geom, mode, kappa):
    oc = OracleConfig(baseline=-0.3, radial_scale=2.5, directional_mode=mode, break_weight=kappa)
    for s in range(10):
        cfg = random_crack_config(geom, 0.1 * (s % 5), s)
        assert oracle_label(cfg, oc) == pytest.approx(reference_label(cfg, oc), abs=1e-12)


def test_kappa_zero_invariant_under_all(geom):
    for mode in ("none", "odd_x", "saddle"):
        oc = OracleConfig(directional_mode=mode, break_weight=0.0)
        assert invariant_ops_by_sampling(oc, geom) == set(AugmentOp)


def test_symmetry_breaking_sets(geom):
    # expected subgroups from the sign flips of x and x*y under each map
    # (x, y) -> R90 (y, -x), R180 (-x, -y), R270 (-y, x), MV (-x, y), MH (x, -y)
    maps = {
        AugmentOp.R90: lambda x, y: (y, -x),
        AugmentOp.R180: lambda x, y: (-x, -y),
        AugmentOp.R270: lambda x, y: (-y, x),
        AugmentOp.MV: lambda x, y: (-x, y),
        AugmentOp.MH: lambda x, y: (x, -y),
    }
    probe = (1.0, 2.0)
    odd_x = {op for op, f in maps.items() if f(*probe)[0] == probe[0]}
    saddle = {op for op, f in maps.items() if math.prod(f(*probe)) == math.prod(probe)}
    assert odd_x == {AugmentOp.MH}
    assert saddle == {AugmentOp.R180}
    oc_odd = OracleConfig(directional_mode="odd_x", break_weight=0.2)
    oc_sad = OracleConfig(directional_mode="saddle", break_weight=0.2)
    assert invariant_ops_by_sampling(oc_odd, geom) == odd_x
    assert invariant_ops_by_sampling(oc_sad, geom) == saddle


def test_agreement_ignores_noise(geom):
    oc = OracleConfig(noise_std=3.0)
    rows = agreement_table(oc, [random_crack_config(geom, 0.2, s) for s in range(3)])
    assert [r["op"] for r in rows] == [op.value for op in AugmentOp]
    assert all(r["max_abs"] < 1e-12 for r in rows)


def test_normalization_roundtrip():
    raw = np.random.default_rng(4).normal(5, 3, 200)
    norm = fit_norm(raw)
    y = normalize(raw, norm)
    assert y.min() == 0.0 and y.max() == 1.0
    assert np.max(np.abs(denormalize(y, norm) - raw)) < 1e-12


def test_two_instances_normalize_to_endpoints():
    y = normalize(np.array([3.0, 5.0]), fit_norm([3.0, 5.0]))
    assert y.tolist() == [0.0, 1.0]


def test_degenerate_labels():
    g = make_geometry(3, 3, 1, "full")
    with pytest.raises(DegenerateLabels):
        # zero crack fraction: every raw label equals the baseline
        generate_dataset(g, OracleConfig(), 5, (0.0, 0.0), 0)


def test_fixed_fraction_gives_equal_crack_counts(geom):
    ds = generate_dataset(geom, OracleConfig(noise_std=0.1), 50, (0.25, 0.25), 9)
    counts = (ds.cells == 1).sum(axis=(1, 2, 3))
    assert len(set(counts.tolist())) == 1
    assert counts[0] == math.floor(0.25 * geom.n_bricks + 0.5)


def test_generate_deterministic_and_seed_sensitive(geom):
    oc = OracleConfig(noise_std=0.2)
    a = generate_dataset(geom, oc, 20, seed=1)
    assert a == generate_dataset(geom, oc, 20, seed=1)
    assert not np.array_equal(a.cells, generate_dataset(geom, oc, 20, seed=2).cells)


def test_test_set_reuses_training_norm(geom):
    oc = OracleConfig()
    train = generate_dataset(geom, oc, 40, seed=1)
    test = generate_dataset(geom, oc, 40, seed=2, norm=train.norm)
    assert test.norm == train.norm
    assert np.allclose(test.raw_labels(), [oracle_label(c, oc) for c, _ in test])


def test_exclusion_redraws(geom):
    oc = OracleConfig()
    first = generate_dataset(geom, oc, 10, seed=3)
    again = generate_dataset(geom, oc, 10, seed=3, exclude={first.cells[0].tobytes()})
    assert not any(np.array_equal(first.cells[0], c) for c in again.cells)


def test_default_label_distribution_is_unimodal():
    g = make_geometry(20, 20, 3)
    ds = generate_dataset(g, OracleConfig(radial_scale=2.0, noise_std=0.5), 2000, (0.15, 0.25), 0)
    counts, _ = np.histogram(ds.labels, bins=10, range=(0, 1))
    peak = int(np.argmax(counts))
    assert 2 <= peak <= 7
    assert all(np.diff(counts[: peak + 1]) >= 0)
    assert all(np.diff(counts[peak:]) <= 0)
    assert (ds.labels < 0.2).mean() > 0.02 and (ds.labels > 0.6).mean() > 0.02


def test_oracle_config_validation():
    with pytest.raises(ValueError):
        OracleConfig(radial_scale=0)
    with pytest.raises(ValueError):
        OracleConfig(directional_mode="spiral")
    with pytest.raises(ValueError):
        OracleConfig(noise_std=-1)
