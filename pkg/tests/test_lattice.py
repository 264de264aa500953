import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from surrolab.augment import AugmentOp, apply_op
from surrolab.lattice import (
    CRACKED,
    INTACT,
    CoreGeometry,
    CrackConfig,
    GeometryError,
    crack_count,
    make_geometry,
    random_crack_config,
)


def brute_force_disk_counts(width, height):
    """(radius^2, channel count) for every distinct ring, by double loop."""
    cy, cx = (height - 1) / 2, (width - 1) / 2
    d2s = sorted({(r - cy) ** 2 + (c - cx) ** 2 for r in range(height) for c in range(width)})
    out = []
    for d2 in d2s:
        n = sum(1 for r in range(height) for c in range(width) if (r - cy) ** 2 + (c - cx) ** 2 <= d2)
        out.append((d2, n))
    return out


def test_full_3x3():
    g = make_geometry(3, 3, 1, "full")
    assert g.n_channels == 9
    assert g.center == (1.0, 1.0)


def test_agr_like_20x20_matches_enumeration():
    rings = brute_force_disk_counts(20, 20)
    best = min(rings, key=lambda t: (abs(t[1] - 284), t[0]))
    g = make_geometry(20, 20, 3, "agr_like")
    assert g.n_channels == best[1] == 284
    assert math.isclose(g.mask_spec["radius"] ** 2, best[0])
    assert g.n_bricks == 852


@pytest.mark.parametrize("size", [6, 9, 12, 15])
def test_agr_like_smallest_radius_on_ties(size):
    rings = brute_force_disk_counts(size, size)
    best = min(rings, key=lambda t: (abs(t[1] - 284), t[0]))
    assert make_geometry(size, size, 1, "agr_like").n_channels == best[1]


def test_mask_four_fold_symmetry():
    g = make_geometry(20, 20, 3)
    m = g.fuel_mask
    for t in (np.rot90(m), np.rot90(m, 2), np.rot90(m, 3), m[:, ::-1], m[::-1, :]):
        assert np.array_equal(m, t)


def test_disk_mask_is_distance_threshold():
    g = make_geometry(7, 7, 1, {"kind": "disk", "radius": 2.0})
    expected = [[(r - 3) ** 2 + (c - 3) ** 2 <= 4 for c in range(7)] for r in range(7)]
    assert np.array_equal(g.fuel_mask, np.array(expected))


def test_geometry_errors():
    with pytest.raises(GeometryError):
        make_geometry(0, 3, 1, "full")
    with pytest.raises(GeometryError):
        make_geometry(4, 5, 1, "agr_like")
    with pytest.raises(GeometryError):
        make_geometry(4, 4, 1, {"kind": "disk", "radius": 0})
    with pytest.raises(GeometryError):
        # even plan: nearest cell centre is sqrt(0.5) away
        make_geometry(4, 4, 1, {"kind": "disk", "radius": 0.5})


def test_nonsquare_rotation_rejected_at_augmentation_time():
    g = make_geometry(4, 5, 1, {"kind": "disk", "radius": 1.0})
    cfg = random_crack_config(g, 0.5, 0)
    with pytest.raises(GeometryError):
        apply_op(cfg, AugmentOp.R90)
    # mirrors still fine on a symmetric non-square mask
    apply_op(cfg, AugmentOp.MV)


def test_fraction_extremes():
    g = make_geometry(6, 6, 2, "full")
    assert np.all(random_crack_config(g, 0.0, 3).cells == INTACT)
    assert np.all(random_crack_config(g, 1.0, 3).cells == CRACKED)


def test_852_bricks_at_40_percent():
    g = make_geometry(20, 20, 3)
    cfg = random_crack_config(g, 0.4, 11)
    assert int((cfg.cells == CRACKED).sum()) == 341


def test_round_half_up():
    assert crack_count(0.5, 3) == 2
    assert crack_count(0.25, 2) == 1
    assert crack_count(0.4, 852) == 341


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1), st.integers(0, 2**32 - 1))
def test_counts_and_mask(fraction, seed):
    g = make_geometry(9, 9, 2, {"kind": "disk", "radius": 3.6})
    cfg = random_crack_config(g, fraction, seed)
    k = math.floor(fraction * g.n_bricks + 0.5)
    assert int((cfg.cells == CRACKED).sum()) == k
    assert int((cfg.cells == INTACT).sum()) == g.n_bricks - k
    assert np.all(cfg.cells[:, ~g.fuel_mask] == 0)
    assert 0.0 <= cfg.crack_fraction <= 1.0


def test_seed_determinism_and_variety():
    g = make_geometry(20, 20, 3)
    assert random_crack_config(g, 0.3, 5) == random_crack_config(g, 0.3, 5)
    draws = {random_crack_config(g, 0.3, s).cells.tobytes() for s in range(100)}
    assert len(draws) == 100


def test_crack_config_rejects_values_off_mask():
    g = make_geometry(3, 3, 1, {"kind": "disk", "radius": 1.0})
    cells = np.ones((1, 3, 3), dtype=np.int8)
    with pytest.raises(GeometryError):
        CrackConfig(g, cells)


def test_geometry_dict_roundtrip():
    g = make_geometry(20, 20, 3)
    assert CoreGeometry.from_dict(g.to_dict()) == g
