import json

import numpy as np
import pytest

from surrolab.augment import AugmentOp, build_training_set
from surrolab.containers import ContainerError, checksum, load_dataset, save_dataset
from surrolab.lattice import make_geometry
from surrolab.oracle import OracleConfig, generate_dataset


@pytest.fixture
def ds():
    g = make_geometry(8, 8, 3, "agr_like")
    return generate_dataset(g, OracleConfig(noise_std=0.1), 25, (0.1, 0.3), 4)


def test_roundtrip_bit_exact(tmp_path, ds):
    save_dataset(ds, tmp_path / "d")
    back = load_dataset(tmp_path / "d.json")
    assert back == ds
    assert back.labels.tobytes() == ds.labels.tobytes()
    save_dataset(back, tmp_path / "e")
    assert (tmp_path / "d.bin").read_bytes() == (tmp_path / "e.bin").read_bytes()
    assert checksum(tmp_path / "d") == checksum(tmp_path / "e")


def test_augmented_provenance_survives(tmp_path, ds):
    aug = build_training_set(ds, [AugmentOp.R270, AugmentOp.MH])
    save_dataset(aug, tmp_path / "aug")
    back = load_dataset(tmp_path / "aug")
    assert back.sources.tolist() == aug.sources.tolist()
    assert np.array_equal(back.ids, aug.ids)
    assert back.tag == "combined(D0,D3,D5)"


def test_manifest_layout(tmp_path, ds):
    save_dataset(ds, tmp_path / "d")
    m = json.loads((tmp_path / "d.json").read_text())
    assert m["count"] == 25
    assert [s["name"] for s in m["sections"]] == ["labels", "cells", "ids", "sources"]
    assert m["sections"][0]["dtype"] == "<f8"
    assert m["norm"]["raw_min"] == ds.norm[0]


def test_checksum_mismatch(tmp_path, ds):
    save_dataset(ds, tmp_path / "d")
    raw = bytearray((tmp_path / "d.bin").read_bytes())
    raw[-1] ^= 1
    (tmp_path / "d.bin").write_bytes(bytes(raw))
    with pytest.raises(ContainerError):
        load_dataset(tmp_path / "d")


def test_unknown_format(tmp_path, ds):
    save_dataset(ds, tmp_path / "d")
    m = json.loads((tmp_path / "d.json").read_text())
    m["format"] = "other/9"
    (tmp_path / "d.json").write_text(json.dumps(m))
    with pytest.raises(ContainerError):
        load_dataset(tmp_path / "d")
