"""Tests for SQLite quantile bundles and their JSON sidecar."""

import json
import sqlite3

import numpy as np
import pytest

from geopca.bundle_store import BundleStore
from geopca.errors import BundleError
from geopca.ingest import bundle_sidecar, file_checksum, load_quantile_bundle, save_quantile_bundle
from geopca.measures import GridConfig, QuantileGrid, gaussian_quantile

from conftest import CONCENTRATED, location_scale_family


@pytest.fixture
def bundle(tmp_path):
    data = location_scale_family(GridConfig(200), CONCENTRATED)
    labels = [f"nu{i + 1}" for i in range(len(data))]
    path = save_quantile_bundle(data, labels, tmp_path / "bundle.sqlite")
    return path, labels, data


def _rewrite_sidecar(path, **changes):
    sidecar_path = bundle_sidecar(path)
    sidecar = json.loads(sidecar_path.read_text(encoding="utf-8"))
    sidecar.update(changes)
    sidecar_path.write_text(json.dumps(sidecar), encoding="utf-8")


def test_round_trip_is_bit_exact(bundle):
    path, labels, data = bundle
    loaded_labels, loaded = load_quantile_bundle(path)
    assert loaded_labels == labels
    for a, b in zip(data, loaded):
        assert a == b


def test_round_trip_keeps_bounded_domain(tmp_path):
    grid = GridConfig(50, 0.0, 100.0)
    data = [QuantileGrid(grid, 100.0 * grid.knots), QuantileGrid(grid, 50.0 * grid.knots)]
    path = save_quantile_bundle(data, ["a", "b"], tmp_path / "b.sqlite")
    _, loaded = load_quantile_bundle(path)
    assert loaded[0].grid == grid


def test_sidecar_describes_bundle(bundle):
    path, labels, _ = bundle
    sidecar = json.loads(bundle_sidecar(path).read_text(encoding="utf-8"))
    assert sidecar["format"] == "geopca-quantile-bundle"
    assert sidecar["labels"] == labels
    assert sidecar["grid"]["m"] == 200
    assert sidecar["payload_checksum"] == file_checksum(path)


def test_corrupt_payload_detected(bundle):
    path, _, _ = bundle
    raw = bytearray(path.read_bytes())
    raw[len(raw) // 2] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(BundleError):
        load_quantile_bundle(path)


def test_missing_knot_detected(bundle):
    path, _, _ = bundle
    conn = sqlite3.connect(str(path))
    conn.execute("DELETE FROM quantiles WHERE record_id = 1 AND j = 7")
    conn.commit()
    conn.close()
    _rewrite_sidecar(path, payload_checksum=file_checksum(path))
    with pytest.raises(BundleError):
        load_quantile_bundle(path)


def test_sidecar_version_mismatch(bundle):
    path, _, _ = bundle
    _rewrite_sidecar(path, version=2)
    with pytest.raises(BundleError):
        load_quantile_bundle(path)


def test_store_version_mismatch(bundle):
    path, _, _ = bundle
    conn = sqlite3.connect(str(path))
    conn.execute("UPDATE db_version SET version = 99")
    conn.commit()
    conn.close()
    with pytest.raises(BundleError):
        BundleStore(path)


def test_label_mismatch_detected(bundle):
    path, labels, _ = bundle
    _rewrite_sidecar(path, labels=list(reversed(labels)))
    with pytest.raises(BundleError):
        load_quantile_bundle(path)


def test_missing_sidecar(bundle):
    path, _, _ = bundle
    bundle_sidecar(path).unlink()
    with pytest.raises(BundleError):
        load_quantile_bundle(path)


def test_not_a_bundle(tmp_path):
    path = tmp_path / "other.sqlite"
    conn = sqlite3.connect(str(path))
    conn.execute("CREATE TABLE things (x INTEGER)")
    conn.commit()
    conn.close()
    with pytest.raises(BundleError):
        BundleStore(path)


def test_missing_store(tmp_path):
    with pytest.raises(BundleError):
        BundleStore(tmp_path / "absent.sqlite")


def test_save_rejects_mixed_grids(tmp_path):
    data = [gaussian_quantile(GridConfig(10)), gaussian_quantile(GridConfig(20))]
    with pytest.raises(BundleError):
        save_quantile_bundle(data, ["a", "b"], tmp_path / "b.sqlite")


def test_save_rejects_duplicate_labels(tmp_path):
    nu = gaussian_quantile(GridConfig(10))
    with pytest.raises(BundleError):
        save_quantile_bundle([nu, nu], ["a", "a"], tmp_path / "b.sqlite")


def test_store_write_shape_check(tmp_path):
    store = BundleStore(tmp_path / "b.sqlite", create=True)
    knots = (np.arange(4) + 0.5) / 4
    with pytest.raises(BundleError):
        store.write(["a"], knots, np.zeros((2, 4)), (-np.inf, np.inf))


def test_store_reads_in_written_order(tmp_path):
    store = BundleStore(tmp_path / "b.sqlite", create=True)
    knots = (np.arange(3) + 0.5) / 3
    matrix = np.array([[0.0, 1.0, 2.0], [-1.0, 0.0, 1.0]])
    store.write(["z", "a"], knots, matrix, (-np.inf, np.inf))
    labels, stored_knots, stored = store.read_records()
    assert labels == ["z", "a"]
    np.testing.assert_array_equal(stored_knots, knots)
    np.testing.assert_array_equal(stored, matrix)
    assert store.read_grid() == (3, -np.inf, np.inf)
