import json

import numpy as np
import pytest

from assemblynet.data.phantom import PhantomSpec, generate_phantom, simulate_rescan
from assemblynet.data.pool import PoolSample, RescanImages, load_pool, write_pool
from assemblynet.errors import DataError
from assemblynet.volume import RigidTransform, write_avol


SPEC = PhantomSpec(dims=(8, 8, 8), num_labels=3, seed=9)


def _sample(sample_id, role="labeled", rescan=False):
    phantom = generate_phantom(SPEC)
    kwargs = {}
    if rescan:
        transform = RigidTransform(translation=(1.0, 0.0, 0.0))
        t1, gt = simulate_rescan(phantom, transform, 1)
        kwargs = {"transform": transform, "rescan": RescanImages(t1, gt, phantom.mask, gt)}
    return PoolSample(sample_id, role, phantom.t1, phantom.gt, phantom.mask, phantom.gt, spec=SPEC.to_dict(), **kwargs)


def test_sample_validation():
    with pytest.raises(DataError, match="unknown role"):
        _sample("a", role="training")
    phantom = generate_phantom(SPEC)
    with pytest.raises(DataError):
        PoolSample("a", "rescan", phantom.t1, phantom.gt, phantom.mask, phantom.gt, transform=RigidTransform())


def test_write_and_load(tmp_path):
    samples = [_sample("lab000"), _sample("tst000", "test"), _sample("rsc000", "rescan", rescan=True)]
    write_pool(tmp_path / "pool", samples, 3, label_pairs=[(1, 2)])
    pool = load_pool(tmp_path / "pool")
    assert len(pool) == 3
    assert pool.num_labels == 3
    assert pool.dims == (8, 8, 8)
    assert pool.label_pairs == ((1, 2),)
    assert pool.ids() == ["lab000", "tst000", "rsc000"]
    assert pool.ids("test") == ["tst000"]
    assert pool.roles() == ["labeled", "test", "rescan"]
    assert pool.role_of("rsc000") == "rescan"
    assert "lab000" in pool and "nope" not in pool
    loaded = pool.sample("lab000")
    assert loaded.t1 == samples[0].t1
    assert loaded.gt == samples[0].gt
    assert loaded.spec == SPEC.to_dict()
    assert loaded.rescan is None
    rescan = pool.sample("rsc000")
    assert rescan.transform == RigidTransform(translation=(1.0, 0.0, 0.0))
    assert rescan.rescan.gt == samples[2].rescan.gt
    assert [s.sample_id for s in pool.samples("labeled")] == ["lab000"]
    index = json.loads((tmp_path / "pool" / "index.json").read_text())
    assert index["samples"][2]["transform"]["translation"] == [1.0, 0.0, 0.0]


def test_write_rejects_duplicates_and_mixed_grids(tmp_path):
    with pytest.raises(DataError, match="unique"):
        write_pool(tmp_path, [_sample("a"), _sample("a")], 3)
    other = generate_phantom(PhantomSpec(dims=(12, 12, 12), num_labels=3))
    mixed = PoolSample("b", "test", other.t1, other.gt, other.mask, other.gt)
    with pytest.raises(DataError, match="different grids"):
        write_pool(tmp_path, [_sample("a"), mixed], 3)


def test_load_errors(tmp_path):
    with pytest.raises(DataError, match="no pool index"):
        load_pool(tmp_path)
    (tmp_path / "index.json").write_text("{not json")
    with pytest.raises(DataError, match="invalid JSON"):
        load_pool(tmp_path)


def test_missing_and_wrong_files(tmp_path):
    write_pool(tmp_path, [_sample("a")], 3)
    pool = load_pool(tmp_path)
    with pytest.raises(DataError, match="not in pool"):
        pool.sample("b")
    write_avol(tmp_path / "a" / "gt.avol", generate_phantom(SPEC).t1)
    with pytest.raises(DataError, match="expected a LabelMap"):
        pool.sample("a")
    write_avol(tmp_path / "a" / "gt.avol", generate_phantom(SPEC).gt)
    (tmp_path / "a" / "prior.avol").unlink()
    with pytest.raises(DataError, match="missing pool file"):
        pool.sample("a")
