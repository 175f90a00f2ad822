import pytest

from core.errors import InvalidArgumentError
from core.run_storage import RunManifest, RunStorage, sha256_hex


@pytest.fixture
def storage(tmp_path):
    return RunStorage(str(tmp_path / "runs"))


def test_run_ids_are_unique_within_a_second(storage):
    a = storage.new_run_id("floor-spin")
    b = storage.new_run_id("floor-spin")
    assert a != b
    assert a.startswith("floor-spin-")
    assert b.endswith("-2")


def test_manifest_round_trip(storage):
    run_id = storage.new_run_id("sgd-spin")
    manifest = RunManifest(run_id=run_id, experiment="sgd-spin", config={'n': 10}, derived_seeds={'master_seed': 0})
    storage.save_manifest(manifest)
    loaded = storage.get_manifest(run_id)
    assert loaded.to_dict() == manifest.to_dict()
    assert storage.get_manifest("missing") is None


def test_checksums_detect_changes(storage):
    run_id = storage.new_run_id("floor-spin")
    digest = storage.write_file(run_id, "trials.csv", "a,b\n1,2\n")
    assert digest == sha256_hex(b"a,b\n1,2\n")
    manifest = RunManifest(run_id=run_id, experiment="floor-spin", config={}, checksums={'trials.csv': digest})
    storage.save_manifest(manifest)
    assert storage.verify(run_id) == {'trials.csv': True}
    with open(storage.file_path(run_id, "trials.csv"), "a") as f:
        f.write("3,4\n")
    assert storage.verify(run_id) == {'trials.csv': False}


def test_list_and_remove(storage):
    first = storage.new_run_id("floor-spin")
    storage.save_manifest(RunManifest(run_id=first, experiment="floor-spin", config={}, started_at=1.0))
    second = storage.new_run_id("floor-spin")
    storage.save_manifest(RunManifest(run_id=second, experiment="floor-spin", config={}, started_at=2.0))
    storage.write_binary(second, "teacher.ckpt", b"\x00\x01")
    assert [m.run_id for m in storage.list_runs()] == [second, first]
    assert storage.list_files(second) == ["manifest.json", "teacher.ckpt"]
    assert storage.remove_run(first)
    assert not storage.remove_run(first)
    assert [m.run_id for m in storage.list_runs()] == [second]


@pytest.mark.parametrize("run_id", ["", "..", "a/b"])
def test_rejects_unsafe_run_ids(storage, run_id):
    with pytest.raises(InvalidArgumentError):
        storage.file_path(run_id, "x")
