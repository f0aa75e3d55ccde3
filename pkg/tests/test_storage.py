import json

import numpy as np
import pandas as pd
import pytest

from dsoled.storage import ArtifactStorage, RunManifest, default_output_dir, hash_inputs


def test_outputs_appear_on_success(tmp_path):
    with ArtifactStorage(tmp_path, "solve", "abc123") as storage:
        storage.save_table("flows", pd.DataFrame({"t": [0, 1], "value": [1.5, 2.0]}))
        storage.save_json("report", {"objective": np.float64(3.0), "x": np.arange(2)})
        storage.save_log("nodes", [{"node": 0}, {"node": 1}])
        assert not storage.storage_dir.exists()

    out = tmp_path / "solve" / "abc123"
    assert sorted(p.name for p in out.iterdir()) == ["flows.csv", "nodes.jsonl", "report.json"]
    assert json.loads((out / "report.json").read_text()) == {"objective": 3.0, "x": [0, 1]}
    assert len((out / "nodes.jsonl").read_text().splitlines()) == 2
    assert storage.get_file_path("flows.csv") == out / "flows.csv"
    assert storage.get_file_path("missing.csv") is None
    assert not (tmp_path / "solve" / ".abc123.partial").exists()


def test_failure_leaves_nothing(tmp_path):
    with pytest.raises(RuntimeError):
        with ArtifactStorage(tmp_path, "solve", "abc123") as storage:
            storage.save_json("report", {"a": 1})
            raise RuntimeError("solver crashed")

    assert not (tmp_path / "solve" / "abc123").exists()
    assert not (tmp_path / "solve" / ".abc123.partial").exists()


def test_rerun_replaces_previous(tmp_path):
    for value in (1, 2):
        with ArtifactStorage(tmp_path, "solve", "h") as storage:
            storage.save_json("report", {"value": value})

    report = json.loads((tmp_path / "solve" / "h" / "report.json").read_text())
    assert report == {"value": 2}


def test_manifest(tmp_path):
    config = tmp_path / "scenario.json"
    config.write_text("{}", encoding="utf-8")
    manifest = RunManifest(
        command="solve",
        config_path=str(config),
        seed=0,
        version="0.1.0",
        input_hashes=hash_inputs([config, tmp_path / "missing.json"]),
        output_dir="",
    )

    with ArtifactStorage(tmp_path, "solve", "h") as storage:
        storage.save_manifest(manifest)

    data = json.loads((tmp_path / "solve" / "h" / "manifest.json").read_text())
    assert data["output_dir"] == str(tmp_path / "solve" / "h")
    assert data["config_hash"] == "h"
    assert list(data["input_hashes"]) == [str(config)]
    assert data["finished"]


def test_default_output_dir(output_dir):
    assert default_output_dir() == output_dir
