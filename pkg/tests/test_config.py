import json

import pytest

from byteg2p.config import Paths, RunConfig, load_run_config, materialize
from byteg2p.errors import ConfigError


def test_default_covers_all_sections():
    run = RunConfig.default()
    d = run.to_dict()
    assert set(d) == {"paths", "model", "train", "decode"}
    assert d["model"]["d_model"] == 128
    assert d["train"]["unk_mask_rate"] == 0.15
    assert d["decode"]["beam_size"] == 5
    assert all(v is None for v in d["paths"].values())


def test_dict_roundtrip():
    run = RunConfig.from_dict(
        {
            "model": {"d_model": 64, "n_heads": 2},
            "train": {"epochs": 3, "seed": 7},
            "decode": {"beam_size": 2},
            "paths": {"out_dir": "/tmp/x"},
        }
    )
    assert RunConfig.from_dict(run.to_dict()) == run
    assert run.model.d_model == 64
    assert run.train.epochs == 3
    assert run.decode.beam_size == 2
    assert run.paths.out_dir == "/tmp/x"


def test_partial_sections_fill_defaults():
    run = RunConfig.from_dict({"train": {"epochs": 1}})
    assert run.model.d_model == 128
    assert run.train.epochs == 1
    # serialized form always re-states every field
    d = run.to_dict()
    assert "learning_rate" in d["train"]
    assert "max_len" in d["decode"]


def test_unknown_keys_rejected_at_every_level():
    with pytest.raises(ConfigError, match="sections"):
        RunConfig.from_dict({"modell": {}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": {"d_modell": 64}})
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"train": {"lr": 1e-3}})
    with pytest.raises(ConfigError, match="decode"):
        RunConfig.from_dict({"decode": {"beam": 5}})
    with pytest.raises(ConfigError, match="paths"):
        RunConfig.from_dict({"paths": {"output": "x"}})


def test_sections_must_be_objects():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"model": [1, 2]})
    with pytest.raises(ConfigError):
        RunConfig.from_dict([])


def test_paths_values_must_be_strings():
    with pytest.raises(ConfigError):
        Paths.from_dict({"out_dir": 7})
    p = Paths.from_dict({"out_dir": None, "data_dir": "d"})
    assert p.out_dir is None and p.data_dir == "d"


def test_load_run_config_file(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"train": {"seed": 5}}))
    run = load_run_config(str(path))
    assert run.train.seed == 5
    assert load_run_config(None) == RunConfig.default()


def test_load_run_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_run_config(str(tmp_path / "absent.json"))
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="valid JSON"):
        load_run_config(str(bad))


def test_materialize_disables_masking_for_single_language():
    run = RunConfig.default()
    solo = materialize(run, n_languages=1)
    assert solo.train.unk_mask_rate == 0.0
    multi = materialize(run, n_languages=2)
    assert multi.train.unk_mask_rate == 0.15
    assert multi is run
    with pytest.raises(ConfigError):
        materialize(run, n_languages=0)
