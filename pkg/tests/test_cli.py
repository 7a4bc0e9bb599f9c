import shutil

import pytest

from advrgraph.cli import main


@pytest.fixture(scope="module")
def cli_root(tmp_path_factory, data_dir):
    """Separate data root so CLI runs start from a cold cache."""
    root = tmp_path_factory.mktemp("cli-data")
    shutil.copytree(data_dir / "fixture", root / "fixture")
    return root


ARGS = ["--benign-class", "0", "--target-class", "1", "--k", "4", "--m", "3",
        "--strengths", "0,1.0,2.0"]


def run(root, *argv):
    return main([*argv, "--data-dir", str(root)])


def test_fixture_subcommand(cli_root, capsys):
    assert run(cli_root, "fixture") == 0
    assert "fixture model" in capsys.readouterr().out


def test_downstream_requires_upstream(cli_root, capsys):
    assert run(cli_root, "compare", *ARGS) == 3
    err = capsys.readouterr().err
    assert "missing dependency" in err and "sweep" in err


def test_stage_chain_and_cache_hits(cli_root, capsys):
    assert run(cli_root, "sweep", *ARGS) == 0
    assert "computed" in capsys.readouterr().out
    assert run(cli_root, "sweep", *ARGS) == 0
    assert "cache hit" in capsys.readouterr().out

    assert run(cli_root, "profile", *ARGS) == 0
    capsys.readouterr()
    assert run(cli_root, "graph", *ARGS) == 0
    capsys.readouterr()
    assert run(cli_root, "compare", *ARGS) == 0
    out = capsys.readouterr().out
    assert "suppressed" in out and "attack curve" in out
    assert run(cli_root, "compare", *ARGS) == 0
    assert "cache hit" in capsys.readouterr().out


def test_edit_eval_and_assets(cli_root, capsys):
    assert run(cli_root, "edit-eval", *ARGS, "--neurons", "conv2/0") == 0
    out = capsys.readouterr().out
    assert "success rate" in out
    assert run(cli_root, "patches", *ARGS, "--neurons", "conv2/0") == 0
    capsys.readouterr()
    assert run(cli_root, "featurevis", *ARGS, "--neurons", "conv2/0") == 0
    capsys.readouterr()


def test_export_bytes_match_store(cli_root, tmp_path, capsys):
    out_path = tmp_path / "doc.json"
    assert run(cli_root, "export", *ARGS, "--out", str(out_path)) == 0
    capsys.readouterr()
    from advrgraph.pipeline import PipelineContext, RunConfig, comparison_key

    ctx = PipelineContext.open(cli_root)
    cfg = RunConfig(benign_class=0, target_class=1, k=4, m=3, strengths=(0.0, 1.0, 2.0))
    key = comparison_key(ctx.model.weight_digest, cfg)
    assert out_path.read_bytes() == ctx.store.get_bytes(key)


def test_invalid_config_exit_2(cli_root, capsys):
    assert run(cli_root, "compare", "--benign-class", "0", "--target-class", "0") == 2
    assert "invalid config" in capsys.readouterr().err


def test_config_file_with_flag_override(cli_root, tmp_path, capsys):
    from advrgraph.pipeline import RunConfig

    cfg_path = tmp_path / "run.cfg"
    RunConfig(benign_class=0, target_class=1, k=4, m=3,
              strengths=(0.0, 1.0, 2.0)).to_file(cfg_path)
    # flags win over the file: overriding target to an equal class must fail
    assert main(["compare", "--config", str(cfg_path), "--target-class", "0",
                 "--data-dir", str(cli_root)]) == 2
    capsys.readouterr()
    # the file alone resolves to the cached comparison
    assert main(["compare", "--config", str(cfg_path), "--data-dir", str(cli_root)]) == 0
    assert "cache hit" in capsys.readouterr().out


def test_export_missing_artifact_exit_3(cli_root, capsys):
    assert run(cli_root, "export", "--benign-class", "2", "--target-class", "3") == 3
    assert "missing dependency" in capsys.readouterr().err


def test_config_file_output_dir_and_model_path(cli_root, tmp_path, capsys):
    from advrgraph.pipeline import RunConfig

    out_root = tmp_path / "artifacts"
    cfg = RunConfig(benign_class=0, target_class=1, k=2, m=2, strengths=(0.0, 1.0),
                    model_path=str(cli_root / "fixture" / "weights.npz"),
                    dataset_path=str(cli_root / "fixture" / "dataset.npz"),
                    output_dir=str(out_root))
    cfg_path = tmp_path / "run.cfg"
    cfg.to_file(cfg_path)
    # no --data-dir: the store root comes from output_dir, the model from model_path
    assert main(["sweep", "--config", str(cfg_path)]) == 0
    assert "computed" in capsys.readouterr().out
    assert (out_root / "store").exists()
    assert main(["sweep", "--config", str(cfg_path)]) == 0
    assert "cache hit" in capsys.readouterr().out
