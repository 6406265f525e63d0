import numpy as np
import pytest

from rltopics.cli import main
from rltopics.embeddings import EmbeddingMatrix, write_embeddings


@pytest.fixture(scope="module")
def raw_corpus(tmp_path_factory):
    path = tmp_path_factory.mktemp("data") / "raw.txt"
    rng = np.random.default_rng(0)
    themes = [
        ["moon", "space", "orbit", "rocket", "lunar", "nasa"],
        ["goal", "team", "league", "match", "player", "season"],
        ["bread", "flour", "oven", "yeast", "dough", "bake"],
    ]
    lines = []
    for _ in range(120):
        theme = themes[rng.integers(3)]
        words = rng.choice(theme, size=rng.integers(10, 20))
        lines.append(" ".join(words) + ".")
    path.write_text("\n".join(lines) + "\n")
    return path


@pytest.fixture(scope="module")
def container(raw_corpus, tmp_path_factory):
    out = tmp_path_factory.mktemp("data") / "c.ntmc"
    code = main(["preprocess", "--input", str(raw_corpus), "--output", str(out), "--vocab-size", "30"])
    assert code == 0
    return out


def _train_args(container, out_dir, **extra):
    args = [
        "train", "--corpus", str(container), "--out-dir", str(out_dir),
        "--topics", "3", "--epochs", "3", "--batch-size", "64", "--seed", "5",
        "--layers", "12", "--k", "4",
    ]
    for key, value in extra.items():
        args += [key, str(value)]
    return args


def test_train_produces_run_directory(container, tmp_path, capsys):
    assert main(_train_args(container, tmp_path / "run")) == 0
    for name in ("run.json", "trace.csv", "model.ntm1", "topics.txt"):
        assert (tmp_path / "run" / name).exists()
    out = capsys.readouterr().out
    assert "coherence" in out and "diversity" in out


def test_topics_prints_k_words_per_topic(container, tmp_path, capsys):
    assert main(_train_args(container, tmp_path / "run")) == 0
    capsys.readouterr()
    code = main([
        "topics", "--checkpoint", str(tmp_path / "run" / "model.ntm1"),
        "--corpus", str(container), "--k", "4",
    ])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 3
    assert all(len(line.split()) == 4 for line in lines)


def test_eval_reports_metrics(container, tmp_path, capsys):
    assert main(_train_args(container, tmp_path / "run")) == 0
    capsys.readouterr()
    code = main([
        "eval", "--checkpoint", str(tmp_path / "run" / "model.ntm1"),
        "--corpus", str(container), "--embedding-source", "bow", "--k", "4",
    ])
    assert code == 0
    out = capsys.readouterr().out
    for key in ("coherence", "diversity", "quality", "perplexity"):
        assert key in out


def test_train_with_embedding_file(container, tmp_path):
    from rltopics.corpus import read_container

    _, _, bow = read_container(container)
    emb = EmbeddingMatrix(np.random.default_rng(1).normal(size=(bow.num_docs, 8)).astype(np.float32))
    emb_path = tmp_path / "docs.emb1"
    write_embeddings(emb, emb_path)
    assert main(_train_args(container, tmp_path / "run", **{"--embeddings": emb_path})) == 0


def test_train_rejects_misaligned_embeddings(container, tmp_path, capsys):
    emb = EmbeddingMatrix(np.zeros((7, 8), dtype=np.float32))
    emb_path = tmp_path / "bad.emb1"
    write_embeddings(emb, emb_path)
    code = main(_train_args(container, tmp_path / "run", **{"--embeddings": emb_path}))
    assert code == 2


def test_missing_required_flag_is_usage_error(capsys):
    assert main(["train", "--topics", "3"]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["train", "--corpus", "x", "--out-dir", "y", "--frobnicate"]) == 1


def test_bad_container_is_data_error(tmp_path, capsys):
    bad = tmp_path / "bad.ntmc"
    bad.write_text("not a container\n")
    code = main(["train", "--corpus", str(bad), "--out-dir", str(tmp_path / "r")])
    assert code == 2


def test_missing_file_is_data_error(tmp_path):
    code = main(["train", "--corpus", str(tmp_path / "nope.ntmc"), "--out-dir", str(tmp_path / "r")])
    assert code == 2


def test_numerical_abort_exit_code(container, tmp_path):
    code = main(_train_args(container, tmp_path / "run", **{"--lr": "1e150"}))
    assert code == 3


def test_help_lists_table_defaults(capsys):
    assert main(["train", "--help"]) == 0
    out = capsys.readouterr().out
    for snippet in ("1000", "1024", "0.0003", "0.9", "0.999", "0.01", "1.0", "128,128", "0.2"):
        assert snippet in out, f"default {snippet} not shown in help"


def test_meta_seed_runs_multiple_seeds(container, tmp_path, capsys):
    args = _train_args(container, tmp_path / "multi")
    args.remove("--seed")
    args.remove("5")
    args += ["--meta-seed", "11", "--num-seeds", "2", "--epochs", "2"]
    # --epochs appears twice; argparse keeps the last occurrence
    assert main(args) == 0
    assert (tmp_path / "multi" / "seed00" / "trace.csv").exists()
    assert (tmp_path / "multi" / "seed01" / "trace.csv").exists()


def test_sweep_cli(container, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text('{"lambda": [1.0, 5.0]}\n')
    code = main([
        "sweep", "--grid", str(grid), "--corpus", str(container),
        "--topics", "3", "--epochs", "2", "--batch-size", "64",
        "--layers", "12", "--k", "4",
        "--meta-seed", "3", "--num-seeds", "1",
        "--out-dir", str(tmp_path / "sweep"),
    ])
    assert code == 0
    assert (tmp_path / "sweep" / "sweep.csv").exists()
    out = capsys.readouterr().out
    assert "cell   0" in out or "cell" in out


def test_report_renders_figures(container, tmp_path):
    assert main(_train_args(container, tmp_path / "run")) == 0
    assert main(["report", "--run-dir", str(tmp_path / "run")]) == 0
    figures = tmp_path / "run" / "figures"
    for name in ("loss.png", "coherence.png", "diversity.png"):
        assert (figures / name).exists()


def test_report_aggregates_seed_runs(container, tmp_path):
    args = _train_args(container, tmp_path / "multi")
    args.remove("--seed")
    args.remove("5")
    args += ["--meta-seed", "11", "--num-seeds", "2", "--epochs", "2"]
    assert main(args) == 0
    assert main(["report", "--run-dir", str(tmp_path / "multi")]) == 0
    assert (tmp_path / "multi" / "figures" / "coherence.png").exists()


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert "rltopics" in capsys.readouterr().out
