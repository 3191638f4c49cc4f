"""End-to-end runs of every subcommand through main(argv)."""
import csv
import json
from types import SimpleNamespace

import numpy as np
import pytest

from tegraph.cli import (
    gather_options,
    main,
    model_config_from,
    parse_kv_file,
    parse_layer_specs,
    resolve_threads,
    train_config_from,
)
from tegraph.dataset import read_manifest
from tegraph.errors import ConfigError
from tegraph.skeleton import Body, RawClip, format_skeleton

SYNTH_SPEC = {
    "sets": [
        {"generator": "templates", "classes": 2, "samples_per_class": 3,
         "joints": 5, "frames": 8, "sigma": 0.05, "seed": 7,
         "split": "train", "prefix": "tr"},
        {"generator": "templates", "classes": 2, "samples_per_class": 2,
         "joints": 5, "frames": 8, "sigma": 0.05, "seed": 8,
         "split": "eval", "prefix": "ev"},
    ]
}

TRAIN_OPTIONS = [
    "--set", "classes=2",
    "--set", "layers=3:8:1:tc:3",
    "--set", "joints=5",
    "--set", "frames=8",
    "--set", "bodies=1",
    "--set", "epochs=2",
    "--set", "lr=0.05",
    "--set", "decay_epochs=",
    "--set", "weight_decay=0",
    "--set", "batch_size=2",
    "--set", "seed=0",
]


@pytest.fixture(scope="module")
def dataset_dir(tmp_path_factory):
    root = tmp_path_factory.mktemp("dataset")
    spec = root / "spec.json"
    spec.write_text(json.dumps(SYNTH_SPEC))
    out = root / "data"
    assert main(["preprocess", str(spec), "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def trained_dir(tmp_path_factory, dataset_dir):
    out = tmp_path_factory.mktemp("run")
    code = main(["train", "--data", str(dataset_dir / "manifest.jsonl"),
                 "--out", str(out), "--single-thread", *TRAIN_OPTIONS])
    assert code == 0
    return out


# ---------------------------------------------------------------------------
# Option plumbing


def test_parse_kv_file_handles_comments_and_quotes(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text(
        "# a comment\n"
        "lr = 0.05\n"
        "\n"
        "layers=3:8:1:tc:3  # inline note\n"
        "name = \"quoted value\"\n"
    )
    assert parse_kv_file(path) == {
        "lr": "0.05", "layers": "3:8:1:tc:3", "name": "quoted value",
    }


def test_parse_kv_file_reports_bad_line(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("lr = 0.05\nnot a pair\n")
    with pytest.raises(ConfigError, match="line 2"):
        parse_kv_file(path)


def test_set_overrides_config_file(tmp_path):
    path = tmp_path / "run.conf"
    path.write_text("lr = 0.05\nepochs = 10\n")
    args = SimpleNamespace(config=str(path), set=["lr=0.2", "seed=3"])
    assert gather_options(args) == {"lr": "0.2", "epochs": "10", "seed": "3"}
    with pytest.raises(ConfigError, match="key=value"):
        gather_options(SimpleNamespace(config=None, set=["oops"]))


def test_parse_layer_specs_variants():
    specs = parse_layer_specs("3:64, 64:64:2, 64:128:1:both:5")
    assert [(s.in_channels, s.out_channels, s.stride, s.mode, s.kernel_t)
            for s in specs] == [
        (3, 64, 1, "tc", 9), (64, 64, 2, "tc", 9), (64, 128, 1, "both", 5),
    ]
    with pytest.raises(ConfigError, match="in:out"):
        parse_layer_specs("3")
    with pytest.raises(ConfigError, match="bad layer spec"):
        parse_layer_specs("a:b")
    with pytest.raises(ConfigError, match="temporal mode"):
        parse_layer_specs("3:4:1:conv")


def test_model_config_from_custom_layers():
    config = model_config_from({
        "classes": "2", "layers": "3:8:1:tc:3,8:8:2:tc:3",
        "joints": "5", "frames": "16", "heads": "2",
    })
    assert len(config.layers) == 2 and config.num_joints == 5
    assert config.fixed_length == 16 and config.heads == 2
    assert config.graph == "chain"


def test_model_config_from_defaults_to_backbone():
    config = model_config_from({"classes": "60"})
    assert len(config.layers) == 9
    assert config.num_joints == 25 and config.graph == "ntu"
    replaced = model_config_from({"classes": "60", "replace_all": "true"})
    assert sum(1 for s in replaced.layers if s.mode == "tgraph") == 7


def test_model_config_requires_classes():
    with pytest.raises(ConfigError, match="classes"):
        model_config_from({"layers": "3:8"})


def test_train_config_from_options():
    config = train_config_from({
        "lr": "0.2", "decay_epochs": "10,20", "epochs": "30",
        "batch_size": "4", "momentum": "0.8", "weight_decay": "0",
    })
    assert config.learning_rate == 0.2
    assert config.decay_epochs == (10, 20)
    assert config.total_epochs == 30 and config.batch_size == 4
    assert config.momentum == 0.8 and config.weight_decay == 0.0
    assert train_config_from({"decay_epochs": ""}).decay_epochs == ()
    with pytest.raises(ConfigError, match="not a valid"):
        train_config_from({"epochs": "many"})


def test_resolve_threads(monkeypatch):
    assert resolve_threads(SimpleNamespace(single_thread=True, threads=8)) == 1
    assert resolve_threads(SimpleNamespace(single_thread=False, threads=3)) == 3
    monkeypatch.setenv("TEGRAPH_THREADS", "5")
    assert resolve_threads(SimpleNamespace(single_thread=False, threads=None)) == 5
    monkeypatch.setenv("TEGRAPH_THREADS", "lots")
    with pytest.raises(ConfigError, match="TEGRAPH_THREADS"):
        resolve_threads(SimpleNamespace(single_thread=False, threads=None))
    monkeypatch.delenv("TEGRAPH_THREADS")
    assert resolve_threads(SimpleNamespace(single_thread=False, threads=None)) == 1


# ---------------------------------------------------------------------------
# preprocess


def test_preprocess_synthetic_spec(dataset_dir):
    records = read_manifest(dataset_dir / "manifest.jsonl")
    assert len(records) == 10
    splits = {r["split"] for r in records}
    assert splits == {"train", "eval"}
    for rec in records:
        assert set(rec["files"]) == {
            "joint-spatial", "bone-spatial", "joint-motion", "bone-motion",
        }
        for rel in rec["files"].values():
            assert (dataset_dir / rel).exists()


def capture_text(delta):
    """Two-frame single-body 25-joint capture; joint 0 moves delta on x."""
    frames = []
    for t in range(2):
        joints = np.zeros((25, 3))
        joints[0, 0] = t * delta
        frames.append([Body("7205759403793", joints)])
    return format_skeleton(RawClip(frames))


def test_preprocess_capture_directory(tmp_path, capsys):
    src = tmp_path / "captures"
    src.mkdir()
    (src / "S001C001P001R001A001.skeleton").write_text(capture_text(2.0))
    (src / "S001C001P001R001A002.skeleton").write_text(capture_text(1.0))
    out = tmp_path / "data"
    code = main(["preprocess", str(src), "--out", str(out), "--frames", "4"])
    assert code == 0
    assert "wrote 2 samples" in capsys.readouterr().out
    records = read_manifest(out / "manifest.jsonl")
    assert sorted(r["label"] for r in records) == [0, 1]


def test_preprocess_rejects_odd_input(tmp_path):
    stray = tmp_path / "notes.txt"
    stray.write_text("hello")
    out = tmp_path / "data"
    assert main(["preprocess", str(stray), "--out", str(out)]) == 2


# ---------------------------------------------------------------------------
# train / eval / fuse


def test_train_outputs(trained_dir, capsys):
    lines = (trained_dir / "metrics.jsonl").read_text().splitlines()
    assert len(lines) == 2
    record = json.loads(lines[-1])
    assert set(record) == {"epoch", "lr", "train_loss", "train_acc", "eval_acc"}
    assert (trained_dir / "checkpoint.tegc").exists()
    assert (trained_dir / "best.tegc").exists()


def test_train_is_byte_reproducible(tmp_path, dataset_dir):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        code = main(["train", "--data", str(dataset_dir / "manifest.jsonl"),
                     "--out", str(out), "--single-thread", *TRAIN_OPTIONS])
        assert code == 0
        outs.append(out)
    for artifact in ("metrics.jsonl", "checkpoint.tegc", "best.tegc"):
        a = (outs[0] / artifact).read_bytes()
        b = (outs[1] / artifact).read_bytes()
        assert a == b, f"{artifact} differs between identical runs"


def test_train_requires_classes(tmp_path, dataset_dir):
    code = main(["train", "--data", str(dataset_dir / "manifest.jsonl"),
                 "--out", str(tmp_path / "out")])
    assert code == 2


def test_train_reports_divergence_as_numeric_failure(tmp_path, dataset_dir):
    # batchnorm keeps moderate blow-ups finite, so overshoot hard enough
    # that the very next variance computation overflows float64
    options = [o if o != "lr=0.05" else "lr=1e200" for o in TRAIN_OPTIONS]
    options = [o if o != "epochs=2" else "epochs=1" for o in options]
    with np.errstate(over="ignore", invalid="ignore"):
        code = main(["train", "--data", str(dataset_dir / "manifest.jsonl"),
                     "--out", str(tmp_path / "out"), "--single-thread", *options])
    assert code == 4


def test_eval_prints_accuracy(trained_dir, dataset_dir, capsys):
    code = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.tegc"),
                 "--data", str(dataset_dir / "manifest.jsonl"),
                 "--split", "eval", "--single-thread"])
    assert code == 0
    out = capsys.readouterr().out
    assert "top-1 accuracy" in out and "on 4 samples" in out


def test_eval_missing_manifest_is_data_error(trained_dir, tmp_path):
    code = main(["eval", "--checkpoint", str(trained_dir / "checkpoint.tegc"),
                 "--data", str(tmp_path / "nowhere" / "manifest.jsonl")])
    assert code == 3


def test_fuse_two_streams(trained_dir, dataset_dir, capsys):
    ckpt = str(trained_dir / "checkpoint.tegc")
    code = main(["fuse", "--data", str(dataset_dir / "manifest.jsonl"),
                 "--stream", f"joint-spatial={ckpt}",
                 "--stream", f"bone-spatial={ckpt}",
                 "--weights", "1,1", "--single-thread"])
    assert code == 0
    assert "fused top-1 accuracy" in capsys.readouterr().out


def test_fuse_argument_validation(trained_dir, dataset_dir):
    manifest = str(dataset_dir / "manifest.jsonl")
    ckpt = str(trained_dir / "checkpoint.tegc")
    assert main(["fuse", "--data", manifest, "--stream", "nonsense"]) == 2
    assert main(["fuse", "--data", manifest,
                 "--stream", f"lidar={ckpt}"]) == 2
    assert main(["fuse", "--data", manifest,
                 "--stream", f"joint-spatial={ckpt}",
                 "--weights", "1,2"]) == 2


# ---------------------------------------------------------------------------
# gradcheck / ablate / dump-adjacency


def test_gradcheck_single_op(capsys):
    assert main(["gradcheck", "--op", "matmul", "--seed", "1"]) == 0
    out = capsys.readouterr().out
    assert "matmul" in out and "ok" in out


def test_gradcheck_unknown_op():
    assert main(["gradcheck", "--op", "einsum"]) == 2


def test_ablate_heads_suite(tmp_path, dataset_dir):
    out = tmp_path / "heads.csv"
    options = [o if o != "epochs=2" else "epochs=1" for o in TRAIN_OPTIONS]
    code = main(["ablate", "--suite", "heads",
                 "--data", str(dataset_dir / "manifest.jsonl"),
                 "--out", str(out), "--single-thread", *options])
    assert code == 0
    with open(out, newline="") as stream:
        rows = list(csv.reader(stream))
    assert rows[0] == ["heads", "top1"]
    assert [int(r[0]) for r in rows[1:]] == [1, 2, 4, 8]
    for r in rows[1:]:
        assert 0.0 <= float(r[1]) <= 1.0


def test_dump_adjacency(tmp_path, dataset_dir):
    run = tmp_path / "run"
    options = [o if o != "layers=3:8:1:tc:3" else "layers=3:8:1:tgraph:3"
               for o in TRAIN_OPTIONS]
    options = [o if o != "epochs=2" else "epochs=1" for o in options]
    options += ["--set", "heads=2"]
    code = main(["train", "--data", str(dataset_dir / "manifest.jsonl"),
                 "--out", str(run), "--single-thread", *options])
    assert code == 0
    dumped = tmp_path / "adjacency"
    code = main(["dump-adjacency", "--checkpoint", str(run / "checkpoint.tegc"),
                 "--data", str(dataset_dir / "manifest.jsonl"),
                 "--sample", "0", "--out", str(dumped)])
    assert code == 0
    names = sorted(p.name for p in dumped.iterdir())
    assert names == ["layer1.head0.tegt", "layer1.head1.tegt"]


def test_dump_adjacency_needs_temporal_graph_layers(trained_dir, dataset_dir, tmp_path):
    code = main(["dump-adjacency", "--checkpoint", str(trained_dir / "checkpoint.tegc"),
                 "--data", str(dataset_dir / "manifest.jsonl"),
                 "--out", str(tmp_path / "adjacency")])
    assert code == 2
