import numpy as np
import pytest

from scaffoldnet.checkpoint import checkpoint_load
from scaffoldnet.cli import main, read_config
from scaffoldnet.data import RawImage, write_pgm


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli") / "data"
    assert main(["synth", "--out", str(root), "--per-class", "10", "--seed", "1", "--size", "32"]) == 0
    return root


@pytest.fixture(scope="module")
def copies(dataset):
    """Ten identical copies of one image per class: every split sees the same pictures."""
    root = dataset.parent / "copies"
    for cls in ("airbrushed", "electrospun", "steel_wire"):
        (root / cls).mkdir(parents=True)
        src = sorted((dataset / cls).glob("*.pgm"))[0].read_bytes()
        for i in range(10):
            (root / cls / f"{i}.pgm").write_bytes(src)
    return root


@pytest.fixture(scope="module")
def model(copies):
    out = copies.parent / "m.scfn"
    rc = main(["train", "--data", str(copies), "--out", str(out), "--epochs", "60", "--lr", "0.01",
               "--image-size", "12", "--no-augment", "--batch", "8", "--seed", "3"])
    assert rc == 0
    return out


def test_synth_counts(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "d"), "--per-class", "5", "--seed", "1", "--size", "32"]) == 0
    assert len(list((tmp_path / "d").rglob("*.pgm"))) == 15
    assert "electrospun\t5" in capsys.readouterr().out


def test_synth_repeatable(tmp_path):
    for name in ("a", "b"):
        main(["synth", "--out", str(tmp_path / name), "--per-class", "1", "--seed", "2", "--size", "32"])
    for f in (tmp_path / "a").rglob("*"):
        if f.is_file():
            assert f.read_bytes() == (tmp_path / "b" / f.relative_to(tmp_path / "a")).read_bytes()


def test_train_writes_loadable_checkpoint(model, capsys):
    ckpt = checkpoint_load(model)
    assert 1 <= ckpt.epoch <= 60
    assert ckpt.seed == 3


def test_train_prints_epoch_lines(dataset, tmp_path, capsys):
    main(["train", "--data", str(dataset), "--out", str(tmp_path / "m"), "--epochs", "2", "--image-size", "12",
          "--manifest", str(tmp_path / "split.tsv")])
    lines = [l for l in capsys.readouterr().out.splitlines() if l.startswith("epoch,")]
    assert len(lines) == 2
    assert len((tmp_path / "split.tsv").read_text().splitlines()) == 30


def test_memorised_eval_is_perfect(copies, model, tmp_path, capsys):
    rc = main(["eval", "--data", str(copies), "--model", str(model), "--image-size", "12", "--split", "train",
               "--out-csv", str(tmp_path / "r.csv"), "--out-svg", str(tmp_path / "r.svg")])
    assert rc == 0
    values = dict(line.split(",") for line in capsys.readouterr().out.splitlines())
    assert float(values["accuracy"]) == 1.0
    for key in ("auc_class_0", "auc_class_1", "auc_class_2", "micro_auc", "macro_auc"):
        assert float(values[key]) == 1.0
    assert (tmp_path / "r.csv").exists() and (tmp_path / "r.svg").exists()


def test_predict(dataset, model, tmp_path, capsys):
    img = sorted((dataset / "steel_wire").glob("*.pgm"))[0]
    bad = tmp_path / "bad.pgm"
    bad.write_bytes(b"garbage")
    rc = main(["predict", "--model", str(model), "--image-size", "12", str(img), str(bad)])
    captured = capsys.readouterr()
    assert rc == 1
    path, *probs, name = captured.out.strip().split(",")
    assert path == str(img)
    assert abs(sum(map(float, probs)) - 1) < 1e-5
    assert name in ("airbrushed", "electrospun", "steel_wire")
    assert str(bad) in captured.err


def test_config_file_and_override(tmp_path, capsys):
    cfg = tmp_path / "run.cfg"
    cfg.write_text("# synth settings\nper-class = 2\nsize = 32\nseed = 5\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "a")]) == 0
    assert len(list((tmp_path / "a").rglob("*.pgm"))) == 6
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "b"), "--per-class", "1"]) == 0
    assert len(list((tmp_path / "b").rglob("*.pgm"))) == 3
    assert (tmp_path / "a" / "airbrushed" / "img_5_00000.pgm").exists()


def test_read_config_types(tmp_path):
    cfg = tmp_path / "c"
    cfg.write_text("lr = 0.5\naugment = no\nepochs=3 # trailing comment\n")
    assert read_config(cfg) == {"lr": 0.5, "augment": False, "epochs": 3}


def test_bad_config_line(tmp_path, capsys):
    cfg = tmp_path / "c"
    cfg.write_text("just words\n")
    assert main(["synth", "--config", str(cfg), "--out", str(tmp_path / "x")]) == 1
    assert "expected" in capsys.readouterr().err


def test_missing_required(capsys):
    assert main(["train"]) == 1
    assert "--data" in capsys.readouterr().err


def test_bad_dataset(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "m")]) == 1


def test_corrupt_model(tmp_path, capsys):
    (tmp_path / "m").write_bytes(b"NOPE")
    write_pgm(tmp_path / "i.pgm", RawImage(np.zeros((16, 16))))
    assert main(["predict", "--model", str(tmp_path / "m"), str(tmp_path / "i.pgm")]) == 1
    assert "magic" in capsys.readouterr().err
