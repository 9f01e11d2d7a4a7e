import json

import numpy as np
import pytest

from smcnn import container
from smcnn.cli import main
from smcnn.model import build_sm_cnn, init_params, load_checkpoint


def exit_code(argv):
    """main() returns a code for runtime errors; argparse raises SystemExit for usage errors."""
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    """A small gen -> prep -> train run shared by the read-only tests below."""
    d = tmp_path_factory.mktemp("cli")
    assert main(["gen", "--out", str(d / "raw.mflw"), "--n-defect", "8", "--n-normal", "8",
                 "--record-length", "600"]) == 0
    assert main(["prep", "--in", str(d / "raw.mflw"), "--out", str(d / "win.mflw")]) == 0
    assert main(["train", "--windows", str(d / "win.mflw"), "--out", str(d / "m.ckpt"),
                 "--history", str(d / "h.csv"), "--epochs", "1"]) == 0
    return d


def test_gen_defaults_and_summary(tmp_path, capsys):
    out = tmp_path / "d.mflw"
    assert main(["gen", "--out", str(out)]) == 0
    data = container.read(out)
    assert data.shape == (398, 300, 16)
    assert int(data.labels.sum()) == 196
    text = capsys.readouterr().out
    assert "defect 196, normal 202" in text and "seed: 7" in text and "snr_nominal" in text
    truth = json.loads((tmp_path / "d.mflw.truth.json").read_text())
    assert len(truth["defects"]) == 398


def test_gen_all_normal(tmp_path):
    out = tmp_path / "n.mflw"
    assert main(["gen", "--out", str(out), "--n-defect", "0", "--n-normal", "3"]) == 0
    assert not container.read(out).labels.any()


def test_gen_is_byte_reproducible(tmp_path):
    a, b = tmp_path / "a.mflw", tmp_path / "b.mflw"
    for p in (a, b):
        main(["gen", "--out", str(p), "--n-defect", "3", "--n-normal", "3", "--seed", "11"])
    assert a.read_bytes() == b.read_bytes()


def test_prep_windows_long_records(workdir):
    data = container.read(workdir / "win.mflw")
    assert data.shape == (32, 300, 16)  # 16 records of 600 samples, stride 300
    assert int(data.labels.sum()) == 8  # each flaw lands in exactly one window
    assert np.abs(data.values).max() <= 1.0


def test_prep_is_byte_reproducible_and_exports_csv(workdir, tmp_path):
    out = tmp_path / "w.mflw"
    csv = tmp_path / "w.csv"
    assert main(["prep", "--in", str(workdir / "raw.mflw"), "--out", str(out), "--csv", str(csv)]) == 0
    assert out.read_bytes() == (workdir / "win.mflw").read_bytes()
    lines = csv.read_text().splitlines()
    assert lines[0].startswith("window,label,record,offset,t,ch0")
    assert len(lines) == 1 + 32 * 300


def test_train_outputs(workdir):
    arch, _ = load_checkpoint(workdir / "m.ckpt")
    assert arch == build_sm_cnn()
    split = json.loads((workdir / "m.ckpt.split.json").read_text())
    assert len(split["train"]) + len(split["test"]) == 32
    assert (workdir / "h.csv").read_text().startswith("epoch,loss,accuracy\n1,")


def test_train_zero_epochs_equals_init(workdir, tmp_path):
    ckpt = tmp_path / "z.ckpt"
    assert main(["train", "--windows", str(workdir / "win.mflw"), "--out", str(ckpt),
                 "--epochs", "0", "--seed", "3"]) == 0
    _, params = load_checkpoint(ckpt)
    init = init_params(build_sm_cnn(), 3)
    assert all(params[k].tobytes() == init[k].tobytes() for k in init)


def test_eval_writes_reports(workdir, tmp_path, capsys):
    prefix = tmp_path / "ev"
    assert main(["eval", "--windows", str(workdir / "win.mflw"),
                 "--checkpoint", str(workdir / "m.ckpt"), "--out", str(prefix)]) == 0
    text = capsys.readouterr().out
    for key in ("accuracy", "precision", "recall", "f1", "auc"):
        assert f"\n{key}: " in "\n" + text
    assert (tmp_path / "ev.csv").exists() and (tmp_path / "ev.roc.csv").exists()


def test_pca_baseline_and_table(workdir, tmp_path, capsys):
    assert main(["baseline", "--windows", str(workdir / "win.mflw"), "--which", "pca-threshold",
                 "--out", str(tmp_path / "pca")]) == 0
    assert main(["eval", "--windows", str(workdir / "win.mflw"),
                 "--checkpoint", str(workdir / "m.ckpt"), "--out", str(tmp_path / "sm")]) == 0
    sm = (tmp_path / "sm.csv").read_text().splitlines()
    pca = (tmp_path / "pca.csv").read_text().splitlines()
    assert sm[0] == pca[0]
    capsys.readouterr()
    assert main(["table", str(tmp_path / "sm.csv"), str(tmp_path / "pca.csv")]) == 0
    rows = capsys.readouterr().out.splitlines()
    assert rows[0] == sm[0] and rows[1].startswith("sm-cnn,") and rows[2].startswith("pca-threshold,")


def test_bench_reports_params(workdir, capsys):
    assert main(["bench", "--checkpoint", str(workdir / "m.ckpt"), "--set", "bench.windows=2"]) == 0
    text = capsys.readouterr().out
    assert "params: 1747890" in text and "1.48M" in text and "fps_e2e" in text


@pytest.mark.parametrize("argv", [
    [],
    ["gen"],
    ["baseline", "--windows", "x", "--which", "svm"],
    ["gen", "--out", "x.mflw", "--set", "generator.bogus=1"],
])
def test_usage_errors_exit_1(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert exit_code(argv) == 1


def test_missing_input_exit_2(tmp_path):
    assert main(["prep", "--in", str(tmp_path / "nope.mflw"), "--out", str(tmp_path / "o")]) == 2


def test_corrupt_input_exit_3(workdir, tmp_path):
    bad = tmp_path / "bad.mflw"
    data = bytearray((workdir / "win.mflw").read_bytes())
    data[1000] ^= 0x10
    bad.write_bytes(bytes(data))
    assert main(["train", "--windows", str(bad), "--out", str(tmp_path / "m.ckpt")]) == 3


def test_single_class_exit_4(tmp_path):
    raw, win = tmp_path / "n.mflw", tmp_path / "nw.mflw"
    main(["gen", "--out", str(raw), "--n-defect", "0", "--n-normal", "4"])
    main(["prep", "--in", str(raw), "--out", str(win)])
    assert main(["train", "--windows", str(win), "--out", str(tmp_path / "m.ckpt")]) == 4


def test_help_per_subcommand(capsys):
    for cmd in ("gen", "prep", "train", "eval", "bench", "baseline", "table"):
        with pytest.raises(SystemExit) as exc:
            main([cmd, "--help"])
        assert exc.value.code == 0
        assert "usage: smcnn " + cmd in capsys.readouterr().out
