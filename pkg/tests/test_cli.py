import time

import numpy as np
import pytest

from ebsr import config as runcfg
from ebsr.cli import run
from ebsr.data import read_manifest, render_scene
from ebsr.errors import ConfigError
from ebsr.event_sim import read_events
from ebsr.imageio import read_png, write_png

TOY = ["--preset", "toy"]


def write_sequences(root, count=2, size=32, frames=13, static=False, seed=0):
    rng = np.random.default_rng(seed)
    for s in range(count):
        d = root / f"seq{s}"
        d.mkdir(parents=True)
        seq = render_scene(rng, size, size, frames)
        if static:
            seq = [seq[0]] * frames
        for i, f in enumerate(seq):
            write_png(d / f"{i:04d}.png", f)
    return root


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    write_sequences(root / "frames")
    assert run(["simulate", "--input", str(root / "frames"), "--output", str(root / "ds"), *TOY]) == 0
    return root / "ds"


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("train") / "run"
    assert run(["train", "--manifest", str(dataset), "--output", str(out), *TOY, "--epochs", "1",
                "--crop", "16", "--batch", "2"]) == 0
    return out


# --- config -----------------------------------------------------------------

def test_config_defaults_and_precedence(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nepochs = 3\nlr = 0.001\n")
    cfg = runcfg.resolve(runcfg.read_ini(ini), {"epochs": "5"})
    assert cfg["epochs"] == 5 and cfg["lr"] == 1e-3 and cfg["batch"] == 4


def test_config_rejects_unknown_and_badly_typed(tmp_path):
    ini = tmp_path / "c.ini"
    ini.write_text("[run]\nepochz = 3\n")
    with pytest.raises(ConfigError):
        runcfg.read_ini(ini)
    with pytest.raises(ConfigError):
        runcfg.resolve({}, {"epochs": "three"})
    with pytest.raises(ConfigError):
        runcfg.resolve({}, {"scale": "3"})
    with pytest.raises(ConfigError):
        runcfg.resolve({}, {"mcer_scales": "0.5,1.0"})


def test_config_echo_roundtrips(tmp_path):
    cfg = runcfg.resolve({}, {"preset": "toy", "crop": "none", "mcer_scales": "1,0.5"})
    runcfg.dump_ini(cfg, tmp_path / "e.ini")
    assert runcfg.resolve(runcfg.read_ini(tmp_path / "e.ini")) == cfg


def test_ablation_flags_shape_network():
    cfg = runcfg.resolve({}, {"preset": "toy", "use_mcer": False, "use_scma": False})
    net = runcfg.network_config(cfg)
    assert net.mcer_channels == 4 and not net.use_scma and net.use_irg


# --- commands ---------------------------------------------------------------

def test_params_command(capsys):
    assert run(["params"]) == 0
    n = int(capsys.readouterr().out.split()[0])
    assert abs(n - 7.3e6) / 7.3e6 < 0.15


def test_simulate_writes_manifest_and_files(dataset):
    root, entries = read_manifest(dataset)
    assert len(entries) == 2
    for e in entries:
        for key in ("hr", "blurry", "events", "sidecar"):
            assert (root / e[key]).exists()
    assert (dataset / "config.ini").exists()


def test_simulate_is_deterministic(dataset, tmp_path):
    frames = dataset.parent / "frames"
    assert run(["simulate", "--input", str(frames), "--output", str(tmp_path / "again"), *TOY]) == 0
    for f in dataset.iterdir():
        if f.name != "config.ini":
            assert f.read_bytes() == (tmp_path / "again" / f.name).read_bytes(), f.name


def test_simulate_static_scene(tmp_path):
    write_sequences(tmp_path / "frames", count=1, static=True)
    assert run(["simulate", "--input", str(tmp_path / "frames"), "--output", str(tmp_path / "ds"), *TOY]) == 0
    assert len(read_events(tmp_path / "ds" / "seq0_000.evt1")) == 0
    blurry = read_png(tmp_path / "ds" / "seq0_000_blurry.png")
    hr = read_png(tmp_path / "ds" / "seq0_000_hr.png")
    assert blurry.shape[1:] == (hr.shape[1] // 2, hr.shape[2] // 2)


def test_simulate_missing_input(tmp_path):
    assert run(["simulate", "--input", str(tmp_path / "none"), "--output", str(tmp_path / "ds")]) == 3
    assert not (tmp_path / "ds").exists()


def test_train_missing_manifest_creates_nothing(tmp_path):
    assert run(["train", "--manifest", str(tmp_path / "nope"), "--output", str(tmp_path / "run"), *TOY]) == 3
    assert not (tmp_path / "run").exists()


def test_train_schema_violation_exits_before_compute(dataset, tmp_path):
    assert run(["train", "--manifest", str(dataset), "--output", str(tmp_path / "run"), "--epochs", "x"]) == 2
    assert run(["train", "--manifest", str(dataset), "--output", str(tmp_path / "run"), "--beta", "0.1",
                *TOY]) == 2
    assert not (tmp_path / "run").exists()


def test_train_refuses_non_empty_output(dataset):
    assert run(["train", "--manifest", str(dataset), "--output", str(dataset), *TOY]) == 2


def test_train_smoke_run(trained):
    for name in ("config.ini", "log.csv", "last.ckpt", "best.ckpt"):
        assert (trained / name).exists()
    assert len((trained / "log.csv").read_text().splitlines()) == 2


def test_train_smoke_run_is_fast(dataset, tmp_path):
    t0 = time.perf_counter()
    assert run(["train", "--manifest", str(dataset), "--output", str(tmp_path / "r"), *TOY, "--epochs", "1",
                "--crop", "32"]) == 0
    assert time.perf_counter() - t0 < 120


@pytest.mark.parametrize("flag", ["--no-mcer", "--no-scma", "--no-irg"])
def test_train_ablation_flags(dataset, tmp_path, flag):
    assert run(["train", "--manifest", str(dataset), "--output", str(tmp_path / "r"), *TOY, "--epochs", "1",
                "--crop", "16", flag]) == 0
    assert run(["eval", "--manifest", str(dataset), "--checkpoint", str(tmp_path / "r" / "last.ckpt"),
                "--output", str(tmp_path / "e")]) == 0


def test_train_scale_mismatch(dataset, tmp_path, capsys):
    assert run(["train", "--manifest", str(dataset), "--output", str(tmp_path / "r"), *TOY, "--scale", "4"]) == 2
    assert "scale" in capsys.readouterr().err


def test_eval_writes_csv(dataset, trained, tmp_path):
    assert run(["eval", "--manifest", str(dataset), "--checkpoint", str(trained / "last.ckpt"),
                "--output", str(tmp_path / "e")]) == 0
    lines = (tmp_path / "e" / "metrics.csv").read_text().splitlines()
    assert lines[0] == "id,psnr,ssim" and len(lines) == 3


def test_eval_identical_predictions_give_ssim_one(dataset, tmp_path):
    root, entries = read_manifest(dataset)
    preds = tmp_path / "preds"
    preds.mkdir()
    for e in entries:
        (preds / f"{e['id']}.png").write_bytes((root / e["hr"]).read_bytes())
    assert run(["eval", "--manifest", str(dataset), "--predictions", str(preds), "--output",
                str(tmp_path / "e")]) == 0
    rows = (tmp_path / "e" / "metrics.csv").read_text().splitlines()[1:]
    assert all(r.split(",")[1:] == ["100.0", "1.0"] for r in rows)


def test_eval_needs_one_model_source(dataset, tmp_path):
    assert run(["eval", "--manifest", str(dataset), "--output", str(tmp_path / "e")]) == 2


def test_infer_shape_and_determinism(dataset, trained, tmp_path):
    args = ["infer", "--checkpoint", str(trained / "last.ckpt"), "--blurry", str(dataset / "seq0_000_blurry.png"),
            "--events", str(dataset / "seq0_000.evt1")]
    assert run([*args, "--output", str(tmp_path / "a")]) == 0
    assert run([*args, "--output", str(tmp_path / "b")]) == 0
    lr = read_png(dataset / "seq0_000_blurry.png")
    out = read_png(tmp_path / "a" / "restored.png")
    assert out.shape == (lr.shape[0], 2 * lr.shape[1], 2 * lr.shape[2])
    assert (tmp_path / "a" / "restored.png").read_bytes() == (tmp_path / "b" / "restored.png").read_bytes()


def test_infer_geometry_mismatch(dataset, trained, tmp_path, capsys):
    write_png(tmp_path / "small.png", np.zeros((1, 8, 8)))
    assert run(["infer", "--checkpoint", str(trained / "last.ckpt"), "--blurry", str(tmp_path / "small.png"),
                "--events", str(dataset / "seq0_000.evt1"), "--sidecar", str(dataset / "seq0_000.json"),
                "--output", str(tmp_path / "o")]) == 2
    assert "(8, 8)" in capsys.readouterr().err
    assert not (tmp_path / "o").exists()


def test_corrupt_event_file_is_io_error(dataset, trained, tmp_path):
    (tmp_path / "bad.evt1").write_bytes(b"NOPE" + bytes(12))
    (tmp_path / "bad.json").write_text((dataset / "seq0_000.json").read_text())
    assert run(["infer", "--checkpoint", str(trained / "last.ckpt"), "--blurry", str(dataset / "seq0_000_blurry.png"),
                "--events", str(tmp_path / "bad.evt1"), "--output", str(tmp_path / "o")]) == 3


def test_commands_do_not_mutate_inputs(dataset, trained, tmp_path):
    before = {f.name: f.read_bytes() for f in dataset.iterdir()}
    assert run(["eval", "--manifest", str(dataset), "--checkpoint", str(trained / "last.ckpt"),
                "--output", str(tmp_path / "e")]) == 0
    assert {f.name: f.read_bytes() for f in dataset.iterdir()} == before
