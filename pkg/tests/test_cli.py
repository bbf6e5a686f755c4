import numpy as np
import pytest

from text2sign.cli import main
from text2sign.corpus import CorpusPair, ParallelCorpus, save_corpus
from text2sign.seq2seq import load_model
from text2sign.skeleton import load_skeleton_stream, project_keypoint, save_keypoint_frames, write_depth_pgm
from .synthetic_scene import CAMERA, calibration_stream, limb_lengths, calibration_pose

TINY_CORPUS = ParallelCorpus((
    CorpusPair("¿Qué tal?", ("Tú", "Bien")),
    CorpusPair("Buenos días", ("Bien", "Día")),
    CorpusPair("¡Vamos a comer!", ("Vamos", "Comer")),
    CorpusPair("Dame la mano", ("Dame", "mano")),
))


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    path = tmp_path_factory.mktemp("cli")
    save_corpus(TINY_CORPUS, path / "corpus.tsv")
    code = main(["train", "--corpus", str(path / "corpus.tsv"),
                 "--model", str(path / "model.npz"),
                 "--history", str(path / "history.csv"),
                 "--lr", "0.01", "--epochs", "60", "--hidden", "24",
                 "--val-fraction", "0", "--seed", "3"])
    assert code == 0
    return path


def test_train_outputs(workdir, capsys):
    capsys.readouterr()
    assert (workdir / "model.npz").exists()
    lines = (workdir / "history.csv").read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss"
    assert len(lines) == 61
    model = load_model(workdir / "model.npz")
    assert model.n_hidden == 24


def test_train_history_row_count(tmp_path):
    corpus_path = tmp_path / "c.tsv"
    save_corpus(TINY_CORPUS, corpus_path)
    code = main(["train", "--corpus", str(corpus_path),
                 "--model", str(tmp_path / "m.npz"),
                 "--history", str(tmp_path / "h.csv"),
                 "--epochs", "5", "--hidden", "8", "--val-fraction", "0.25"])
    assert code == 0
    rows = (tmp_path / "h.csv").read_text().splitlines()[1:]
    assert len(rows) == 5
    assert all(len(r.split(",")) == 3 and r.split(",")[2] for r in rows)


def test_train_plot(tmp_path):
    corpus_path = tmp_path / "c.tsv"
    save_corpus(TINY_CORPUS, corpus_path)
    code = main(["train", "--corpus", str(corpus_path),
                 "--model", str(tmp_path / "m.npz"),
                 "--history", str(tmp_path / "h.csv"),
                 "--epochs", "2", "--hidden", "8",
                 "--plot", str(tmp_path / "loss.png")])
    assert code == 0
    assert (tmp_path / "loss.png").stat().st_size > 0


def test_train_rejects_zero_epochs(tmp_path, capsys):
    code = main(["train", "--epochs", "0", "--model", str(tmp_path / "m.npz")])
    capsys.readouterr()
    assert code == 1


def test_train_missing_corpus(tmp_path, capsys):
    code = main(["train", "--corpus", str(tmp_path / "nope.tsv"),
                 "--model", str(tmp_path / "m.npz"),
                 "--history", str(tmp_path / "h.csv")])
    err = capsys.readouterr().err
    assert code == 2
    assert "not found" in err


def test_translate_prints_glosses(workdir, capsys):
    code = main(["translate", "--model", str(workdir / "model.npz"),
                 "--text", "¿Qué tal?", "--text", "Buenos días"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    assert out == ["Tú Bien", "Bien Día"]


def test_translate_empty_text(workdir, capsys):
    code = main(["translate", "--model", str(workdir / "model.npz"), "--text", ""])
    out = capsys.readouterr().out
    assert code == 0
    assert out == "\n"


def test_translate_missing_model(tmp_path, capsys):
    code = main(["translate", "--model", str(tmp_path / "none.npz"), "--text", "hola"])
    assert code == 2
    assert "not found" in capsys.readouterr().err


def test_translate_plan_writes_log(workdir, capsys):
    log = workdir / "sim.csv"
    code = main(["translate", "--model", str(workdir / "model.npz"),
                 "--text", "¿Qué tal?", "--plan", "--log", str(log), "--rate", "20"])
    out = capsys.readouterr().out
    assert code == 0
    assert "plan: 2 signs" in out
    lines = log.read_text().splitlines()
    assert lines[0] == "time,joint,angle"
    assert len(lines) > 20


def test_translate_plan_missing_token(workdir, tmp_path, capsys):
    small_lut = tmp_path / "small.txt"
    small_lut.write_text("[Tú]\nduration=0.5 right_elbow=0.5\n")
    code = main(["translate", "--model", str(workdir / "model.npz"),
                 "--text", "¿Qué tal?", "--plan", "--lut", str(small_lut),
                 "--log", str(tmp_path / "sim.csv")])
    err = capsys.readouterr().err
    assert code == 2
    assert "missing tokens: Bien" in err


def test_eval_metrics(workdir, capsys):
    code = main(["eval", "--model", str(workdir / "model.npz"),
                 "--corpus", str(workdir / "corpus.tsv")])
    out = capsys.readouterr().out
    assert code == 0
    assert "exact_match: 1.0000" in out
    assert "token_accuracy: 1.0000" in out


def test_eval_table(workdir, capsys):
    code = main(["eval", "--model", str(workdir / "model.npz"),
                 "--corpus", str(workdir / "corpus.tsv"), "--table"])
    out = capsys.readouterr().out.splitlines()
    assert code == 0
    table_rows = [l for l in out if "\t" in l]
    assert len(table_rows) == len(TINY_CORPUS)
    assert table_rows[0] == "¿Qué tal?\tTú Bien"


@pytest.fixture()
def scene_dir(tmp_path):
    kp_frames, depth_frames = calibration_stream(12)
    save_keypoint_frames(tmp_path / "keypoints.txt", kp_frames)
    depth_dir = tmp_path / "depth"
    depth_dir.mkdir()
    for i, depth in enumerate(depth_frames):
        write_depth_pgm(depth_dir / f"frame_{i:04d}.pgm", depth, CAMERA.f)
    return tmp_path


def test_reconstruct_matches_analytic_oracle(scene_dir, capsys):
    out_path = scene_dir / "skeletons.txt"
    code = main(["reconstruct", "--keypoints", str(scene_dir / "keypoints.txt"),
                 "--depth", str(scene_dir / "depth"), "--output", str(out_path)])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "frames: 12" in stdout
    skeletons = load_skeleton_stream(out_path)
    assert len(skeletons) == 12
    # independent oracle: back-project the keypoint file rows through the
    # pinhole formula at the true (millimeter-exact) depth
    from text2sign.skeleton import load_keypoint_frames
    kp_frames = load_keypoint_frames(scene_dir / "keypoints.txt")
    pose = calibration_pose()
    for skel in skeletons:
        for kp in kp_frames[0]:
            expected = project_keypoint(kp, float(pose[kp.part][2]), CAMERA)
            assert np.allclose(skel.points[kp.part], expected, atol=1e-9)


def test_reconstruct_calibrate_mode(scene_dir, capsys):
    calib_path = scene_dir / "calibration.txt"
    code = main(["reconstruct", "--keypoints", str(scene_dir / "keypoints.txt"),
                 "--depth", str(scene_dir / "depth"), "--output", str(calib_path),
                 "--calibrate"])
    stdout = capsys.readouterr().out
    assert code == 0
    assert "calibrated limbs: 15" in stdout
    truth = limb_lengths(calibration_pose())
    from text2sign.skeleton import LimbCalibration
    calib = LimbCalibration.load(calib_path)
    for limb, length in truth.items():
        assert calib.lengths[limb] == pytest.approx(length, abs=1e-3)


def test_reconstruct_frame_mismatch(scene_dir, capsys):
    kp_frames, _ = calibration_stream(5)
    save_keypoint_frames(scene_dir / "short.txt", kp_frames)
    code = main(["reconstruct", "--keypoints", str(scene_dir / "short.txt"),
                 "--depth", str(scene_dir / "depth"),
                 "--output", str(scene_dir / "out.txt")])
    err = capsys.readouterr().err
    assert code == 2
    assert "keypoint frames" in err


def test_usage_error_exit_code(capsys):
    assert main(["unknown-command"]) == 1
    capsys.readouterr()
    assert main([]) == 1
    capsys.readouterr()


def test_data_dir_env_override(tmp_path, monkeypatch, capsys):
    # a corpus dropped into TEXT2SIGN_DATA_DIR becomes the default
    save_corpus(TINY_CORPUS, tmp_path / "lse_corpus.tsv")
    monkeypatch.setenv("TEXT2SIGN_DATA_DIR", str(tmp_path))
    code = main(["train", "--model", str(tmp_path / "m.npz"),
                 "--history", str(tmp_path / "h.csv"),
                 "--epochs", "1", "--hidden", "8", "--val-fraction", "0"])
    out = capsys.readouterr().out
    assert code == 0
    assert f"trained 1 epochs on {len(TINY_CORPUS)} pairs" in out
