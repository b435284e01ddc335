"""Tests for the stepfold command line"""
import json

import pytest

from stepfold.cli import EXIT_CONFIG, EXIT_IO, EXIT_NUMERIC, EXIT_OK, main
from stepfold.data import load_csv, save_csv, swiss_roll
from stepfold.persistence import load_bundle, read_document

TINY = [
    "--steps",
    "5",
    "--batch",
    "16",
    "--hidden",
    "8",
    "--n",
    "200",
    "-q",
]


@pytest.fixture
def teacher_path(tmp_path):
    """A 10 step teacher trained for a few steps through the CLI"""
    path = str(tmp_path / "teacher.json")
    code = main(
        ["train-teacher", "--T", "10", "--schedule", "linear", "--out", path]
        + TINY
    )
    assert code == EXIT_OK
    return path


@pytest.fixture
def student_path(tmp_path, teacher_path):
    """A 5 step student distilled from the teacher"""
    path = str(tmp_path / "student.json")
    code = main(
        ["distill", "--teacher", teacher_path, "--tprime", "5", "--out", path]
        + TINY
    )
    assert code == EXIT_OK
    return path


@pytest.fixture
def data_path(tmp_path):
    path = tmp_path / "data.csv"
    save_csv(path, swiss_roll(300, noise_std=0.05, seed=9))
    return str(path)


"""TRAINING COMMANDS"""


def test_train_teacher_writes_run_files(tmp_path, teacher_path):
    bundle = load_bundle(teacher_path)
    assert bundle.kind == "teacher"
    assert bundle.schedule.T == 10
    assert bundle.metadata["dataset"] == "swiss-roll"
    config = read_document(teacher_path + ".config.json")
    assert config["steps"] == 5
    assert config["hidden_widths"] == [8]
    log = open(teacher_path + ".log.jsonl").read().splitlines()
    assert json.loads(log[-1])["step"] == 5


def test_zero_steps_is_a_valid_run(tmp_path):
    path = str(tmp_path / "untrained.json")
    argv = ["train-teacher", "--T", "20", "--out", path] + TINY
    argv[argv.index("--steps") + 1] = "0"
    assert main(argv) == EXIT_OK
    assert load_bundle(path).metadata["loss_history_tail"] == []


def test_missing_out_is_a_usage_error(capsys):
    assert main(["train-teacher", "--T", "10"]) == EXIT_CONFIG
    assert "usage:" in capsys.readouterr().err


def test_unknown_dataset(tmp_path):
    argv = ["train-teacher", "--dataset", "moons", "--out", "x.json"] + TINY
    assert main(argv) == EXIT_CONFIG


def test_csv_dataset_and_config_file(tmp_path, data_path):
    config = tmp_path / "run.json"
    config.write_text(json.dumps({"steps": 2, "batch_size": 8}))
    path = str(tmp_path / "csv.json")
    argv = [
        "train-teacher",
        "--T",
        "10",
        "--dataset",
        "csv:" + data_path,
        "--config",
        str(config),
        "--out",
        path,
        "-q",
    ]
    assert main(argv) == EXIT_OK
    assert read_document(path + ".config.json")["batch_size"] == 8
    assert load_bundle(path).metadata["dataset"] == "data.csv"


def test_distill_uniform_student(teacher_path, student_path):
    bundle = load_bundle(student_path)
    assert bundle.kind == "student"
    assert list(bundle.phi.phi) == [0, 2, 4, 6, 8, 10]
    assert read_document(student_path + ".config.json")["loss_norm"] == "l1"


def test_distill_non_divisor(tmp_path, teacher_path):
    path = str(tmp_path / "seven.json")
    argv = ["distill", "--teacher", teacher_path, "--tprime", "7"]
    assert main(argv + ["--out", path] + TINY) == EXIT_OK
    assert load_bundle(path).phi.T_prime == 7


def test_distill_phi_must_end_on_T(tmp_path, teacher_path):
    argv = ["distill", "--teacher", teacher_path, "--phi", "0,3,6,9"]
    argv += ["--out", str(tmp_path / "bad.json")] + TINY
    assert main(argv) == EXIT_CONFIG


def test_distill_phi_from_file(tmp_path, teacher_path):
    phi_file = tmp_path / "phi.txt"
    phi_file.write_text("0\n1\n5\n10\n")
    path = str(tmp_path / "file.json")
    argv = ["distill", "--teacher", teacher_path, "--phi", str(phi_file)]
    assert main(argv + ["--out", path] + TINY) == EXIT_OK
    assert list(load_bundle(path).phi.phi) == [0, 1, 5, 10]


def test_train_scratch(tmp_path):
    path = str(tmp_path / "scratch.json")
    argv = ["train-scratch", "--T", "20", "--tprime", "4", "--mode"]
    argv += ["scattered", "--out", path] + TINY
    assert main(argv) == EXIT_OK
    bundle = load_bundle(path)
    assert bundle.metadata["origin"] == "scratch"
    assert bundle.phi.T_prime == 4


def test_training_is_reproducible(tmp_path):
    outputs = []
    for name in ("one.json", "two.json"):
        path = tmp_path / name
        argv = ["train-teacher", "--T", "10", "--out", str(path)] + TINY
        assert main(argv) == EXIT_OK
        outputs.append(path.read_bytes())
    assert outputs[0] == outputs[1]


"""SAMPLING AND EVALUATION"""


def test_sample_ddim_is_reproducible(tmp_path, student_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for path in paths:
        argv = ["sample", "--ckpt", student_path, "--sampler", "ddim"]
        argv += ["--n", "40", "--seed", "3", "--out", str(path), "-q"]
        assert main(argv) == EXIT_OK
    assert paths[0].read_bytes() == paths[1].read_bytes()
    assert load_csv(paths[0]).shape == (40, 2)


def test_sample_with_figures(tmp_path, teacher_path):
    out = tmp_path / "s.csv"
    svg = tmp_path / "s.svg"
    chain = tmp_path / "chain.svg"
    argv = ["sample", "--ckpt", teacher_path, "--n", "30", "--out", str(out)]
    argv += ["--svg", str(svg), "--trajectory-svg", str(chain), "-q"]
    assert main(argv) == EXIT_OK
    assert svg.exists()
    assert "t=10" in chain.read_text()


def test_evaluate_report(tmp_path, student_path, data_path):
    report = tmp_path / "report.json"
    argv = ["evaluate", "--ckpt", student_path, "--data", data_path]
    argv += ["--n", "100", "--report", str(report), "-q"]
    assert main(argv) == EXIT_OK
    values = json.loads(report.read_text())
    assert values["energy_distance"] >= 0
    assert values["sliced_wasserstein"] >= 0
    assert values["config"]["n"] == 100
    assert values["seed"] == 0


def test_evaluate_consistency_keys(tmp_path, teacher_path, student_path):
    report = tmp_path / "report.json"
    argv = ["evaluate", "--ckpt", student_path, "--against", teacher_path]
    argv += ["--consistency", "--consistency-n", "50"]
    argv += ["--report", str(report), "-q"]
    assert main(argv) == EXIT_OK
    values = json.loads(report.read_text())
    assert "paired_mse" in values
    assert "random_baseline_mse" in values


def test_evaluate_consistency_needs_a_teacher(tmp_path, student_path):
    argv = ["evaluate", "--ckpt", student_path, "--consistency"]
    argv += ["--report", str(tmp_path / "r.json"), "-q"]
    assert main(argv) == EXIT_CONFIG


def test_evaluate_unknown_metric(tmp_path, student_path, data_path):
    argv = ["evaluate", "--ckpt", student_path, "--data", data_path]
    argv += ["--metrics", "fid", "--report", str(tmp_path / "r.json"), "-q"]
    assert main(argv) == EXIT_CONFIG


def test_interpolate(tmp_path, teacher_path, student_path):
    out = tmp_path / "interp.csv"
    argv = ["interpolate", "--teacher", teacher_path, "--student"]
    argv += [student_path, "--k", "4", "--out", str(out), "-q"]
    assert main(argv) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0] == "model,index,x0,x1"
    assert len(lines) == 9
    assert lines[1].startswith("teacher,0,")
    assert lines[5].startswith("student,0,")


"""CHECK"""


def test_check_passes_on_a_trained_student(student_path, capsys):
    assert main(["check", "--ckpt", student_path, "-q"]) == EXIT_OK
    assert "10 of 10 checks passed" in capsys.readouterr().out


def test_check_names_a_corrupted_alpha(tmp_path, teacher_path, capsys):
    document = read_document(teacher_path)
    alpha = document["alpha"]
    alpha[2], alpha[3] = alpha[3], alpha[2]
    path = tmp_path / "corrupted.json"
    path.write_text(json.dumps(document))
    assert main(["check", "--ckpt", str(path), "-q"]) == EXIT_NUMERIC
    out = capsys.readouterr().out
    assert "Results for test 'schedule':\n Fail!" in out
    assert "strictly decreasing" in out


def test_io_errors(tmp_path):
    broken = tmp_path / "broken.json"
    broken.write_text("{not json")
    assert main(["check", "--ckpt", str(broken), "-q"]) == EXIT_IO
    missing = str(tmp_path / "absent.json")
    assert main(["sample", "--ckpt", missing, "--out", "x.csv"]) == EXIT_IO
