import math

import numpy as np
import pytest

from dualtv.analysis import CSV_COLUMNS
from dualtv.cli import main, read_config_file
from dualtv.experiments import ExperimentSweep, RunConfig, build_problem, run_denoise, run_sweep
from dualtv.imageio import load_image, save_image, synthetic_image
from dualtv.schwarz import ConfigurationError

SMALL = dict(size=32, reference_iterations=5000, outer_iterations=15)


def test_defaults():
    c = RunConfig()
    assert (c.lam, c.tau, c.noise_variance, c.reference_iterations) == (10.0, 0.25, 0.05, 100_000)
    c.validate()


@pytest.mark.parametrize("change", [
    dict(lam=0.0), dict(tau=1.5), dict(noise_variance=-1), dict(solver="admm"), dict(model="tv"),
    dict(outer_iterations=-1), dict(threads=0), dict(size=4), dict(n1=0),
])
def test_config_validation(change):
    with pytest.raises(ConfigurationError):
        RunConfig(**change).validate()


def test_denoise_improves_psnr_and_writes(tmp_path):
    cfg = RunConfig(**SMALL, output_csv=str(tmp_path / "r.csv"), output_image=str(tmp_path / "r.pgm"))
    res = run_denoise(cfg)
    assert res.psnr_restored > res.psnr_noisy
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0].startswith("# ") and "seed=1" in lines[0]
    assert lines[1] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2 + 15
    img, _ = load_image(tmp_path / "r.pgm")
    assert np.max(np.abs(img.values - np.clip(res.restored.values, 0, 1))) <= 0.5 / 255 + 1e-15


def test_zero_iterations_returns_observed_image():
    res = run_denoise(RunConfig(**{**SMALL, "outer_iterations": 0}), write=False)
    prob = build_problem(RunConfig(**SMALL))
    assert res.records == []
    np.testing.assert_array_equal(res.restored.values, prob.noisy.values)
    assert res.psnr_restored == res.psnr_noisy


def test_fista_and_schwarz_agree():
    base = RunConfig(size=32, reference_iterations=0)
    s = run_denoise(base.replace(outer_iterations=60), write=False)
    f = run_denoise(base.replace(solver="fista", outer_iterations=3000), write=False)
    assert abs(s.final_energy - f.final_energy) <= 1e-6 * abs(f.final_energy)
    assert math.isnan(s.records[-1].gap)
    assert len(f.records) == 3000


def test_image_input(tmp_path):
    save_image(synthetic_image("blocks", 24), tmp_path / "in.pgm")
    res = run_denoise(RunConfig(image=str(tmp_path / "in.pgm"), outer_iterations=5, reference_iterations=2000,
                                delta=4), write=False)
    assert res.restored.geometry.shape == (24, 24)


def test_empty_sweep_writes_nothing(tmp_path):
    res = run_sweep(ExperimentSweep("delta", [], RunConfig(output_dir=str(tmp_path / "out"))))
    assert res.points == []
    assert not (tmp_path / "out").exists()


def test_sweep_rejects_invalid_points():
    with pytest.raises(ConfigurationError):
        run_sweep(ExperimentSweep("delta", [2, 40], RunConfig(**SMALL)))
    with pytest.raises(ConfigurationError):
        run_sweep(ExperimentSweep("shape", [2], RunConfig(**SMALL)))


def test_small_delta_sweep(tmp_path):
    base = RunConfig(size=32, reference_iterations=20_000, outer_iterations=40, output_dir=str(tmp_path))
    res = run_sweep(ExperimentSweep("delta", [2, 8], base))
    assert [p.csv_path.name for p in res.points] == ["delta_2.csv", "delta_8.csv"]
    assert (tmp_path / "delta_summary.txt").exists()
    assert all(p.fit.valid and 0 < p.fit.gamma < 1 for p in res.points)
    assert res.points[1].result.records[-1].rel_gap <= res.points[0].result.records[-1].rel_gap


def test_config_file(tmp_path):
    f = tmp_path / "run.cfg"
    f.write_text("# comment\nlam = 5\nnoise-variance = 0.01\nwarm_start = yes\n")
    assert read_config_file(str(f)) == {"lam": 5.0, "noise_variance": 0.01, "warm_start": True}
    f.write_text("bogus = 1\n")
    with pytest.raises(ConfigurationError):
        read_config_file(str(f))


def test_cli_denoise_flags_override_file(tmp_path, capsys):
    f = tmp_path / "run.cfg"
    f.write_text("size = 32\nouter_iterations = 3\nreference_iterations = 500\nlam = 5\n")
    csv = tmp_path / "o.csv"
    rc = main(["denoise", "--config", str(f), "--lam", "7", "--output-csv", str(csv), "--no-record-time"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "lam=7" in out and "iterations        3" in out
    rows = csv.read_text().splitlines()[2:]
    assert all(r.split(",")[7] == "0" for r in rows)


@pytest.mark.parametrize("argv,code", [
    (["denoise", "--tau", "2"], 2),
    (["denoise", "--delta", "40", "--size", "32"], 2),
    (["denoise", "--image", "/does/not/exist.pgm"], 3),
    (["denoise", "--config", "/does/not/exist.cfg"], 3),
    (["sweep-domains", "--values", "2by2"], 2),
])
def test_cli_exit_codes(argv, code, capsys):
    assert main(argv) == code
    assert capsys.readouterr().err


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_cli_solver_failure(tmp_path, capsys):
    bad = tmp_path / "nan.pgm"
    bad.write_text("P2\n8 8\n255\n" + " ".join(["0"] * 64))
    # an absurd lambda overflows the energy
    assert main(["denoise", "--image", str(bad), "--lam", "1e308", "--outer-iterations", "2",
                 "--reference-iterations", "0", "--delta", "1"]) == 4


def test_cli_sweep_and_compare(tmp_path, capsys):
    common = ["--size", "32", "--outer-iterations", "5", "--reference-iterations", "1000", "--output-dir", str(tmp_path)]
    assert main(["sweep-domains", "--values", "1x1,2x2", "--delta", "2", *common]) == 0
    assert (tmp_path / "domains_1x1.csv").exists() and (tmp_path / "domains_2x2.csv").exists()
    assert main(["compare", *common]) == 0
    assert (tmp_path / "schwarz.csv").exists() and (tmp_path / "fista.csv").exists()
    assert "relative energy difference" in capsys.readouterr().out


def test_cli_selftest(capsys):
    assert main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 5 and "FAIL" not in out
