import csv
import math

import numpy as np
import pytest

from redpro import bench, cli
from redpro import denoisers as dn
from redpro.forward import BLUR, BLUR_THEN_DECIMATE, delta_kernel
from redpro.imaging import load_png, luminance, psnr, save_png
from redpro.solvers import CONSTANT, IterationTrace, SolverConfig, StepSchedule, TraceRecord


@pytest.fixture
def images(tmp_path):
    rng = np.random.default_rng(0)
    yy, xx = np.mgrid[0:24, 0:24]
    paths = []
    for i in range(2):
        base = 100 + 60 * np.sin((xx + 3 * i) / 4.0) * np.cos(yy / 5.0)
        rgb = np.stack([base, base * 0.8 + 20, 255 - base], axis=-1) + rng.normal(0, 3, (24, 24, 3))
        p = tmp_path / "in" / f"img{i}.png"
        save_png(rgb, p)
        paths.append(p)
    return paths


def _hsd_config(images, out, n=5, **kw):
    return bench.ExperimentConfig(
        task=kw.pop("task", "deblur_uniform"), images=images, denoiser=dn.median_denoiser(3),
        algorithm="hsd", solver=SolverConfig(outer_iters=n, alpha=0.5, step=StepSchedule(CONSTANT, 1.0)),
        out_dir=out, **kw)


def _read_summary(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_task_models():
    m = bench.degradation_for_task("deblur_uniform")
    assert m.kind == BLUR and m.kernel.taps.shape == (9, 9) and m.noise_sigma == pytest.approx(math.sqrt(2))
    m = bench.degradation_for_task("deblur_gaussian")
    assert m.kernel.taps.shape == (9, 9) and m.kernel.taps.sum() == pytest.approx(1.0)
    m = bench.degradation_for_task("superres")
    assert m.kind == BLUR_THEN_DECIMATE and m.decimation == 3 and m.noise_sigma == 5.0
    assert m.kernel.taps.shape == (7, 7)
    with pytest.raises(ValueError):
        bench.degradation_for_task("denoise")


def test_presets():
    algo, den, cfg = bench.preset("hsd", "deblur_uniform")
    assert algo == "hsd" and den.kind == "nlm" and den.strength == 3.25
    assert cfg.alpha == 0.035 and cfg.step.kind == "diminishing_power"
    assert cfg.step.mu0 == pytest.approx(2.0 / (0.5 + 0.02))
    for name in bench.PRESETS:
        for task in bench.TASKS:
            bench.preset(name, task)
    with pytest.raises(ValueError):
        bench.preset("bm3d")


def test_identity_pipeline_is_lossless(images, tmp_path):
    cfg = _hsd_config(images, tmp_path / "out", n=0, kernel=delta_kernel(), noise_sigma=0.0)
    res = bench.run_experiment(cfg)
    assert all(r.restored_psnr == math.inf and r.degraded_psnr == math.inf for r in res.rows)


def test_run_is_deterministic_and_psnr_matches_files(images, tmp_path):
    a = bench.run_experiment(_hsd_config(images, tmp_path / "a"))
    b = bench.run_experiment(_hsd_config(images, tmp_path / "b"))
    for ra, rb in zip(a.rows, b.rows):
        assert ra.trace_path.read_bytes() == rb.trace_path.read_bytes()
        assert ra.restored_path.read_bytes() == rb.restored_path.read_bytes()
    sa, sb = _read_summary(a.summary_path), _read_summary(b.summary_path)
    assert [r["image"] for r in sa] == [str(p) for p in images]
    strip = lambda rows: [{k: v for k, v in r.items() if k != "seconds"} for r in rows]  # noqa: E731
    assert strip(sa) == strip(sb)
    for row, path in zip(sa, images):
        gt = luminance(load_png(path))
        restored = luminance(load_png(tmp_path / "a" / f"{path.stem}_restored.png"))
        assert abs(float(row["restored_psnr"]) - psnr(restored, gt)) < 0.01
    c = bench.run_experiment(_hsd_config(images, tmp_path / "c", seed=1))
    assert c.rows[0].trace_path.read_bytes() != a.rows[0].trace_path.read_bytes()


def test_superres_shapes(images, tmp_path):
    res = bench.run_experiment(_hsd_config(images, tmp_path / "sr", n=2, task="superres"))
    out = load_png(res.rows[0].restored_path)
    assert out.shape[:2] == (24, 24)
    assert load_png(tmp_path / "sr" / "img0_degraded.png").shape[:2] == (8, 8)


def test_divergence_is_recorded_and_run_continues(images, tmp_path):
    cfg = _hsd_config(images, tmp_path / "div", n=400)
    cfg.solver = cfg.solver.replace(alpha=1.0, step=StepSchedule(CONSTANT, 400.0))
    cfg.denoiser = dn.identity()
    res = bench.run_experiment(cfg)
    assert len(res.rows) == 2 and all(r.diverged for r in res.rows)
    rows = _read_summary(res.summary_path)
    assert all(r["restored_psnr"] == "nan" for r in rows)
    assert res.rows[1].trace_path.exists()
    assert math.isnan(res.average_psnr)


def test_duplicate_stems_rejected(images, tmp_path):
    with pytest.raises(ValueError):
        _hsd_config([images[0], images[0]], tmp_path)


def test_probe_suite_projection_box(tmp_path):
    samples = bench.synthetic_samples((8, 8), 20, seed=3)
    res = bench.run_probe_suite(dn.projection_box(64, 192), samples, out_dir=tmp_path)
    assert res.d_hat == 0.0 and res.flags == [] and res.passed
    assert (tmp_path / "summary.csv").exists() and (tmp_path / "cocoercivity.csv").exists()


def test_probe_suite_scaled_negation():
    samples = bench.synthetic_samples((6, 6), 20, seed=4, lo=-1, hi=1)
    res = bench.run_probe_suite(dn.scaled_negation(3.0), samples, fixed_points=[np.zeros((6, 6))])
    assert res.d_hat == pytest.approx(0.5, abs=1e-12)
    assert res.reports["strong_quasi_nonexpansive"].passed


def test_probe_suite_flags():
    samples = bench.synthetic_samples((6, 6), 5, seed=5)
    assert "zero residual everywhere" in bench.run_probe_suite(dn.identity(), samples).flags
    shift = dn.custom(lambda x: x + 1.0)
    assert "no fixed points found" in bench.run_probe_suite(shift, samples).flags


def _trace(path, fids, res):
    tr = IterationTrace()
    for k, (f, r) in enumerate(zip(fids, res), start=1):
        tr.records.append(TraceRecord(k, f, r, 0.0, math.nan))
    tr.to_csv(path)
    return path


def test_plot_data(tmp_path):
    one = _trace(tmp_path / "solo_trace.csv", [3.0], [1.0])
    (p1, p2) = bench.emit_convergence_plots([one], tmp_path / "plots")
    assert p1.name == "solo_fidelity.dat" and p2.name == "solo_fp_residual.dat"
    assert p1.read_text().splitlines() == ["# k relative_fidelity_error", "1 0.0"]
    a = _trace(tmp_path / "nlm_trace.csv", [4.0, 2.0, 1.0], [2.0, 1.0, 0.5])
    b = _trace(tmp_path / "median_trace.csv", [8.0, 4.0, 4.0], [1.0, 1.0, 1.0])
    written = bench.emit_convergence_plots([a, b], tmp_path / "plots")
    assert [p.name for p in written] == ["nlm_fidelity.dat", "nlm_fp_residual.dat",
                                         "median_fidelity.dat", "median_fp_residual.dat"]
    vals = np.loadtxt(written[0])
    assert np.allclose(vals[:, 1], [3.0, 1.0, 0.0])
    bad = tmp_path / "bad_trace.csv"
    bad.write_text("k,fidelity\n1,2\n")
    with pytest.raises(ValueError):
        bench.emit_convergence_plots([bad], tmp_path / "plots")
    _trace(tmp_path / "inf_trace.csv", [1.0, math.inf], [1.0, 1.0])
    with pytest.raises(ValueError):
        bench.emit_convergence_plots([tmp_path / "inf_trace.csv"], tmp_path / "plots")


def test_load_config(tmp_path, images):
    ini = tmp_path / "run.ini"
    ini.write_text(f"""
[task]
name = deblur_gaussian
kernel = gaussian 5 1.0
noise_sigma = 2.0

[denoiser]
kind = median
size = 5

[solver]
preset = red_sd
outer_iters = 12  # short run
step = diminishing_power
step_exponent = 0.2

[run]
seed = 9
images = {tmp_path / 'in' / '*.png'}
out = {tmp_path / 'o'}
""")
    cfg = bench.load_config(ini)
    assert cfg.task == "deblur_gaussian" and cfg.algorithm == "red_sd" and cfg.seed == 9
    assert cfg.degradation.noise_sigma == 2.0 and cfg.degradation.kernel.taps.shape == (5, 5)
    assert cfg.denoiser.kind == "median" and cfg.denoiser.params["size"] == 5
    assert cfg.solver.outer_iters == 12 and cfg.solver.step.exponent == 0.2
    assert cfg.solver.reg_weight == 0.01
    assert [p.name for p in cfg.images] == ["img0.png", "img1.png"]
    cfg = bench.load_config(ini, {"seed": 2, "preset": "hsd", "task": "superres"})
    assert cfg.seed == 2 and cfg.algorithm == "hsd" and cfg.task == "superres"
    ini.write_text("[task]\nkernel = sinc 3\n")
    with pytest.raises(ValueError):
        bench.load_config(ini)


def test_cli_deblur_probe_plotdata(tmp_path, images, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[solver]\npreset = hsd\nouter_iters = 3\n[denoiser]\nkind = median\nsize = 3\n")
    out = tmp_path / "cli"
    rc = cli.main(["deblur", "--config", str(ini), "--kernel", "gaussian",
                   "--images", " ".join(map(str, images)), "--out", str(out)])
    assert rc == 0 and (out / "summary.csv").exists()
    assert "average" in capsys.readouterr().out
    rc = cli.main(["probe", "--denoiser", "projection_box", "--count", "4", "--patch", "6",
                   "--out", str(tmp_path / "probe")])
    assert rc == 0 and "d_hat = 0" in capsys.readouterr().out
    rc = cli.main(["plotdata", str(out / "img0_trace.csv"), "--out", str(tmp_path / "plots")])
    assert rc == 0 and (tmp_path / "plots" / "img0_fidelity.dat").exists()
    assert cli.main(["deblur", "--images", str(tmp_path / "missing.png"), "--out", str(out)]) == 2
