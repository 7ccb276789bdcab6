"""Experiment runner: degradation synthesis, restoration, traces and probes.

Colour images are degraded per RGB channel, converted to YCbCr, and only
the luma plane is restored. Chroma is kept as degraded for deblurring and
upsampled bicubically for super-resolution. PSNR is measured on the full
luma plane of the quantized output.
"""

from __future__ import annotations

import configparser
import csv
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from redpro import denoisers as dn
from redpro import fixpoint as fp
from redpro.forward import (
    BLUR,
    BLUR_THEN_DECIMATE,
    DegradationModel,
    FidelityModel,
    Kernel,
    ProxConvergenceError,
    degrade,
    delta_kernel,
    gaussian_kernel,
    uniform_kernel,
)
from redpro.imaging import (
    bicubic_resize,
    load_png,
    luminance,
    psnr,
    quantize,
    rgb_to_ycbcr,
    save_png,
    ycbcr_to_rgb,
)
from redpro.solvers import (
    ALGORITHMS,
    CONSTANT,
    DIMINISHING,
    DivergenceError,
    IterationTrace,
    SolverConfig,
    StepSchedule,
)

log = logging.getLogger(__name__)

TASKS = ("deblur_uniform", "deblur_gaussian", "superres")
SUMMARY_COLUMNS = ("image", "degraded_psnr", "restored_psnr", "seconds")
SR_FACTOR = 3


def degradation_for_task(task: str, kernel: Kernel | None = None,
                         noise_sigma: float | None = None) -> DegradationModel:
    """Degradation model of a task; ``kernel`` and ``noise_sigma`` override the defaults."""
    if task == "deblur_uniform":
        k, s, kind, dec = uniform_kernel(9), math.sqrt(2.0), BLUR, 1
    elif task == "deblur_gaussian":
        k, s, kind, dec = gaussian_kernel(9, 1.6), math.sqrt(2.0), BLUR, 1
    elif task == "superres":
        k, s, kind, dec = gaussian_kernel(7, 1.6), 5.0, BLUR_THEN_DECIMATE, SR_FACTOR
    else:
        raise ValueError(f"unknown task {task!r}; expected one of {TASKS}")
    return DegradationModel(kernel or k, kind, dec, s if noise_sigma is None else noise_sigma)


# Per-task denoiser strength and regularization weight.
_TASK_PARAMS = {
    "deblur_uniform": {"sigma_f": 3.25, "lam": 0.02},
    "deblur_gaussian": {"sigma_f": 4.1, "lam": 0.01},
    "superres": {"sigma_f": 3.0, "lam": 0.008},
}

# name -> (algorithm, outer iterations, extra SolverConfig fields)
_PRESETS = {
    "red_fp": ("red_fp", 200, {}),
    "red_admm": ("red_admm", 200, {"admm_penalty": 1e-3, "admm_inner_z": 1}),
    "red_sd": ("red_sd", 1500, {}),
    "hsd": ("hsd", 400, {"alpha": 0.035}),
    "rrp_fp": ("rrp_fp", 200, {"alpha": 1.0, "inner_iters": 3, "delta": 0.0}),
    "rrp_admm": ("rrp_admm", 200, {"alpha": 1.0, "inner_iters": 3, "delta": 0.0,
                                   "admm_penalty": 1e-3, "admm_inner_z": 1}),
    "rrp_sd": ("rrp_sd", 1500, {"alpha": 1.0, "inner_iters": 3, "delta": 0.0}),
    "approx_fp": ("rrp_fp", 200, {"alpha": 1.0, "inner_iters": 3, "delta": 1e-4}),
    "approx_admm": ("rrp_admm", 200, {"alpha": 1.0, "inner_iters": 3, "delta": 1e-4,
                                      "admm_penalty": 1e-3, "admm_inner_z": 1}),
    "approx_sd": ("rrp_sd", 1500, {"alpha": 1.0, "inner_iters": 3, "delta": 1e-4}),
}
PRESETS = tuple(_PRESETS)


def base_step(noise_sigma: float, lam: float) -> float:
    """``mu0 = 2 / (sigma^-2 + lam)``."""
    return 2.0 / (noise_sigma ** -2 + lam)


def preset(name: str, task: str = "deblur_uniform") -> tuple[str, dn.DenoiserSpec, SolverConfig]:
    """Algorithm id, NLM denoiser and solver settings for a named preset."""
    if name not in _PRESETS:
        raise ValueError(f"unknown preset {name!r}; expected one of {PRESETS}")
    tp = _TASK_PARAMS[task]
    algo, n, extra = _PRESETS[name]
    sigma = degradation_for_task(task).noise_sigma
    mu0 = base_step(sigma, tp["lam"])
    if algo == "hsd":
        step = StepSchedule(DIMINISHING, mu0, 0.1)
        lam = 0.0
    else:
        step = StepSchedule(CONSTANT, mu0)
        lam = tp["lam"]
    # Non-circulant operators need an iterative prox; 200 CG steps there.
    cfg = SolverConfig(outer_iters=n, reg_weight=lam, step=step, admm_inner_x=200, **extra)
    return algo, dn.nlm_denoiser(tp["sigma_f"]), cfg


@dataclass
class ExperimentConfig:
    task: str
    images: list
    denoiser: dn.DenoiserSpec
    algorithm: str
    solver: SolverConfig
    seed: int = 0
    out_dir: Path = Path("out")
    # Overrides of the task's degradation; mainly for tests and ablations.
    kernel: Kernel | None = None
    noise_sigma: float | None = None

    def __post_init__(self):
        if self.task not in TASKS:
            raise ValueError(f"unknown task {self.task!r}; expected one of {TASKS}")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        self.images = [Path(p) for p in self.images]
        self.out_dir = Path(self.out_dir)
        stems = [p.stem for p in self.images]
        if len(set(stems)) != len(stems):
            raise ValueError("input images must have distinct file names")

    @property
    def degradation(self) -> DegradationModel:
        return degradation_for_task(self.task, self.kernel, self.noise_sigma)

    @classmethod
    def from_preset(cls, name: str, task: str, images, **kw) -> "ExperimentConfig":
        algo, den, cfg = preset(name, task)
        return cls(task=task, images=list(images), denoiser=den, algorithm=algo, solver=cfg, **kw)


def _parse_bool(s: str) -> bool:
    return configparser.ConfigParser.BOOLEAN_STATES[s.strip().lower()]


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    """Read an INI file with sections ``task``, ``denoiser``, ``solver`` and ``run``.

    ``solver.preset`` seeds every solver and denoiser setting, which the
    remaining keys then override. ``overrides`` (e.g. from the command line)
    take precedence over the file and may hold ``task``, ``preset``,
    ``seed``, ``out`` and ``images``.
    """
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    if path is not None:
        with open(path) as fh:
            cp.read_file(fh)
    for sec in ("task", "denoiser", "solver", "run"):
        if not cp.has_section(sec):
            cp.add_section(sec)
    ov = {k: v for k, v in (overrides or {}).items() if v is not None}
    t, d, s, r = cp["task"], cp["denoiser"], cp["solver"], cp["run"]

    task = ov.get("task", t.get("name", "deblur_uniform"))
    kernel = None
    if "kernel" in t:
        spec = t["kernel"].split()
        if spec[0] == "delta":
            kernel = delta_kernel()
        elif spec[0] == "uniform":
            kernel = uniform_kernel(int(spec[1]))
        elif spec[0] == "gaussian":
            kernel = gaussian_kernel(int(spec[1]), float(spec[2]))
        else:
            raise ValueError(f"unknown kernel {t['kernel']!r}")
    noise = t.getfloat("noise_sigma") if "noise_sigma" in t else None

    algo, den, cfg = preset(ov.get("preset", s.get("preset", "hsd")), task)
    algo = s.get("algorithm", algo)
    changes = {}
    for key in ("outer_iters", "inner_iters", "admm_inner_x", "admm_inner_z", "trace_every"):
        if key in s:
            changes[key] = s.getint(key)
    for key in ("alpha", "reg_weight", "delta", "admm_penalty"):
        if key in s:
            changes[key] = s.getfloat(key)
    if "residual_shortcut" in s:
        changes["residual_shortcut"] = _parse_bool(s["residual_shortcut"])
    if {"step", "mu0", "step_exponent"} & set(s):
        changes["step"] = StepSchedule(
            s.get("step", cfg.step.kind),
            s.getfloat("mu0", cfg.step.mu0),
            s.getfloat("step_exponent", cfg.step.exponent),
        )
    cfg = cfg.replace(**changes)

    kind = d.get("kind", den.kind)
    strength = d.getfloat("strength", den.strength if kind == den.kind else 1.0)
    params = {k: int(v) for k, v in d.items() if k in ("patch_radius", "search_radius", "size")}
    if kind in ("projection_box",):
        params.update(lo=d.getfloat("lo"), hi=d.getfloat("hi"))
    if kind in ("linear_symmetric", "custom", "projection_halfspace"):
        raise ValueError(f"denoiser kind {kind!r} cannot be configured from a file")
    den = dn.DenoiserSpec(kind, strength, params)

    images = ov.get("images", r.get("images", ""))
    if isinstance(images, str):
        images = expand_images(images)
    return ExperimentConfig(
        task=task,
        images=images,
        denoiser=den,
        algorithm=algo,
        solver=cfg,
        seed=int(ov.get("seed", r.getint("seed", 0))),
        out_dir=Path(ov.get("out", r.get("out", "out"))),
        kernel=kernel,
        noise_sigma=noise,
    )


def expand_images(pattern: str) -> list[Path]:
    """Expand a whitespace-separated list of paths or glob patterns, sorted per pattern."""
    out = []
    for item in pattern.split():
        p = Path(item)
        if any(c in item for c in "*?["):
            anchor = Path(p.anchor) if p.is_absolute() else Path(".")
            rel = str(p.relative_to(anchor)) if p.is_absolute() else item
            matches = sorted(anchor.glob(rel))
            if not matches:
                raise FileNotFoundError(f"no images match {item!r}")
            out.extend(matches)
        else:
            out.append(p)
    return out


@dataclass
class ImageResult:
    image: str
    degraded_psnr: float
    restored_psnr: float
    seconds: float
    diverged: bool = False
    restored_path: Path | None = None
    trace_path: Path | None = None


@dataclass
class ExperimentResult:
    rows: list[ImageResult]
    summary_path: Path

    @property
    def average_psnr(self) -> float:
        vals = [r.restored_psnr for r in self.rows if not r.diverged]
        return float(np.mean(vals)) if vals else math.nan


def _fidelity_model(model: DegradationModel, y) -> FidelityModel:
    # A noiseless synthesis still needs a finite data-term weight.
    if model.noise_sigma > 0:
        return FidelityModel(model, y)
    return FidelityModel(DegradationModel(model.kernel, model.kind, model.decimation, 1.0), y)


def _crop_to_factor(rgb: np.ndarray, k: int) -> np.ndarray:
    h, w = (rgb.shape[0] // k) * k, (rgb.shape[1] // k) * k
    if h == 0 or w == 0:
        raise ValueError(f"image of shape {rgb.shape[:2]} is smaller than the decimation factor")
    return rgb[:h, :w]


def restore_image(cfg: ExperimentConfig, index: int, path: Path) -> ImageResult:
    """Degrade, restore and write the outputs for one image."""
    model = cfg.degradation
    rgb = load_png(path)
    if model.decimation > 1:
        rgb = _crop_to_factor(rgb, model.decimation)
    gt_luma = luminance(rgb)
    degraded = np.stack(
        [degrade(model, rgb[..., c], np.random.SeedSequence([cfg.seed, index, c])) for c in range(3)],
        axis=-1,
    )
    luma, cb, cr = rgb_to_ycbcr(degraded)
    fm = _fidelity_model(model, luma)
    if model.decimation > 1:
        x0 = bicubic_resize(luma, gt_luma.shape)
        cb, cr = bicubic_resize(cb, gt_luma.shape), bicubic_resize(cr, gt_luma.shape)
        deg_view = x0
    else:
        x0 = luma
        deg_view = luminance(quantize(degraded))

    stem = path.stem
    out = cfg.out_dir
    save_png(degraded, out / f"{stem}_degraded.png")
    trace_path = out / f"{stem}_trace.csv"
    solve = ALGORITHMS[cfg.algorithm]
    t0 = time.perf_counter()
    try:
        x, trace = solve(fm, cfg.denoiser, cfg.solver, x0, ground_truth=gt_luma)
    except (DivergenceError, ProxConvergenceError) as exc:
        seconds = time.perf_counter() - t0
        log.warning("%s: %s", path, exc)
        getattr(exc, "trace", IterationTrace()).to_csv(trace_path)
        return ImageResult(str(path), psnr(deg_view, gt_luma), math.nan, seconds, True, None, trace_path)
    seconds = time.perf_counter() - t0
    restored = quantize(ycbcr_to_rgb(x, cb, cr))
    restored_path = out / f"{stem}_restored.png"
    save_png(restored, restored_path)
    trace.to_csv(trace_path)
    return ImageResult(str(path), psnr(deg_view, gt_luma), psnr(luminance(restored), gt_luma),
                       seconds, False, restored_path, trace_path)


def write_summary(rows: Sequence[ImageResult], path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow([r.image, f"{r.degraded_psnr:.6f}", f"{r.restored_psnr:.6f}", f"{r.seconds:.3f}"])


def run_experiment(cfg: ExperimentConfig) -> ExperimentResult:
    """Run ``cfg`` over all its images, in input order.

    A diverging solve is logged and recorded with a NaN restored PSNR; the
    remaining images still run.
    """
    if not cfg.images:
        raise ValueError("no input images")
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    rows = [restore_image(cfg, i, p) for i, p in enumerate(cfg.images)]
    summary = cfg.out_dir / "summary.csv"
    write_summary(rows, summary)
    return ExperimentResult(rows, summary)


# Probe suite

def synthetic_samples(shape, count: int, seed: int = 0, lo: float = 0.0, hi: float = 255.0) -> list:
    rng = np.random.default_rng(seed)
    return [rng.uniform(lo, hi, size=shape) for _ in range(count)]


def sample_patches(paths, count: int, size: int = 32, seed: int = 0) -> list:
    """Random ``size x size`` luma patches drawn uniformly from the given images."""
    rng = np.random.default_rng(seed)
    planes = [luminance(load_png(p)) for p in paths]
    if not planes:
        raise ValueError("no sample images")
    out = []
    for _ in range(count):
        pl = planes[rng.integers(len(planes))]
        if pl.shape[0] < size or pl.shape[1] < size:
            raise ValueError(f"image smaller than patch size {size}")
        i = rng.integers(pl.shape[0] - size + 1)
        j = rng.integers(pl.shape[1] - size + 1)
        out.append(pl[i : i + size, j : j + size].copy())
    return out


def _find_fixed_points(f, samples, limit: int = 4) -> list:
    proj = getattr(f, "fix_projection", None)
    if proj is not None:
        return [np.asarray(proj(x), dtype=np.float64) for x in samples[:limit]]
    shape = samples[0].shape
    found = []
    for c in (0.0, 64.0, 128.0, 192.0, 255.0):
        z = np.full(shape, c)
        if np.linalg.norm(z - f(z)) < 1e-8:
            found.append(z)
    return found


@dataclass
class ProbeSuiteResult:
    d_hat: float
    flags: list
    reports: dict = field(default_factory=dict)
    paths: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(getattr(r, "passed", True) for r in self.reports.values())


def run_probe_suite(denoiser, samples, seed: int = 0, out_dir=None, fixed_points=None,
                    n_cycles: int = 200, halpern_iters: int = 200) -> ProbeSuiteResult:
    """Estimate ``d`` for ``denoiser`` on ``samples`` and run every probe at that ``d``.

    Fixed points come from ``fixed_points``, the denoiser's closed-form
    projection, or constant images that the denoiser leaves unchanged.
    One CSV per probe plus ``summary.csv`` are written to ``out_dir``.
    """
    samples = [np.asarray(s, dtype=np.float64) for s in samples]
    if len(samples) < 2:
        raise ValueError("need at least two samples")
    flags = []
    if fixed_points is None:
        fixed_points = _find_fixed_points(denoiser, samples)
    reports: dict = {}
    d = 0.0
    if not fixed_points:
        flags.append("no fixed points found")
    else:
        est = fp.estimate_demicontractivity(denoiser, fixed_points, samples)
        reports["demicontractivity"] = est
        d = est.d_hat
        if est.zero_residual:
            flags.append("zero residual everywhere")
        if est.raw >= 1:
            flags.append("not demicontractive on samples")
    if fixed_points and d < 1:
        alpha = (1.0 - d) / 2
        reports["strong_quasi_nonexpansive"] = fp.check_strong_quasi_nonexpansive(
            denoiser, alpha, d, fixed_points, samples)
        lo = min(float(s.min()) for s in samples)
        hi = max(float(s.max()) for s in samples)
        if hi > lo:
            reports["bounded_denoiser"] = fp.check_bounded_denoiser(denoiser, alpha, d, lo, hi, samples)
        residuals = [float(np.linalg.norm(s - denoiser(s))) for s in samples]
        eps = float(np.median(residuals))
        if eps > 0:
            hcfg = fp.HalpernConfig(alpha=min(alpha, 1.0), max_inner=halpern_iters)
            reports["dilation_containment"] = fp.check_dilation_containment(
                denoiser, alpha, eps, samples, hcfg, d)
        reports["cocoercivity"] = fp.check_cocoercivity(denoiser, samples, fixed_points, 2.0 / (1.0 - d))
    reports["cyclic_monotonicity"] = fp.cyclic_monotonicity_probe(denoiser, samples, 3, n_cycles, seed)

    paths = {}
    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        for name, rep in reports.items():
            paths[name] = out_dir / f"{name}.csv"
            rep.to_csv(paths[name])
        paths["summary"] = out_dir / "summary.csv"
        with open(paths["summary"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["probe", "status", "detail"])
            w.writerow(["d_hat", "", repr(d)])
            for name, rep in reports.items():
                if isinstance(rep, fp.ProbeReport):
                    w.writerow([name, "PASS" if rep.passed else "FAIL", rep.summary()])
                elif isinstance(rep, fp.CycleProbeResult):
                    w.writerow([name, "PASS" if rep.monotone else "FAIL",
                                f"max cycle sum {rep.max_cycle_sum:.3e}"])
            for flag in flags:
                w.writerow(["flag", "", flag])
    return ProbeSuiteResult(d, flags, reports, paths)


# Convergence plot data

def relative_to_final(values) -> np.ndarray:
    """``|v_k - v_N| / |v_N|``, or the absolute difference when ``v_N = 0``."""
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise ValueError("empty series")
    diff = np.abs(v - v[-1])
    return diff / abs(v[-1]) if v[-1] != 0 else diff


def convergence_series(trace: IterationTrace) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Iteration index, relative fidelity error and relative fixed-point residual."""
    k = trace.column("k")
    if k.size == 0:
        raise ValueError("trace has no records")
    if not np.all(np.isfinite(trace.column("fidelity"))):
        raise ValueError("trace contains non-finite fidelity values")
    return k, relative_to_final(trace.column("fidelity")), relative_to_final(trace.column("fp_residual"))


def _write_dat(path: Path, k, v, label: str) -> None:
    with open(path, "w") as fh:
        fh.write(f"# k {label}\n")
        for a, b in zip(k, v):
            fh.write(f"{int(a)} {float(b)!r}\n")


def emit_convergence_plots(trace_paths, out_dir) -> list[Path]:
    """Write ``<stem>_fidelity.dat`` and ``<stem>_fp_residual.dat`` per trace CSV."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for tp in trace_paths:
        tp = Path(tp)
        k, rel_fid, rel_res = convergence_series(IterationTrace.from_csv(tp))
        stem = tp.stem.removesuffix("_trace")
        for suffix, series, label in (("fidelity", rel_fid, "relative_fidelity_error"),
                                      ("fp_residual", rel_res, "relative_fp_residual")):
            path = out_dir / f"{stem}_{suffix}.dat"
            _write_dat(path, k, series, label)
            written.append(path)
    return written
