"""Convergence curves for HSD deblurring with several denoisers.

Writes ``<denoiser>_fidelity.dat`` and ``<denoiser>_fp_residual.dat`` and,
when matplotlib is importable, a two-panel ``convergence.png``.

Example::

    python scripts/convergence_figure.py --image tests/data/astronaut.png --out runs/convergence
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from redpro import bench
from redpro import denoisers as dn


@dataclass
class FigureConfig:
    image: Path = Path("tests/data/astronaut.png")
    denoisers: list[str] = field(default_factory=lambda: ["nlm", "median"])
    iterations: int = 400
    seed: int = 0
    out: Path = Path("runs/convergence")


def _denoiser(name: str) -> dn.DenoiserSpec:
    return {"nlm": dn.nlm_denoiser(3.25), "median": dn.median_denoiser(3),
            "gaussian": dn.gaussian_denoiser(1.0)}[name]


def run(cfg: FigureConfig) -> list[Path]:
    traces = []
    for name in cfg.denoisers:
        exp = bench.ExperimentConfig.from_preset("hsd", "deblur_uniform", [cfg.image], seed=cfg.seed,
                                                 out_dir=cfg.out / name)
        exp.denoiser = _denoiser(name)
        exp.solver = exp.solver.replace(outer_iters=cfg.iterations)
        row = bench.run_experiment(exp).rows[0]
        renamed = cfg.out / f"{name}_trace.csv"
        renamed.write_bytes(row.trace_path.read_bytes())
        traces.append(renamed)
    return bench.emit_convergence_plots(traces, cfg.out)


def plot(paths: list[Path], out: Path) -> Path | None:
    try:
        import matplotlib

        matplotlib.use("Agg")
        import matplotlib.pyplot as plt
    except ImportError:
        return None
    fig, axes = plt.subplots(1, 2, figsize=(9, 3.5))
    for path in paths:
        k, v = np.loadtxt(path, unpack=True)
        ax = axes[0] if path.stem.endswith("_fidelity") else axes[1]
        ax.semilogy(k, np.maximum(v, 1e-16), label=path.stem.rsplit("_", 2)[0])
    axes[0].set_title("relative fidelity error")
    axes[1].set_title("relative fixed-point residual")
    for ax in axes:
        ax.set_xlabel("iteration")
        ax.legend()
    fig.tight_layout()
    target = out / "convergence.png"
    fig.savefig(target, dpi=120)
    return target


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--image", type=Path, default=FigureConfig.image)
    p.add_argument("--denoisers", nargs="+", choices=("nlm", "median", "gaussian"), default=["nlm", "median"])
    p.add_argument("--iterations", type=int, default=FigureConfig.iterations)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=FigureConfig.out)
    a = p.parse_args(argv)
    cfg = FigureConfig(a.image, a.denoisers, a.iterations, a.seed, a.out)
    paths = run(cfg)
    for path in paths:
        print(path)
    figure = plot(paths, cfg.out)
    if figure is not None:
        print(figure)


if __name__ == "__main__":
    main()
