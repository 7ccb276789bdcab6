"""Run the operator probe suite for several denoisers on image patches.

Example::

    python scripts/probe_denoisers.py --images "tests/data/*.png" --out runs/probes
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field
from pathlib import Path

from redpro import bench
from redpro import denoisers as dn


@dataclass
class ProbeConfig:
    images: str = "tests/data/*.png"
    denoisers: list[str] = field(default_factory=lambda: ["nlm", "median", "gaussian", "box"])
    count: int = 8
    patch: int = 32
    seed: int = 0
    out: Path = Path("runs/probes")


DENOISERS = {
    "nlm": lambda: dn.nlm_denoiser(3.25),
    "median": lambda: dn.median_denoiser(3),
    "gaussian": lambda: dn.gaussian_denoiser(1.0),
    "box": lambda: dn.box_denoiser(3),
}


def run(cfg: ProbeConfig) -> dict[str, bench.ProbeSuiteResult]:
    samples = bench.sample_patches(bench.expand_images(cfg.images), cfg.count, cfg.patch, cfg.seed)
    return {name: bench.run_probe_suite(DENOISERS[name](), samples, seed=cfg.seed, out_dir=cfg.out / name)
            for name in cfg.denoisers}


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--images", default=ProbeConfig.images)
    p.add_argument("--denoisers", nargs="+", choices=tuple(DENOISERS), default=list(DENOISERS))
    p.add_argument("--count", type=int, default=ProbeConfig.count)
    p.add_argument("--patch", type=int, default=ProbeConfig.patch)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=ProbeConfig.out)
    a = p.parse_args(argv)
    results = run(ProbeConfig(a.images, a.denoisers, a.count, a.patch, a.seed, a.out))
    for name, res in results.items():
        flags = "; ".join(res.flags) or "none"
        print(f"{name:10s} d_hat = {res.d_hat:.4g}  flags: {flags}")


if __name__ == "__main__":
    main()
