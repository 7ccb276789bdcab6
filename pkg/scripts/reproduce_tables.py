"""Run every solver preset on a task and print a PSNR table.

Example::

    python scripts/reproduce_tables.py --task deblur_uniform --images "tests/data/*.png" \
        --presets red_fp red_sd hsd rrp_fp --out runs/tables
"""

from __future__ import annotations

import argparse
import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

from redpro import bench


@dataclass
class TableConfig:
    task: str = "deblur_uniform"
    images: str = "tests/data/*.png"
    presets: list[str] = field(default_factory=lambda: list(bench.PRESETS))
    seed: int = 0
    out: Path = Path("runs/tables")
    max_iters: int | None = None


def run(cfg: TableConfig) -> dict[str, bench.ExperimentResult]:
    images = bench.expand_images(cfg.images)
    results = {}
    for name in cfg.presets:
        exp = bench.ExperimentConfig.from_preset(name, cfg.task, images, seed=cfg.seed,
                                                 out_dir=cfg.out / cfg.task / name)
        if cfg.max_iters is not None:
            exp.solver = exp.solver.replace(outer_iters=min(exp.solver.outer_iters, cfg.max_iters))
        logging.info("running %s on %d images", name, len(images))
        results[name] = bench.run_experiment(exp)
    return results


def write_table(results: dict[str, bench.ExperimentResult], path: Path) -> None:
    names = list(results)
    images = [Path(r.image).stem for r in next(iter(results.values())).rows]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["image", "degraded"] + names)
        for i, stem in enumerate(images):
            first = next(iter(results.values())).rows[i]
            w.writerow([stem, f"{first.degraded_psnr:.2f}"] + [f"{results[n].rows[i].restored_psnr:.2f}" for n in names])
        w.writerow(["average", ""] + [f"{results[n].average_psnr:.2f}" for n in names])


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("--task", choices=bench.TASKS, default=TableConfig.task)
    p.add_argument("--images", default=TableConfig.images)
    p.add_argument("--presets", nargs="+", choices=bench.PRESETS, default=list(bench.PRESETS))
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", type=Path, default=TableConfig.out)
    p.add_argument("--max-iters", type=int, help="cap outer iterations for a quick look")
    a = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = TableConfig(a.task, a.images, a.presets, a.seed, a.out, a.max_iters)
    results = run(cfg)
    table = cfg.out / f"{cfg.task}_table.csv"
    write_table(results, table)
    print(table.read_text())


if __name__ == "__main__":
    main()
