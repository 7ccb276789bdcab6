"""Iterative restoration algorithms built around a denoiser ``f``.

Every solver takes a :class:`~redpro.forward.FidelityModel`, a denoiser
(any callable on images), a :class:`SolverConfig` and a starting point, and
returns ``(x, trace)``. Iterates are never clamped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Callable

import numpy as np

from redpro.denoisers import RelaxedDenoiser
from redpro.fixpoint import harmonic_anchor
from redpro.forward import ProxConvergenceError
from redpro.imaging import psnr

CONSTANT = "constant"
DIMINISHING = "diminishing_power"

TRACE_COLUMNS = ("k", "fidelity", "fp_residual", "step_change", "psnr")


class DivergenceError(RuntimeError):
    """An iterate blew up or became non-finite; ``trace`` holds the history."""

    def __init__(self, message: str, trace: "IterationTrace", iteration: int):
        super().__init__(message)
        self.trace = trace
        self.iteration = iteration


@dataclass
class StepSchedule:
    """``mu_k = mu0`` or ``mu_k = mu0 * (k + 1) ** -exponent`` for k = 0, 1, ..."""

    kind: str = CONSTANT
    mu0: float = 1.0
    exponent: float = 0.1

    def __post_init__(self):
        if self.kind not in (CONSTANT, DIMINISHING):
            raise ValueError(f"unknown step schedule {self.kind!r}")
        if not self.mu0 > 0:
            raise ValueError("mu0 must be positive")
        if self.kind == DIMINISHING and not 0 < self.exponent <= 1:
            raise ValueError("diminishing schedule needs exponent in (0, 1]")

    def __call__(self, k: int) -> float:
        if self.kind == CONSTANT:
            return self.mu0
        return self.mu0 * (k + 1) ** (-self.exponent)

    def check_constant(self, lipschitz: float | None = None) -> float:
        if self.kind != CONSTANT:
            raise ValueError("this solver requires a constant step size")
        if lipschitz is not None and not self.mu0 < 2.0 / lipschitz:
            raise ValueError(f"constant step {self.mu0} must be below 2/L = {2.0 / lipschitz}")
        return self.mu0


@dataclass
class SolverConfig:
    outer_iters: int = 100
    alpha: float = 0.5
    reg_weight: float = 0.0
    delta: float = 0.0
    inner_iters: int = 3
    admm_penalty: float = 1e-3
    admm_inner_x: int = 200
    admm_inner_z: int = 1
    step: StepSchedule = field(default_factory=StepSchedule)
    anchor: Callable[[int], float] = harmonic_anchor
    trace_every: int = 1
    # Replace x - P_Fix(x) by x - f(x) in the relaxed solvers; no convergence claim.
    residual_shortcut: bool = False

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.reg_weight < 0 or self.delta < 0:
            raise ValueError("reg_weight and delta must be nonnegative")
        if self.outer_iters < 0 or self.inner_iters < 1 or self.trace_every < 1:
            raise ValueError("iteration counts must be positive")
        if self.admm_penalty <= 0 or self.admm_inner_x < 1 or self.admm_inner_z < 1:
            raise ValueError("ADMM parameters must be positive")

    def replace(self, **changes) -> "SolverConfig":
        kw = {f.name: getattr(self, f.name) for f in fields(self)}
        kw.update(changes)
        return SolverConfig(**kw)


@dataclass
class TraceRecord:
    k: int
    fidelity: float
    fp_residual: float
    step_change: float
    psnr: float = math.nan


@dataclass
class IterationTrace:
    records: list[TraceRecord] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name: str) -> np.ndarray:
        return np.array([getattr(r, name) for r in self.records], dtype=np.float64)

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRACE_COLUMNS)
            for r in self.records:
                w.writerow([r.k] + [repr(float(getattr(r, c))) for c in TRACE_COLUMNS[1:]])

    @classmethod
    def from_csv(cls, path) -> "IterationTrace":
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None or tuple(header) != TRACE_COLUMNS:
                raise ValueError(f"{path}: not a trace file (header {header})")
            records = []
            for row in reader:
                if len(row) != len(TRACE_COLUMNS):
                    raise ValueError(f"{path}: malformed row {row}")
                records.append(TraceRecord(int(row[0]), *(float(v) for v in row[1:])))
        return cls(records)


class _Monitor:
    """Records trace rows and aborts on divergence."""

    def __init__(self, fm, f, cfg, x0, ground_truth=None, residual=None, callback=None):
        self.fm = fm
        self.residual = residual or (lambda x: float(np.linalg.norm(x - f(x))))
        self.n = cfg.outer_iters
        self.every = cfg.trace_every
        self.limit = 1e6 * max(float(np.linalg.norm(x0)), 1.0)
        self.gt = ground_truth
        self.callback = callback
        self.trace = IterationTrace()

    def __call__(self, k: int, x_new, x_old) -> None:
        j = k + 1
        nrm = float(np.linalg.norm(x_new))
        bad = not np.isfinite(nrm) or nrm > self.limit
        if bad or (self.n - j) % self.every == 0:
            self.trace.records.append(
                TraceRecord(
                    j,
                    self.fm.value(x_new) if not bad else math.inf,
                    self.residual(x_new) if not bad else math.inf,
                    float(np.linalg.norm(x_new - x_old)),
                    psnr(x_new, self.gt) if self.gt is not None and not bad else math.nan,
                )
            )
        if bad:
            raise DivergenceError(f"iterate norm {nrm:.3e} at iteration {j}", self.trace, j)
        if self.callback is not None:
            self.callback(j, x_new)


def _start(x0):
    return np.array(x0, dtype=np.float64)


def solve_hsd(fm, f: Callable, cfg: SolverConfig, x0, ground_truth=None, callback=None):
    """Hybrid steepest descent: ``x_{k+1} = f_alpha(x_k - mu_k grad l(x_k))``.

    Written out as gradient step ``v``, denoised ``z = f(v)`` and the
    average ``(1 - alpha) v + alpha z``.
    """
    x = _start(x0)
    mon = _Monitor(fm, f, cfg, x, ground_truth, callback=callback)
    a = cfg.alpha
    for k in range(cfg.outer_iters):
        v = x - cfg.step(k) * fm.grad(x)
        z = f(v)
        x_new = (1.0 - a) * v + a * z
        mon(k, x_new, x)
        x = x_new
    return x, mon.trace


def solve_pnp_pgm(fm, f: Callable, cfg: SolverConfig, x0, accelerated: bool = False,
                  ground_truth=None, callback=None):
    """PnP proximal gradient with the proximal map replaced by ``f``.

    With ``accelerated`` the FISTA momentum ``(t_k - 1) / t_{k+1}`` is used,
    otherwise the momentum is zero (plain PGM).
    """
    mu = cfg.step.check_constant()
    x = _start(x0)
    z_prev = x.copy()
    t = 1.0
    mon = _Monitor(fm, f, cfg, x, ground_truth, callback=callback)
    for k in range(cfg.outer_iters):
        v = x - mu * fm.grad(x)
        z = f(v)
        if accelerated:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            momentum = (t - 1.0) / t_next
            t = t_next
        else:
            momentum = 0.0
        x_new = z + momentum * (z - z_prev)
        mon(k, x_new, x)
        x, z_prev = x_new, z
    return x, mon.trace


def fista_momentum(n: int) -> list[float]:
    """First ``n`` momentum weights of the accelerated scheme, starting at k = 0."""
    t, out = 1.0, []
    for _ in range(n):
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        out.append((t - 1.0) / t_next)
        t = t_next
    return out


def _prox(fm, u, weight, cfg, warm, k):
    try:
        return fm.prox(u, weight, x0=warm, max_iter=cfg.admm_inner_x)
    except ProxConvergenceError as exc:
        raise ProxConvergenceError(f"outer iteration {k + 1}: {exc}", exc.residual, exc.iterations) from exc


def solve_pnp_admm(fm, f: Callable, cfg: SolverConfig, x0, u0=None, ground_truth=None, callback=None):
    """PnP-ADMM: fidelity prox, ``m2`` denoiser passes, dual update."""
    beta = cfg.admm_penalty
    x = _start(x0)
    z = x.copy()
    u = np.zeros_like(x) if u0 is None else _start(u0)
    mon = _Monitor(fm, f, cfg, x, ground_truth, callback=callback)
    for k in range(cfg.outer_iters):
        x_new = _prox(fm, z - u, 1.0 / beta, cfg, x, k)
        w = x_new + u
        for _ in range(cfg.admm_inner_z):
            w = f(w)
        z = w
        u = u + x_new - z
        mon(k, x_new, x)
        x = x_new
    return x, mon.trace


def _red_family(fm, f, target: Callable, cfg: SolverConfig, x0, variant: str, ground_truth, callback):
    lam = cfg.reg_weight
    if not lam > 0:
        raise ValueError("RED-type solvers need reg_weight > 0")
    x = _start(x0)
    mon = _Monitor(fm, f, cfg, x, ground_truth, callback=callback)
    if variant == "sd":
        for k in range(cfg.outer_iters):
            x_new = x - cfg.step(k) * (fm.grad(x) + lam * (x - target(x)))
            mon(k, x_new, x)
            x = x_new
    elif variant == "fp":
        # (H^T H / s^2 + lam I) x = H^T y / s^2 + lam g(x_k), i.e. a fidelity prox with weight 1/lam
        for k in range(cfg.outer_iters):
            x_new = _prox(fm, target(x), 1.0 / lam, cfg, x, k)
            mon(k, x_new, x)
            x = x_new
    elif variant == "admm":
        beta = cfg.admm_penalty
        z = x.copy()
        u = np.zeros_like(x)
        for k in range(cfg.outer_iters):
            x_new = _prox(fm, z - u, 1.0 / beta, cfg, x, k)
            xu = x_new + u
            for _ in range(cfg.admm_inner_z):
                z = (lam * target(z) + beta * xu) / (lam + beta)
            u = u + x_new - z
            mon(k, x_new, x)
            x = x_new
    else:
        raise ValueError(f"unknown variant {variant!r}; expected 'sd', 'fp' or 'admm'")
    return x, mon.trace


def red_gradient(fm, f: Callable, lam: float, x) -> np.ndarray:
    """``grad l(x) + lam (x - f(x))``."""
    x = np.asarray(x, dtype=np.float64)
    return fm.grad(x) + lam * (x - f(x))


def solve_red(fm, f: Callable, cfg: SolverConfig, x0, variant: str = "sd", ground_truth=None, callback=None):
    """RED by steepest descent, fixed-point iteration or ADMM."""
    return _red_family(fm, f, f, cfg, x0, variant, ground_truth, callback)


def dilated_projection_step(f: Callable, x, cfg: SolverConfig) -> np.ndarray:
    """Inner loop of relaxed RED-PRO: approximate ``P_{B_delta}(x)``.

    Runs ``J`` steps of ``x_{j+1} = f_alpha(t_j x + (1 - t_j) x_j)`` from
    ``x_0 = x`` and pulls the result back to distance ``delta`` from ``x``'s
    projection. Returns ``x`` itself when it is already within ``delta``.
    """
    x = np.asarray(x, dtype=np.float64)
    fa = RelaxedDenoiser(f, cfg.alpha)
    xj = x
    for j in range(cfg.inner_iters):
        t = cfg.anchor(j)
        xj = fa(t * x + (1.0 - t) * xj)
    dist = float(np.linalg.norm(x - xj))
    if dist <= cfg.delta:
        return x.copy()
    s = cfg.delta / dist
    return s * x + (1.0 - s) * xj


def solve_relaxed_redpro(fm, f: Callable, cfg: SolverConfig, x0, variant: str = "sd",
                         ground_truth=None, callback=None):
    """Relaxed RED-PRO: RED-type updates with ``f`` replaced by the dilated
    fixed-point projection from :func:`dilated_projection_step`.
    """
    if cfg.residual_shortcut:
        target = f
    else:
        target = lambda x: dilated_projection_step(f, x, cfg)  # noqa: E731
    return _red_family(fm, f, target, cfg, x0, variant, ground_truth, callback)


def solve_relaxed_redpro_sd(fm, f: Callable, cfg: SolverConfig, x0, ground_truth=None, callback=None):
    return solve_relaxed_redpro(fm, f, cfg, x0, "sd", ground_truth, callback)


def solve_minimal_norm_feasibility(fm, f: Callable, cfg: SolverConfig, anchor_point, ground_truth=None,
                                   callback=None):
    """Approximate ``P_Fix(T)(u)`` for ``T(x) = f_alpha(x - mu grad l(x))``.

    Halpern iteration anchored at ``u`` with weights ``cfg.anchor``. The
    trace's ``fp_residual`` column holds ``||x - T(x)||`` for this solver.
    """
    mu = cfg.step.check_constant(fm.lipschitz)
    fa = RelaxedDenoiser(f, cfg.alpha)

    def T(x):
        return fa(x - mu * fm.grad(x))

    u = _start(anchor_point)
    x = u.copy()
    mon = _Monitor(fm, f, cfg, x, ground_truth, residual=lambda v: float(np.linalg.norm(v - T(v))),
                   callback=callback)
    for k in range(cfg.outer_iters):
        t = cfg.anchor(k)
        x_new = t * u + (1.0 - t) * T(x)
        mon(k, x_new, x)
        x = x_new
    return x, mon.trace


def _variant(fn, variant):
    def run(fm, f, cfg, x0, **kw):
        return fn(fm, f, cfg, x0, variant, **kw)

    return run


ALGORITHMS: dict[str, Callable] = {
    "hsd": solve_hsd,
    "pnp_pgm": solve_pnp_pgm,
    "pnp_apgm": lambda fm, f, cfg, x0, **kw: solve_pnp_pgm(fm, f, cfg, x0, accelerated=True, **kw),
    "pnp_admm": solve_pnp_admm,
    "red_sd": _variant(solve_red, "sd"),
    "red_fp": _variant(solve_red, "fp"),
    "red_admm": _variant(solve_red, "admm"),
    "rrp_sd": _variant(solve_relaxed_redpro, "sd"),
    "rrp_fp": _variant(solve_relaxed_redpro, "fp"),
    "rrp_admm": _variant(solve_relaxed_redpro, "admm"),
    "minimal_norm": solve_minimal_norm_feasibility,
}
