"""Fixed-point machinery and numerical probes for operator assumptions.

The probes evaluate an inequality on sampled points and return a
:class:`ProbeReport`; they never raise because an inequality fails. Whether
a report counts as a pass is up to the caller.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from redpro.denoisers import RelaxedDenoiser


def harmonic_anchor(j: int) -> float:
    """Classical Halpern anchor ``t_j = 1 / (j + 2)``."""
    return 1.0 / (j + 2)


@dataclass
class HalpernConfig:
    alpha: float = 0.5
    anchor: Callable[[int], float] = harmonic_anchor
    max_inner: int = 500
    tol: float = 0.0

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")
        if self.max_inner < 1:
            raise ValueError("max_inner must be at least 1")
        t = np.array([self.anchor(j) for j in range(self.max_inner)])
        if np.any(t <= 0) or np.any(t > 1):
            raise ValueError("anchor weights must lie in (0, 1]")
        if np.any(np.diff(t) > 0):
            raise ValueError("anchor weights must be nonincreasing")


def _norm(x) -> float:
    return float(np.linalg.norm(x))


def halpern_project(f: Callable, x0, cfg: HalpernConfig | None = None):
    """Approximate the projection of ``x0`` onto Fix(f) by Halpern iteration.

    Iterates ``x_{j+1} = t_j x0 + (1 - t_j) f_alpha(x_j)`` for up to
    ``cfg.max_inner`` steps, stopping early once ``||x_j - f(x_j)|| <= cfg.tol``.
    Returns the last iterate and its residual ``||x - f(x)||``.
    """
    cfg = cfg or HalpernConfig()
    x0 = np.asarray(x0, dtype=np.float64)
    x = x0.copy()
    a = cfg.alpha
    for j in range(cfg.max_inner):
        fx = f(x)
        if cfg.tol > 0 and _norm(x - fx) <= cfg.tol:
            return x, _norm(x - fx)
        t = cfg.anchor(j)
        x = t * x0 + (1.0 - t) * (a * fx + (1.0 - a) * x)
    return x, _norm(x - f(x))


def project_dilated(f: Callable, x, delta: float, cfg: HalpernConfig | None = None,
                    fix_projection: Callable | None = None) -> np.ndarray:
    """Project ``x`` onto ``B_delta(f) = {v : ||v - P_Fix(v)|| <= delta}``.

    ``P_Fix`` comes from ``fix_projection`` when given, else from
    ``f.fix_projection`` when the denoiser has a closed form, otherwise from
    :func:`halpern_project`.
    """
    if delta < 0:
        raise ValueError("delta must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    if fix_projection is None:
        fix_projection = getattr(f, "fix_projection", None)
    p = fix_projection(x) if fix_projection is not None else halpern_project(f, x, cfg)[0]
    dist = _norm(x - p)
    if dist <= delta:
        return x.copy()
    s = delta / dist
    return s * x + (1.0 - s) * p


@dataclass
class ProbeReport:
    """Per-pair evaluation of an inequality ``lhs <= rhs``.

    A pair violates when ``lhs > rhs + tol * scale`` where ``scale`` is a
    per-pair magnitude (defaults to 1).
    """

    name: str
    lhs: np.ndarray
    rhs: np.ndarray
    tol: float = 1e-10
    scale: np.ndarray | None = None
    params: dict = field(default_factory=dict)

    @property
    def slack(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def violations(self) -> np.ndarray:
        scale = 1.0 if self.scale is None else self.scale
        return np.flatnonzero(self.lhs > self.rhs + self.tol * scale)

    @property
    def passed(self) -> bool:
        return self.violations.size == 0

    def to_csv(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["pair", "lhs", "rhs", "slack"])
            for i, (l, r) in enumerate(zip(self.lhs, self.rhs)):
                w.writerow([i, repr(float(l)), repr(float(r)), repr(float(r - l))])

    def summary(self) -> str:
        v = self.violations.size
        worst = float(self.slack.min()) if self.lhs.size else float("nan")
        status = "PASS" if v == 0 else "FAIL"
        return f"{self.name}: {status} ({v}/{self.lhs.size} violations, min slack {worst:.3e})"


def _as_list(points) -> list[np.ndarray]:
    return [np.asarray(p, dtype=np.float64) for p in points]


def _check_fixed_points(f, fixed_points, tol=1e-8):
    fixed_points = _as_list(fixed_points)
    if not fixed_points:
        raise ValueError("at least one fixed point is required")
    for i, z in enumerate(fixed_points):
        r = _norm(z - f(z))
        if not r < tol:
            raise ValueError(f"fixed point {i} has residual {r:.3e} >= {tol:g}")
    return fixed_points


@dataclass
class DemicontractivityEstimate:
    d_hat: float
    raw: float
    sample_count: int
    worst_pair: tuple | None
    ratios: np.ndarray = field(repr=False, default=None)
    zero_residual: bool = False

    def to_csv(self, path) -> None:
        ProbeReport("demicontractivity", self.ratios, np.full_like(self.ratios, self.d_hat)).to_csv(path)


def estimate_demicontractivity(f: Callable, fixed_points: Sequence, samples: Sequence,
                               zero_tol: float = 1e-10) -> DemicontractivityEstimate:
    """Smallest ``d`` consistent with the demicontractive inequality on the data.

    For every sample ``x`` and fixed point ``z`` computes
    ``(||f(x) - z||^2 - ||x - z||^2) / ||f(x) - x||^2``; pairs whose residual
    is below ``zero_tol`` contribute 0. ``raw`` is the max ratio, ``d_hat``
    that value clamped at 0.
    """
    fixed_points = _check_fixed_points(f, fixed_points)
    samples = _as_list(samples)
    if not samples:
        raise ValueError("at least one sample is required")
    ratios = []
    pairs = []
    all_zero = True
    for x in samples:
        fx = f(x)
        res2 = float(np.vdot(fx - x, fx - x))
        for z in fixed_points:
            pairs.append((x, z))
            if np.sqrt(res2) < zero_tol:
                ratios.append(0.0)
                continue
            all_zero = False
            num = float(np.vdot(fx - z, fx - z)) - float(np.vdot(x - z, x - z))
            ratios.append(num / res2)
    ratios = np.array(ratios)
    k = int(np.argmax(ratios))
    raw = float(ratios[k])
    return DemicontractivityEstimate(
        d_hat=max(raw, 0.0),
        raw=raw,
        sample_count=len(samples),
        worst_pair=pairs[k],
        ratios=ratios,
        zero_residual=all_zero,
    )


def strong_quasi_gamma(alpha: float, d: float) -> float:
    return (1.0 - d - alpha) / alpha


def check_strong_quasi_nonexpansive(f: Callable, alpha: float, d: float, fixed_points, samples,
                                    tol: float = 1e-10) -> ProbeReport:
    """Check ``||f_a(x) - z||^2 <= ||x - z||^2 - gamma ||f_a(x) - x||^2``.

    ``gamma = (1 - d - alpha) / alpha``; requires ``alpha`` in ``(0, 1 - d]``.
    Slack is relative to ``max(1, ||x - z||^2)``.
    """
    if not 0 <= d < 1 or not 0 < alpha <= 1 - d:
        raise ValueError(f"need 0 <= d < 1 and alpha in (0, 1-d]; got d={d}, alpha={alpha}")
    gamma = strong_quasi_gamma(alpha, d)
    fa = RelaxedDenoiser(f, alpha)
    fixed_points = _as_list(fixed_points)
    lhs, rhs, scale = [], [], []
    for x in _as_list(samples):
        fax = fa(x)
        step2 = float(np.vdot(fax - x, fax - x))
        for z in fixed_points:
            dist2 = float(np.vdot(x - z, x - z))
            lhs.append(float(np.vdot(fax - z, fax - z)))
            rhs.append(dist2 - gamma * step2)
            scale.append(max(1.0, dist2))
    return ProbeReport("strong_quasi_nonexpansive", np.array(lhs), np.array(rhs), tol,
                       np.array(scale), {"alpha": alpha, "d": d, "gamma": gamma})


def bounded_sigma2(alpha: float, d: float) -> float:
    return alpha / (1.0 - d - alpha)


def check_bounded_denoiser(f: Callable, alpha: float, d: float, range_a: float, range_b: float,
                           samples, tol: float = 1e-10) -> ProbeReport:
    """Check ``mean((f_a(x) - x)^2) <= sigma2(alpha) * (b - a)^2`` on samples in ``[a, b]^n``.

    The bound presumes ``f`` has a fixed point inside the box; that part is
    the caller's responsibility.
    """
    if not 0 <= d < 1 or not 0 < alpha < 1 - d:
        raise ValueError(f"need 0 <= d < 1 and alpha in (0, 1-d); got d={d}, alpha={alpha}")
    if not range_a < range_b:
        raise ValueError("need range_a < range_b")
    samples = _as_list(samples)
    for x in samples:
        if x.min() < range_a or x.max() > range_b:
            raise ValueError("samples must lie inside [range_a, range_b]")
    s2 = bounded_sigma2(alpha, d)
    bound = s2 * (range_b - range_a) ** 2
    fa = RelaxedDenoiser(f, alpha)
    lhs = np.array([float(np.mean((fa(x) - x) ** 2)) for x in samples])
    return ProbeReport("bounded_denoiser", lhs, np.full_like(lhs, bound), tol,
                       np.full_like(lhs, max(1.0, bound)), {"alpha": alpha, "d": d, "sigma2": s2})


def check_dilation_containment(f: Callable, alpha: float, epsilon: float, samples,
                               cfg: HalpernConfig | None = None, d: float = 0.0,
                               fix_projection: Callable | None = None,
                               tol: float = 1e-10) -> ProbeReport:
    """Project samples onto ``B_delta`` with ``delta = alpha * eps`` and check the
    projected points are eps-approximate fixed points.

    Uses ``f.fix_projection`` when the denoiser provides a closed form and no
    explicit ``fix_projection`` is given; otherwise Halpern iteration.
    """
    if not 0 <= d < 1 or not 0 < alpha <= (1 - d) / 2:
        raise ValueError(f"need alpha in (0, (1-d)/2]; got d={d}, alpha={alpha}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    delta = alpha * epsilon
    lhs = []
    for x in _as_list(samples):
        xp = project_dilated(f, x, delta, cfg, fix_projection)
        lhs.append(_norm(xp - f(xp)))
    lhs = np.array(lhs)
    return ProbeReport("dilation_containment", lhs, np.full_like(lhs, epsilon), tol,
                       np.full_like(lhs, max(1.0, epsilon)),
                       {"alpha": alpha, "epsilon": epsilon, "delta": delta, "d": d})


def implied_demicontractivity(lipschitz: float) -> float:
    return 1.0 - 2.0 / lipschitz


def check_cocoercivity(f: Callable, samples, fixed_points, lipschitz: float,
                       tol: float = 1e-10) -> ProbeReport:
    """Check ``(1/L) ||r(x) - r(z)||^2 <= <r(x), x - z>`` with ``r = Id - f``
    for samples ``x`` and fixed points ``z``.
    """
    if not lipschitz > 0:
        raise ValueError("Lipschitz candidate must be positive")
    fixed_points = _as_list(fixed_points)
    rz = [z - f(z) for z in fixed_points]
    lhs, rhs, scale = [], [], []
    for x in _as_list(samples):
        rx = x - f(x)
        for z, r_z in zip(fixed_points, rz):
            diff = rx - r_z
            lhs.append(float(np.vdot(diff, diff)) / lipschitz)
            rhs.append(float(np.vdot(rx, x - z)))
            scale.append(max(1.0, float(np.vdot(x - z, x - z))))
    return ProbeReport("cocoercivity", np.array(lhs), np.array(rhs), tol, np.array(scale),
                       {"L": lipschitz, "implied_d": implied_demicontractivity(lipschitz)})


@dataclass
class CycleProbeResult:
    max_cycle_sum: float
    witness: tuple | None
    min_firm_sum: float
    firm_witness: tuple | None
    cycle_sums: np.ndarray = field(repr=False)
    firm_sums: np.ndarray = field(repr=False)

    @property
    def monotone(self) -> bool:
        return self.witness is None

    @property
    def firmly_nonexpansive(self) -> bool:
        return self.firm_witness is None

    def to_csv(self, path) -> None:
        zeros = np.zeros_like(self.cycle_sums)
        ProbeReport("cyclic_monotonicity", self.cycle_sums, zeros).to_csv(path)


def cyclic_monotonicity_probe(f: Callable, cycle_points, m: int, n_cycles: int = 1000,
                              seed: int = 0, exhaustive: bool = False,
                              tol: float = 1e-10) -> CycleProbeResult:
    """Search for cycles violating cyclic monotonicity of ``A = Id - f``.

    For a cycle ``x_1, ..., x_m`` (with ``x_{m+1} = x_1``) evaluates
    ``sum <A(x_i), x_{i+1} - x_i>`` (must be <= 0) and the cyclic firm
    nonexpansiveness sum ``sum <A(x_i), f(x_i) - f(x_{i+1})>`` (must be >= 0).
    Cycles are drawn at random from ``cycle_points``, or all ordered m-tuples
    are enumerated when ``exhaustive`` is set. Witnesses are index tuples
    into ``cycle_points``.
    """
    if m < 2:
        raise ValueError("cycle length m must be at least 2")
    pts = _as_list(cycle_points)
    k = len(pts)
    if k < 2:
        raise ValueError("need at least two points")
    P = np.stack([p.ravel() for p in pts])
    F = np.stack([np.asarray(f(p), dtype=np.float64).ravel() for p in pts])
    A = P - F
    g_ap = A @ P.T
    g_af = A @ F.T
    if exhaustive:
        cycles = np.array(list(itertools.product(range(k), repeat=m)), dtype=int)
    else:
        rng = np.random.default_rng(seed)
        if k >= m:
            cycles = np.array([rng.choice(k, size=m, replace=False) for _ in range(n_cycles)])
        else:
            cycles = rng.integers(0, k, size=(n_cycles, m))
    nxt = np.roll(cycles, -1, axis=1)
    sums = (g_ap[cycles, nxt] - g_ap[cycles, cycles]).sum(axis=1)
    firm = (g_af[cycles, cycles] - g_af[cycles, nxt]).sum(axis=1)
    i_max = int(np.argmax(sums))
    i_min = int(np.argmin(firm))
    scale = max(1.0, float(np.max(np.sum(P * P, axis=1))))
    witness = tuple(int(c) for c in cycles[i_max]) if sums[i_max] > tol * scale else None
    firm_witness = tuple(int(c) for c in cycles[i_min]) if firm[i_min] < -tol * scale else None
    return CycleProbeResult(float(sums[i_max]), witness, float(firm[i_min]), firm_witness, sums, firm)
