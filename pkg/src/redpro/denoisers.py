"""Denoising engines and the operator wrappers built on top of them.

A denoiser is anything callable on an image plane. :class:`DenoiserSpec`
describes the built-in engines; :class:`RelaxedDenoiser` and
:class:`EpsilonAdaptiveDenoiser` wrap any callable.

The synthetic kinds (``projection_box``, ``projection_halfspace``,
``linear_symmetric``) have fixed-point sets known in closed form, which is
what makes them useful as ground truth for the probes and solvers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import ndimage

KINDS = (
    "nlm",
    "median",
    "gaussian",
    "box",
    "projection_box",
    "projection_halfspace",
    "linear_symmetric",
    "custom",
)
SYNTHETIC_KINDS = ("projection_box", "projection_halfspace", "linear_symmetric")


@dataclass(frozen=True, eq=False)
class DenoiserSpec:
    """A denoising map ``f`` with strength ``strength`` and kind-specific params.

    Params by kind:

    * ``nlm``: ``patch_radius`` (2), ``search_radius`` (5); bandwidth h = strength
    * ``median``: ``size`` (3)
    * ``gaussian``: smoothing std = strength (pixels)
    * ``box``: ``size`` (3)
    * ``projection_box``: ``lo``, ``hi``
    * ``projection_halfspace``: ``normal`` (array), ``offset``; set is <normal, x> <= offset
    * ``linear_symmetric``: ``matrix`` W acting on the flattened image
    * ``custom``: ``fn`` callable, optional ``fix_projection`` callable
    """

    kind: str
    strength: float = 1.0
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if not self.strength > 0:
            raise ValueError("denoiser strength must be positive")
        p = dict(self.params)
        if self.kind == "nlm":
            p.setdefault("patch_radius", 2)
            p.setdefault("search_radius", 5)
        elif self.kind in ("median", "box"):
            p.setdefault("size", 3)
        elif self.kind == "projection_box":
            if p.get("lo", -np.inf) > p.get("hi", np.inf):
                raise ValueError("projection_box requires lo <= hi")
        elif self.kind == "projection_halfspace":
            normal = np.asarray(p["normal"], dtype=np.float64)
            if not np.any(normal):
                raise ValueError("halfspace normal must be nonzero")
            p["normal"] = normal
            p["offset"] = float(p.get("offset", 0.0))
        elif self.kind == "linear_symmetric":
            w = np.asarray(p["matrix"], dtype=np.float64)
            if w.ndim != 2 or w.shape[0] != w.shape[1] or not np.allclose(w, w.T, atol=1e-12):
                raise ValueError("linear_symmetric requires a symmetric square matrix")
            evals, evecs = np.linalg.eigh(w)
            if evals.min() < -1e-10 or evals.max() > 1 + 1e-10:
                raise ValueError("linear_symmetric eigenvalues must lie in [0, 1]")
            p["matrix"] = w
            p["_fix_basis"] = evecs[:, np.abs(evals - 1.0) < 1e-10]
        elif self.kind == "custom":
            if not callable(p.get("fn")):
                raise ValueError("custom denoiser needs a callable 'fn'")
        object.__setattr__(self, "params", p)

    def __call__(self, x) -> np.ndarray:
        return denoise(self, x)

    @property
    def fix_projection(self) -> Callable | None:
        """Closed-form Euclidean projection onto Fix(f), when one is known."""
        p = self.params
        if self.kind in ("projection_box", "projection_halfspace"):
            return self
        if self.kind == "linear_symmetric":
            basis = p["_fix_basis"]

            def project(x):
                x = np.asarray(x, dtype=np.float64)
                return (basis @ (basis.T @ x.ravel())).reshape(x.shape)

            return project
        if self.kind == "custom":
            return p.get("fix_projection")
        return None


def denoise(spec: DenoiserSpec, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    p = spec.params
    kind = spec.kind
    if kind == "nlm":
        return nlm(x, spec.strength, p["patch_radius"], p["search_radius"])
    if kind == "median":
        return ndimage.median_filter(x, size=p["size"], mode="mirror")
    if kind == "gaussian":
        return ndimage.gaussian_filter(x, sigma=spec.strength, mode="mirror")
    if kind == "box":
        return ndimage.uniform_filter(x, size=p["size"], mode="mirror")
    if kind == "projection_box":
        return np.clip(x, p.get("lo", -np.inf), p.get("hi", np.inf))
    if kind == "projection_halfspace":
        a = p["normal"]
        excess = float(np.vdot(a, x)) - p["offset"]
        if excess <= 0:
            return x.copy()
        return x - (excess / float(np.vdot(a, a))) * a
    if kind == "linear_symmetric":
        w = p["matrix"]
        if x.size != w.shape[0]:
            raise ValueError(f"matrix of size {w.shape[0]} cannot act on image of size {x.size}")
        return (w @ x.ravel()).reshape(x.shape)
    return np.asarray(p["fn"](x), dtype=np.float64)


def nlm(x: np.ndarray, h: float, patch_radius: int = 2, search_radius: int = 5) -> np.ndarray:
    """Pixelwise non-local means with mirror padding.

    Weights are ``exp(-d / h^2)`` where ``d`` is the mean squared difference
    between the two patches. The center pixel gets the largest weight among
    its neighbors.
    """
    x = np.asarray(x, dtype=np.float64)
    hgt, wid = x.shape
    rp, rs = patch_radius, search_radius
    k = 2 * rp + 1
    padded = np.pad(x, rp + rs, mode="reflect")
    center = padded[rs : rs + hgt + 2 * rp, rs : rs + wid + 2 * rp]
    num = np.zeros_like(x)
    den = np.zeros_like(x)
    wmax = np.zeros_like(x)
    d2 = np.empty_like(center)
    cols = np.empty((hgt, wid + 2 * rp))
    w = np.empty_like(x)
    tmp = np.empty_like(x)
    scale = -1.0 / (h * h * k * k)
    for dy in range(-rs, rs + 1):
        for dx in range(-rs, rs + 1):
            if dy == 0 and dx == 0:
                continue
            shifted = padded[rs + dy : rs + dy + hgt + 2 * rp, rs + dx : rs + dx + wid + 2 * rp]
            np.subtract(center, shifted, out=d2)
            np.multiply(d2, d2, out=d2)
            # separable k x k box sum
            np.copyto(cols, d2[0:hgt])
            for i in range(1, k):
                cols += d2[i : i + hgt]
            np.copyto(w, cols[:, 0:wid])
            for j in range(1, k):
                w += cols[:, j : j + wid]
            w *= scale
            np.exp(w, out=w)
            np.multiply(w, shifted[rp : rp + hgt, rp : rp + wid], out=tmp)
            num += tmp
            den += w
            np.maximum(wmax, w, out=wmax)
    num += wmax * x
    den += wmax
    out = x.copy()
    ok = den > 0
    out[ok] = num[ok] / den[ok]
    return out


def denoise_scaled(spec: DenoiserSpec, x, target_sigma: float) -> np.ndarray:
    """Run ``spec`` at strength ``target_sigma`` via input rescaling.

    ``f_target(x) = (target / native) * f_native((native / target) * x)``.
    """
    if not target_sigma > 0:
        raise ValueError("target_sigma must be positive")
    x = np.asarray(x, dtype=np.float64)
    if target_sigma == spec.strength:
        return denoise(spec, x)
    scale = spec.strength / target_sigma
    return denoise(spec, scale * x) / scale


@dataclass(frozen=True, eq=False)
class RelaxedDenoiser:
    """``f_alpha = alpha * f + (1 - alpha) * Id``; same fixed points as ``f``."""

    inner: Callable
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha <= 1:
            raise ValueError(f"alpha must lie in (0, 1], got {self.alpha}")

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        return self.alpha * self.inner(x) + (1.0 - self.alpha) * x


def relax(spec: Callable, alpha: float) -> RelaxedDenoiser:
    return RelaxedDenoiser(spec, alpha)


def evaluate_relaxed(rd: RelaxedDenoiser, x) -> np.ndarray:
    return rd(x)


@dataclass(frozen=True, eq=False)
class EpsilonAdaptiveDenoiser:
    """``f_eps(x) = a(x) x + (1 - a(x)) f(x)`` with ``a(x) = eps / max(eps, ||x - f(x)||)``.

    Its fixed points are exactly the eps-approximate fixed points of ``f``.
    Outside that set the residual shrinks by eps: ``||x - f_eps(x)|| =
    ||x - f(x)|| - eps``.
    """

    inner: Callable
    epsilon: float

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")

    def weight(self, x, fx=None) -> float:
        x = np.asarray(x, dtype=np.float64)
        fx = self.inner(x) if fx is None else fx
        return self.epsilon / max(self.epsilon, float(np.linalg.norm(x - fx)))

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        fx = self.inner(x)
        a = self.weight(x, fx)
        return a * x + (1.0 - a) * fx


def epsilon_adapt(spec: Callable, epsilon: float) -> EpsilonAdaptiveDenoiser:
    return EpsilonAdaptiveDenoiser(spec, epsilon)


def evaluate_adaptive(ed: EpsilonAdaptiveDenoiser, x) -> np.ndarray:
    return ed(x)


# Convenience constructors.

def nlm_denoiser(strength: float, patch_radius: int = 2, search_radius: int = 5) -> DenoiserSpec:
    return DenoiserSpec("nlm", strength, {"patch_radius": patch_radius, "search_radius": search_radius})


def median_denoiser(size: int = 3) -> DenoiserSpec:
    return DenoiserSpec("median", 1.0, {"size": size})


def gaussian_denoiser(std: float) -> DenoiserSpec:
    return DenoiserSpec("gaussian", std)


def box_denoiser(size: int = 3) -> DenoiserSpec:
    return DenoiserSpec("box", 1.0, {"size": size})


def projection_box(lo: float, hi: float) -> DenoiserSpec:
    return DenoiserSpec("projection_box", 1.0, {"lo": lo, "hi": hi})


def projection_halfspace(normal, offset: float = 0.0) -> DenoiserSpec:
    return DenoiserSpec("projection_halfspace", 1.0, {"normal": normal, "offset": offset})


def linear_symmetric(matrix) -> DenoiserSpec:
    return DenoiserSpec("linear_symmetric", 1.0, {"matrix": matrix})


def custom(fn: Callable, fix_projection: Callable | None = None, strength: float = 1.0) -> DenoiserSpec:
    return DenoiserSpec("custom", strength, {"fn": fn, "fix_projection": fix_projection})


def identity() -> DenoiserSpec:
    ident = lambda x: np.array(x, dtype=np.float64)  # noqa: E731
    return custom(ident, fix_projection=ident)


def scaled_negation(t: float) -> DenoiserSpec:
    """``f(x) = -t x``; Fix = {0}, demicontractive with d = (t-1)/(t+1) for t > 1."""
    return custom(lambda x: -t * np.asarray(x, dtype=np.float64), fix_projection=np.zeros_like)
