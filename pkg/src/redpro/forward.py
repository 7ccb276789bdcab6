"""Linear degradation operators and the quadratic data-fidelity term.

All convolutions are circular, so a pure blur is diagonalized by the 2-D DFT
and the fidelity proximal map has an exact per-frequency solution.
Blur followed by decimation is not circulant; its proximal map falls back to
conjugate gradients.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

BLUR = "blur"
BLUR_THEN_DECIMATE = "blur_then_decimate"


class ProxConvergenceError(RuntimeError):
    """Conjugate gradients did not reach the requested residual."""

    def __init__(self, message: str, residual: float, iterations: int):
        super().__init__(message)
        self.residual = residual
        self.iterations = iterations


@dataclass(frozen=True, eq=False)
class Kernel:
    """Normalized point-spread function with odd extent on both axes."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 2 or taps.shape[0] % 2 == 0 or taps.shape[1] % 2 == 0:
            raise ValueError(f"kernel must be 2-D with odd extents, got {taps.shape}")
        if abs(taps.sum() - 1.0) > 1e-12:
            raise ValueError(f"kernel taps must sum to 1, got {taps.sum()!r}")
        object.__setattr__(self, "taps", taps)

    @property
    def size(self) -> tuple[int, int]:
        return self.taps.shape


def delta_kernel() -> Kernel:
    return Kernel(np.ones((1, 1)))


def uniform_kernel(size: int) -> Kernel:
    return Kernel(np.full((size, size), 1.0 / size**2))


def gaussian_kernel(size: int, std: float) -> Kernel:
    """Gaussian PSF truncated to ``size x size`` and renormalized."""
    r = np.arange(size) - size // 2
    g = np.exp(-(r[:, None] ** 2 + r[None, :] ** 2) / (2.0 * std**2))
    return Kernel(g / g.sum())


def _psf_to_otf(taps: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
    # Kernel center goes to index (0, 0); taps wider than the image wrap around.
    kh, kw = taps.shape
    rows = (np.arange(kh) - kh // 2) % shape[0]
    cols = (np.arange(kw) - kw // 2) % shape[1]
    psf = np.zeros(shape)
    np.add.at(psf, (rows[:, None], cols[None, :]), taps)
    return np.fft.rfft2(psf)


@dataclass(frozen=True, eq=False)
class DegradationModel:
    """Circular blur, optionally followed by keeping every k-th pixel.

    Decimation keeps the top-left sample of each ``k x k`` block; the
    adjoint zero-fills the other samples.
    """

    kernel: Kernel
    kind: str = BLUR
    decimation: int = 1
    noise_sigma: float = 1.0
    # OTFs keyed by image shape; recomputation is idempotent so races are harmless.
    _otf_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        if self.kind not in (BLUR, BLUR_THEN_DECIMATE):
            raise ValueError(f"unknown degradation kind {self.kind!r}")
        if int(self.decimation) != self.decimation or self.decimation < 1:
            raise ValueError("decimation factor must be a positive integer")
        if self.kind == BLUR and self.decimation != 1:
            raise ValueError("kind 'blur' requires decimation factor 1")
        if self.noise_sigma < 0:
            raise ValueError("noise_sigma must be nonnegative")

    @property
    def circulant(self) -> bool:
        return self.kind == BLUR

    def otf(self, shape) -> np.ndarray:
        shape = tuple(shape)
        otf = self._otf_cache.get(shape)
        if otf is None:
            otf = _psf_to_otf(self.kernel.taps, shape)
            self._otf_cache[shape] = otf
        return otf

    def output_shape(self, shape) -> tuple[int, int]:
        h, w = shape
        k = self.decimation
        if h % k or w % k:
            raise ValueError(f"image shape {shape} not divisible by decimation factor {k}")
        return h // k, w // k

    def input_shape(self, out_shape) -> tuple[int, int]:
        return out_shape[0] * self.decimation, out_shape[1] * self.decimation

    def blur(self, x: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(np.fft.rfft2(x) * self.otf(x.shape), s=x.shape)

    def blur_adjoint(self, x: np.ndarray) -> np.ndarray:
        return np.fft.irfft2(np.fft.rfft2(x) * np.conj(self.otf(x.shape)), s=x.shape)

    def forward(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {x.shape}")
        self.output_shape(x.shape)
        out = self.blur(x)
        k = self.decimation
        return out[::k, ::k].copy() if k > 1 else out

    def adjoint(self, r) -> np.ndarray:
        r = np.asarray(r, dtype=np.float64)
        if r.ndim != 2:
            raise ValueError(f"expected a 2-D image, got shape {r.shape}")
        k = self.decimation
        if k > 1:
            up = np.zeros(self.input_shape(r.shape))
            up[::k, ::k] = r
            r = up
        return self.blur_adjoint(r)


@dataclass(frozen=True, eq=False)
class MatrixModel:
    """Dense linear operator acting on arrays of a fixed shape.

    Handy for small problems (LASSO, least squares) that are not images.
    """

    matrix: np.ndarray
    noise_sigma: float = 1.0
    in_shape: tuple = None
    out_shape: tuple = None

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        object.__setattr__(self, "matrix", m)
        if self.in_shape is None:
            object.__setattr__(self, "in_shape", (m.shape[1],))
        if self.out_shape is None:
            object.__setattr__(self, "out_shape", (m.shape[0],))
        if int(np.prod(self.in_shape)) != m.shape[1] or int(np.prod(self.out_shape)) != m.shape[0]:
            raise ValueError("in_shape/out_shape inconsistent with matrix dimensions")

    circulant = False

    def output_shape(self, shape):
        if tuple(shape) != tuple(self.in_shape):
            raise ValueError(f"expected input shape {self.in_shape}, got {shape}")
        return tuple(self.out_shape)

    def input_shape(self, out_shape):
        if tuple(out_shape) != tuple(self.out_shape):
            raise ValueError(f"expected output shape {self.out_shape}, got {out_shape}")
        return tuple(self.in_shape)

    def forward(self, x):
        x = np.asarray(x, dtype=np.float64)
        self.output_shape(x.shape)
        return (self.matrix @ x.ravel()).reshape(self.out_shape)

    def adjoint(self, r):
        r = np.asarray(r, dtype=np.float64)
        self.input_shape(r.shape)
        return (self.matrix.T @ r.ravel()).reshape(self.in_shape)


def apply_forward(model, x) -> np.ndarray:
    return model.forward(x)


def apply_adjoint(model, r) -> np.ndarray:
    return model.adjoint(r)


def degrade(model, clean, seed) -> np.ndarray:
    """Apply ``model`` and add i.i.d. Gaussian noise with std ``model.noise_sigma``."""
    out = model.forward(clean)
    if model.noise_sigma > 0:
        rng = np.random.default_rng(seed)
        out = out + rng.normal(0.0, model.noise_sigma, size=out.shape)
    return out


def estimate_lipschitz(model, shape, tol: float = 1e-8, max_iter: int = 20000, seed: int = 0) -> float:
    """Upper estimate of the largest eigenvalue of ``H^T H / sigma^2``.

    Power iteration with a Rayleigh-quotient estimate, stopped when the
    estimate changes by less than ``tol`` relatively. The result is inflated
    by 1% so it can be used directly in step-size rules.
    """
    sigma2 = model.noise_sigma**2
    if sigma2 == 0:
        raise ValueError("Lipschitz constant undefined for noise_sigma = 0")
    x = np.random.default_rng(seed).standard_normal(tuple(shape))
    x /= np.linalg.norm(x)
    lam = 0.0
    for _ in range(max_iter):
        ax = model.adjoint(model.forward(x)) / sigma2
        new = float(np.vdot(x, ax))
        nrm = np.linalg.norm(ax)
        if nrm == 0:
            return 0.0
        x = ax / nrm
        if lam > 0 and abs(new - lam) <= tol * abs(new):
            lam = new
            break
        lam = new
    return 1.01 * lam


def conjugate_gradient(apply_a, b, x0=None, max_iter: int = 200, tol: float = 1e-10):
    """Solve ``A x = b`` for symmetric positive definite ``A``.

    Returns ``(x, relative_residual, iterations)``; ``tol`` is relative to
    ``||b||``.
    """
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64)
    r = b - apply_a(x)
    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros_like(b), 0.0, 0
    p = r.copy()
    rs = float(np.vdot(r, r))
    it = 0
    while it < max_iter and np.sqrt(rs) > tol * bnorm:
        ap = apply_a(p)
        step = rs / float(np.vdot(p, ap))
        x += step * p
        r -= step * ap
        rs_new = float(np.vdot(r, r))
        p = r + (rs_new / rs) * p
        rs = rs_new
        it += 1
    return x, float(np.sqrt(rs) / bnorm), it


@dataclass(eq=False)
class FidelityModel:
    """Quadratic data term ``l(x; y) = ||H x - y||^2 / (2 sigma^2)``."""

    degradation: object
    y: np.ndarray
    lipschitz: float | None = None

    def __post_init__(self):
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.degradation.noise_sigma <= 0:
            raise ValueError("fidelity requires noise_sigma > 0")
        self.input_shape = tuple(self.degradation.input_shape(self.y.shape))
        self._hty = None
        if self.lipschitz is None:
            self.lipschitz = estimate_lipschitz(self.degradation, self.input_shape)

    @property
    def sigma2(self) -> float:
        return self.degradation.noise_sigma ** 2

    @property
    def hty(self) -> np.ndarray:
        if self._hty is None:
            self._hty = self.degradation.adjoint(self.y)
        return self._hty

    def _check(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != self.input_shape:
            raise ValueError(f"expected shape {self.input_shape}, got {x.shape}")
        return x

    def value(self, x) -> float:
        return fidelity_value(self, x)

    def grad(self, x) -> np.ndarray:
        return fidelity_grad(self, x)

    def prox(self, u, weight, **kwargs) -> np.ndarray:
        return fidelity_prox(self, u, weight, **kwargs)


def fidelity_value(fm: FidelityModel, x) -> float:
    x = fm._check(x)
    r = fm.degradation.forward(x) - fm.y
    return 0.5 * float(np.vdot(r, r)) / fm.sigma2


def fidelity_grad(fm: FidelityModel, x) -> np.ndarray:
    x = fm._check(x)
    return fm.degradation.adjoint(fm.degradation.forward(x) - fm.y) / fm.sigma2


def fidelity_prox(fm: FidelityModel, u, weight: float, x0=None, max_iter: int = 200, tol: float = 1e-10):
    """``argmin_v ||u - v||^2 / 2 + weight * l(v; y)``.

    Solves ``(I + c H^T H) v = u + c H^T y`` with ``c = weight / sigma^2``,
    exactly in the Fourier domain when H is circulant and by conjugate
    gradients otherwise (``x0``, ``max_iter`` and ``tol`` apply only there).
    """
    u = fm._check(u)
    if weight < 0:
        raise ValueError("prox weight must be nonnegative")
    if weight == 0:
        return u.copy()
    c = weight / fm.sigma2
    rhs = u + c * fm.hty
    model = fm.degradation
    if model.circulant:
        otf = model.otf(u.shape)
        return np.fft.irfft2(np.fft.rfft2(rhs) / (1.0 + c * np.abs(otf) ** 2), s=u.shape)

    def normal_op(v):
        return v + c * model.adjoint(model.forward(v))

    v, res, it = conjugate_gradient(normal_op, rhs, x0=u if x0 is None else x0, max_iter=max_iter, tol=tol)
    if res > tol:
        raise ProxConvergenceError(
            f"CG stopped after {it} iterations with relative residual {res:.3e}", res, it
        )
    return v
