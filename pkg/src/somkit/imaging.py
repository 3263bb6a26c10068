"""Stylized parallel-beam CT and identity measurement systems.

``radon`` rotates the sampling grid per view (bilinear interpolation,
rotation about the image center) and sums along rays; ``fbp`` applies a
frequency-domain ramp filter per view (2x zero padding, DC bin zeroed) and
back-projects with ``pi / n_views`` scaling.  Both are linear and written
with torch ops so gradients flow through the full measure/reconstruct
pipeline; numpy arrays pass through transparently.

Object support is the inscribed circle: values outside it may be ignored
by the round trip (rays leaving the grid sample zeros).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import torch

from .core import RngStream

__all__ = [
    "CtGeometry",
    "ImagingSystem",
    "radon",
    "fbp",
    "measure",
    "simulate",
    "inscribed_circle_mask",
]


@dataclass(frozen=True)
class CtGeometry:
    """Parallel-beam scan geometry; angles are ``i * angle_step`` degrees."""

    n_views: int = 180
    angle_step: float = 1.0
    n_detectors: int | None = None  # None: match image width

    def __post_init__(self):
        if self.n_views < 1:
            raise ValueError("n_views must be >= 1")
        if self.n_views * self.angle_step > 180.0 + 1e-9:
            raise ValueError("scan range exceeds 180 degrees")

    def detectors(self, width: int) -> int:
        nd = self.n_detectors if self.n_detectors is not None else width
        if nd < width:
            raise ValueError(f"n_detectors {nd} < image width {width}")
        return nd

    def angles_deg(self) -> np.ndarray:
        return np.arange(self.n_views) * self.angle_step


@dataclass(frozen=True)
class ImagingSystem:
    """Measurement operator plus noise model.

    ``ct``: sinogram-space Gaussian noise, FBP reconstruction.
    ``identity``: image-space Gaussian noise, no operator.
    ``fresh_noise`` controls whether ``simulate`` adds fresh measurement
    noise to generated objects (on by default; off reproduces a purely
    deterministic operator).
    """

    variant: str = "identity"
    noise_std: float = 0.06
    geometry: CtGeometry = CtGeometry()
    fresh_noise: bool = True

    def __post_init__(self):
        if self.variant not in ("ct", "identity"):
            raise ValueError(f"unknown imaging variant {self.variant!r}")
        if self.noise_std < 0:
            raise ValueError("noise_std must be >= 0")


_GRID_CACHE: dict = {}
_CHUNK = 32  # images per grid_sample call; bounds transient memory


def _grids(size: int, geom: CtGeometry, dtype: torch.dtype):
    """Sampling grids for rotation (radon) and back-projection (fbp)."""
    nd = geom.detectors(size)
    key = (size, geom.n_views, geom.angle_step, nd, dtype)
    hit = _GRID_CACHE.get(key)
    if hit is not None:
        return hit
    th = torch.as_tensor(np.deg2rad(geom.angles_deg()), dtype=dtype)
    cos, sin = torch.cos(th), torch.sin(th)
    c = (size - 1) / 2.0

    # radon: for view angle theta, ray offset v (rows) and detector u (cols),
    # sample f at the grid rotated by theta about the image center.
    u = torch.arange(nd, dtype=dtype) - (nd - 1) / 2.0
    v = torch.arange(size, dtype=dtype) - c
    V, U = torch.meshgrid(v, u, indexing="ij")
    x = U[None] * cos[:, None, None] - V[None] * sin[:, None, None]
    y = U[None] * sin[:, None, None] + V[None] * cos[:, None, None]
    rot_grid = torch.stack([x / c, y / c], dim=-1)  # (views, size, nd, 2)

    # fbp: detector coordinate of each pixel, t = x cos + y sin, sampled
    # from the filtered 1-D profile (treated as an nd x 1 image).
    p = torch.arange(size, dtype=dtype) - c
    Y, X = torch.meshgrid(p, p, indexing="ij")
    t = X[None] * cos[:, None, None] + Y[None] * sin[:, None, None]
    tn = t / ((nd - 1) / 2.0)
    bp_grid = torch.stack([torch.zeros_like(tn), tn], dim=-1)  # (views, size, size, 2)

    ramp = torch.fft.rfftfreq(2 * nd).to(dtype)  # |nu|, DC bin already 0
    _GRID_CACHE[key] = (rot_grid, bp_grid, ramp)
    return _GRID_CACHE[key]


def _to_torch(x):
    if isinstance(x, torch.Tensor):
        return x, False
    arr = np.asarray(x)
    dt = torch.float64 if arr.dtype == np.float64 else torch.float32
    return torch.as_tensor(arr, dtype=dt), True


def radon(f, geom: CtGeometry = CtGeometry()):
    """Line integrals of a square image (or batch) over the scan angles.

    Returns a ``(n_views, n_detectors)`` sinogram per image.
    """
    ft, was_np = _to_torch(f)
    batched = ft.ndim == 3
    imgs = ft if batched else ft[None]
    if imgs.shape[-1] != imgs.shape[-2]:
        raise ValueError("radon expects square images")
    size = imgs.shape[-1]
    rot_grid, _, _ = _grids(size, geom, imgs.dtype)
    nv = geom.n_views
    # views ride the grid_sample batch axis, images the channel axis
    out = []
    for lo in range(0, imgs.shape[0], _CHUNK):
        chunk = imgs[lo : lo + _CHUNK]
        inp = chunk[None].expand(nv, *chunk.shape)
        rot = torch.nn.functional.grid_sample(
            inp, rot_grid, mode="bilinear", padding_mode="zeros", align_corners=True
        )
        out.append(rot.sum(dim=2).permute(1, 0, 2))  # (b, views, nd)
    sino = torch.cat(out)
    sino = sino if batched else sino[0]
    return sino.numpy() if was_np else sino


def fbp(sino, geom: CtGeometry = CtGeometry(), size: int | None = None):
    """Ram-Lak filtered back-projection of a sinogram (or batch)."""
    st, was_np = _to_torch(sino)
    batched = st.ndim == 3
    sinos = st if batched else st[None]
    nv, nd = sinos.shape[-2], sinos.shape[-1]
    if nv != geom.n_views:
        raise ValueError(f"sinogram has {nv} views, geometry expects {geom.n_views}")
    size = size if size is not None else nd
    _, bp_grid, ramp = _grids(size, geom, sinos.dtype)

    spec = torch.fft.rfft(sinos, n=2 * nd, dim=-1)
    filt = torch.fft.irfft(spec * ramp, n=2 * nd, dim=-1)[..., :nd]

    out = []
    for lo in range(0, filt.shape[0], _CHUNK):
        prof = filt[lo : lo + _CHUNK].permute(1, 0, 2)[..., None]  # (views, b, nd, 1)
        smear = torch.nn.functional.grid_sample(
            prof, bp_grid, mode="bilinear", padding_mode="zeros", align_corners=True
        )
        out.append(smear.sum(dim=0) * (math.pi / nv))
    rec = torch.cat(out)
    rec = rec if batched else rec[0]
    return rec.numpy() if was_np else rec


def _noise_like(x: torch.Tensor, std: float, rng: RngStream) -> torch.Tensor:
    eps = rng.normal(tuple(x.shape))
    return torch.as_tensor(eps, dtype=x.dtype) * std


def measure(sys: ImagingSystem, f, rng: RngStream | None = None):
    """Apply the measurement process to a true object: the training datum.

    ct: ``fbp(radon(f) + noise)``; identity: ``f + noise``.
    """
    ft, was_np = _to_torch(f)
    if sys.noise_std > 0 and rng is None:
        raise ValueError("measure with noise_std > 0 needs an RngStream")
    if sys.variant == "identity":
        y = ft.clone() if sys.noise_std == 0 else ft + _noise_like(ft, sys.noise_std, rng)
    else:
        sino = radon(ft, sys.geometry)
        if sys.noise_std > 0:
            sino = sino + _noise_like(sino, sys.noise_std, rng)
        y = fbp(sino, sys.geometry, size=ft.shape[-1])
    return y.numpy() if was_np else y


def simulate(sys: ImagingSystem, x0_hat, rng: RngStream | None = None):
    """Measurement pipeline applied to a generated object.

    Identical to :func:`measure` except that measurement noise is only
    simulated when ``sys.fresh_noise`` is on.
    """
    if not sys.fresh_noise:
        sys = ImagingSystem(sys.variant, 0.0, sys.geometry, False)
    return measure(sys, x0_hat, rng)


def inscribed_circle_mask(size: int, fraction: float = 1.0) -> np.ndarray:
    """Boolean mask of the (scaled) inscribed circle about the pixel center."""
    c = (size - 1) / 2.0
    yy, xx = np.mgrid[0:size, 0:size]
    return np.hypot(xx - c, yy - c) <= fraction * size / 2.0
