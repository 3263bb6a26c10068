"""Ground-truth object ensembles: lumpy backgrounds and raster ingestion.

The lumpy model draws a Poisson number of isotropic Gaussian blobs at
uniform continuous positions, sums them and (by default) clips to [0, 1].
External image sets are ingested from SOMT/SOMA containers or binary PGM
rasters with per-image min-max normalization.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field

import numpy as np

from .core import (
    FileFormatError,
    RngStream,
    load_archive,
    load_tensor,
    save_archive,
)

__all__ = [
    "LumpySpec",
    "ObjectEnsemble",
    "DimensionMismatchError",
    "EmptySourceError",
    "render_lumps",
    "sample_lumpy",
    "sample_lumpy_ensemble",
    "ingest",
    "save_ensemble",
    "load_ensemble",
    "read_pgm",
    "write_pgm",
]


class DimensionMismatchError(ValueError):
    """Images in one source do not share a single size."""


class EmptySourceError(ValueError):
    """An ingestion source contained no images."""


@dataclass(frozen=True)
class LumpySpec:
    """Parameters of the lumpy background model.

    ``mean_lumps`` is the Poisson mean of the blob count, ``amplitude`` the
    peak value of one blob and ``width`` its Gaussian sigma in pixels.  For
    pixels more than a few ``width`` away from the border, the expected
    (unclipped) pixel value is ``mean_lumps * amplitude * 2*pi*width**2 /
    (size*size)``.
    """

    size: int = 64
    mean_lumps: float = 40.0
    amplitude: float = 0.3
    width: float = 2.5
    clip: bool = True

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("size must be >= 1")
        if self.mean_lumps <= 0 or self.amplitude <= 0 or self.width <= 0:
            raise ValueError("mean_lumps, amplitude and width must be positive")


def render_lumps(spec: LumpySpec, centers: np.ndarray) -> np.ndarray:
    """Sum Gaussian blobs at the given (x, y) centers on the pixel grid."""
    size = spec.size
    img = np.zeros((size, size), dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if len(centers):
        grid = np.arange(size, dtype=np.float64)
        dx2 = (grid[None, :] - centers[:, 0:1]) ** 2  # (n, size) column offsets
        dy2 = (grid[None, :] - centers[:, 1:2]) ** 2  # (n, size) row offsets
        inv = 1.0 / (2.0 * spec.width**2)
        # separable: exp(-(dx^2+dy^2)/2s^2) = exp(-dy^2/..) outer exp(-dx^2/..)
        ex = np.exp(-dx2 * inv)
        ey = np.exp(-dy2 * inv)
        img = spec.amplitude * np.einsum("ni,nj->ij", ey, ex)
    if spec.clip:
        img = np.clip(img, 0.0, 1.0)
    return img


def sample_lumpy(spec: LumpySpec, rng: RngStream) -> np.ndarray:
    """Draw one lumpy background image."""
    n = rng.poisson(spec.mean_lumps)
    centers = rng.uniform(0.0, spec.size, shape=(n, 2))
    return render_lumps(spec, centers)


def sample_lumpy_ensemble(spec: LumpySpec, n: int, rng: RngStream) -> "ObjectEnsemble":
    """Draw ``n`` independent lumpy images; image ``i`` depends only on
    ``(rng.seed, rng.stream_id, i)`` so ensembles are replayable per index."""
    imgs = np.stack(
        [sample_lumpy(spec, rng.child("lumpy", i)) for i in range(n)]
    ) if n else np.zeros((0, spec.size, spec.size))
    return ObjectEnsemble(images=imgs, provenance=f"lumpy:{spec}")


@dataclass
class ObjectEnsemble:
    """A stack of same-sized grayscale objects with provenance."""

    images: np.ndarray  # (n, H, W)
    provenance: str = ""

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float64)
        if self.images.ndim != 3:
            raise DimensionMismatchError(
                f"expected (n, H, W) image stack, got shape {self.images.shape}"
            )

    def __len__(self) -> int:
        return len(self.images)

    @property
    def image_shape(self) -> tuple[int, int]:
        return self.images.shape[1], self.images.shape[2]


def _normalize(img: np.ndarray) -> np.ndarray:
    """Min-max normalize into [0, 1]; a constant image maps to all zeros."""
    img = img.astype(np.float64)
    lo, hi = img.min(), img.max()
    if hi == lo:
        return np.zeros_like(img)
    return (img - lo) / (hi - lo)


def read_pgm(path) -> np.ndarray:
    """Read a binary (P5) 8-bit PGM file."""
    with open(path, "rb") as fh:
        data = fh.read()

    tokens = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        if start == pos:
            raise FileFormatError(f"{path}: truncated PGM header")
        tokens.append(data[start:pos])
    pos += 1  # single whitespace after maxval

    if tokens[0] != b"P5":
        raise FileFormatError(f"{path}: not a binary PGM (P5) file")
    width, height, maxval = (int(t) for t in tokens[1:4])
    if maxval != 255:
        raise FileFormatError(f"{path}: only 8-bit PGM supported (maxval 255)")
    need = width * height
    raw = data[pos : pos + need]
    if len(raw) < need:
        raise FileFormatError(f"{path}: PGM payload truncated")
    return np.frombuffer(raw, dtype=np.uint8).reshape(height, width).copy()


def write_pgm(path, img: np.ndarray) -> None:
    """Write a [0, 1] float image as an 8-bit binary PGM."""
    img = np.asarray(img, dtype=np.float64)
    u8 = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    h, w = u8.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(u8.tobytes())


def _load_any_image(path) -> np.ndarray:
    if str(path).endswith(".pgm"):
        return read_pgm(path).astype(np.float64)
    arr = load_tensor(path)
    if arr.ndim != 2:
        raise DimensionMismatchError(f"{path}: expected a rank-2 tensor, got rank {arr.ndim}")
    return arr.astype(np.float64)


def ingest(source) -> ObjectEnsemble:
    """Build a normalized ensemble from a SOMA archive, a SOMT file, or a
    directory of SOMT/PGM images.

    Images are min-max normalized into [0, 1] individually and ordered by
    filename (directories) or entry name (archives).
    """
    source = os.fspath(source)
    named: list[tuple[str, np.ndarray]] = []
    if os.path.isdir(source):
        for name in sorted(os.listdir(source)):
            if name.endswith((".pgm", ".somt")):
                named.append((name, _load_any_image(os.path.join(source, name))))
    elif source.endswith(".soma"):
        arch = load_archive(source)
        for name in sorted(arch):
            if arch[name].ndim == 2:
                named.append((name, arch[name].astype(np.float64)))
    else:
        named.append((os.path.basename(source), _load_any_image(source)))

    if not named:
        raise EmptySourceError(f"no images found in {source}")
    shapes = {a.shape for _, a in named}
    if len(shapes) != 1:
        raise DimensionMismatchError(f"mixed image sizes in {source}: {sorted(shapes)}")
    imgs = np.stack([_normalize(a) for _, a in named])
    return ObjectEnsemble(images=imgs, provenance=f"ingest:{source}")


def save_ensemble(path, ens: ObjectEnsemble, dtype=np.float32) -> None:
    """Write an ensemble as a SOMA archive, one entry per image."""
    entries = [
        (f"img/{i:06d}", ens.images[i].astype(dtype)) for i in range(len(ens))
    ]
    save_archive(path, entries)


def load_ensemble(path) -> ObjectEnsemble:
    arch = load_archive(path)
    names = sorted(arch)
    if not names:
        return ObjectEnsemble(images=np.zeros((0, 0, 0)), provenance=f"archive:{path}")
    imgs = np.stack([arch[n].astype(np.float64) for n in names])
    return ObjectEnsemble(images=imgs, provenance=f"archive:{path}")
