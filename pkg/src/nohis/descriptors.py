"""Local image descriptors: multi-scale Harris interest points + order-3 Zernike moments.

Each interest point yields a 12-dimensional vector: the real and imaginary
parts of the six complex Zernike moments Z_pq with p <= 3 and q >= 0,
p - q even, taken over a disk of radius ``radius_factor * scale``.
"""

from __future__ import annotations

import io
import os
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import BinaryIO, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .errors import (
    BadMagicError,
    CorruptStreamError,
    FormatError,
    ImageTooSmallError,
    NohisError,
    PatchOutOfBoundsError,
    TruncatedStreamError,
    UnsupportedFormatError,
    VersionMismatchError,
    ZeroAreaImageError,
)

DESCRIPTOR_DIM = 12
ZERNIKE_ORDERS = ((0, 0), (1, 1), (2, 0), (2, 2), (3, 1), (3, 3))
LUMA = (0.299, 0.587, 0.114)
MIN_IMAGE_SIDE = 16


@dataclass(eq=False)
class GrayImage:
    pixels: np.ndarray   # (height, width), float64 in [0, 1]

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @classmethod
    def from_array(cls, arr) -> "GrayImage":
        a = np.asarray(arr, dtype=np.float64)
        if a.ndim != 2:
            raise ValueError("expected a 2-d array")
        if a.size == 0:
            raise ZeroAreaImageError("zero-area image")
        if a.min() < 0.0 or a.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        return cls(np.ascontiguousarray(a))


@dataclass(frozen=True)
class InterestPoint:
    x: float
    y: float
    scale: float
    response: float


# ---------------------------------------------------------------------------
# image I/O

def _read_source(source) -> bytes:
    if isinstance(source, (bytes, bytearray, memoryview)):
        return bytes(source)
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    return source.read()


def load_image(source) -> GrayImage:
    """Load a PGM (P2/P5) or 8-bit gray/RGB PNG as a [0, 1] grayscale raster."""
    data = _read_source(source)
    if not data:
        raise CorruptStreamError("empty stream")
    if data[:2] in (b"P2", b"P5"):
        return _parse_pgm(data)
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _load_png(data)
    raise UnsupportedFormatError("unsupported image format")


def _pgm_header(data: bytes, count: int) -> Tuple[List[bytes], int]:
    """Return the first ``count`` whitespace-separated header tokens and the offset after them."""
    tokens, pos, n = [], 0, len(data)
    while len(tokens) < count:
        while pos < n and data[pos:pos + 1].isspace():
            pos += 1
        if pos < n and data[pos:pos + 1] == b"#":
            while pos < n and data[pos:pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < n and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise CorruptStreamError("truncated PGM header")
        tokens.append(data[start:pos])
    return tokens, pos


def _parse_pgm(data: bytes) -> GrayImage:
    tokens, pos = _pgm_header(data, 4)
    magic = tokens[0]
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise CorruptStreamError("non-numeric PGM header") from None
    if width <= 0 or height <= 0:
        raise ZeroAreaImageError("zero-area image")
    if not 0 < maxval < 65536:
        raise CorruptStreamError(f"invalid PGM maxval {maxval}")
    count = width * height
    if magic == b"P5":
        pos += 1  # single whitespace byte after maxval
        dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
        raw = data[pos:pos + count * dtype.itemsize]
        if len(raw) < count * dtype.itemsize:
            raise CorruptStreamError("truncated PGM raster")
        vals = np.frombuffer(raw, dtype=dtype).astype(np.float64)
    else:
        try:
            vals = np.array([int(t) for t in data[pos:].split()[:count]], dtype=np.float64)
        except ValueError:
            raise CorruptStreamError("non-numeric PGM raster") from None
        if vals.size < count:
            raise CorruptStreamError("truncated PGM raster")
    if vals.max() > maxval:
        raise CorruptStreamError("PGM sample exceeds maxval")
    return GrayImage(vals.reshape(height, width) / maxval)


def _load_png(data: bytes) -> GrayImage:
    from PIL import Image

    try:
        im = Image.open(io.BytesIO(data))
        im.load()
    except Exception as exc:
        raise CorruptStreamError(f"corrupt PNG: {exc}") from None
    if im.width == 0 or im.height == 0:
        raise ZeroAreaImageError("zero-area image")
    if im.mode in ("1", "L", "LA"):
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    elif im.mode in ("RGB", "RGBA", "P"):
        rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
        arr = rgb @ np.array(LUMA)
    else:
        raise UnsupportedFormatError(f"unsupported PNG mode {im.mode}")
    return GrayImage(np.clip(arr / 255.0, 0.0, 1.0))


def save_pgm(target, img: GrayImage) -> None:
    q = np.rint(np.clip(img.pixels, 0, 1) * 255).astype(np.uint8)
    header = f"P5\n{img.width} {img.height}\n255\n".encode()
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            fh.write(header + q.tobytes())
    else:
        target.write(header + q.tobytes())


# ---------------------------------------------------------------------------
# interest points

@dataclass
class HarrisParams:
    kappa: float = 0.04
    sigma0: float = 1.6
    scale_step: float = 1.35
    n_scales: int = 5
    integration_ratio: float = 1.5
    threshold_ratio: float = 1e-4   # relative to the strongest response at the same scale
    min_response: float = 1e-10     # absolute floor; keeps round-off on flat images out
    max_points: int = 300
    radius_factor: float = 6.0
    scales: Optional[List[float]] = None   # explicit ladder; overrides sigma0/scale_step

    @property
    def sigmas(self) -> List[float]:
        if self.scales:
            return sorted(self.scales)
        return [self.sigma0 * self.scale_step ** i for i in range(self.n_scales)]


def harris_response(pixels: np.ndarray, sigma: float, kappa: float = 0.04,
                    integration_ratio: float = 1.5) -> np.ndarray:
    """Scale-normalized Harris measure det(mu) - kappa * trace(mu)^2."""
    lx = ndimage.gaussian_filter(pixels, sigma, order=(0, 1))
    ly = ndimage.gaussian_filter(pixels, sigma, order=(1, 0))
    si = integration_ratio * sigma
    w = sigma * sigma
    a = w * ndimage.gaussian_filter(lx * lx, si)
    b = w * ndimage.gaussian_filter(ly * ly, si)
    c = w * ndimage.gaussian_filter(lx * ly, si)
    return a * b - c * c - kappa * (a + b) ** 2


def _subpixel(r: np.ndarray, y: int, x: int) -> Tuple[float, float]:
    h, w = r.shape
    dx = dy = 0.0
    if 0 < x < w - 1:
        den = r[y, x - 1] - 2 * r[y, x] + r[y, x + 1]
        if den < 0:
            dx = float(np.clip(0.5 * (r[y, x - 1] - r[y, x + 1]) / den, -0.5, 0.5))
    if 0 < y < h - 1:
        den = r[y - 1, x] - 2 * r[y, x] + r[y + 1, x]
        if den < 0:
            dy = float(np.clip(0.5 * (r[y - 1, x] - r[y + 1, x]) / den, -0.5, 0.5))
    return x + dx, y + dy


def harris_multiscale(img: GrayImage, params: Optional[HarrisParams] = None) -> List[InterestPoint]:
    """Interest points that are 3x3x3 space-scale maxima of the Harris measure.

    Points whose Zernike patch would leave the image are dropped. At most
    ``params.max_points`` are returned, strongest first.
    """
    p = params or HarrisParams()
    h, w = img.height, img.width
    if h < MIN_IMAGE_SIDE or w < MIN_IMAGE_SIDE:
        raise ImageTooSmallError(f"image {w}x{h} is below {MIN_IMAGE_SIDE}x{MIN_IMAGE_SIDE}")
    sigmas = p.sigmas
    stack = np.stack([harris_response(img.pixels, s, p.kappa, p.integration_ratio)
                      for s in sigmas])
    peak = stack.reshape(len(sigmas), -1).max(axis=1)
    thresh = np.maximum(p.threshold_ratio * peak, p.min_response)
    local_max = ndimage.maximum_filter(stack, size=3, mode="constant", cval=-np.inf)
    cand = (stack == local_max) & (stack > thresh[:, None, None])

    points = []
    for si, yi, xi in zip(*np.nonzero(cand)):
        sigma = sigmas[si]
        r = p.radius_factor * sigma
        x, y = _subpixel(stack[si], int(yi), int(xi))
        if x - r < 0 or y - r < 0 or x + r > w - 1 or y + r > h - 1:
            continue
        points.append((-float(stack[si, yi, xi]), int(si), int(yi), int(xi),
                       InterestPoint(x, y, sigma, float(stack[si, yi, xi]))))
    points.sort(key=lambda t: t[:4])
    return [t[4] for t in points[: p.max_points]]


# ---------------------------------------------------------------------------
# Zernike moments

def zernike_moments(img: GrayImage, x: float, y: float, radius: float) -> np.ndarray:
    """Complex Z_pq for ZERNIKE_ORDERS over the disk of ``radius`` pixels centred at (x, y).

    Pixel offsets are divided by the radius so the disk becomes the unit
    disk; the angle is measured with y pointing up. The area element is
    pi / (pixels in disk), so a constant patch of value 1 gives Z_00 = 1.
    """
    h, w = img.height, img.width
    if x - radius < 0 or y - radius < 0 or x + radius > w - 1 or y + radius > h - 1:
        raise PatchOutOfBoundsError(
            f"patch of radius {radius:.2f} at ({x:.2f}, {y:.2f}) leaves the {w}x{h} image")
    cols = np.arange(int(np.ceil(x - radius)), int(np.floor(x + radius)) + 1)
    rows = np.arange(int(np.ceil(y - radius)), int(np.floor(y + radius)) + 1)
    z = ((cols[None, :] - x) + 1j * (y - rows[:, None])) / radius
    rho2 = z.real ** 2 + z.imag ** 2
    inside = rho2 <= 1.0
    f = img.pixels[np.ix_(rows, cols)][inside]
    zc = np.conj(z[inside])
    rho2 = rho2[inside]
    npix = f.shape[0]
    # R_pq(rho) * exp(-i q theta), written with powers of conj(z)
    basis = (
        np.ones_like(rho2),
        zc,
        2 * rho2 - 1,
        zc * zc,
        (3 * rho2 - 2) * zc,
        zc * zc * zc,
    )
    return np.array([(p + 1) / npix * np.sum(f * v) for (p, _), v in zip(ZERNIKE_ORDERS, basis)],
                    dtype=np.complex128)


def zernike_descriptor(img: GrayImage, p: InterestPoint, radius_factor: float = 6.0) -> np.ndarray:
    """The 12-d vector (Re Z_00, Im Z_00, Re Z_11, Im Z_11, ...) for one interest point."""
    zm = zernike_moments(img, p.x, p.y, radius_factor * p.scale)
    out = np.empty(DESCRIPTOR_DIM)
    out[0::2] = zm.real
    out[1::2] = zm.imag
    return out


def zernike_magnitudes(vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec)
    return np.hypot(v[0::2], v[1::2])


# ---------------------------------------------------------------------------
# batch extraction

@dataclass(frozen=True)
class DescriptorRecord:
    vector: np.ndarray
    image_id: int
    global_index: int


@dataclass(eq=False)
class DescriptorSet:
    vectors: np.ndarray          # (m, dim)
    image_ids: np.ndarray        # (m,) uint32
    global_indices: np.ndarray   # (m,) uint64

    @classmethod
    def empty(cls, dim: int = DESCRIPTOR_DIM) -> "DescriptorSet":
        return cls(np.empty((0, dim)), np.empty(0, np.uint32), np.empty(0, np.uint64))

    @classmethod
    def from_vectors(cls, vectors, image_ids=None) -> "DescriptorSet":
        v = np.asarray(vectors, dtype=np.float64)
        m = v.shape[0]
        ids = np.zeros(m, np.uint32) if image_ids is None else np.asarray(image_ids, np.uint32)
        return cls(v, ids, np.arange(m, dtype=np.uint64))

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def __len__(self) -> int:
        return int(self.vectors.shape[0])

    def __iter__(self):
        for i in range(len(self)):
            yield DescriptorRecord(self.vectors[i], int(self.image_ids[i]),
                                   int(self.global_indices[i]))


@dataclass
class Extraction:
    descriptors: DescriptorSet
    counts: Dict[int, int] = field(default_factory=dict)
    failures: List[Tuple[int, str]] = field(default_factory=list)


def image_descriptors(img: GrayImage, params: Optional[HarrisParams] = None
                      ) -> Tuple[List[InterestPoint], np.ndarray]:
    p = params or HarrisParams()
    pts = harris_multiscale(img, p)
    vecs = np.empty((len(pts), DESCRIPTOR_DIM))
    for i, pt in enumerate(pts):
        vecs[i] = zernike_descriptor(img, pt, p.radius_factor)
    return pts, vecs


def _extract_one(item):
    image_id, src, params = item
    try:
        img = src if isinstance(src, GrayImage) else load_image(src)
        return image_id, image_descriptors(img, params)[1], None
    except NohisError as exc:
        return image_id, None, str(exc)
    except OSError as exc:
        return image_id, None, str(exc)


def extract_descriptors(images: Iterable[Tuple[int, Union[GrayImage, str, os.PathLike]]],
                        params: Optional[HarrisParams] = None, jobs: int = 1) -> Extraction:
    """Descriptors for a batch of (image_id, image-or-path) pairs.

    Global indices run in image order, strongest point first within an
    image. Images that fail to load or process are listed in
    ``failures`` and skipped.
    """
    p = params or HarrisParams()
    items = [(int(i), src, p) for i, src in images]
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_extract_one, items))
    else:
        results = [_extract_one(it) for it in items]

    out = Extraction(DescriptorSet.empty())
    vecs, ids = [], []
    for image_id, v, err in results:
        if err is not None:
            out.failures.append((image_id, err))
            continue
        out.counts[image_id] = int(v.shape[0])
        vecs.append(v)
        ids.append(np.full(v.shape[0], image_id, dtype=np.uint32))
    if vecs:
        allv = np.concatenate(vecs)
        out.descriptors = DescriptorSet(allv, np.concatenate(ids),
                                        np.arange(allv.shape[0], dtype=np.uint64))
    return out


# ---------------------------------------------------------------------------
# NOHV descriptor files

NOHV_MAGIC = b"NOHV"
NOHV_VERSION = 1
_NOHV_HEADER = struct.Struct("<4sHIQ")


def _record_dtype(dim: int) -> np.dtype:
    return np.dtype([("img", "<u4"), ("g", "<u8"), ("x", "<f8", (dim,))])


def write_descriptors(target: Union[BinaryIO, str, os.PathLike], dset: DescriptorSet) -> None:
    if isinstance(target, (str, os.PathLike)):
        with open(target, "wb") as fh:
            write_descriptors(fh, dset)
        return
    dim = dset.dimension
    target.write(_NOHV_HEADER.pack(NOHV_MAGIC, NOHV_VERSION, dim, len(dset)))
    rec = np.empty(len(dset), dtype=_record_dtype(dim))
    rec["img"] = dset.image_ids
    rec["g"] = dset.global_indices
    rec["x"] = dset.vectors
    target.write(rec.tobytes())


def read_descriptors(source) -> DescriptorSet:
    data = _read_source(source)
    if len(data) >= 4 and data[:4] != NOHV_MAGIC:
        raise BadMagicError()
    if len(data) < _NOHV_HEADER.size:
        raise TruncatedStreamError()
    magic, version, dim, count = _NOHV_HEADER.unpack_from(data)
    if version != NOHV_VERSION:
        raise VersionMismatchError(f"unsupported descriptor file version {version}")
    if dim == 0:
        raise FormatError("descriptor dimension is 0")
    dt = _record_dtype(dim)
    body = data[_NOHV_HEADER.size:]
    if len(body) < count * dt.itemsize:
        raise TruncatedStreamError()
    if len(body) > count * dt.itemsize:
        raise FormatError("trailing bytes after last record")
    rec = np.frombuffer(body, dtype=dt, count=count)
    return DescriptorSet(np.array(rec["x"], dtype=np.float64).reshape(count, dim),
                         rec["img"].astype(np.uint32), rec["g"].astype(np.uint64))
