"""Shepp-Logan phantom generation, grayscale image I/O, and quality metrics."""

import math
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image as PILImage

from .grad_ops import apply_D

__all__ = [
    "QualityReport",
    "shepp_logan",
    "relative_error",
    "objective_tv_l2",
    "objective_penalty",
    "read_image",
    "write_image",
]

# Classical Shepp-Logan ellipse table: additive intensity, semi-axes (a, b),
# centre (x0, y0), rotation in degrees.
_ELLIPSES = (
    (1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.01, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
)


def shepp_logan(n):
    """Classical 10-ellipse Shepp-Logan phantom on an n-by-n grid.

    Intensities are summed over ellipses at pixel centres of [-1, 1]^2
    (row 0 at the top) and clipped to [0, 1]. Deterministic for fixed n.
    """
    if n < 8:
        raise ValueError(f"phantom needs n >= 8, got {n}")
    coords = (np.arange(n) + 0.5) * (2.0 / n) - 1.0
    x = coords[None, :]
    y = -coords[:, None]  # top row has the largest y
    img = np.zeros((n, n))
    for ampl, a, b, x0, y0, phi_deg in _ELLIPSES:
        phi = math.radians(phi_deg)
        xr = (x - x0) * math.cos(phi) + (y - y0) * math.sin(phi)
        yr = -(x - x0) * math.sin(phi) + (y - y0) * math.cos(phi)
        img += ampl * (((xr / a) ** 2 + (yr / b) ** 2) <= 1.0)
    return np.clip(img, 0.0, 1.0)


def relative_error(u, u_true):
    """RE = ||u - u_true|| / ||u_true|| * 100, in percent."""
    u = np.asarray(u, dtype=float)
    t = np.asarray(u_true, dtype=float)
    if u.shape != t.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {t.shape}")
    denom = np.linalg.norm(t)
    if denom == 0.0:
        raise ValueError("relative error is undefined for a zero-norm reference")
    return 100.0 * float(np.linalg.norm(u - t)) / float(denom)


@dataclass(frozen=True)
class QualityReport:
    """TV/L2 objective breakdown plus optional error versus a reference image."""

    objective_tv: float
    tv_seminorm: float
    fidelity: float
    rel_error_percent: float | None = None


def objective_tv_l2(u, operator, f, mu, truth=None):
    """Evaluate sum_i ||D_i u|| + (mu/2) ||Au - f||^2 and its two terms."""
    g = apply_D(u)
    tv = float(np.hypot(g[0], g[1]).sum())
    r = operator.apply(np.asarray(u, dtype=float).ravel()) - np.asarray(f, dtype=float).ravel()
    fid = 0.5 * mu * float(r @ r)
    re = None if truth is None else relative_error(u, truth)
    return QualityReport(objective_tv=tv + fid, tv_seminorm=tv, fidelity=fid,
                         rel_error_percent=re)


def objective_penalty(u, w, operator, f, mu, beta):
    """Penalty-model objective: norms of w, quadratic coupling of w to Du, fidelity."""
    d = w - apply_D(u)
    tv_w = float(np.hypot(w[0], w[1]).sum())
    coupling = 0.5 * beta * float((d * d).sum())
    r = operator.apply(np.asarray(u, dtype=float).ravel()) - np.asarray(f, dtype=float).ravel()
    return tv_w + coupling + 0.5 * mu * float(r @ r)


def write_image(path, u):
    """Write an image as binary PGM (P5) or grayscale PNG.

    Values are clipped to [0, 1] then quantized to 8 bits, so a
    write/read/write cycle is lossless after the first quantization.
    """
    u = np.asarray(u, dtype=float)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"square 2-D image required, got shape {u.shape}")
    if not np.isfinite(u).all():
        raise ValueError("image contains non-finite values")
    q = np.round(np.clip(u, 0.0, 1.0) * 255.0).astype(np.uint8)
    path = os.fspath(path)
    lower = path.lower()
    if lower.endswith(".pgm"):
        n = q.shape[0]
        with open(path, "wb") as fh:
            fh.write(f"P5\n{n} {n}\n255\n".encode("ascii"))
            fh.write(q.tobytes())
    elif lower.endswith(".png"):
        PILImage.fromarray(q, mode="L").save(path)
    else:
        raise ValueError(f"unsupported image format for {path!r} (use .pgm or .png)")


def read_image(path):
    """Read a square 8-bit grayscale PGM (binary P5) or PNG into [0, 1] floats."""
    path = os.fspath(path)
    lower = path.lower()
    if lower.endswith(".pgm"):
        with open(path, "rb") as fh:
            data = fh.read()
        arr = _parse_pgm(data, path)
    elif lower.endswith(".png"):
        arr = _load_png(path)
    else:
        raise ValueError(f"unsupported image format for {path!r} (use .pgm or .png)")
    if arr.shape[0] != arr.shape[1]:
        raise ValueError(f"{path}: image is {arr.shape[1]}x{arr.shape[0]}, square required")
    return arr.astype(float) / 255.0


def _parse_pgm(data, path):
    if not data.startswith(b"P5"):
        raise ValueError(f"{path}: not a binary PGM (P5) file")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos:pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos:pos + 1] == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
            continue
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace():
            pos += 1
        if start == pos:
            raise ValueError(f"{path}: truncated PGM header")
        try:
            fields.append(int(data[start:pos]))
        except ValueError:
            raise ValueError(f"{path}: malformed PGM header token {data[start:pos]!r}") from None
    pos += 1  # single whitespace byte after maxval
    width, height, maxval = fields
    if maxval != 255:
        raise ValueError(f"{path}: unsupported maxval {maxval}, 8-bit (255) required")
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise ValueError(
            f"{path}: truncated raster, expected {width * height} bytes, got {len(raster)}")
    return np.frombuffer(raster, dtype=np.uint8).reshape(height, width)


def _load_png(path):
    try:
        with PILImage.open(path) as img:
            img.load()
            mode = img.mode
            arr = np.asarray(img)
    except Exception as exc:
        raise ValueError(f"{path}: unreadable PNG ({exc})") from exc
    if mode != "L":
        raise ValueError(f"{path}: grayscale PNG (mode L) required, got mode {mode}")
    return arr
