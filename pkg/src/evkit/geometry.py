"""Resolution normalization and the affine carrier for all geometric ops.

Downscaling uses the pixel-center ("half-pixel") sampling convention: output
pixel d reads the source at s = (d + 0.5) * factor - 0.5 per axis.  Bicubic
uses the Catmull-Rom kernel (a = -0.5) with edge clamping; nearest rounds
half toward the top-left source.  Padding is zeros on the bottom/right only,
so box coordinates never need an offset.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .codec import AnnotatedBox
from .errors import NotDivisible, SingularTransform
from .representation import FrameTensor

_DET_EPS = 1e-9


@dataclass(frozen=True, eq=False)
class AffineTransform:
    """2x3 matrix mapping homogeneous pixel coordinates (x, y, 1) -> (x', y')."""

    matrix: np.ndarray

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AffineTransform):
            return NotImplemented
        return np.array_equal(self.matrix, other.matrix)

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.shape != (2, 3):
            raise ValueError(f"affine matrix must be 2x3, got {m.shape}")
        if abs(np.linalg.det(m[:, :2])) <= _DET_EPS:
            raise SingularTransform(f"linear part of {m.tolist()} is singular")
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    @classmethod
    def identity(cls) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]))

    @classmethod
    def translation(cls, tx: float, ty: float) -> "AffineTransform":
        return cls(np.array([[1.0, 0.0, tx], [0.0, 1.0, ty]]))

    @classmethod
    def scaling(cls, sx: float, sy: float | None = None) -> "AffineTransform":
        sy = sx if sy is None else sy
        return cls(np.array([[sx, 0.0, 0.0], [0.0, sy, 0.0]]))

    @classmethod
    def rotation_deg(cls, angle: float) -> "AffineTransform":
        rad = math.radians(angle)
        c, s = math.cos(rad), math.sin(rad)
        return cls(np.array([[c, -s, 0.0], [s, c, 0.0]]))

    @classmethod
    def shear_deg(cls, ax: float, ay: float = 0.0) -> "AffineTransform":
        return cls(np.array([[1.0, math.tan(math.radians(ax)), 0.0],
                             [math.tan(math.radians(ay)), 1.0, 0.0]]))

    @classmethod
    def hflip(cls, width: float) -> "AffineTransform":
        """Mirror of the continuous image span [0, width]: x -> width - x."""
        return cls(np.array([[-1.0, 0.0, float(width)], [0.0, 1.0, 0.0]]))

    def compose(self, inner: "AffineTransform") -> "AffineTransform":
        """self after inner: (self @ inner)(p) = self(inner(p))."""
        a = np.vstack([self.matrix, [0.0, 0.0, 1.0]])
        b = np.vstack([inner.matrix, [0.0, 0.0, 1.0]])
        return AffineTransform((a @ b)[:2])

    def about(self, cx: float, cy: float) -> "AffineTransform":
        """Conjugate by the center: translate(-c), self, translate(+c)."""
        return (
            AffineTransform.translation(cx, cy)
            .compose(self)
            .compose(AffineTransform.translation(-cx, -cy))
        )

    def inverse(self) -> "AffineTransform":
        # Closed form keeps axis-aligned transforms (flips, integer shifts)
        # exactly invertible in floating point.
        (a, b, tx), (c, d, ty) = self.matrix
        det = a * d - b * c
        inv = np.array([[d, -b], [-c, a]]) / det
        return AffineTransform(np.hstack([inv, -inv @ np.array([[tx], [ty]])]))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform an (N, 2) array of (x, y) points."""
        pts = np.asarray(points, dtype=np.float64)
        return pts @ self.matrix[:, :2].T + self.matrix[:, 2]


def _kernel_taps(size_in: int, size_out: int, factor: int, method: str):
    """Per-output-pixel source indices (T, out) and weights for one axis."""
    d = np.arange(size_out, dtype=np.float64)
    s = (d + 0.5) * factor - 0.5
    if method == "nearest":
        # round half toward the top-left source pixel
        idx = np.ceil(s - 0.5).astype(np.int64)
        return np.clip(idx, 0, size_in - 1)[None, :], np.ones((1, size_out))
    base = np.floor(s).astype(np.int64)
    frac = s - base
    if method == "bilinear":
        offsets = np.array([0, 1])
        weights = np.stack([1.0 - frac, frac])
    elif method == "bicubic":
        offsets = np.array([-1, 0, 1, 2])
        weights = np.stack([_catmull_rom(frac + 1), _catmull_rom(frac),
                            _catmull_rom(1 - frac), _catmull_rom(2 - frac)])
    else:
        raise ValueError(f"unknown method {method!r}")
    idx = np.clip(base[None, :] + offsets[:, None], 0, size_in - 1)
    return idx, weights


def _catmull_rom(u: np.ndarray, a: float = -0.5) -> np.ndarray:
    u = np.abs(u)
    return np.where(
        u <= 1.0,
        (a + 2.0) * u**3 - (a + 3.0) * u**2 + 1.0,
        np.where(u < 2.0, a * (u**3 - 5.0 * u**2 + 8.0 * u - 4.0), 0.0),
    )


def downscale(frame: FrameTensor, factor: int, method: str = "bilinear") -> FrameTensor:
    """Shrink (C, H, W) by an integer factor along both axes.

    Counts are converted to reals before filtering; output is float32.
    """
    if factor < 1:
        raise ValueError(f"factor must be >= 1, got {factor}")
    c, height, width = frame.shape
    if height % factor or width % factor:
        raise NotDivisible(f"{height}x{width} not divisible by {factor}")
    values = frame.values.astype(np.float64)
    if factor > 1:
        idx_w, w_w = _kernel_taps(width, width // factor, factor, method)
        values = np.einsum("td,chtd->chd", w_w, values[:, :, idx_w], optimize=True)
        idx_h, w_h = _kernel_taps(height, height // factor, factor, method)
        values = np.einsum("td,ctdw->cdw", w_h, values[:, idx_h, :], optimize=True)
    return FrameTensor(values.astype(np.float32))


def pad_to_multiple(frame: FrameTensor, multiple: int) -> tuple[FrameTensor, tuple[int, int]]:
    """Zero-pad bottom/right until H and W are multiples; returns pad amounts."""
    if multiple < 1:
        raise ValueError(f"multiple must be >= 1, got {multiple}")
    _, height, width = frame.shape
    pad_h = (-height) % multiple
    pad_w = (-width) % multiple
    if pad_h == 0 and pad_w == 0:
        return frame, (0, 0)
    padded = np.pad(frame.values, ((0, 0), (0, pad_h), (0, pad_w)))
    return FrameTensor(padded), (pad_h, pad_w)


def map_boxes(
    boxes: Sequence[AnnotatedBox],
    scale: float | tuple[float, float],
    pad: tuple[float, float] = (0.0, 0.0),
) -> list[AnnotatedBox]:
    """Scale box coordinates per axis and add padding offsets to the corner.

    `scale` is a scalar or (sx, sy); `pad` is the (x, y) offset of the
    original content inside the padded frame (zero for bottom/right padding).
    Class, score, and track ids are preserved.
    """
    sx, sy = (scale, scale) if np.isscalar(scale) else scale
    if sx <= 0 or sy <= 0:
        raise ValueError(f"scale must be positive, got ({sx}, {sy})")
    ox, oy = pad
    return [
        replace(b, x=b.x * sx + ox, y=b.y * sy + oy, w=b.w * sx, h=b.h * sy)
        for b in boxes
    ]
