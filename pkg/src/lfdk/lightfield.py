"""Light-field tensors and their 2D sub-space views.

Conventions
-----------
A light field is a dense 5D array in canonical axis order ``(u, v, c, y, x)``,
row-major: two angular axes (u and v), a color axis, and two spatial axes
(y rows, x columns).  Every reshape in this module is a pure index remap; the
round trip view -> canonical is exact, element for element.

When two of the four non-channel axes are merged into a batch axis, the merge
order is canonical: with batch axes (d3, d4) ordered as in (u, v, y, x), the
merged index is ``b = d3 * |D4| + d4``.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

AXIS_ORDER = ("u", "v", "y", "x")
_AXIS_DIM = {"u": 0, "v": 1, "y": 3, "x": 4}


class SubspacePair(Enum):
    """The six axis pairs a light field can be convolved on.

    The pair names the two convolution axes; the remaining two of
    {u, v, y, x} are merged into the batch axis in canonical order.
    """

    SPATIAL = ("y", "x")
    ANGULAR = ("u", "v")
    EPI_UX = ("u", "x")
    EPI_VY = ("v", "y")
    EPI_UY = ("u", "y")
    EPI_VX = ("v", "x")

    @property
    def conv_axes(self) -> tuple[str, str]:
        return self.value

    @property
    def batch_axes(self) -> tuple[str, str]:
        d1, d2 = self.value
        return tuple(a for a in AXIS_ORDER if a not in (d1, d2))

    @property
    def is_epi(self) -> bool:
        return self not in (SubspacePair.SPATIAL, SubspacePair.ANGULAR)


EPI_PAIRS = (
    SubspacePair.EPI_UX,
    SubspacePair.EPI_VY,
    SubspacePair.EPI_UY,
    SubspacePair.EPI_VX,
)


def _perm(pair: SubspacePair) -> tuple[int, int, int, int, int]:
    d3, d4 = pair.batch_axes
    d1, d2 = pair.conv_axes
    return (_AXIS_DIM[d3], _AXIS_DIM[d4], 2, _AXIS_DIM[d1], _AXIS_DIM[d2])


@dataclass(frozen=True)
class ViewTensor:
    """A sub-space view of a 5D tensor, shaped (batch, channels, d1, d2)."""

    data: np.ndarray
    pair: SubspacePair
    source_dims: tuple[int, int, int, int, int]

    @property
    def batch(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[1]

    @property
    def dim1(self) -> int:
        return self.data.shape[2]

    @property
    def dim2(self) -> int:
        return self.data.shape[3]


def to_view(t: np.ndarray, pair: SubspacePair) -> ViewTensor:
    """Reshape a canonical (U, V, C, H, W) tensor into a sub-space view.

    Element (u, v, c, y, x) of ``t`` lands at (b, c, d1, d2) where (d1, d2)
    are the pair's convolution axes and b is the canonical merged batch index.
    """
    if t.ndim != 5:
        raise ValueError(f"expected a 5D tensor, got shape {t.shape}")
    perm = _perm(pair)
    moved = np.transpose(t, perm)
    s = moved.shape
    data = moved.reshape(s[0] * s[1], s[2], s[3], s[4])
    return ViewTensor(data=data, pair=pair, source_dims=t.shape)


def from_view(vt: ViewTensor, pair: SubspacePair | None = None) -> np.ndarray:
    """Exact inverse of :func:`to_view`."""
    if pair is not None and pair is not vt.pair:
        raise ValueError(f"view was built for {vt.pair}, not {pair}")
    pair = vt.pair
    u, v, c, h, w = vt.source_dims
    perm = _perm(pair)
    expect = tuple((u, v, c, h, w)[d] for d in perm)
    if vt.data.shape != (expect[0] * expect[1], expect[2], expect[3], expect[4]):
        raise ValueError(
            f"view shape {vt.data.shape} inconsistent with source dims {vt.source_dims}"
        )
    split = vt.data.reshape(expect)
    return np.transpose(split, np.argsort(perm))


@dataclass(frozen=True)
class LightField:
    """A 5D radiance sample array in canonical (u, v, c, y, x) order.

    Decoded and encoded image samples live in [0, 1]; intermediate network
    activations are not routed through this type and are exempt.
    """

    data: np.ndarray

    def __post_init__(self):
        d = self.data
        if not isinstance(d, np.ndarray) or d.ndim != 5:
            raise ValueError("LightField data must be a 5D ndarray (u, v, c, y, x)")
        if d.dtype not in (np.float32, np.float64):
            raise ValueError(f"unsupported dtype {d.dtype}; use float32 or float64")
        if any(n < 1 for n in d.shape):
            raise ValueError(f"all dimensions must be >= 1, got {d.shape}")
        if d.shape[2] not in (1, 3):
            raise ValueError(f"channel count must be 1 or 3, got {d.shape[2]}")
        if not np.all(np.isfinite(d)):
            raise ValueError("light field contains non-finite samples")

    @property
    def u_res(self) -> int:
        return self.data.shape[0]

    @property
    def v_res(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    @property
    def height(self) -> int:
        return self.data.shape[3]

    @property
    def width(self) -> int:
        return self.data.shape[4]

    @property
    def shape(self) -> tuple[int, int, int, int, int]:
        return self.data.shape

    def astype(self, dtype) -> "LightField":
        return LightField(self.data.astype(dtype))


def extract_sai(lf: LightField, u: int, v: int) -> np.ndarray:
    """The (C, H, W) sub-aperture image at angular position (u, v)."""
    if not (0 <= u < lf.u_res and 0 <= v < lf.v_res):
        raise IndexError(f"angular index ({u}, {v}) out of range for {lf.shape[:2]}")
    return lf.data[u, v]


def extract_epi(
    lf: LightField,
    pair: SubspacePair,
    fixed: tuple[int, int],
    channel: int,
) -> np.ndarray:
    """A 2D epipolar slice over the pair's axes at fixed complementary coords.

    For EPI_UX with fixed (v0, y0), element (u, x) is lf(u, v0, c, y0, x);
    the fixed coordinates are given in the pair's canonical batch-axis order.
    """
    if not pair.is_epi:
        raise ValueError(f"{pair} is not an EPI pair")
    if not 0 <= channel < lf.channels:
        raise IndexError(f"channel {channel} out of range")
    sizes = {"u": lf.u_res, "v": lf.v_res, "y": lf.height, "x": lf.width}
    idx: dict[str, object] = {a: slice(None) for a in AXIS_ORDER}
    for axis, coord in zip(pair.batch_axes, fixed):
        if not 0 <= coord < sizes[axis]:
            raise IndexError(f"fixed coordinate {axis}={coord} out of range")
        idx[axis] = coord
    sl = lf.data[idx["u"], idx["v"], channel, idx["y"], idx["x"]]
    # slicing keeps remaining axes in canonical order; transpose if the
    # pair lists them the other way round (never happens for the four EPI
    # pairs, whose conv axes are already canonically ordered)
    return sl


def crop_border(lf: LightField, angular_margin: int, spatial_margin: int) -> LightField:
    """Centered crop removing a margin of views and a margin of pixels."""
    a, s = angular_margin, spatial_margin
    if a < 0 or s < 0:
        raise ValueError("margins must be nonnegative")
    if 2 * a >= min(lf.u_res, lf.v_res):
        raise ValueError(f"angular margin {a} too large for {lf.u_res}x{lf.v_res} views")
    if 2 * s >= min(lf.height, lf.width):
        raise ValueError(f"spatial margin {s} too large for {lf.height}x{lf.width} pixels")
    u, v, _, h, w = lf.shape
    return LightField(np.ascontiguousarray(lf.data[a:u - a, a:v - a, :, s:h - s, s:w - s]))


def _resample_indices(n_out: int, n_src: int, scale: float):
    # half-pixel-center sampling: source coord s = (i + 0.5) * scale - 0.5
    s = (np.arange(n_out) + 0.5) * scale - 0.5
    s = np.clip(s, 0.0, n_src - 1)
    i0 = np.floor(s).astype(np.int64)
    i1 = np.minimum(i0 + 1, n_src - 1)
    frac = s - i0
    return i0, i1, frac


def _resize_bilinear(data: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    u, v, c, h, w = data.shape
    dt = data.dtype
    y0, y1, fy = _resample_indices(out_h, h, h / out_h)
    x0, x1, fx = _resample_indices(out_w, w, w / out_w)
    fy = fy.astype(dt)[:, None]
    fx = fx.astype(dt)
    rows = data[:, :, :, y0, :] * (1 - fy) + data[:, :, :, y1, :] * fy
    out = rows[..., x0] * (1 - fx) + rows[..., x1] * fx
    return np.ascontiguousarray(out)


def downsample_bilinear(lf: LightField, r: int) -> LightField:
    """Downsample every SAI by integer factor r with half-pixel centers."""
    if r not in (2, 3, 4):
        raise ValueError(f"scale factor must be 2, 3 or 4, got {r}")
    if lf.height % r or lf.width % r:
        raise ValueError(f"spatial dims {lf.height}x{lf.width} not divisible by {r}")
    return LightField(_resize_bilinear(lf.data, lf.height // r, lf.width // r))


def upsample_bilinear(lf: LightField, r: int) -> LightField:
    """Bilinear upsample of every SAI; the no-network baseline for evaluation."""
    if r < 1:
        raise ValueError("scale factor must be >= 1")
    return LightField(_resize_bilinear(lf.data, lf.height * r, lf.width * r))
