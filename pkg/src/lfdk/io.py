"""On-disk formats and data plumbing.

Two binary containers, both little-endian with f32 payloads so that reads
and writes are bit-exact copies of memory:

* LFT ("LFT1"): header of u32 fields U, V, C, H, W and a dtype code
  (1 = f32), then the raw samples in canonical (u, v, c, y, x) order.
* weight archive ("LFW1"): u32 entry count, then per entry a u32 name
  length, UTF-8 name, u32 rank, rank u32 dims, and the raw f32 payload.
  Model archives hold one entry per parameter, named after the layer
  (e.g. "kernel.03.stage.2.weight"), plus one reserved "meta.config"
  entry encoding the build configuration.

Image interchange uses a grid of sub-aperture views: view (u, v) occupies
the cell at grid row u, column v.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np
from PIL import Image

from .kernels import KernelKind
from .lightfield import LightField, downsample_bilinear
from .network import SRNet, SRNetConfig

LFT_MAGIC = b"LFT1"
LFW_MAGIC = b"LFW1"
DTYPE_F32 = 1
META_ENTRY = "meta.config"
_META_VERSION = 1

_KIND_CODES = {"sas": 0, "epi1": 1, "epi2": 2, "epi3": 3, "alpha": 4,
               "beta": 5, "gamma": 6, "dup1": 7, "dup2": 8}
_CODE_KINDS = {v: k for k, v in _KIND_CODES.items()}


class DataFormatError(Exception):
    """Base class for malformed on-disk data."""


class BadMagicError(DataFormatError):
    pass


class TruncatedPayloadError(DataFormatError):
    pass


class UnsupportedDtypeError(DataFormatError):
    pass


def _read_exact(f, n: int, what: str) -> bytes:
    buf = f.read(n)
    if len(buf) != n:
        raise TruncatedPayloadError(f"truncated {what}: wanted {n} bytes, got {len(buf)}")
    return buf


# ---- LFT container ----------------------------------------------------------

def write_lft(path, lf: LightField) -> None:
    data = np.ascontiguousarray(lf.data, dtype=np.float32)
    with open(path, "wb") as f:
        f.write(LFT_MAGIC)
        f.write(struct.pack("<6I", *lf.shape, DTYPE_F32))
        f.write(data.tobytes())


def read_lft(path) -> LightField:
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != LFT_MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {LFT_MAGIC!r}")
        u, v, c, h, w, code = struct.unpack("<6I", _read_exact(f, 24, "header"))
        if code != DTYPE_F32:
            raise UnsupportedDtypeError(f"unsupported dtype code {code}")
        n = u * v * c * h * w
        payload = _read_exact(f, 4 * n, "payload")
        data = np.frombuffer(payload, dtype="<f4", count=n).reshape(u, v, c, h, w)
    return LightField(np.ascontiguousarray(data))


# ---- weight archive ---------------------------------------------------------

def write_archive(path, entries) -> None:
    """Write ordered (name, array) pairs; arrays are stored as f32."""
    entries = list(entries)
    with open(path, "wb") as f:
        f.write(LFW_MAGIC)
        f.write(struct.pack("<I", len(entries)))
        for name, arr in entries:
            arr = np.ascontiguousarray(arr, dtype=np.float32)
            raw = name.encode("utf-8")
            f.write(struct.pack("<I", len(raw)))
            f.write(raw)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.tobytes())


def read_archive(path) -> dict[str, np.ndarray]:
    """Read an archive into an ordered name -> f32 array mapping."""
    out: dict[str, np.ndarray] = {}
    with open(path, "rb") as f:
        magic = _read_exact(f, 4, "magic")
        if magic != LFW_MAGIC:
            raise BadMagicError(f"bad magic {magic!r}, expected {LFW_MAGIC!r}")
        (count,) = struct.unpack("<I", _read_exact(f, 4, "entry count"))
        for _ in range(count):
            (nlen,) = struct.unpack("<I", _read_exact(f, 4, "name length"))
            name = _read_exact(f, nlen, "name").decode("utf-8")
            (rank,) = struct.unpack("<I", _read_exact(f, 4, "rank"))
            dims = struct.unpack(f"<{rank}I", _read_exact(f, 4 * rank, "dims"))
            n = int(np.prod(dims)) if rank else 1
            payload = _read_exact(f, 4 * n, f"payload of {name}")
            out[name] = np.frombuffer(payload, dtype="<f4", count=n).reshape(dims).copy()
    return out


def _encode_config(cfg: SRNetConfig) -> np.ndarray:
    kind = cfg.kind
    return np.array([
        _META_VERSION, cfg.scale, cfg.angular_u, cfg.angular_v, cfg.channels,
        cfg.feat_ch, cfg.depth, _KIND_CODES[kind.family], kind.dup,
        int(cfg.use_dense), int(cfg.use_raw),
    ], dtype=np.float32)


def _decode_config(vec: np.ndarray) -> SRNetConfig:
    if len(vec) != 11 or int(vec[0]) != _META_VERSION:
        raise DataFormatError(f"unsupported model metadata {vec!r}")
    fam = _CODE_KINDS.get(int(vec[7]))
    if fam is None:
        raise DataFormatError(f"unknown kernel kind code {int(vec[7])}")
    kind = KernelKind(fam, int(vec[8]))
    return SRNetConfig(
        scale=int(vec[1]), angular_u=int(vec[2]), angular_v=int(vec[3]),
        channels=int(vec[4]), feat_ch=int(vec[5]), depth=int(vec[6]),
        kind=kind, use_dense=bool(int(vec[9])), use_raw=bool(int(vec[10])),
    )


def save_model(path, net: SRNet) -> None:
    entries = [(META_ENTRY, _encode_config(net.cfg))]
    entries += [(name, p) for name, p, _ in net.parameters()]
    write_archive(path, entries)


def load_model(path, dtype=np.float32) -> SRNet:
    entries = read_archive(path)
    if META_ENTRY not in entries:
        raise DataFormatError("archive has no model metadata entry")
    cfg = _decode_config(entries[META_ENTRY])
    net = SRNet(cfg, seed=0, dtype=dtype)
    for name, p, _ in net.parameters():
        if name not in entries:
            raise DataFormatError(f"archive is missing parameter {name}")
        arr = entries[name]
        if arr.shape != p.shape:
            raise DataFormatError(f"{name}: stored shape {arr.shape} != built {p.shape}")
        p[...] = arr.astype(dtype)
    return net


# ---- SAI-grid image interchange ----------------------------------------------

def import_sai_grid(path, u_res: int, v_res: int) -> LightField:
    """Decode a grid-of-views image into a light field in [0, 1]."""
    try:
        img = Image.open(path)
        img.load()
    except Exception as exc:
        raise DataFormatError(f"cannot decode image {path}: {exc}") from exc
    if img.mode == "I;16":
        arr = np.asarray(img, dtype=np.float32) / 65535.0
        arr = arr[:, :, None]
    else:
        if img.mode not in ("L", "RGB"):
            img = img.convert("RGB")
        arr = np.asarray(img, dtype=np.float32) / 255.0
        if arr.ndim == 2:
            arr = arr[:, :, None]
    rows, cols, c = arr.shape
    if rows % u_res or cols % v_res:
        raise DataFormatError(
            f"image {rows}x{cols} not divisible by the {u_res}x{v_res} view grid"
        )
    h, w = rows // u_res, cols // v_res
    lf = arr.reshape(u_res, h, v_res, w, c).transpose(0, 2, 4, 1, 3)
    return LightField(np.ascontiguousarray(lf))


def export_sai_grid(lf: LightField, path) -> None:
    """Encode a light field as an 8-bit grid-of-views image."""
    u, v, c, h, w = lf.shape
    grid = lf.data.transpose(0, 3, 1, 4, 2).reshape(u * h, v * w, c)
    q = np.clip(np.rint(grid * 255.0), 0, 255).astype(np.uint8)
    if c == 1:
        Image.fromarray(q[:, :, 0], mode="L").save(path)
    else:
        Image.fromarray(q, mode="RGB").save(path)


def load_sample(path, angular: tuple[int, int] | None = None) -> LightField:
    """Load a dataset sample: .lft natively, otherwise a grid image (which
    needs the angular dims)."""
    p = Path(path)
    if p.suffix.lower() == ".lft":
        return read_lft(p)
    if angular is None:
        raise DataFormatError(f"{path}: grid images need known angular dims")
    return import_sai_grid(p, angular[0], angular[1])


# ---- dataset manifest ---------------------------------------------------------

def read_manifest(path, split: str | None = None) -> list[str]:
    """One sample path per line with an optional trailing split tag;
    '#' starts a comment.  Paths are resolved relative to the manifest."""
    base = Path(path).parent
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for line in f:
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.rsplit(None, 1)
            if len(parts) == 2 and not Path(parts[1]).suffix:
                sample, tag = parts
            else:
                sample, tag = line, None
            if split is not None and tag != split:
                continue
            sp = Path(sample)
            out.append(str(sp if sp.is_absolute() else base / sp))
    return out


# ---- patch sampling -----------------------------------------------------------

def sample_patches(lf_hr: LightField, r: int, patch: int = 32, batch: int = 2,
                   rng=None, seed: int | None = None):
    """Aligned training pairs: each item is (lr_patch, hr_patch) where the LR
    patch of size ``patch`` is the bilinear downsample of its 32r-sized HR
    mate, at seeded uniform-random positions on the LR pixel grid."""
    if rng is None:
        rng = np.random.default_rng(seed)
    hr_patch = patch * r
    if lf_hr.height < hr_patch or lf_hr.width < hr_patch:
        raise ValueError(
            f"light field {lf_hr.height}x{lf_hr.width} too small for {hr_patch} HR patches"
        )
    max_y = lf_hr.height // r - patch
    max_x = lf_hr.width // r - patch
    pairs = []
    for _ in range(batch):
        y0 = int(rng.integers(0, max_y + 1)) * r
        x0 = int(rng.integers(0, max_x + 1)) * r
        hr = LightField(np.ascontiguousarray(
            lf_hr.data[:, :, :, y0:y0 + hr_patch, x0:x0 + hr_patch]))
        lr = downsample_bilinear(hr, r)
        pairs.append((lr.data, hr.data))
    return pairs
