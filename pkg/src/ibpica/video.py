"""Spatiotemporal video tensors, dense patch extraction, and frame ingestion.

Voxels are stored as a (T, H, W) float array in [0, 1]; the on-disk layout
(magic ``VIDT1\\0``, little-endian u32 H, W, T, float32 voxels) is x-fastest,
then y, then t, which matches C order on the (T, H, W) array.  Patches are
flattened x-fastest as well, and the patch list enumerates grid positions
x-fastest, then y, then t.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = [
    "VIDEO_MAGIC",
    "VideoTensor",
    "ReceptiveField",
    "grid_counts",
    "extract_patches",
    "normalize_patch_contrast",
    "write_video",
    "read_video",
    "read_frame_directory",
]

VIDEO_MAGIC = b"VIDT1\x00"
_CONTRAST_EPS = 1e-8


@dataclass
class VideoTensor:
    """Grayscale video, voxels indexed [t, y, x] with intensities in [0, 1]."""

    voxels: np.ndarray

    def __post_init__(self):
        self.voxels = np.asarray(self.voxels, dtype=np.float64)
        if self.voxels.ndim != 3 or self.voxels.size == 0:
            raise ValueError("video voxels must be a non-empty (T, H, W) array")
        if not np.all(np.isfinite(self.voxels)):
            raise ValueError("video voxels must be finite")

    @property
    def T(self) -> int:
        return self.voxels.shape[0]

    @property
    def H(self) -> int:
        return self.voxels.shape[1]

    @property
    def W(self) -> int:
        return self.voxels.shape[2]


@dataclass
class ReceptiveField:
    """Patch geometry: spatial/temporal extents and sampling strides.

    Default strides give 50% overlap (half the extent, rounded down).
    """

    sx: int
    sy: int
    st: int
    stride_x: int | None = None
    stride_y: int | None = None
    stride_t: int | None = None

    def __post_init__(self):
        if min(self.sx, self.sy, self.st) < 1:
            raise ValueError("receptive field extents must be at least 1")
        if self.stride_x is None:
            self.stride_x = max(self.sx // 2, 1)
        if self.stride_y is None:
            self.stride_y = max(self.sy // 2, 1)
        if self.stride_t is None:
            self.stride_t = max(self.st // 2, 1)
        for stride, extent, name in (
            (self.stride_x, self.sx, "x"),
            (self.stride_y, self.sy, "y"),
            (self.stride_t, self.st, "t"),
        ):
            if not 1 <= stride <= extent:
                raise ValueError(f"stride_{name} must lie in [1, extent]")

    @property
    def volume(self) -> int:
        return self.sx * self.sy * self.st


def grid_counts(video_shape: tuple[int, int, int], rf: ReceptiveField) -> tuple[int, int, int]:
    """Number of patch positions (nx, ny, nt): floor((dim - extent)/stride) + 1."""
    T, H, W = video_shape
    nx = (W - rf.sx) // rf.stride_x + 1 if W >= rf.sx else 0
    ny = (H - rf.sy) // rf.stride_y + 1 if H >= rf.sy else 0
    nt = (T - rf.st) // rf.stride_t + 1 if T >= rf.st else 0
    return nx, ny, nt


def extract_patches(video: VideoTensor, rf: ReceptiveField) -> np.ndarray:
    """All patches on the stride grid, shape (n_patches, sx*sy*st).

    Partial windows at the boundary are discarded.  A video smaller than the
    receptive field yields an empty result with a warning.
    """
    nx, ny, nt = grid_counts(video.voxels.shape, rf)
    if nx == 0 or ny == 0 or nt == 0:
        warnings.warn(
            f"video {video.voxels.shape} smaller than receptive field "
            f"({rf.sx}x{rf.sy}x{rf.st}); no patches extracted",
            stacklevel=2,
        )
        return np.zeros((0, rf.volume))
    v = video.voxels
    out = np.empty((nt * ny * nx, rf.volume))
    i = 0
    for it in range(nt):
        t0 = it * rf.stride_t
        for iy in range(ny):
            y0 = iy * rf.stride_y
            for ix in range(nx):
                x0 = ix * rf.stride_x
                out[i] = v[t0 : t0 + rf.st, y0 : y0 + rf.sy, x0 : x0 + rf.sx].ravel()
                i += 1
    return out


def normalize_patch_contrast(patches: np.ndarray) -> np.ndarray:
    """Local contrast normalization: subtract patch mean, divide by std + eps."""
    patches = np.asarray(patches, dtype=np.float64)
    mean = patches.mean(axis=1, keepdims=True)
    std = patches.std(axis=1, keepdims=True)
    return (patches - mean) / (std + _CONTRAST_EPS)


def write_video(path, video: VideoTensor) -> None:
    with open(path, "wb") as f:
        f.write(VIDEO_MAGIC)
        f.write(struct.pack("<III", video.H, video.W, video.T))
        f.write(video.voxels.astype("<f4").tobytes())


def read_video(path) -> VideoTensor:
    with open(path, "rb") as f:
        magic = f.read(len(VIDEO_MAGIC))
        if magic != VIDEO_MAGIC:
            raise ValueError(f"{path}: not a video tensor file (bad magic)")
        H, W, T = struct.unpack("<III", f.read(12))
        data = np.frombuffer(f.read(4 * H * W * T), dtype="<f4")
        if data.size != H * W * T:
            raise ValueError(f"{path}: truncated voxel payload")
        return VideoTensor(data.reshape(T, H, W).astype(np.float64))


def _read_pnm(path: Path) -> np.ndarray:
    """Read one PGM (P2/P5) or PPM (P6) frame as a [0, 1] grayscale image."""
    data = path.read_bytes()
    fields: list[bytes] = []
    pos = 0
    while len(fields) < 4 and pos < len(data):
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        fields.append(data[start:pos])
    if len(fields) < 4:
        raise ValueError(f"{path}: malformed PNM header")
    kind = fields[0].decode()
    width, height, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"{path}: only 8-bit frames are supported")
    if kind == "P2":
        values = np.array(data[pos:].split(), dtype=np.float64)
        img = values.reshape(height, width)
    elif kind == "P5":
        img = np.frombuffer(data, dtype=np.uint8, count=width * height, offset=pos + 1)
        img = img.reshape(height, width).astype(np.float64)
    elif kind == "P6":
        rgb = np.frombuffer(data, dtype=np.uint8, count=3 * width * height, offset=pos + 1)
        rgb = rgb.reshape(height, width, 3).astype(np.float64)
        img = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    else:
        raise ValueError(f"{path}: unsupported PNM kind {kind!r}")
    return img / maxval


def read_frame_directory(path) -> VideoTensor:
    """Assemble a video from a directory of frames, sorted lexicographically."""
    frame_paths = sorted(
        p for p in Path(path).iterdir() if p.suffix.lower() in (".pgm", ".ppm")
    )
    if not frame_paths:
        raise ValueError(f"{path}: no PGM/PPM frames found")
    frames = [_read_pnm(p) for p in frame_paths]
    shapes = {f.shape for f in frames}
    if len(shapes) != 1:
        raise ValueError(f"{path}: frames disagree on shape: {sorted(shapes)}")
    return VideoTensor(np.stack(frames, axis=0))
