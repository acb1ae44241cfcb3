"""Stacked convolutional feature extraction from trained factor models.

One layer replicates a trained model over the dense 50%-overlap patch grid of
a video: each patch is contrast-normalized, whitened and encoded with the
linear feedforward map.  Adjacent features are then pooled, and a second
layer can be trained greedily on windows of the pooled feature grid.

A second-layer receptive field is specified in original pixel coordinates
and mapped onto the first-layer grid: a window covers the grid positions
whose patches lie fully inside it, so its span per axis is
floor((extent2 - extent1) / stride1) + 1 and windows step on the grid by
round(stride2 / stride1) cells (at least one).
"""

from __future__ import annotations

import io
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .inference import InferenceConfig, feedforward_encode, feedforward_scales, mean_responsibilities, run_inference
from .randomness import RngStream
from .serialize import load_model, read_named_arrays, save_model, write_named_arrays
from .state import ConfigurationError, Hyperparameters, ModelState
from .video import ReceptiveField, VideoTensor, extract_patches, grid_counts, normalize_patch_contrast
from .whitening import PatchWhitener

__all__ = [
    "NETWORK_MAGIC",
    "PoolingSpec",
    "WindowGeometry",
    "LayerConfig",
    "LayerModel",
    "NetworkModel",
    "pool",
    "window_geometry",
    "extract_windows",
    "convolve_layer",
    "pooled_feature_grid",
    "train_network",
    "extract_features",
    "save_network",
    "load_network",
]

NETWORK_MAGIC = b"IBPNET1\x00"
POOL_MODES = ("l2", "max", "mean")


@dataclass
class PoolingSpec:
    """Reduce groups of adjacent features; the last partial group is kept."""

    group_size: int = 2
    mode: str = "l2"

    def __post_init__(self):
        if self.group_size < 1:
            raise ValueError("pooling group size must be at least 1")
        if self.mode not in POOL_MODES:
            raise ValueError(f"pooling mode must be one of {POOL_MODES}")

    def output_dim(self, n_features: int) -> int:
        return -(-n_features // self.group_size)


def pool(spec: PoolingSpec, features: np.ndarray) -> np.ndarray:
    """Pool adjacent features along the last axis."""
    features = np.asarray(features, dtype=np.float64)
    K = features.shape[-1]
    p = spec.group_size
    out = []
    for start in range(0, K, p):
        block = features[..., start : start + p]
        if spec.mode == "l2":
            out.append(np.sqrt(np.sum(block ** 2, axis=-1)))
        elif spec.mode == "max":
            out.append(np.max(block, axis=-1))
        else:
            out.append(np.mean(block, axis=-1))
    return np.stack(out, axis=-1)


@dataclass
class WindowGeometry:
    """Second-layer window footprint on the first-layer grid."""

    span_x: int
    span_y: int
    span_t: int
    step_x: int
    step_y: int
    step_t: int

    @property
    def cells(self) -> int:
        return self.span_x * self.span_y * self.span_t


def window_geometry(rf_outer: ReceptiveField, rf_inner: ReceptiveField) -> WindowGeometry:
    def span(extent_outer, extent_inner, stride_inner):
        if extent_outer < extent_inner:
            raise ConfigurationError(
                "outer receptive field must be at least as large as the inner one"
            )
        return (extent_outer - extent_inner) // stride_inner + 1

    def step(stride_outer, stride_inner):
        return max(1, round(stride_outer / stride_inner))

    return WindowGeometry(
        span_x=span(rf_outer.sx, rf_inner.sx, rf_inner.stride_x),
        span_y=span(rf_outer.sy, rf_inner.sy, rf_inner.stride_y),
        span_t=span(rf_outer.st, rf_inner.st, rf_inner.stride_t),
        step_x=step(rf_outer.stride_x, rf_inner.stride_x),
        step_y=step(rf_outer.stride_y, rf_inner.stride_y),
        step_t=step(rf_outer.stride_t, rf_inner.stride_t),
    )


def extract_windows(grid: np.ndarray, geom: WindowGeometry):
    """Slide windows over a (nt, ny, nx, F) feature grid.

    Returns (vectors, (mt, my, mx)); each vector concatenates the covered
    cells' feature vectors in grid order (x fastest, then y, then t).
    """
    nt, ny, nx, F = grid.shape
    mx = (nx - geom.span_x) // geom.step_x + 1 if nx >= geom.span_x else 0
    my = (ny - geom.span_y) // geom.step_y + 1 if ny >= geom.span_y else 0
    mt = (nt - geom.span_t) // geom.step_t + 1 if nt >= geom.span_t else 0
    if mx == 0 or my == 0 or mt == 0:
        return np.zeros((0, geom.cells * F)), (mt, my, mx)
    out = np.empty((mt * my * mx, geom.cells * F))
    i = 0
    for it in range(mt):
        t0 = it * geom.step_t
        for iy in range(my):
            y0 = iy * geom.step_y
            for ix in range(mx):
                x0 = ix * geom.step_x
                block = grid[t0 : t0 + geom.span_t, y0 : y0 + geom.span_y, x0 : x0 + geom.span_x, :]
                out[i] = block.ravel()
                i += 1
    return out, (mt, my, mx)


@dataclass
class LayerConfig:
    """Training recipe for one network layer."""

    rf: ReceptiveField
    pooling: PoolingSpec = field(default_factory=PoolingSpec)
    n_train_patches: int = 200_000
    variance_to_keep: float = 0.99
    hp: Hyperparameters = field(default_factory=Hyperparameters)
    inference: InferenceConfig = field(default_factory=InferenceConfig)


@dataclass
class LayerModel:
    """One trained layer: whitening, factor model, geometry and pooling."""

    state: ModelState
    zeta_bar: np.ndarray
    whitener: PatchWhitener
    rf: ReceptiveField
    pooling: PoolingSpec
    window: WindowGeometry | None = None
    trace: object | None = None  # InferenceTrace from training; not serialized

    def __post_init__(self):
        self.feature_scales = feedforward_scales(self.state, self.zeta_bar)

    @property
    def n_features(self) -> int:
        return self.state.n_features

    @property
    def pooled_dim(self) -> int:
        return self.pooling.output_dim(self.n_features)

    def feature_forward(self, x: np.ndarray, scales: np.ndarray | None = None) -> np.ndarray:
        """Linear feedforward encoding of whitened input vectors."""
        out = feedforward_encode(self.state, x, scales if scales is not None else self.feature_scales)
        return out[0] if np.asarray(x).ndim == 1 else out

    def encode_patches(self, raw_patches: np.ndarray) -> np.ndarray:
        """Full per-patch pipeline: contrast normalization, whitening, encoding."""
        if raw_patches.shape[0] == 0:
            return np.zeros((0, self.n_features))
        normalized = normalize_patch_contrast(raw_patches)
        return self.feature_forward(self.whitener.transform(normalized))


@dataclass
class NetworkModel:
    layers: list[LayerModel]
    combine_layers: bool = True

    @property
    def feature_dim(self) -> int:
        if len(self.layers) == 1:
            return self.layers[0].pooled_dim
        top = self.layers[-1].n_features
        if self.combine_layers:
            return self.layers[0].pooled_dim + top
        return top


def convolve_layer(layer: LayerModel, video: VideoTensor) -> np.ndarray:
    """Encode every patch position of a video; returns a (nt, ny, nx, K) grid."""
    patches = extract_patches(video, layer.rf)
    nx, ny, nt = grid_counts(video.voxels.shape, layer.rf)
    feats = layer.encode_patches(patches)
    return feats.reshape(max(nt, 0), max(ny, 0), max(nx, 0), layer.n_features)


def pooled_feature_grid(layer: LayerModel, video: VideoTensor) -> np.ndarray:
    return pool(layer.pooling, convolve_layer(layer, video))


def _sample_rows(blocks: list[np.ndarray], n: int, rng: RngStream, what: str) -> np.ndarray:
    """Sample n rows without replacement across a list of row blocks."""
    counts = [b.shape[0] for b in blocks]
    total = int(np.sum(counts))
    if total < n:
        raise ConfigurationError(
            f"insufficient {what}: required {n}, available {total}"
        )
    chosen = np.sort(rng.choice(total, size=n, replace=False))
    stacked = []
    offset = 0
    for block, count in zip(blocks, counts):
        local = chosen[(chosen >= offset) & (chosen < offset + count)] - offset
        if local.size:
            stacked.append(block[local])
        offset += count
    return np.vstack(stacked)


def _train_layer(
    vectors: np.ndarray, config: LayerConfig, seed: int
) -> LayerModel:
    normalized = normalize_patch_contrast(vectors)
    whitener = PatchWhitener(variance_to_keep=config.variance_to_keep).fit(normalized)
    whitened = whitener.transform(normalized)
    inference = replace(config.inference, seed=seed)
    state, trace = run_inference(whitened, config.hp, inference)
    return LayerModel(
        state=state,
        zeta_bar=mean_responsibilities(state),
        whitener=whitener,
        rf=config.rf,
        pooling=config.pooling,
        trace=trace,
    )


def train_network(
    videos: list[VideoTensor],
    layer_configs: list[LayerConfig],
    seed: int = 0,
    combine_layers: bool = True,
) -> NetworkModel:
    """Greedy layerwise training: fit layer 1 on sampled video patches, then
    layer 2 on sampled windows of the pooled layer-1 feature maps."""
    if not videos:
        raise ConfigurationError("training corpus is empty")
    if not 1 <= len(layer_configs) <= 2:
        raise ConfigurationError("only 1- or 2-layer networks are supported")

    cfg1 = layer_configs[0]
    patch_blocks = [extract_patches(v, cfg1.rf) for v in videos]
    sample = _sample_rows(
        patch_blocks, cfg1.n_train_patches, RngStream(seed, 1001), "training patches"
    )
    layer1 = _train_layer(sample, cfg1, seed)
    layers = [layer1]

    if len(layer_configs) == 2:
        cfg2 = layer_configs[1]
        geom = window_geometry(cfg2.rf, cfg1.rf)
        window_blocks = []
        for v in videos:
            grid = pooled_feature_grid(layer1, v)
            vectors, _ = extract_windows(grid, geom)
            window_blocks.append(vectors)
        sample2 = _sample_rows(
            window_blocks, cfg2.n_train_patches, RngStream(seed, 1002), "layer-2 windows"
        )
        layer2 = _train_layer(sample2, cfg2, seed + 1)
        layer2.window = geom
        layers.append(layer2)

    return NetworkModel(layers=layers, combine_layers=combine_layers)


def extract_features(net: NetworkModel, video: VideoTensor) -> np.ndarray:
    """Per-position feature vectors for one video.

    Single-layer networks return the pooled convolution grid.  Two-layer
    networks return, per second-layer window, the second-layer features,
    prepended with the pooled first-layer features of the window's anchor
    cell when ``combine_layers`` is set.
    """
    layer1 = net.layers[0]
    grid1 = pooled_feature_grid(layer1, video)
    if len(net.layers) == 1:
        return grid1
    layer2 = net.layers[-1]
    vectors, (mt, my, mx) = extract_windows(grid1, layer2.window)
    if vectors.shape[0] == 0:
        warnings.warn("video too small for the second-layer window grid", stacklevel=2)
        empty = np.zeros((mt, my, mx, net.feature_dim))
        return empty
    feats2 = layer2.encode_patches(vectors)
    if not net.combine_layers:
        return feats2.reshape(mt, my, mx, layer2.n_features)
    anchors = grid1[
        : mt * layer2.window.step_t : layer2.window.step_t,
        : my * layer2.window.step_y : layer2.window.step_y,
        : mx * layer2.window.step_x : layer2.window.step_x,
        :,
    ].reshape(mt * my * mx, -1)
    combined = np.hstack([anchors, feats2])
    return combined.reshape(mt, my, mx, net.feature_dim)


def _layer_arrays(layer: LayerModel) -> dict[str, np.ndarray]:
    rf = layer.rf
    arrays = {
        "whiten_mean": layer.whitener.mean_,
        "whiten_projection": layer.whitener.projection_,
        "whiten_scalars": np.array(
            [layer.whitener.eig_floor_, layer.whitener.variance_to_keep, layer.whitener.eig_floor_scale]
        ),
        "receptive_field": np.array(
            [rf.sx, rf.sy, rf.st, rf.stride_x, rf.stride_y, rf.stride_t], dtype=np.float64
        ),
        "pooling_size": np.array([layer.pooling.group_size], dtype=np.float64),
        "pooling_mode": np.frombuffer(layer.pooling.mode.encode("utf-8"), dtype=np.uint8),
    }
    if layer.window is not None:
        w = layer.window
        arrays["window_geometry"] = np.array(
            [w.span_x, w.span_y, w.span_t, w.step_x, w.step_y, w.step_t], dtype=np.float64
        )
    return arrays


def save_network(path_or_file, net: NetworkModel, config_json: str | None = None) -> None:
    """Serialize a network: geometry and whitening per layer plus the nested
    factor-model containers, preceded by a configuration JSON header."""

    def _write(f):
        f.write(NETWORK_MAGIC)
        blob = (config_json or "").encode("utf-8")
        f.write(struct.pack("<IBI", len(net.layers), int(net.combine_layers), len(blob)))
        f.write(blob)
        for layer in net.layers:
            write_named_arrays(f, _layer_arrays(layer))
            buf = io.BytesIO()
            save_model(buf, layer.state, layer.zeta_bar)
            payload = buf.getvalue()
            f.write(struct.pack("<I", len(payload)))
            f.write(payload)

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "wb") as f:
            _write(f)


def load_network(path_or_file):
    """Read a network container; returns (NetworkModel, config_json)."""

    def _read(f):
        magic = f.read(len(NETWORK_MAGIC))
        if magic != NETWORK_MAGIC:
            raise ValueError("not a network container (bad magic)")
        n_layers, combine, blob_len = struct.unpack("<IBI", f.read(9))
        config = f.read(blob_len).decode("utf-8") or None
        layers = []
        for _ in range(n_layers):
            arrays = read_named_arrays(f)
            (payload_len,) = struct.unpack("<I", f.read(4))
            state, zeta_bar, _ = load_model(io.BytesIO(f.read(payload_len)))
            whitener = PatchWhitener(
                variance_to_keep=float(arrays["whiten_scalars"][1]),
                eig_floor_scale=float(arrays["whiten_scalars"][2]),
            )
            whitener.mean_ = arrays["whiten_mean"]
            whitener.projection_ = np.atleast_2d(arrays["whiten_projection"])
            whitener.eig_floor_ = float(arrays["whiten_scalars"][0])
            whitener.retained_dim_ = whitener.projection_.shape[0]
            whitener.n_features_in_ = whitener.mean_.shape[0]
            rf_vals = [int(v) for v in arrays["receptive_field"]]
            rf = ReceptiveField(*rf_vals)
            pooling = PoolingSpec(
                group_size=int(arrays["pooling_size"][0]),
                mode=arrays["pooling_mode"].tobytes().decode("utf-8"),
            )
            window = None
            if "window_geometry" in arrays:
                window = WindowGeometry(*(int(v) for v in arrays["window_geometry"]))
            layers.append(
                LayerModel(
                    state=state,
                    zeta_bar=zeta_bar,
                    whitener=whitener,
                    rf=rf,
                    pooling=pooling,
                    window=window,
                )
            )
        return NetworkModel(layers=layers, combine_layers=bool(combine)), config

    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(path_or_file, "rb") as f:
        return _read(f)
