"""Self-describing binary containers with bit-exact round trips.

The model container starts with the magic string ``IBPICA1\\0`` followed by
little-endian u32 dimensions (D, K, J) and a sequence of named arrays, each
stored row-major with a name/dtype/shape header.  Posterior arrays are
float64; auxiliary blobs (such as the embedded run configuration) use uint8.
All multi-byte integers are little-endian, so files are portable and byte
reproducible.
"""

from __future__ import annotations

import struct

import numpy as np

from .state import (
    GlobalPrecisions,
    Hyperparameters,
    LoadingPosterior,
    ModelState,
    SourcePosterior,
    StickState,
)

__all__ = [
    "MODEL_MAGIC",
    "TENSOR_MAGIC",
    "save_model",
    "load_model",
    "save_tensor",
    "load_tensor",
    "write_named_arrays",
    "read_named_arrays",
]

MODEL_MAGIC = b"IBPICA1\x00"
TENSOR_MAGIC = b"IBPFTR1\x00"

_DTYPE_CODES = {0: "<f8", 1: "u1", 2: "<f4"}
_CODE_FOR_KIND = {"<f8": 0, "u1": 1, "<f4": 2}


class FormatError(ValueError):
    """Malformed or foreign container content."""


def _write_u32(f, *values: int) -> None:
    f.write(struct.pack("<" + "I" * len(values), *values))


def _read_u32(f, count: int = 1):
    data = f.read(4 * count)
    if len(data) != 4 * count:
        raise FormatError("truncated container")
    values = struct.unpack("<" + "I" * count, data)
    return values[0] if count == 1 else values


def _write_array(f, name: str, arr: np.ndarray) -> None:
    payload = np.ascontiguousarray(arr)
    dtype = {"f": "<f8", "u": "u1"}.get(payload.dtype.kind)
    if payload.dtype == np.float32:
        dtype = "<f4"
    if dtype is None:
        raise FormatError(f"unsupported dtype {payload.dtype} for array {name!r}")
    payload = payload.astype(dtype, copy=False)
    raw_name = name.encode("utf-8")
    _write_u32(f, len(raw_name))
    f.write(raw_name)
    f.write(bytes([_CODE_FOR_KIND[dtype]]))
    _write_u32(f, payload.ndim, *payload.shape)
    f.write(payload.tobytes())


def _read_array(f):
    name_len = _read_u32(f)
    name = f.read(name_len).decode("utf-8")
    code = f.read(1)[0]
    if code not in _DTYPE_CODES:
        raise FormatError(f"unknown dtype code {code}")
    dtype = np.dtype(_DTYPE_CODES[code])
    rank = _read_u32(f)
    if rank == 0:
        shape = ()
    else:
        values = _read_u32(f, rank)
        shape = (values,) if rank == 1 else tuple(values)
    count = int(np.prod(shape)) if shape else 1
    data = f.read(count * dtype.itemsize)
    if len(data) != count * dtype.itemsize:
        raise FormatError("truncated array payload")
    return name, np.frombuffer(data, dtype=dtype).reshape(shape).copy()


def write_named_arrays(f, arrays: dict[str, np.ndarray]) -> None:
    _write_u32(f, len(arrays))
    for name, arr in arrays.items():
        _write_array(f, name, arr)


def read_named_arrays(f) -> dict[str, np.ndarray]:
    count = _read_u32(f)
    out: dict[str, np.ndarray] = {}
    for _ in range(count):
        name, arr = _read_array(f)
        out[name] = arr
    return out


def _state_arrays(state: ModelState, zeta_bar: np.ndarray) -> dict[str, np.ndarray]:
    return {
        "activity": state.loading.activity,
        "slab_mean": state.loading.mean,
        "slab_precision": state.loading.precision,
        "mixture_weights": state.source.mixture_weights,
        "scale_shape": state.source.scale_shape,
        "scale_rate": state.source.scale_rate,
        "tau_tilde": state.sticks.tau_tilde,
        "tau_hat": state.sticks.tau_hat,
        "q_weights": state.sticks.q_weights,
        "alpha_params": np.array([state.sticks.alpha_shape, state.sticks.alpha_rate]),
        "lambda_shape": state.prec.lambda_shape,
        "lambda_rate": state.prec.lambda_rate,
        "phi_params": np.array([state.prec.phi_shape, state.prec.phi_rate]),
        "hyperparams": state.hp.as_vector(),
        "zeta_bar": zeta_bar,
    }


def save_model(
    path_or_file,
    state: ModelState,
    zeta_bar: np.ndarray,
    config_json: str | None = None,
) -> None:
    """Write the sample-count-free part of a model state to the container."""

    def _write(f):
        f.write(MODEL_MAGIC)
        _write_u32(f, state.n_dims, state.n_features, state.hp.J)
        arrays = _state_arrays(state, np.asarray(zeta_bar, dtype=np.float64))
        if config_json is not None:
            arrays["run_config"] = np.frombuffer(
                config_json.encode("utf-8"), dtype=np.uint8
            )
        write_named_arrays(f, arrays)

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "wb") as f:
            _write(f)


def load_model(path_or_file):
    """Read a model container; returns (state, zeta_bar, config_json).

    The returned state carries an empty (N = 0) per-sample source block.
    """

    def _read(f):
        magic = f.read(len(MODEL_MAGIC))
        if magic != MODEL_MAGIC:
            raise FormatError("not a model container (bad magic)")
        D, K, J = _read_u32(f, 3)
        arrays = read_named_arrays(f)
        hp = Hyperparameters.from_vector(arrays["hyperparams"], J=J)
        loading = LoadingPosterior(
            activity=arrays["activity"].reshape(D, K),
            mean=arrays["slab_mean"].reshape(D, K),
            precision=arrays["slab_precision"].reshape(K),
        )
        source = SourcePosterior(
            mean=np.zeros((0, K)),
            variance=np.ones((0, K)),
            responsibilities=np.zeros((0, K, J)),
            mixture_weights=arrays["mixture_weights"].reshape(K, J),
            scale_shape=arrays["scale_shape"].reshape(K, J),
            scale_rate=arrays["scale_rate"].reshape(K, J),
        )
        sticks = StickState(
            tau_tilde=arrays["tau_tilde"].reshape(K),
            tau_hat=arrays["tau_hat"].reshape(K),
            q_weights=arrays["q_weights"].reshape(K),
            alpha_shape=float(arrays["alpha_params"][0]),
            alpha_rate=float(arrays["alpha_params"][1]),
        )
        prec = GlobalPrecisions(
            lambda_shape=arrays["lambda_shape"].reshape(K),
            lambda_rate=arrays["lambda_rate"].reshape(K),
            phi_shape=float(arrays["phi_params"][0]),
            phi_rate=float(arrays["phi_params"][1]),
        )
        state = ModelState(hp=hp, loading=loading, source=source, sticks=sticks, prec=prec)
        config = None
        if "run_config" in arrays:
            config = arrays["run_config"].tobytes().decode("utf-8")
        return state, arrays["zeta_bar"].reshape(K, J), config

    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(path_or_file, "rb") as f:
        return _read(f)


def save_tensor(path_or_file, tensor: np.ndarray, config_json: str | None = None) -> None:
    """Write a float32 feature tensor with an embedded configuration blob."""

    def _write(f):
        f.write(TENSOR_MAGIC)
        blob = (config_json or "").encode("utf-8")
        _write_u32(f, len(blob))
        f.write(blob)
        _write_array(f, "tensor", np.asarray(tensor, dtype=np.float32))

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "wb") as f:
            _write(f)


def load_tensor(path_or_file):
    """Read a feature tensor; returns (array, config_json)."""

    def _read(f):
        magic = f.read(len(TENSOR_MAGIC))
        if magic != TENSOR_MAGIC:
            raise FormatError("not a feature tensor container (bad magic)")
        blob_len = _read_u32(f)
        config = f.read(blob_len).decode("utf-8") or None
        name, arr = _read_array(f)
        return arr, config

    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(path_or_file, "rb") as f:
        return _read(f)
