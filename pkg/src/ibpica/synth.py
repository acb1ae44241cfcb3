"""Synthetic ground-truth generation for recovery experiments.

Observations follow the generative model exactly: sparse loadings (Bernoulli
support with standard normal slabs), heavy-tailed sources from a
two-component zero-mean Gaussian mixture with unit marginal power, and
isotropic Gaussian noise calibrated to a target signal-to-noise ratio.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .randomness import RngStream
from .serialize import FormatError, read_named_arrays, write_named_arrays
from .state import ConfigurationError

__all__ = ["SYNTH_MAGIC", "SynthBundle", "synth_generate", "save_bundle", "load_bundle"]

SYNTH_MAGIC = b"IBPSYN1\x00"

MIXTURE_WEIGHTS = (0.8, 0.2)
_VAR_RATIO = 10.0
# Unit marginal source power: w1*v + w2*ratio*v = 1.
_BASE_VAR = 1.0 / (MIXTURE_WEIGHTS[0] + MIXTURE_WEIGHTS[1] * _VAR_RATIO)
MIXTURE_VARIANCES = (_BASE_VAR, _VAR_RATIO * _BASE_VAR)


@dataclass
class SynthBundle:
    observations: np.ndarray    # (N, D)
    loadings: np.ndarray        # (D, K)
    sources: np.ndarray         # (N, K)
    noise_precision: float
    snr: float
    seed: int


def synth_generate(
    D: int, K_true: int, N: int, sparsity: float, seed: int, snr: float = 10.0
) -> SynthBundle:
    """Draw one synthetic problem; fully determined by the seed."""
    if K_true < 1:
        raise ConfigurationError("K_true must be at least 1")
    if not 0.0 < sparsity <= 1.0:
        raise ConfigurationError("sparsity must lie in (0, 1]")
    if snr <= 0:
        raise ConfigurationError("snr must be positive")
    rng = RngStream(seed, 0)

    support = rng.random(size=(D, K_true)) < sparsity
    # A feature with empty support is unidentifiable; redraw such columns.
    for k in range(K_true):
        while not support[:, k].any():
            support[:, k] = rng.random(size=D) < sparsity
    loadings = support * rng.normal(size=(D, K_true))

    heavy = rng.random(size=(N, K_true)) < MIXTURE_WEIGHTS[1]
    std = np.where(heavy, np.sqrt(MIXTURE_VARIANCES[1]), np.sqrt(MIXTURE_VARIANCES[0]))
    sources = std * rng.normal(size=(N, K_true))

    signal_power = float(np.mean(np.sum(loadings ** 2, axis=1)))
    noise_var = signal_power / snr
    noise_precision = 1.0 / noise_var
    observations = sources @ loadings.T + rng.normal(0.0, np.sqrt(noise_var), size=(N, D))
    return SynthBundle(
        observations=observations,
        loadings=loadings,
        sources=sources,
        noise_precision=noise_precision,
        snr=snr,
        seed=seed,
    )


def save_bundle(path_or_file, bundle: SynthBundle, config_json: str | None = None) -> None:
    def _write(f):
        f.write(SYNTH_MAGIC)
        arrays = {
            "observations": bundle.observations,
            "loadings": bundle.loadings,
            "sources": bundle.sources,
            "scalars": np.array([bundle.noise_precision, bundle.snr, float(bundle.seed)]),
        }
        if config_json is not None:
            arrays["run_config"] = np.frombuffer(config_json.encode("utf-8"), dtype=np.uint8)
        write_named_arrays(f, arrays)

    if hasattr(path_or_file, "write"):
        _write(path_or_file)
    else:
        with open(path_or_file, "wb") as f:
            _write(f)


def load_bundle(path_or_file):
    """Read a ground-truth bundle; returns (SynthBundle, config_json)."""

    def _read(f):
        magic = f.read(len(SYNTH_MAGIC))
        if magic != SYNTH_MAGIC:
            raise FormatError("not a synthetic ground-truth bundle (bad magic)")
        arrays = read_named_arrays(f)
        scalars = arrays["scalars"]
        config = None
        if "run_config" in arrays:
            config = arrays["run_config"].tobytes().decode("utf-8")
        bundle = SynthBundle(
            observations=arrays["observations"],
            loadings=arrays["loadings"],
            sources=arrays["sources"],
            noise_precision=float(scalars[0]),
            snr=float(scalars[1]),
            seed=int(scalars[2]),
        )
        return bundle, config

    if hasattr(path_or_file, "read"):
        return _read(path_or_file)
    with open(path_or_file, "rb") as f:
        return _read(f)
