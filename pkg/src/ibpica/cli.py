"""Command-line interface: synth, train, extract, quantize.

Every command takes a JSON configuration file plus a few flag overrides, and
writes byte-reproducible artifacts that embed the effective configuration
and seed.  Configuration problems exit with code 2 and field-level
diagnostics as JSON on stderr; runtime failures exit with code 1 and a
machine-readable error object.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .inference import InferenceConfig, feedforward_encode, feedforward_scales, mean_responsibilities, run_inference
from .network import (
    LayerConfig,
    PoolingSpec,
    extract_features,
    load_network,
    save_network,
    train_network,
)
from .serialize import MODEL_MAGIC, load_model, load_tensor, save_model, save_tensor
from .state import ConfigurationError, Hyperparameters, feature_counts
from .synth import load_bundle, save_bundle, synth_generate
from .quantize import KMeansCodebook
from .updates import UPDATE_MODES
from .video import ReceptiveField, VideoTensor, read_frame_directory, read_video
from .network import NETWORK_MAGIC

__all__ = ["main", "worker_count"]

_HP_FIELDS = ("a", "b", "c", "f", "gamma1", "gamma2", "eta1", "eta2", "xi")


def worker_count() -> int:
    """Worker cap from the IBPICA_THREADS environment variable (default 1)."""
    value = os.environ.get("IBPICA_THREADS", "1")
    try:
        return max(1, int(value))
    except ValueError:
        return 1


class ConfigValidationError(Exception):
    def __init__(self, fields: dict[str, str]):
        self.fields = fields
        super().__init__("; ".join(f"{k}: {v}" for k, v in fields.items()))


class _Validator:
    """Collects field-level problems while pulling typed values out of JSON."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.errors: dict[str, str] = {}

    def _lookup(self, path: str):
        node = self.raw
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                return None
            node = node[part]
        return node

    def get(self, path: str, kind, default=None, required=False, check=None, describe=""):
        value = self._lookup(path)
        if value is None:
            if required:
                self.errors[path] = "required field is missing"
            return default
        if kind is float and isinstance(value, int) and not isinstance(value, bool):
            value = float(value)
        if kind is not None and not isinstance(value, kind) or isinstance(value, bool) and kind is int:
            self.errors[path] = f"expected {getattr(kind, '__name__', kind)}, got {type(value).__name__}"
            return default
        if check is not None and not check(value):
            self.errors[path] = describe or "invalid value"
            return default
        return value

    def finish(self):
        if self.errors:
            raise ConfigValidationError(self.errors)


def _load_config(path: str, overrides: argparse.Namespace) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except FileNotFoundError:
        raise ConfigValidationError({"config": f"file not found: {path}"})
    except json.JSONDecodeError as exc:
        raise ConfigValidationError({"config": f"invalid JSON: {exc}"})
    if not isinstance(raw, dict):
        raise ConfigValidationError({"config": "top-level value must be an object"})
    if overrides.seed is not None:
        raw["seed"] = overrides.seed
    if overrides.updates is not None:
        raw["updates"] = overrides.updates
    if getattr(overrides, "layers", None) is not None:
        if isinstance(raw.get("layers"), list):
            raw["layers"] = raw["layers"][: overrides.layers]
        raw["n_layers"] = overrides.layers
    return raw


def _canonical(raw: dict) -> str:
    return json.dumps(raw, sort_keys=True, separators=(",", ":"))


def _common(v: _Validator):
    seed = v.get("seed", int, default=0, check=lambda s: s >= 0, describe="must be non-negative")
    updates = v.get(
        "updates", str, default="exact",
        check=lambda u: u in UPDATE_MODES, describe=f"must be one of {list(UPDATE_MODES)}",
    )
    return seed, updates


def _hyperparameters(v: _Validator) -> dict:
    out = {}
    for name in _HP_FIELDS:
        value = v.get(
            f"model.hyperparameters.{name}", float,
            check=lambda x: x > 0, describe="must be positive",
        )
        if value is not None:
            out[name] = value
    return out


def _inference_config(v: _Validator, seed: int, updates: str) -> dict:
    return dict(
        max_iter=v.get("inference.max_iter", int, default=100, check=lambda x: x >= 0, describe="must be non-negative"),
        tolerance=v.get("inference.tolerance", float, default=1e-5, check=lambda x: x > 0, describe="must be positive"),
        K_init=v.get("inference.K_init", int, default=5, check=lambda x: x >= 1, describe="must be at least 1"),
        prune_threshold=v.get("inference.prune_threshold", float, default=1e-3, check=lambda x: 0 < x < 1, describe="must lie in (0, 1)"),
        seed=seed,
        updates=updates,
    )


def _layer_configs(v: _Validator, hp: Hyperparameters, inference_kwargs: dict) -> list[LayerConfig]:
    layers_raw = v.get("layers", list, default=None)
    if layers_raw is None:
        v.errors["layers"] = "required for video training"
        return []
    configs = []
    for i, entry in enumerate(layers_raw):
        prefix = f"layers[{i}]"
        if not isinstance(entry, dict):
            v.errors[prefix] = "layer entry must be an object"
            continue
        sub = _Validator(entry)
        rf_kwargs = {}
        for name, default in (("sx", 16), ("sy", 16), ("st", 10)):
            rf_kwargs[name] = sub.get(
                f"receptive_field.{name}", int, default=default,
                check=lambda x: x >= 1, describe="must be at least 1",
            )
        for name in ("stride_x", "stride_y", "stride_t"):
            value = sub.get(f"receptive_field.{name}", int, check=lambda x: x >= 1, describe="must be at least 1")
            if value is not None:
                rf_kwargs[name] = value
        pooling = PoolingSpec(
            group_size=sub.get("pooling.group_size", int, default=2, check=lambda x: x >= 1, describe="must be at least 1"),
            mode=sub.get("pooling.mode", str, default="l2", check=lambda m: m in ("l2", "max", "mean"), describe="must be l2, max or mean"),
        )
        n_patches = sub.get("n_train_patches", int, default=200_000, check=lambda x: x >= 1, describe="must be at least 1")
        keep = sub.get("variance_to_keep", float, default=0.99, check=lambda x: 0 < x <= 1, describe="must lie in (0, 1]")
        for key, msg in sub.errors.items():
            v.errors[f"{prefix}.{key}"] = msg
        if not sub.errors:
            configs.append(
                LayerConfig(
                    rf=ReceptiveField(**rf_kwargs),
                    pooling=pooling,
                    n_train_patches=n_patches,
                    variance_to_keep=keep,
                    hp=hp,
                    inference=InferenceConfig(**inference_kwargs),
                )
            )
    return configs


def _write_csv(path: Path, header: list[str], rows: list[list], seed: int, config: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(header + ["seed", "config"])
        for row in rows:
            writer.writerow(row + [seed, config])


def _format_float(value) -> str:
    return repr(float(value))


def _load_corpus(path: Path) -> list[VideoTensor]:
    if not path.exists():
        raise ConfigurationError(f"video corpus not found: {path}")
    videos = []
    for entry in sorted(path.iterdir()):
        if entry.is_dir():
            videos.append(read_frame_directory(entry))
        elif entry.suffix.lower() == ".vidt":
            videos.append(read_video(entry))
    if not videos:
        raise ConfigurationError(f"no videos found under {path}")
    return videos


def cmd_synth(raw: dict, out: Path) -> int:
    v = _Validator(raw)
    seed, _ = _common(v)
    dims = v.get("synth.dims", int, default=16, check=lambda x: x >= 1, describe="must be at least 1")
    k_true = v.get("synth.true_features", int, default=5, check=lambda x: x >= 1, describe="must be at least 1")
    samples = v.get("synth.samples", int, default=2000, check=lambda x: x >= 1, describe="must be at least 1")
    sparsity = v.get("synth.sparsity", float, default=0.5, check=lambda x: 0 < x <= 1, describe="must lie in (0, 1]")
    snr = v.get("synth.snr", float, default=10.0, check=lambda x: x > 0, describe="must be positive")
    v.finish()
    config = _canonical(raw)

    bundle = synth_generate(dims, k_true, samples, sparsity, seed, snr=snr)
    out.mkdir(parents=True, exist_ok=True)
    save_bundle(out / "synth.ibpb", bundle, config_json=config)
    print(json.dumps({"artifact": str(out / "synth.ibpb"), "dims": dims, "true_features": k_true, "samples": samples}))
    return 0


def cmd_train(raw: dict, out: Path) -> int:
    v = _Validator(raw)
    seed, updates = _common(v)
    kind = v.get("data.kind", str, required=True, check=lambda k: k in ("bundle", "videos"), describe="must be 'bundle' or 'videos'")
    data_path = v.get("data.path", str, required=True)
    J = v.get("model.mixture_components", int, default=2, check=lambda x: x >= 1, describe="must be at least 1")
    hp_kwargs = _hyperparameters(v)
    inference_kwargs = _inference_config(v, seed, updates)
    combine = v.get("combine_layers", bool, default=True)
    layer_cfgs: list[LayerConfig] = []
    if kind == "videos":
        hp = None
        try:
            hp = Hyperparameters(J=J, **hp_kwargs)
        except ConfigurationError as exc:
            v.errors["model.hyperparameters"] = str(exc)
        if hp is not None:
            layer_cfgs = _layer_configs(v, hp, inference_kwargs)
    v.finish()
    config = _canonical(raw)
    out.mkdir(parents=True, exist_ok=True)

    if kind == "bundle":
        bundle, _ = load_bundle(data_path)
        hp = Hyperparameters(J=J, **hp_kwargs)
        state, trace = run_inference(bundle.observations, hp, InferenceConfig(**inference_kwargs))
        save_model(out / "model.ibpm", state, mean_responsibilities(state), config_json=config)
        rows = [
            [0, i, _format_float(e), ka, kc, int(acc), int(pr)]
            for i, (e, ka, kc, acc, pr) in enumerate(
                zip(trace.elbo, trace.k_active, trace.k_columns, trace.mh_accepted, trace.pruned)
            )
        ]
        _write_csv(out / "trace.csv", ["layer", "iteration", "elbo", "k_active", "k_columns", "mh_accepted", "pruned"], rows, seed, config)
        report = {"artifact": str(out / "model.ibpm"), "inferred_features": feature_counts(state).K, "columns": state.n_features, "final_elbo": trace.elbo[-1]}
        print(json.dumps(report))
        return 0

    videos = _load_corpus(Path(data_path))
    net = train_network(videos, layer_cfgs, seed=seed, combine_layers=combine)
    save_network(out / "network.ibpn", net, config_json=config)
    rows = []
    for li, layer in enumerate(net.layers):
        trace = layer.trace
        for i, (e, ka, kc, acc, pr) in enumerate(
            zip(trace.elbo, trace.k_active, trace.k_columns, trace.mh_accepted, trace.pruned)
        ):
            rows.append([li, i, _format_float(e), ka, kc, int(acc), int(pr)])
    _write_csv(out / "trace.csv", ["layer", "iteration", "elbo", "k_active", "k_columns", "mh_accepted", "pruned"], rows, seed, config)
    report = {
        "artifact": str(out / "network.ibpn"),
        "inferred_features": [feature_counts(l.state).K for l in net.layers],
        "feature_dim": net.feature_dim,
    }
    print(json.dumps(report))
    return 0


def _extract_matrix(model_path: str, data_path: str, out: Path, config: str, want_csv: bool, seed: int):
    state, zeta_bar, _ = load_model(model_path)
    bundle, _ = load_bundle(data_path)
    scales = feedforward_scales(state, zeta_bar)
    feats = feedforward_encode(state, bundle.observations, scales)
    save_tensor(out / "features.ibpt", feats, config_json=config)
    if want_csv:
        feats32 = feats.astype(np.float32)
        rows = [[i] + [_format_float(x) for x in row] for i, row in enumerate(feats32)]
        header = ["row"] + [f"f{j}" for j in range(feats.shape[1])]
        _write_csv(out / "features.csv", header, rows, seed, config)
    return {"artifact": str(out / "features.ibpt"), "shape": list(feats.shape)}


def _extract_videos(model_path: str, data_path: str, out: Path, config: str, want_csv: bool, seed: int):
    net, _ = load_network(model_path)
    videos = _load_corpus(Path(data_path))
    with ThreadPoolExecutor(max_workers=worker_count()) as pool_exec:
        grids = list(pool_exec.map(lambda v: extract_features(net, v), videos))
    artifacts = []
    csv_rows = []
    for i, grid in enumerate(grids):
        path = out / f"features_{i:04d}.ibpt"
        save_tensor(path, grid, config_json=config)
        artifacts.append(str(path))
        if want_csv:
            g32 = grid.astype(np.float32)
            nt, ny, nx, F = g32.shape
            for it in range(nt):
                for iy in range(ny):
                    for ix in range(nx):
                        csv_rows.append(
                            [i, it, iy, ix] + [_format_float(x) for x in g32[it, iy, ix]]
                        )
    if want_csv:
        F = grids[0].shape[-1] if grids else 0
        header = ["video", "t", "y", "x"] + [f"f{j}" for j in range(F)]
        _write_csv(out / "features.csv", header, csv_rows, seed, config)
    return {"artifacts": artifacts}


def cmd_extract(raw: dict, out: Path) -> int:
    v = _Validator(raw)
    seed, _ = _common(v)
    model_path = v.get("extract.model", str, required=True)
    data_path = v.get("extract.data", str, required=True)
    want_csv = v.get("extract.csv", bool, default=True)
    v.finish()
    config = _canonical(raw)
    out.mkdir(parents=True, exist_ok=True)

    with open(model_path, "rb") as f:
        magic = f.read(8)
    if magic == MODEL_MAGIC:
        report = _extract_matrix(model_path, data_path, out, config, want_csv, seed)
    elif magic == NETWORK_MAGIC:
        report = _extract_videos(model_path, data_path, out, config, want_csv, seed)
    else:
        raise ConfigurationError(f"unrecognized model container: {model_path}")
    print(json.dumps(report))
    return 0


def cmd_quantize(raw: dict, out: Path) -> int:
    v = _Validator(raw)
    seed, _ = _common(v)
    features = v.get("quantize.features", list, required=True)
    centers = v.get("quantize.centers", int, default=64, check=lambda x: x >= 1, describe="must be at least 1")
    if features is not None and not all(isinstance(p, str) for p in features):
        v.errors["quantize.features"] = "must be a list of file paths"
    v.finish()
    config = _canonical(raw)
    out.mkdir(parents=True, exist_ok=True)

    per_file = []
    for path in features:
        tensor, _ = load_tensor(path)
        per_file.append(np.asarray(tensor, dtype=np.float64).reshape(-1, tensor.shape[-1]))
    stacked = np.vstack(per_file)
    codebook = KMeansCodebook(n_centers=centers, random_state=seed).fit(stacked)
    save_tensor(out / "codebook.ibpt", codebook.centers_, config_json=config)
    rows = []
    for path, mat in zip(features, per_file):
        hist = codebook.histogram(mat)
        rows.append([path] + [_format_float(h) for h in hist])
    header = ["source"] + [f"c{j}" for j in range(codebook.centers_.shape[0])]
    _write_csv(out / "histograms.csv", header, rows, seed, config)
    print(json.dumps({"codebook": str(out / "codebook.ibpt"), "histograms": str(out / "histograms.csv")}))
    return 0


_COMMANDS = {
    "synth": cmd_synth,
    "train": cmd_train,
    "extract": cmd_extract,
    "quantize": cmd_quantize,
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ibpica",
        description="Nonparametric Bayesian sparse ICA feature learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="path to the JSON run configuration")
        p.add_argument("--out", default="out", help="output directory for artifacts")
        p.add_argument("--seed", type=int, default=None, help="override the configured seed")
        p.add_argument("--updates", choices=list(UPDATE_MODES), default=None, help="override the update rules")
        if name == "train":
            p.add_argument("--layers", type=int, choices=(1, 2), default=None, help="truncate the layer stack")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        raw = _load_config(args.config, args)
        return _COMMANDS[args.command](raw, Path(args.out))
    except ConfigValidationError as exc:
        json.dump({"error": "config", "fields": exc.fields}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (ConfigurationError, ValueError, OSError) as exc:
        json.dump({"error": "runtime", "type": type(exc).__name__, "message": str(exc)}, sys.stderr)
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
