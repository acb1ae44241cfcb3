"""End-to-end semantic check: learned features separate motion classes.

Horizontal versus vertical drifting gratings, one-layer network, histogram
quantization, leave-one-out nearest-centroid classification.  The point is
not benchmark accuracy but that the full pipeline (patches, whitening,
inference, convolution, pooling, quantization) transports class signal.
"""

import numpy as np

from ibpica.inference import InferenceConfig
from ibpica.network import LayerConfig, PoolingSpec, extract_features, train_network
from ibpica.quantize import KMeansCodebook
from ibpica.state import Hyperparameters
from ibpica.video import ReceptiveField, VideoTensor


def _grating(seed, horizontal, T=10, H=16, W=16):
    rng = np.random.default_rng(seed)
    t = np.arange(T)[:, None, None]
    y = np.arange(H)[None, :, None]
    x = np.arange(W)[None, None, :]
    freq = rng.uniform(0.6, 1.2)
    speed = rng.uniform(0.6, 1.2)
    phase = rng.uniform(0, 2 * np.pi)
    axis = x if horizontal else y
    clip = 0.5 + 0.4 * np.sin(freq * axis + speed * t + phase)
    clip = clip + 0.05 * rng.normal(size=(T, H, W))
    return VideoTensor(np.clip(clip, 0.0, 1.0))


def test_motion_classes_separate():
    train_videos = [_grating(s, horizontal=s % 2 == 0) for s in range(8)]
    config = LayerConfig(
        rf=ReceptiveField(6, 6, 4, stride_x=3, stride_y=3, stride_t=2),
        pooling=PoolingSpec(2, "l2"),
        n_train_patches=200,
        variance_to_keep=0.95,
        hp=Hyperparameters(),
        inference=InferenceConfig(max_iter=20, K_init=6, seed=0),
    )
    net = train_network(train_videos, [config], seed=0)

    eval_videos = [_grating(100 + s, horizontal=s % 2 == 0) for s in range(12)]
    labels = np.array([s % 2 == 0 for s in range(12)])
    per_video = [
        extract_features(net, v).reshape(-1, net.feature_dim) for v in eval_videos
    ]
    codebook = KMeansCodebook(n_centers=8, random_state=0).fit(np.vstack(per_video))
    histograms = np.array([codebook.histogram(f) for f in per_video])

    correct = 0
    for i in range(len(labels)):
        mask = np.arange(len(labels)) != i
        centroid_h = histograms[mask & labels].mean(axis=0)
        centroid_v = histograms[mask & ~labels].mean(axis=0)
        predicted = np.sum((histograms[i] - centroid_h) ** 2) < np.sum(
            (histograms[i] - centroid_v) ** 2
        )
        correct += predicted == labels[i]
    accuracy = correct / len(labels)
    assert accuracy >= 0.9, f"leave-one-out accuracy {accuracy:.2f}"
