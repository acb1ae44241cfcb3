"""Patch geometry, flattening conventions, and video file formats."""

import numpy as np
import pytest

from ibpica.video import (
    ReceptiveField,
    VideoTensor,
    extract_patches,
    grid_counts,
    normalize_patch_contrast,
    read_frame_directory,
    read_video,
    write_video,
)


def _video(T, H, W, seed=0):
    rng = np.random.default_rng(seed)
    return VideoTensor(rng.random((T, H, W)))


class TestGridGeometry:
    def test_exact_fit_single_patch(self):
        v = _video(10, 16, 16)
        rf = ReceptiveField(16, 16, 10)
        patches = extract_patches(v, rf)
        assert patches.shape == (1, 16 * 16 * 10)

    def test_documented_eight_patch_case(self):
        v = _video(15, 24, 24)
        rf = ReceptiveField(16, 16, 10, stride_x=8, stride_y=8, stride_t=5)
        assert grid_counts(v.voxels.shape, rf) == (2, 2, 2)
        assert extract_patches(v, rf).shape[0] == 8

    def test_grid_formula_on_random_shapes(self):
        rng = np.random.default_rng(1)
        for _ in range(100):
            T, H, W = rng.integers(1, 30, size=3)
            sx = int(rng.integers(1, 12))
            sy = int(rng.integers(1, 12))
            st = int(rng.integers(1, 8))
            rf = ReceptiveField(
                sx, sy, st,
                stride_x=int(rng.integers(1, sx + 1)),
                stride_y=int(rng.integers(1, sy + 1)),
                stride_t=int(rng.integers(1, st + 1)),
            )
            nx, ny, nt = grid_counts((T, H, W), rf)
            expected_nx = (W - sx) // rf.stride_x + 1 if W >= sx else 0
            expected_ny = (H - sy) // rf.stride_y + 1 if H >= sy else 0
            expected_nt = (T - st) // rf.stride_t + 1 if T >= st else 0
            assert (nx, ny, nt) == (expected_nx, expected_ny, expected_nt)

    def test_too_small_video_warns_and_returns_empty(self):
        v = _video(3, 8, 8)
        rf = ReceptiveField(16, 16, 10)
        with pytest.warns(UserWarning, match="smaller than receptive field"):
            patches = extract_patches(v, rf)
        assert patches.shape == (0, rf.volume)

    def test_default_strides_are_half_extent(self):
        rf = ReceptiveField(16, 16, 10)
        assert (rf.stride_x, rf.stride_y, rf.stride_t) == (8, 8, 5)

    def test_invalid_geometry_rejected(self):
        with pytest.raises(ValueError):
            ReceptiveField(0, 4, 4)
        with pytest.raises(ValueError):
            ReceptiveField(4, 4, 4, stride_x=5)


class TestFlattening:
    def test_constant_video_identical_patches(self):
        v = VideoTensor(np.full((6, 10, 10), 0.3))
        rf = ReceptiveField(4, 4, 2)
        patches = extract_patches(v, rf)
        assert np.all(patches == 0.3)

    def test_patch_order_x_fastest_then_y_then_t(self):
        # Encode the grid coordinates in the voxel values to pin the order.
        T, H, W = 4, 6, 8
        v = np.zeros((T, H, W))
        for t in range(T):
            for y in range(H):
                for x in range(W):
                    v[t, y, x] = t * 10000 + y * 100 + x
        rf = ReceptiveField(2, 2, 2, stride_x=2, stride_y=2, stride_t=2)
        patches = extract_patches(VideoTensor(v / v.max()), rf) * v.max()
        nx, ny, nt = grid_counts((T, H, W), rf)
        # Patch index advances x first, then y, then t.
        first_corner = patches[:, 0]
        idx = 0
        for t in range(nt):
            for y in range(ny):
                for x in range(nx):
                    expected = (t * 2) * 10000 + (y * 2) * 100 + (x * 2)
                    assert first_corner[idx] == pytest.approx(expected)
                    idx += 1
        # Within-patch flattening: x fastest, then y, then t.
        np.testing.assert_allclose(
            patches[0], [0, 1, 100, 101, 10000, 10001, 10100, 10101]
        )

    def test_extraction_reconstructs_voxels(self):
        # Non-overlapping strides partition the video: scattering patches
        # back must reproduce the original voxels exactly.
        v = _video(4, 8, 8, seed=3)
        rf = ReceptiveField(4, 4, 2, stride_x=4, stride_y=4, stride_t=2)
        patches = extract_patches(v, rf)
        nx, ny, nt = grid_counts(v.voxels.shape, rf)
        rebuilt = np.zeros_like(v.voxels)
        i = 0
        for t in range(nt):
            for y in range(ny):
                for x in range(nx):
                    rebuilt[
                        t * 2 : t * 2 + 2, y * 4 : y * 4 + 4, x * 4 : x * 4 + 4
                    ] = patches[i].reshape(2, 4, 4)
                    i += 1
        np.testing.assert_array_equal(rebuilt, v.voxels)

    def test_contrast_normalization(self):
        rng = np.random.default_rng(4)
        patches = rng.random((20, 32)) * 5
        normalized = normalize_patch_contrast(patches)
        np.testing.assert_allclose(normalized.mean(axis=1), 0.0, atol=1e-12)
        assert np.all(normalized.std(axis=1) < 1.0 + 1e-9)


class TestVideoIO:
    def test_round_trip(self, tmp_path):
        v = _video(5, 7, 9, seed=5)
        path = tmp_path / "clip.vidt"
        write_video(path, v)
        loaded = read_video(path)
        np.testing.assert_allclose(loaded.voxels, v.voxels, atol=1e-7)

    def test_layout_is_x_fastest(self, tmp_path):
        v = VideoTensor(np.arange(2 * 2 * 3).reshape(2, 2, 3) / 11.0)
        path = tmp_path / "clip.vidt"
        write_video(path, v)
        raw = path.read_bytes()
        values = np.frombuffer(raw[6 + 12 :], dtype="<f4")
        # First H*W block is frame 0 with x varying fastest.
        np.testing.assert_allclose(values[:3], v.voxels[0, 0, :], atol=1e-7)
        np.testing.assert_allclose(values[3:6], v.voxels[0, 1, :], atol=1e-7)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "junk.vidt"
        path.write_bytes(b"garbage!" * 4)
        with pytest.raises(ValueError, match="bad magic"):
            read_video(path)

    def test_pgm_directory(self, tmp_path):
        frames = np.random.default_rng(6).integers(0, 256, size=(3, 4, 5), dtype=np.uint8)
        for i, frame in enumerate(frames):
            header = f"P5\n5 4\n255\n".encode()
            (tmp_path / f"frame_{i:03d}.pgm").write_bytes(header + frame.tobytes())
        video = read_frame_directory(tmp_path)
        assert video.voxels.shape == (3, 4, 5)
        np.testing.assert_allclose(video.voxels, frames / 255.0)

    def test_ascii_pgm_and_luma_ppm(self, tmp_path):
        (tmp_path / "a_frame.pgm").write_bytes(b"P2\n2 2\n255\n0 128\n255 64\n")
        rgb = np.array([[[255, 0, 0], [0, 255, 0]], [[0, 0, 255], [255, 255, 255]]], dtype=np.uint8)
        (tmp_path / "b_frame.ppm").write_bytes(b"P6\n2 2\n255\n" + rgb.tobytes())
        video = read_frame_directory(tmp_path)
        assert video.voxels.shape == (2, 2, 2)
        np.testing.assert_allclose(video.voxels[0], [[0, 128 / 255], [1.0, 64 / 255]])
        np.testing.assert_allclose(video.voxels[1, 0, 0], 0.299, atol=1e-6)
        np.testing.assert_allclose(video.voxels[1, 1, 1], 1.0, atol=1e-6)
