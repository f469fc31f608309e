import numpy as np
import pytest

from lrnerv.video import (PpmFormatError, VideoManifest, load_manifest, load_video,
                          read_ppm, save_manifest, synthetic_video, write_ppm, write_video)


class TestPpm:
    def test_roundtrip_byte_identical(self, tmp_path, rng):
        frame = rng.uniform(0, 1, size=(3, 6, 9))
        p1, p2 = tmp_path / "a.ppm", tmp_path / "b.ppm"
        write_ppm(p1, frame)
        write_ppm(p2, read_ppm(p1))
        assert p1.read_bytes() == p2.read_bytes()

    def test_every_byte_value_survives(self, tmp_path):
        # one frame containing all 256 values in each channel
        values = np.arange(256, dtype=np.float64) / 255.0
        frame = np.tile(values.reshape(1, 16, 16), (3, 1, 1))
        p = tmp_path / "all.ppm"
        write_ppm(p, frame)
        back = read_ppm(p)
        np.testing.assert_array_equal(back, frame)

    def test_byte_255_maps_to_one(self, tmp_path):
        p = tmp_path / "w.ppm"
        write_ppm(p, np.ones((3, 2, 2)))
        assert np.all(read_ppm(p) == 1.0)

    def test_black_frame(self, tmp_path):
        p = tmp_path / "b.ppm"
        write_ppm(p, np.zeros((3, 4, 4)))
        frame = read_ppm(p)
        assert frame.shape == (3, 4, 4)
        assert np.all(frame == 0.0)

    def test_header_comments_allowed(self, tmp_path):
        p = tmp_path / "c.ppm"
        p.write_bytes(b"P6\n# a comment\n2 1\n# more\n255\n" + bytes(6))
        assert read_ppm(p).shape == (3, 1, 2)

    def test_bad_magic(self, tmp_path):
        p = tmp_path / "bad.ppm"
        p.write_bytes(b"P5\n2 2\n255\n" + bytes(12))
        with pytest.raises(PpmFormatError, match="magic"):
            read_ppm(p)

    def test_truncated_payload(self, tmp_path):
        p = tmp_path / "short.ppm"
        p.write_bytes(b"P6\n4 4\n255\n" + bytes(10))
        with pytest.raises(PpmFormatError, match="pixel bytes"):
            read_ppm(p)

    def test_wrong_maxval(self, tmp_path):
        p = tmp_path / "m.ppm"
        p.write_bytes(b"P6\n1 1\n65535\n" + bytes(6))
        with pytest.raises(PpmFormatError, match="maxval"):
            read_ppm(p)


class TestManifest:
    def test_roundtrip(self, tmp_path):
        m = VideoManifest(width=128, height=64, frames=8)
        path = tmp_path / "video.txt"
        save_manifest(path, m)
        assert load_manifest(path) == m

    def test_missing_key(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("width = 4\nheight = 4\n")
        with pytest.raises(ValueError, match="missing key"):
            load_manifest(p)

    def test_malformed_line(self, tmp_path):
        p = tmp_path / "m.txt"
        p.write_text("width 4\n")
        with pytest.raises(ValueError, match="malformed"):
            load_manifest(p)


class TestVideoIo:
    def test_write_then_load(self, tmp_path, rng):
        frames = [rng.uniform(0, 1, size=(3, 8, 12)) for _ in range(3)]
        manifest_path = tmp_path / "clip" / "video.txt"
        write_video(manifest_path, frames)
        loaded = load_video(manifest_path)
        assert len(loaded) == 3
        for orig, back in zip(frames, loaded):
            # quantized to 8 bits on disk
            assert np.max(np.abs(orig - back)) <= 0.5 / 255 + 1e-12

    def test_two_black_frames(self, tmp_path):
        manifest_path = tmp_path / "video.txt"
        write_video(manifest_path, [np.zeros((3, 4, 4))] * 2)
        frames = load_video(manifest_path)
        assert len(frames) == 2
        for f in frames:
            assert f.shape == (3, 4, 4)
            assert np.all(f == 0.0)

    def test_roundtrip_files_byte_identical(self, tmp_path, rng):
        frames = [rng.uniform(0, 1, size=(3, 6, 6)) for _ in range(2)]
        m1 = tmp_path / "v1" / "video.txt"
        write_video(m1, frames)
        m2 = tmp_path / "v2" / "video.txt"
        write_video(m2, load_video(m1))
        for i in range(2):
            a = (m1.parent / ("frame_%04d.ppm" % i)).read_bytes()
            b = (m2.parent / ("frame_%04d.ppm" % i)).read_bytes()
            assert a == b

    def test_missing_frame_file(self, tmp_path):
        manifest_path = tmp_path / "video.txt"
        write_video(manifest_path, [np.zeros((3, 4, 4))] * 2)
        (tmp_path / "frame_0001.ppm").unlink()
        with pytest.raises(FileNotFoundError, match="missing frame"):
            load_video(manifest_path)

    def test_dimension_mismatch(self, tmp_path):
        manifest_path = tmp_path / "video.txt"
        write_video(manifest_path, [np.zeros((3, 4, 4))])
        write_ppm(tmp_path / "frame_0000.ppm", np.zeros((3, 5, 4)))
        with pytest.raises(ValueError, match="declares"):
            load_video(manifest_path)


class TestSyntheticVideo:
    def test_shape_count_and_range(self):
        frames = synthetic_video(8, 64, 128)
        assert len(frames) == 8
        for f in frames:
            assert f.shape == (3, 64, 128)
            assert f.min() >= 0.02 - 1e-12 and f.max() <= 0.98 + 1e-12

    def test_deterministic(self):
        a = synthetic_video(4, 16, 32)
        b = synthetic_video(4, 16, 32)
        for fa, fb in zip(a, b):
            np.testing.assert_array_equal(fa, fb)

    def test_frames_actually_move(self):
        frames = synthetic_video(8, 64, 128)
        diffs = [np.mean(np.abs(a - b)) for a, b in zip(frames, frames[1:])]
        assert min(diffs) > 1e-3
