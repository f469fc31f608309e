"""Frame ingestion: binary PPM (P6) files, flat-text manifests, and the
deterministic synthetic clip used by the desk-scale studies.

Frames are (3, H, W) float64 arrays in [0, 1]; byte value 255 maps to 1.0
exactly and writing reproduces read files byte-identically.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

Array = np.ndarray

_WHITESPACE = b" \t\r\n\v\f"


class PpmFormatError(ValueError):
    pass


def _next_token(buf: bytes, pos: int) -> tuple[bytes, int]:
    while pos < len(buf):
        c = buf[pos]
        if c in _WHITESPACE:
            pos += 1
        elif c == ord("#"):
            while pos < len(buf) and buf[pos] != ord("\n"):
                pos += 1
        else:
            break
    start = pos
    while pos < len(buf) and buf[pos] not in _WHITESPACE:
        pos += 1
    if start == pos:
        raise PpmFormatError("truncated PPM header")
    return buf[start:pos], pos


def read_ppm(path: str | Path) -> Array:
    """Read an 8-bit binary PPM into a (3, H, W) array scaled by 1/255."""
    buf = Path(path).read_bytes()
    magic, pos = _next_token(buf, 0)
    if magic != b"P6":
        raise PpmFormatError(f"{path}: not a binary PPM (magic {magic!r})")
    fields = []
    for _ in range(3):
        tok, pos = _next_token(buf, pos)
        if not tok.isdigit():
            raise PpmFormatError(f"{path}: malformed header field {tok!r}")
        fields.append(int(tok))
    width, height, maxval = fields
    if maxval != 255:
        raise PpmFormatError(f"{path}: only maxval 255 supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    expected = 3 * width * height
    payload = buf[pos:pos + expected]
    if len(payload) != expected:
        raise PpmFormatError(f"{path}: expected {expected} pixel bytes, got {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(height, width, 3)
    return pixels.transpose(2, 0, 1).astype(np.float64) / 255.0


def write_ppm(path: str | Path, frame: Array) -> None:
    frame = np.asarray(frame, dtype=np.float64)
    if frame.ndim != 3 or frame.shape[0] != 3:
        raise ValueError(f"expected (3, H, W) frame, got {frame.shape}")
    _, h, w = frame.shape
    bytes_hw3 = np.rint(np.clip(frame, 0.0, 1.0) * 255.0).astype(np.uint8).transpose(1, 2, 0)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(bytes_hw3.tobytes())


@dataclass(frozen=True)
class VideoManifest:
    width: int
    height: int
    frames: int
    pattern: str = "frame_%04d.ppm"
    format: str = "ppm8"

    def frame_path(self, directory: Path, index: int) -> Path:
        return directory / (self.pattern % index)


def load_manifest(path: str | Path) -> VideoManifest:
    fields: dict[str, str] = {}
    for raw in Path(path).read_text().splitlines():
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: malformed manifest line {raw!r}")
        key, value = (p.strip() for p in line.split("=", 1))
        fields[key] = value
    try:
        return VideoManifest(
            width=int(fields["width"]), height=int(fields["height"]),
            frames=int(fields["frames"]),
            pattern=fields.get("pattern", "frame_%04d.ppm"),
            format=fields.get("format", "ppm8"),
        )
    except KeyError as e:
        raise ValueError(f"{path}: manifest missing key {e.args[0]}") from None


def save_manifest(path: str | Path, manifest: VideoManifest) -> None:
    text = (f"width = {manifest.width}\nheight = {manifest.height}\n"
            f"frames = {manifest.frames}\npattern = {manifest.pattern}\n"
            f"format = {manifest.format}\n")
    Path(path).write_text(text)


def load_video(manifest_path: str | Path) -> list[Array]:
    """Frames in index order; missing files and size mismatches are errors."""
    manifest_path = Path(manifest_path)
    m = load_manifest(manifest_path)
    if m.format != "ppm8":
        raise ValueError(f"unsupported pixel format {m.format!r}")
    frames = []
    for i in range(m.frames):
        p = m.frame_path(manifest_path.parent, i)
        if not p.exists():
            raise FileNotFoundError(f"manifest references missing frame {p}")
        frame = read_ppm(p)
        if frame.shape != (3, m.height, m.width):
            raise ValueError(
                f"{p}: frame is {frame.shape[2]}x{frame.shape[1]}, "
                f"manifest declares {m.width}x{m.height}")
        frames.append(frame)
    return frames


def write_video(manifest_path: str | Path, frames: list[Array],
                pattern: str = "frame_%04d.ppm") -> VideoManifest:
    """Write frames as PPMs next to the manifest file."""
    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    if not frames:
        raise ValueError("no frames to write")
    _, h, w = frames[0].shape
    m = VideoManifest(width=w, height=h, frames=len(frames), pattern=pattern)
    for i, f in enumerate(frames):
        write_ppm(m.frame_path(manifest_path.parent, i), f)
    save_manifest(manifest_path, m)
    return m


def synthetic_video(n_frames: int = 8, height: int = 64, width: int = 128) -> list[Array]:
    """Deterministic toy clip: a rotating gradient, a bright moving box with
    soft edges, and a dark moving disc. Values stay in [0.02, 0.98] so the
    sigmoid output head can actually reach them."""
    ys, xs = np.meshgrid(np.linspace(0.0, 1.0, height), np.linspace(0.0, 1.0, width),
                         indexing="ij")
    frames = []
    for i in range(n_frames):
        t = i / max(n_frames - 1, 1)
        frame = np.empty((3, height, width))
        for c in range(3):
            theta = 2.0 * np.pi * (0.35 * t + c / 3.0)
            frame[c] = 0.5 + 0.22 * (xs * np.cos(theta) + ys * np.sin(theta))

        # soft-edged box sweeping down-right
        cx, cy = 0.2 + 0.6 * t, 0.3 + 0.4 * t
        edge = 1.5 / height
        bx = np.clip((0.12 - np.abs(xs - cx)) / edge, 0.0, 1.0)
        by = np.clip((0.18 - np.abs(ys - cy)) / edge, 0.0, 1.0)
        box = bx * by
        frame[0] += 0.35 * box
        frame[1] += 0.25 * box
        frame[2] -= 0.20 * box

        # soft-edged disc sweeping up-left
        dx, dy = 0.8 - 0.6 * t, 0.7 - 0.4 * t
        rad = np.sqrt((xs - dx) ** 2 + (ys - dy) ** 2)
        disc = np.clip((0.14 - rad) / edge, 0.0, 1.0)
        frame[0] -= 0.30 * disc
        frame[2] += 0.30 * disc

        frames.append(np.clip(frame, 0.02, 0.98))
    return frames
