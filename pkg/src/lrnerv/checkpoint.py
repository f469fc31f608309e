"""The LRNV binary checkpoint container.

Layout (all multi-byte integers little-endian):

    magic   4 bytes  b"LRNV"
    version u32      currently 1
    cfg_len u32      followed by cfg_len bytes of UTF-8 config text
    count   u32      number of tensors, then per tensor:
        name_len u16, name bytes (UTF-8, unique)
        dtype    u8   0 = F32, 1 = I8 (followed by one f64 scale)
        rank     u8, dims rank x u32
        payload  prod(dims) x (4-byte f32 | 1-byte i8)

Float tensors are stored as f32; model parameters live on the f32 grid, so
save -> load -> save is byte-identical and load(save(m)) reproduces every
tensor bitwise. INT8 tensors carry exactly one scale each.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .config import config_text, parse_config
from .model import DecoderConfig, NervModel, build_model
from .quantize import QuantizedCheckpoint, QuantizedTensor, dequantize_tensor

MAGIC = b"LRNV"
FORMAT_VERSION = 1
_DTYPE_F32 = 0
_DTYPE_I8 = 1

Array = np.ndarray


class CheckpointFormatError(ValueError):
    pass


@dataclass
class LoadedCheckpoint:
    """Raw decoded container: config plus name -> tensor payloads."""

    config: DecoderConfig
    tensors: dict[str, Array | QuantizedTensor]

    @property
    def kind(self) -> str:
        return "int8" if any(isinstance(t, QuantizedTensor) for t in self.tensors.values()) else "float"

    def to_model(self) -> NervModel:
        """Rebuild the model, dequantizing any INT8 payloads."""
        model = build_model(self.config, seed=0)
        names = [name for name, _ in model.parameters()]
        if set(names) != set(self.tensors):
            diff = sorted(set(names) ^ set(self.tensors))
            raise CheckpointFormatError(f"tensor table does not cover the model exactly: {diff}")
        for name, t in model.parameters():
            stored = self.tensors[name]
            data = dequantize_tensor(stored) if isinstance(stored, QuantizedTensor) else stored
            if data.shape != t.shape:
                raise CheckpointFormatError(
                    f"tensor {name}: stored shape {data.shape} != model shape {t.shape}")
            t.data = np.asarray(data, dtype=np.float64)
        return model

    def to_quantized(self) -> QuantizedCheckpoint:
        bad = [n for n, t in self.tensors.items() if not isinstance(t, QuantizedTensor)]
        if bad:
            raise CheckpointFormatError(f"not an INT8 checkpoint; float tensors: {sorted(bad)}")
        return QuantizedCheckpoint(config=self.config, bits=8, tensors=dict(self.tensors))


def save_checkpoint(obj: NervModel | QuantizedCheckpoint, path: str | Path) -> None:
    """Serialize a float model (F32 payloads) or an INT8 checkpoint."""
    if isinstance(obj, NervModel):
        config = obj.config
        entries = [(name, t.data) for name, t in obj.parameters()]
    elif isinstance(obj, QuantizedCheckpoint):
        if obj.bits != 8:
            raise CheckpointFormatError(
                f"the container only stores 8-bit integer payloads, got bits={obj.bits}")
        config = obj.config
        entries = list(obj.tensors.items())
    else:
        raise TypeError(f"cannot checkpoint {type(obj).__name__}")

    cfg_bytes = config_text(config).encode("utf-8")
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", FORMAT_VERSION)
    out += struct.pack("<I", len(cfg_bytes)) + cfg_bytes
    out += struct.pack("<I", len(entries))
    for name, tensor in entries:
        name_b = name.encode("utf-8")
        out += struct.pack("<H", len(name_b)) + name_b
        if isinstance(tensor, QuantizedTensor):
            out += struct.pack("<B", _DTYPE_I8)
            out += struct.pack("<d", tensor.scale)
            shape = tensor.shape
            payload = np.ascontiguousarray(tensor.values.reshape(shape)).tobytes()
        else:
            out += struct.pack("<B", _DTYPE_F32)
            shape = tensor.shape
            payload = np.asarray(tensor, dtype="<f4").tobytes()
        out += struct.pack("<B", len(shape))
        out += struct.pack(f"<{len(shape)}I", *shape) if shape else b""
        out += payload
    Path(path).write_bytes(bytes(out))


class _Reader:
    def __init__(self, buf: bytes, source: str):
        self.buf = buf
        self.pos = 0
        self.source = source

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise CheckpointFormatError(f"{self.source}: truncated payload "
                                        f"(wanted {n} bytes at offset {self.pos})")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str):
        vals = struct.unpack(fmt, self.take(struct.calcsize(fmt)))
        return vals[0] if len(vals) == 1 else vals


def load_checkpoint(path: str | Path) -> LoadedCheckpoint:
    path = Path(path)
    r = _Reader(path.read_bytes(), str(path))
    if r.take(4) != MAGIC:
        raise CheckpointFormatError(f"{path}: bad magic (not an LRNV checkpoint)")
    version = r.unpack("<I")
    if version != FORMAT_VERSION:
        raise CheckpointFormatError(
            f"{path}: format version {version} not supported (expected {FORMAT_VERSION})")
    cfg_len = r.unpack("<I")
    config = parse_config(r.take(cfg_len).decode("utf-8"), source=f"{path}[config]")
    count = r.unpack("<I")
    tensors: dict[str, Array | QuantizedTensor] = {}
    for _ in range(count):
        name_len = r.unpack("<H")
        name = r.take(name_len).decode("utf-8")
        if name in tensors:
            raise CheckpointFormatError(f"{path}: duplicate tensor name {name!r}")
        dtype = r.unpack("<B")
        scale = r.unpack("<d") if dtype == _DTYPE_I8 else None
        rank = r.unpack("<B")
        dims = struct.unpack(f"<{rank}I", r.take(4 * rank))
        shape = tuple(int(d) for d in dims)
        n = int(np.prod(shape)) if shape else 1
        if dtype == _DTYPE_F32:
            data = np.frombuffer(r.take(4 * n), dtype="<f4").astype(np.float64).reshape(shape)
            tensors[name] = data
        elif dtype == _DTYPE_I8:
            values = np.frombuffer(r.take(n), dtype=np.int8).reshape(shape)
            tensors[name] = QuantizedTensor(values=values.copy(), scale=scale, shape=shape)
        else:
            raise CheckpointFormatError(f"{path}: unknown dtype tag {dtype} for tensor {name!r}")
    if r.pos != len(r.buf):
        raise CheckpointFormatError(f"{path}: {len(r.buf) - r.pos} trailing bytes")
    return LoadedCheckpoint(config=config, tensors=tensors)
