"""Bit-exact interchange format for per-layer embedding matrices.

CTE1 layout, little-endian throughout:

    bytes 0-3   ASCII magic "CTE1"
    bytes 4-7   u32 layer count L (>= 1)
    per layer, in encoder depth order:
        u32 n_samples, u32 dim, then n_samples * dim float32 values,
        row-major (sample-major)

Values are IEEE-754 binary32; a set survives save -> load bit-exactly.
A single-layer CSV form (one sample per line, comma-separated decimal
floats, no header) exists for hand-written fixtures only.
"""

from __future__ import annotations

import io
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Sequence

import numpy as np

from .errors import FormatError, ValidationError

MAGIC = b"CTE1"
_U32 = struct.Struct("<I")


@dataclass(frozen=True, eq=False)
class EmbeddingSet:
    """Per-layer embedding matrices for one dataset (train, test, or generated).

    ``layers[i]`` is an (n_samples, dims[i]) float32 matrix; layer order is the
    encoder's depth order (index 0 = earliest). All layers share n_samples;
    widths may differ per layer. Every value must be finite.
    """

    label: str
    layers: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        coerced = []
        for i, mat in enumerate(self.layers):
            try:
                arr = np.array(mat, dtype=np.float32, order="C", copy=True)
            except (TypeError, ValueError) as exc:
                raise ValidationError(f"layer {i} is not a numeric matrix: {exc}") from exc
            arr.flags.writeable = False
            coerced.append(arr)
        object.__setattr__(self, "layers", tuple(coerced))
        self.validate()

    def validate(self) -> None:
        if len(self.layers) < 1:
            raise ValidationError("embedding set needs at least one layer")
        n = None
        for i, mat in enumerate(self.layers):
            if mat.ndim != 2 or mat.shape[0] < 1 or mat.shape[1] < 1:
                raise ValidationError(f"layer {i} is not a nonempty 2-D matrix")
            if n is None:
                n = mat.shape[0]
            elif mat.shape[0] != n:
                raise ValidationError(
                    f"inconsistent sample count: layer 0 has {n} samples, "
                    f"layer {i} has {mat.shape[0]}"
                )
            if not np.all(np.isfinite(mat)):
                raise ValidationError(f"layer {i} contains non-finite values")

    @property
    def layer_count(self) -> int:
        return len(self.layers)

    @property
    def n_samples(self) -> int:
        return int(self.layers[0].shape[0])

    @property
    def dims(self) -> tuple[int, ...]:
        return tuple(int(m.shape[1]) for m in self.layers)


def save_embedding_set(embedding_set: EmbeddingSet, destination) -> int:
    """Write ``embedding_set`` in CTE1 form; returns the byte count written.

    ``destination`` may be a path or a binary sink. Invariants are re-checked
    before any byte is written.
    """
    embedding_set.validate()
    buf = io.BytesIO()
    buf.write(MAGIC)
    buf.write(_U32.pack(embedding_set.layer_count))
    for mat in embedding_set.layers:
        buf.write(_U32.pack(mat.shape[0]))
        buf.write(_U32.pack(mat.shape[1]))
        buf.write(mat.astype("<f4", copy=False).tobytes(order="C"))
    payload = buf.getvalue()
    if isinstance(destination, (str, Path)):
        with open(destination, "wb") as sink:
            sink.write(payload)
    else:
        destination.write(payload)
    return len(payload)


def _read_u32(data: bytes, offset: int, what: str) -> tuple[int, int]:
    if offset + 4 > len(data):
        raise FormatError(f"truncated file: missing {what}")
    return _U32.unpack_from(data, offset)[0], offset + 4


def _parse_cte1(data: bytes, label: str) -> EmbeddingSet:
    if len(data) < 4 or data[:4] != MAGIC:
        raise FormatError("bad magic: expected 'CTE1'")
    layer_count, offset = _read_u32(data, 4, "layer count")
    if layer_count < 1:
        raise FormatError("layer count is zero")
    layers = []
    for i in range(layer_count):
        n, offset = _read_u32(data, offset, f"layer {i} sample count")
        dim, offset = _read_u32(data, offset, f"layer {i} dim")
        if n < 1:
            raise FormatError(f"layer {i} has zero samples")
        if dim < 1:
            raise FormatError(f"layer {i} has zero dim")
        nbytes = n * dim * 4
        if offset + nbytes > len(data):
            raise FormatError(f"truncated payload in layer {i}")
        mat = np.frombuffer(data, dtype="<f4", count=n * dim, offset=offset)
        layers.append(mat.reshape(n, dim).copy())
        offset += nbytes
    if offset != len(data):
        raise FormatError(f"{len(data) - offset} trailing bytes after last layer")
    try:
        return EmbeddingSet(label=label, layers=tuple(layers))
    except ValidationError as exc:
        # e.g. non-finite payload values; surface as a parse failure
        raise FormatError(str(exc)) from exc


def _parse_csv(text: str, label: str) -> EmbeddingSet:
    rows = []
    width = None
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        fields = line.split(",")
        if width is None:
            width = len(fields)
        elif len(fields) != width:
            raise FormatError(f"ragged row at line {lineno}: {len(fields)} fields, expected {width}")
        try:
            rows.append([float(f) for f in fields])
        except ValueError as exc:
            raise FormatError(f"non-numeric value at line {lineno}") from exc
    if not rows:
        raise FormatError("CSV holds no samples")
    mat = np.asarray(rows, dtype=np.float32)
    if not np.all(np.isfinite(mat)):
        raise FormatError("CSV contains non-finite values")
    return EmbeddingSet(label=label, layers=(mat,))


def load_embedding_set(source, fmt: str = "cte1", label: str = "") -> EmbeddingSet:
    """Parse ``source`` (path or readable) as CTE1 or single-layer CSV.

    The format is selected by the caller-supplied ``fmt`` tag; all invariants
    are checked before the set is returned, so a malformed stream yields a
    typed error and never a partially built set.
    """
    if fmt not in ("cte1", "csv"):
        raise ValidationError(f"unknown format tag {fmt!r}: expected 'cte1' or 'csv'")
    if isinstance(source, (str, Path)):
        data = Path(source).read_bytes()
    else:
        data = source.read()
        if isinstance(data, str):
            data = data.encode("utf-8")
    if fmt == "cte1":
        return _parse_cte1(data, label)
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError("CSV is not valid UTF-8") from exc
    return _parse_csv(text, label)


@dataclass(frozen=True)
class ValidatedTriple:
    """A (train, test, generated) triple with matching layer geometry."""

    train: EmbeddingSet
    test: EmbeddingSet
    gen: EmbeddingSet
    layer_count: int
    dims: tuple[int, ...]
    n_train: int
    n_test: int
    n_gen: int


def validate_triple(train: EmbeddingSet, test: EmbeddingSet, gen: EmbeddingSet) -> ValidatedTriple:
    """Check that the three sets agree on layer count and per-layer dims."""
    sets: Sequence[tuple[str, EmbeddingSet]] = (("train", train), ("test", test), ("gen", gen))
    layer_count = train.layer_count
    for name, es in sets[1:]:
        if es.layer_count != layer_count:
            raise ValidationError(
                f"layer count mismatch: train has {layer_count}, {name} has {es.layer_count}"
            )
    for i in range(layer_count):
        dims = {name: es.dims[i] for name, es in sets}
        if len(set(dims.values())) != 1:
            detail = ", ".join(f"{name}={d}" for name, d in dims.items())
            raise ValidationError(f"dim mismatch at layer {i}: {detail}")
    return ValidatedTriple(
        train=train,
        test=test,
        gen=gen,
        layer_count=layer_count,
        dims=train.dims,
        n_train=train.n_samples,
        n_test=test.n_samples,
        n_gen=gen.n_samples,
    )
