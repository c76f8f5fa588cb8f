"""File formats: images, skeleton documents, parameter documents, tables.

Images: binary and ASCII PGM (P5/P2, 8- or 16-bit big-endian) are parsed
here; grayscale PNG goes through Pillow.  Intensities are divided by the
format maximum so grids always live in [0, 1].

Skeleton documents are a small line-oriented text format::

    # skelfit colony
    format 1
    cells 2
    cell 4 my-label
    12.5 30.25 3.5
    ...

Coordinates are written with full float precision, so documents round-trip
exactly.  Parameter documents are flat JSON objects; unknown keys are
rejected.
"""

from __future__ import annotations

import dataclasses
import json
import math
from pathlib import Path
from typing import Optional, Sequence, TextIO, Union

import numpy as np
from PIL import Image

from .energy import Colony, EnergyParams, ImageGrid
from .geometry import DistanceModel, InvalidSkeletonError, Skeleton
from .optimizer import OptimizeOptions

__all__ = [
    "FormatError",
    "load_image",
    "load_params",
    "load_points",
    "load_skeletons",
    "save_image",
    "save_params",
    "save_skeletons",
]

PathLike = Union[str, Path]


class FormatError(ValueError):
    """A file does not conform to its expected format."""


# ---------------------------------------------------------------------------
# images


def _pgm_tokens(data: bytes, path: str):
    """Header tokenizer: whitespace-separated words, # comments to EOL."""
    i = 0
    n = len(data)
    while True:
        while i < n and data[i : i + 1].isspace():
            i += 1
        if i < n and data[i : i + 1] == b"#":
            while i < n and data[i : i + 1] != b"\n":
                i += 1
            continue
        if i >= n:
            raise FormatError(f"{path}: truncated header")
        j = i
        while j < n and not data[j : j + 1].isspace() and data[j : j + 1] != b"#":
            j += 1
        yield data[i:j], j
        i = j


def _parse_pgm(data: bytes, path: str) -> ImageGrid:
    tokens = _pgm_tokens(data, path)
    magic, _ = next(tokens)
    fields = []
    pos = 0
    for name in ("width", "height", "maxval"):
        tok, pos = next(tokens)
        try:
            value = int(tok)
        except ValueError:
            raise FormatError(f"{path}: bad {name} {tok!r}") from None
        if value <= 0:
            raise FormatError(f"{path}: {name} must be positive, got {value}")
        fields.append(value)
    width, height, maxval = fields
    if maxval > 65535:
        raise FormatError(f"{path}: maxval {maxval} exceeds 65535")
    count = width * height
    if magic == b"P2":
        values = np.empty(count, dtype=np.int64)
        for k in range(count):
            try:
                tok, pos = next(tokens)
            except FormatError:
                raise FormatError(f"{path}: truncated pixel data") from None
            try:
                values[k] = int(tok)
            except ValueError:
                raise FormatError(f"{path}: bad pixel value {tok!r}") from None
    else:
        start = pos + 1  # single whitespace byte after maxval
        if maxval < 256:
            raw = data[start : start + count]
            if len(raw) < count:
                raise FormatError(f"{path}: truncated pixel data")
            values = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
        else:
            raw = data[start : start + 2 * count]
            if len(raw) < 2 * count:
                raise FormatError(f"{path}: truncated pixel data")
            values = np.frombuffer(raw, dtype=">u2").astype(np.int64)
    if values.max(initial=0) > maxval:
        raise FormatError(f"{path}: pixel value exceeds maxval {maxval}")
    grid = values.reshape(height, width) / float(maxval)
    return ImageGrid(grid)


def _parse_png(path: str) -> ImageGrid:
    with Image.open(path) as im:
        mode = im.mode
        if mode == "L":
            arr = np.asarray(im, dtype=np.float64) / 255.0
        elif mode in ("I;16", "I"):
            arr = np.asarray(im, dtype=np.float64) / 65535.0
        elif mode == "1":
            arr = np.asarray(im, dtype=np.float64)
        else:
            raise FormatError(f"{path}: PNG mode {mode!r} is not grayscale")
    return ImageGrid(arr)


def load_image(path: PathLike) -> ImageGrid:
    """Read a PGM (P2/P5) or grayscale PNG into a normalized grid."""
    path = str(path)
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:8] == b"\x89PNG\r\n\x1a\n":
        return _parse_png(path)
    if data[:2] in (b"P2", b"P5"):
        return _parse_pgm(data, path)
    raise FormatError(f"{path}: unknown image format (starts with {data[:2]!r})")


def save_image(path: PathLike, img: ImageGrid) -> None:
    """Write 16-bit binary PGM or 8-bit grayscale PNG by file extension."""
    path = Path(path)
    if path.suffix.lower() == ".png":
        arr = np.round(img.pixels * 255.0).astype(np.uint8)
        Image.fromarray(arr, mode="L").save(path)
        return
    arr = np.round(img.pixels * 65535.0).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.width} {img.height}\n65535\n".encode())
        fh.write(arr.tobytes())


# ---------------------------------------------------------------------------
# skeleton documents

_DOC_VERSION = 1


def _format_float(v: float) -> str:
    return repr(float(v))


def save_skeletons(path: PathLike, colony: Colony) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# skelfit colony\n")
        fh.write(f"format {_DOC_VERSION}\n")
        fh.write(f"cells {len(colony)}\n")
        for skel in colony:
            head = f"cell {skel.n}"
            if skel.label:
                head += f" {skel.label}"
            fh.write(head + "\n")
            for (x, y), r in zip(skel.points, skel.radii):
                fh.write(
                    f"{_format_float(x)} {_format_float(y)} {_format_float(r)}\n"
                )


class _LineReader:
    def __init__(self, text: str, path: str):
        self.lines = text.splitlines()
        self.path = path
        self.pos = 0

    def next_content(self) -> tuple[int, str]:
        while self.pos < len(self.lines):
            self.pos += 1
            line = self.lines[self.pos - 1].strip()
            if line and not line.startswith("#"):
                return self.pos, line
        raise FormatError(f"{self.path}:{len(self.lines)}: unexpected end of document")


def load_skeletons(path: PathLike) -> list[Skeleton]:
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        reader = _LineReader(fh.read(), path)

    def expect(keyword: str) -> list[str]:
        lineno, line = reader.next_content()
        parts = line.split()
        if parts[0] != keyword:
            raise FormatError(f"{path}:{lineno}: expected '{keyword}', got {parts[0]!r}")
        return parts

    parts = expect("format")
    if len(parts) != 2 or parts[1] != str(_DOC_VERSION):
        raise FormatError(f"{path}:{reader.pos}: unsupported format version")
    parts = expect("cells")
    try:
        n_cells = int(parts[1])
    except (IndexError, ValueError):
        raise FormatError(f"{path}:{reader.pos}: bad cell count") from None
    colony = []
    for _ in range(n_cells):
        parts = expect("cell")
        try:
            n_nodes = int(parts[1])
        except (IndexError, ValueError):
            raise FormatError(f"{path}:{reader.pos}: bad node count") from None
        label = " ".join(parts[2:])
        header_line = reader.pos
        rows = []
        for _ in range(n_nodes):
            lineno, line = reader.next_content()
            fields = line.split()
            if len(fields) != 3:
                raise FormatError(f"{path}:{lineno}: expected 'x y r', got {line!r}")
            try:
                rows.append(tuple(float(f) for f in fields))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad number in {line!r}") from None
        try:
            colony.append(Skeleton.from_xyr(rows, label))
        except InvalidSkeletonError as exc:
            raise FormatError(f"{path}:{header_line}: invalid cell: {exc}") from None
    return colony


# ---------------------------------------------------------------------------
# parameter documents

_PARAM_KEYS = {f.name for f in dataclasses.fields(EnergyParams)}
_OPT_KEYS = {f.name for f in dataclasses.fields(OptimizeOptions)}


def save_params(path: PathLike, params: EnergyParams, opts: OptimizeOptions) -> None:
    doc = dataclasses.asdict(params)
    doc["model"] = params.model.value
    doc.update(dataclasses.asdict(opts))
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_params(path: PathLike) -> tuple[EnergyParams, OptimizeOptions]:
    """Read a JSON parameter document; absent keys take the calibrated
    defaults, unknown keys are rejected."""
    path = str(path)
    with open(path, "r", encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{exc.lineno}: {exc.msg}") from None
    if not isinstance(doc, dict):
        raise FormatError(f"{path}: parameter document must be a JSON object")
    unknown = set(doc) - _PARAM_KEYS - _OPT_KEYS
    if unknown:
        raise FormatError(f"{path}: unknown keys: {', '.join(sorted(unknown))}")
    p_kwargs = {k: v for k, v in doc.items() if k in _PARAM_KEYS}
    if "model" in p_kwargs:
        try:
            p_kwargs["model"] = DistanceModel(p_kwargs["model"])
        except ValueError:
            raise FormatError(
                f"{path}: model must be 'simplified' or 'oriented'"
            ) from None
    o_kwargs = {k: v for k, v in doc.items() if k in _OPT_KEYS}
    try:
        return EnergyParams(**p_kwargs), OptimizeOptions(**o_kwargs)
    except (TypeError, ValueError) as exc:
        raise FormatError(f"{path}: {exc}") from None


# ---------------------------------------------------------------------------
# point lists


def load_points(path: PathLike) -> np.ndarray:
    """Read whitespace-separated 'x y' lines; # comments are skipped."""
    path = str(path)
    rows = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            fields = line.split()
            if len(fields) != 2:
                raise FormatError(f"{path}:{lineno}: expected 'x y', got {line!r}")
            try:
                rows.append((float(fields[0]), float(fields[1])))
            except ValueError:
                raise FormatError(f"{path}:{lineno}: bad number in {line!r}") from None
    if not rows:
        raise FormatError(f"{path}: no points found")
    return np.array(rows, dtype=float)
