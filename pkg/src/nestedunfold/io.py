"""Image, raw-tensor and manifest I/O.

PNG files are 8-bit; values map linearly between [0, 1] and [0, 255].
Raw tensors use a small self-describing format: a 16-byte header (ASCII
magic ``NUNR`` then little-endian u32 height, width, channels) followed by
row-major little-endian float32 data.
"""

from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image

PathLike = Union[str, Path]

RAW_MAGIC = b"NUNR"
_RAW_HEADER = struct.Struct("<4sIII")
MANIFEST_COLUMNS = ("id", "image", "mask", "clean")


def to_uint8(a: np.ndarray) -> np.ndarray:
    return np.round(np.clip(a, 0.0, 1.0) * 255.0).astype(np.uint8)


def read_image(path: PathLike) -> np.ndarray:
    """(H, W, 3) float64 in [0, 1]; grayscale files are kept single-channel."""
    with Image.open(path) as im:
        if im.mode in ("L", "I;16", "I", "F", "1"):
            arr = np.asarray(im.convert("L"), dtype=np.float64)[:, :, None]
        else:
            arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def read_mask(path: PathLike) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def write_image(path: PathLike, x: np.ndarray) -> None:
    x = np.asarray(x)
    if x.ndim == 3 and x.shape[2] == 1:
        x = x[:, :, 0]
    mode = "L" if x.ndim == 2 else "RGB"
    # explicit compression level so the bytes do not depend on Pillow defaults
    Image.fromarray(to_uint8(x), mode=mode).save(path, format="PNG", compress_level=6)


def write_mask(path: PathLike, m: np.ndarray) -> None:
    write_image(path, np.asarray(m))


def write_raw(path: PathLike, a: np.ndarray) -> None:
    a = np.asarray(a)
    if a.ndim == 2:
        a = a[:, :, None]
    if a.ndim != 3:
        raise ValueError(f"raw tensors must be 2-D or 3-D, got shape {a.shape}")
    h, w, c = a.shape
    with open(path, "wb") as fh:
        fh.write(_RAW_HEADER.pack(RAW_MAGIC, h, w, c))
        fh.write(np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_raw(path: PathLike) -> np.ndarray:
    data = Path(path).read_bytes()
    if len(data) < _RAW_HEADER.size:
        raise ValueError(f"{path}: truncated raw header")
    magic, h, w, c = _RAW_HEADER.unpack_from(data)
    if magic != RAW_MAGIC:
        raise ValueError(f"{path}: bad magic {magic!r}")
    body = data[_RAW_HEADER.size:]
    if len(body) != 4 * h * w * c:
        raise ValueError(f"{path}: expected {4 * h * w * c} payload bytes, found {len(body)}")
    return np.frombuffer(body, dtype="<f4").reshape(h, w, c).astype(np.float64)


@dataclass
class ManifestEntry:
    id: str
    image: Path
    mask: Optional[Path] = None
    clean: Optional[Path] = None


@dataclass
class DatasetManifest:
    entries: list[ManifestEntry]
    root: Path
    split: str = ""
    problems: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.entries)


def read_manifest(path: PathLike, split: str = "", check: bool = True) -> DatasetManifest:
    """Load a CSV manifest with columns ``id,image[,mask][,clean]``.

    Relative paths resolve against the manifest's directory.  With ``check``
    every referenced file must exist and masks must match their image's size.
    """
    path = Path(path)
    root = path.parent
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "image" not in reader.fieldnames:
            raise ValueError(f"{path}: manifest needs an 'image' column")
        unknown = set(reader.fieldnames) - set(MANIFEST_COLUMNS)
        if unknown:
            raise ValueError(f"{path}: unknown manifest column(s) {sorted(unknown)}")
        for i, row in enumerate(reader):
            image = root / row["image"]
            ident = (row.get("id") or "").strip() or image.stem
            mask = root / row["mask"] if row.get("mask") else None
            clean = root / row["clean"] if row.get("clean") else None
            entries.append(ManifestEntry(ident, image, mask, clean))
    ids = [e.id for e in entries]
    if len(set(ids)) != len(ids):
        raise ValueError(f"{path}: duplicate ids in manifest")
    manifest = DatasetManifest(entries, root, split)
    if check:
        validate_manifest(manifest)
    return manifest


def validate_manifest(manifest: DatasetManifest) -> None:
    for e in manifest.entries:
        for p in (e.image, e.mask, e.clean):
            if p is not None and not p.is_file():
                raise FileNotFoundError(f"manifest entry {e.id!r}: missing file {p}")
        if e.mask is not None:
            with Image.open(e.image) as a, Image.open(e.mask) as b:
                if a.size != b.size:
                    raise ValueError(f"manifest entry {e.id!r}: image {a.size} and mask {b.size} differ")


def write_manifest(path: PathLike, entries: list[ManifestEntry]) -> None:
    path = Path(path)
    root = path.parent
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(MANIFEST_COLUMNS)
        for e in entries:
            writer.writerow([e.id] + [_rel(p, root) for p in (e.image, e.mask, e.clean)])


def _rel(p: Optional[Path], root: Path) -> str:
    if p is None:
        return ""
    try:
        return Path(p).resolve().relative_to(root.resolve()).as_posix()
    except ValueError:
        return Path(p).resolve().as_posix()


def write_csv(path: PathLike, header: list[str], rows: list[list]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(v) for v in row])


def format_value(v) -> str:
    if isinstance(v, float):
        return repr(v) if np.isfinite(v) else str(v)
    return str(v)
