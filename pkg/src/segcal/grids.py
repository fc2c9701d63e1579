"""Array/file plumbing: NPY grids, JSON manifests, and PPM heatmaps.

File formats
------------
Arrays are stored as a strict NPY v1.0 subset: magic ``\\x93NUMPY``, version
(1, 0), a header dict with ``descr``/``fortran_order``/``shape``, C order,
little endian, and a small closed set of dtypes. Files written here load with
``numpy.load`` and vice versa, but reading is strict: anything outside the
subset raises :class:`FormatError` rather than being coerced.

Heatmaps are binary PPM (P6, maxval 255). ``sequential`` maps [min, max] to a
gray ramp; ``diverging`` maps negative values to red, positive to blue, with
white at zero.
"""

from __future__ import annotations

import ast
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import FormatError, ValidationError

_MAGIC = b"\x93NUMPY"

# descr -> dtype for the accepted subset. '|u1' is how numpy spells uint8.
_DESCRS = {
    "<f4": np.dtype("<f4"),
    "<f8": np.dtype("<f8"),
    "|u1": np.dtype("u1"),
    "<u2": np.dtype("<u2"),
    "<i8": np.dtype("<i8"),
}
_DTYPE_TO_DESCR = {v: k for k, v in _DESCRS.items()}


# ---------------------------------------------------------------------------
# NPY subset
# ---------------------------------------------------------------------------

def write_array(arr: np.ndarray, path) -> None:
    """Write ``arr`` as NPY v1.0. Dtype must be in the accepted subset."""
    arr = np.ascontiguousarray(arr)
    descr = _DTYPE_TO_DESCR.get(arr.dtype.newbyteorder("<") if arr.dtype.byteorder == ">" else arr.dtype)
    if descr is None:
        raise ValidationError(f"dtype {arr.dtype} is outside the accepted subset")
    arr = arr.astype(_DESCRS[descr], copy=False)
    header = "{'descr': %r, 'fortran_order': False, 'shape': %r, }" % (
        descr, tuple(int(s) for s in arr.shape))
    # pad with spaces so that magic+version+len+header is a multiple of 64
    unpadded = len(_MAGIC) + 2 + 2 + len(header) + 1
    header = header + " " * (-unpadded % 64) + "\n"
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(bytes([1, 0]))
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("latin1"))
        fh.write(arr.tobytes(order="C"))


def read_array(path) -> np.ndarray:
    """Read an NPY v1.0 file of the accepted subset.

    Raises FormatError for anything that is not a well-formed subset file.
    """
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) == 0:
        raise FormatError(f"{path}: empty file")
    if len(raw) < 10 or raw[:6] != _MAGIC:
        raise FormatError(f"{path}: not an NPY file (bad magic)")
    major, minor = raw[6], raw[7]
    if (major, minor) != (1, 0):
        raise FormatError(f"{path}: unsupported NPY version {major}.{minor}")
    (hlen,) = struct.unpack("<H", raw[8:10])
    if len(raw) < 10 + hlen:
        raise FormatError(f"{path}: truncated header")
    try:
        header = ast.literal_eval(raw[10:10 + hlen].decode("latin1"))
    except (ValueError, SyntaxError) as exc:
        raise FormatError(f"{path}: malformed header ({exc})") from None
    if not isinstance(header, dict) or set(header) != {"descr", "fortran_order", "shape"}:
        raise FormatError(f"{path}: header must have exactly descr/fortran_order/shape")
    descr = header["descr"]
    if descr not in _DESCRS:
        raise FormatError(f"{path}: dtype {descr!r} is outside the accepted subset")
    if header["fortran_order"] is not False:
        raise FormatError(f"{path}: fortran_order must be False")
    shape = header["shape"]
    if (not isinstance(shape, tuple)
            or not all(isinstance(s, int) and s >= 0 for s in shape)):
        raise FormatError(f"{path}: bad shape {shape!r}")
    dtype = _DESCRS[descr]
    count = int(np.prod(shape, dtype=np.int64)) if shape else 1
    data = raw[10 + hlen:]
    if len(data) != count * dtype.itemsize:
        raise FormatError(f"{path}: payload is {len(data)} bytes, "
                          f"expected {count * dtype.itemsize}")
    return np.frombuffer(data, dtype=dtype).reshape(shape).copy()


# ---------------------------------------------------------------------------
# Score / label grids
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScoreGrid:
    """Per-pixel foreground probabilities for a stack of images, shape (N, H, W)."""

    data: np.ndarray

    def __post_init__(self):
        _check_grid_shape(self.data)
        if self.data.dtype != np.float32:
            raise ValidationError(f"score grid must be float32, got {self.data.dtype}")
        bad = _first_out_of_range(self.data, 0.0, 1.0)
        if bad is not None:
            raise ValidationError(
                f"score {self.data.reshape(-1)[bad]!r} out of [0, 1] at flat index {bad}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


@dataclass(frozen=True)
class LabelGrid:
    """Per-pixel binary ground-truth labels, shape (N, H, W), values {0, 1}."""

    data: np.ndarray

    def __post_init__(self):
        _check_grid_shape(self.data)
        if self.data.dtype != np.uint8:
            raise ValidationError(f"label grid must be uint8, got {self.data.dtype}")
        bad = np.flatnonzero(self.data.reshape(-1) > 1)
        if bad.size:
            raise ValidationError(
                f"label {self.data.reshape(-1)[bad[0]]} not in {{0, 1}} "
                f"at flat index {int(bad[0])}")

    @property
    def shape(self) -> tuple[int, int, int]:
        return self.data.shape


def _check_grid_shape(data: np.ndarray) -> None:
    if data.ndim != 3:
        raise ValidationError(f"grid must be 3-D (N, H, W), got shape {data.shape}")
    if data.shape[0] < 1:
        raise ValidationError("grid must contain at least one image (N >= 1)")
    if data.shape[1] < 1 or data.shape[2] < 1:
        raise ValidationError(f"degenerate image shape {data.shape[1:]}")


def _first_out_of_range(data: np.ndarray, lo: float, hi: float):
    flat = data.reshape(-1)
    bad = np.flatnonzero(~((flat >= lo) & (flat <= hi)))
    return int(bad[0]) if bad.size else None


def read_grid(path) -> ScoreGrid | LabelGrid:
    """Read a score or label grid, dispatching on the stored dtype."""
    arr = read_array(path)
    if arr.dtype == np.float32:
        return ScoreGrid(arr)
    if arr.dtype == np.uint8:
        return LabelGrid(arr)
    raise ValidationError(
        f"{path}: dtype {arr.dtype} is neither a score (float32) nor a label (uint8) grid")


def write_grid(grid: ScoreGrid | LabelGrid, path) -> None:
    if not isinstance(grid, (ScoreGrid, LabelGrid)):
        raise ValidationError(f"expected ScoreGrid or LabelGrid, got {type(grid).__name__}")
    write_array(grid.data, path)


def require_same_shape(scores: ScoreGrid, labels: LabelGrid) -> None:
    if scores.shape != labels.shape:
        raise ValidationError(
            f"score grid shape {scores.shape} != label grid shape {labels.shape}")


# ---------------------------------------------------------------------------
# Dataset manifests
# ---------------------------------------------------------------------------

_MANIFEST_KEYS = {"name", "score_path", "label_path", "split", "image_shape", "count"}
_SPLITS = ("calibration", "test")


@dataclass(frozen=True)
class DatasetManifest:
    name: str
    score_path: str
    label_path: str
    split: str
    image_shape: tuple[int, int]
    count: int

    def __post_init__(self):
        if self.split not in _SPLITS:
            raise ValidationError(f"split must be one of {_SPLITS}, got {self.split!r}")
        if len(self.image_shape) != 2:
            raise ValidationError(f"image_shape must be (H, W), got {self.image_shape!r}")
        if self.count < 1:
            raise ValidationError("count must be >= 1")


def save_manifest(manifest: DatasetManifest, path) -> None:
    doc = {
        "name": manifest.name,
        "score_path": manifest.score_path,
        "label_path": manifest.label_path,
        "split": manifest.split,
        "image_shape": list(manifest.image_shape),
        "count": manifest.count,
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")


def load_manifest(path, check_files: bool = True) -> DatasetManifest:
    """Load a manifest; with ``check_files`` verify the grids decode to the
    declared shapes. Paths are resolved relative to the manifest's directory.
    """
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise FormatError(f"{path}: not valid JSON ({exc})") from None
    if not isinstance(doc, dict) or set(doc) != _MANIFEST_KEYS:
        raise ValidationError(
            f"{path}: manifest must have exactly the keys {sorted(_MANIFEST_KEYS)}")
    manifest = DatasetManifest(
        name=doc["name"],
        score_path=doc["score_path"],
        label_path=doc["label_path"],
        split=doc["split"],
        image_shape=tuple(doc["image_shape"]),
        count=int(doc["count"]),
    )
    if check_files:
        base = Path(path).parent
        declared = (manifest.count, *manifest.image_shape)
        for rel, want in ((manifest.score_path, ScoreGrid),
                          (manifest.label_path, LabelGrid)):
            full = base / rel
            if not full.exists():
                raise ValidationError(f"{path}: referenced file {full} does not exist")
            grid = read_grid(full)
            if not isinstance(grid, want):
                raise ValidationError(f"{full}: expected a {want.__name__}")
            if grid.shape != declared:
                raise ValidationError(
                    f"{full}: shape {grid.shape} != declared {declared}")
    return manifest


def load_dataset(manifest_path) -> tuple[ScoreGrid, LabelGrid]:
    manifest = load_manifest(manifest_path, check_files=False)
    base = Path(manifest_path).parent
    scores = read_grid(base / manifest.score_path)
    labels = read_grid(base / manifest.label_path)
    if not isinstance(scores, ScoreGrid) or not isinstance(labels, LabelGrid):
        raise ValidationError(f"{manifest_path}: score/label paths are swapped or mistyped")
    require_same_shape(scores, labels)
    return scores, labels


# ---------------------------------------------------------------------------
# PPM heatmaps
# ---------------------------------------------------------------------------

def write_heatmap(grid2d: np.ndarray, path, mode: str = "sequential") -> None:
    """Render a 2-D real grid to a binary PPM (P6) image.

    sequential: [min, max] -> black..white gray ramp (constant grids -> black).
    diverging: symmetric around 0; negative -> red, positive -> blue, 0 -> white.
    """
    grid2d = np.asarray(grid2d, dtype=np.float64)
    if grid2d.ndim != 2:
        raise ValidationError(f"heatmap input must be 2-D, got shape {grid2d.shape}")
    if not np.isfinite(grid2d).all():
        raise ValidationError("heatmap input contains NaN or Inf")
    h, w = grid2d.shape
    if mode == "sequential":
        lo, hi = float(grid2d.min()), float(grid2d.max())
        scale = (grid2d - lo) / (hi - lo) if hi > lo else np.zeros_like(grid2d)
        gray = np.rint(scale * 255).astype(np.uint8)
        rgb = np.repeat(gray[:, :, None], 3, axis=2)
    elif mode == "diverging":
        amax = float(np.abs(grid2d).max())
        scale = grid2d / amax if amax > 0 else np.zeros_like(grid2d)
        fade = np.rint(255 * (1.0 - np.abs(scale))).astype(np.uint8)
        rgb = np.empty((h, w, 3), dtype=np.uint8)
        neg = scale < 0
        rgb[:, :, 0] = np.where(neg, 255, fade)   # red channel saturates for negatives
        rgb[:, :, 1] = fade
        rgb[:, :, 2] = np.where(neg, fade, 255)   # blue channel saturates for positives
    else:
        raise ValidationError(f"unknown heatmap mode {mode!r}")
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(rgb.tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM back into a (H, W, 3) uint8 array."""
    with open(path, "rb") as fh:
        raw = fh.read()
    parts = raw.split(b"\n", 3)
    if len(parts) != 4 or parts[0] != b"P6":
        raise FormatError(f"{path}: not a binary PPM")
    w, h = (int(tok) for tok in parts[1].split())
    if parts[2] != b"255":
        raise FormatError(f"{path}: unsupported maxval {parts[2]!r}")
    data = parts[3]
    if len(data) != w * h * 3:
        raise FormatError(f"{path}: truncated pixel data")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w, 3).copy()
