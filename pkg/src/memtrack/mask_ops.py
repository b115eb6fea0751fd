"""Run-length-encoded binary masks.

Masks are flattened in column-major (Fortran) order, the COCO convention, and
encoded as alternating zero-runs and one-runs, always starting with a
zero-run (possibly of length zero).  Only the uncompressed integer-list form
is supported.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import CorruptMaskError, DimensionError

MAX_PIXELS = 2**32


def _canonical_counts(counts) -> tuple[int, ...]:
    # drop zero-length runs and merge the same-valued neighbours they separated
    runs: list[list[int]] = []
    for i, c in enumerate(counts):
        c = int(c)
        if c < 0:
            raise CorruptMaskError(f"negative run length {c} at position {i}")
        if c == 0:
            continue
        value = i % 2
        if runs and runs[-1][0] == value:
            runs[-1][1] += c
        else:
            runs.append([value, c])
    out = [0] if not runs or runs[0][0] == 1 else []
    out.extend(length for _, length in runs)
    return tuple(out)


@dataclass(frozen=True)
class RleMask:
    height: int
    width: int
    counts: tuple[int, ...]

    def __post_init__(self):
        h, w = int(self.height), int(self.width)
        if h <= 0 or w <= 0:
            raise DimensionError(f"mask dimensions must be positive, got {h}x{w}")
        if h * w > MAX_PIXELS:
            raise DimensionError(f"mask of {h}x{w} pixels exceeds 2^32")
        counts = _canonical_counts(self.counts)
        if sum(counts) != h * w:
            raise CorruptMaskError(
                f"run lengths sum to {sum(counts)}, expected {h * w} for {h}x{w}"
            )
        object.__setattr__(self, "height", h)
        object.__setattr__(self, "width", w)
        object.__setattr__(self, "counts", counts)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.height, self.width)

    @property
    def area(self) -> int:
        return mask_area(self)

    def to_json(self) -> dict:
        return {"size": [self.height, self.width], "counts": list(self.counts)}

    @classmethod
    def from_json(cls, obj) -> "RleMask":
        try:
            h, w = obj["size"]
            counts = obj["counts"]
        except (KeyError, TypeError, ValueError) as exc:
            raise CorruptMaskError(f"malformed RLE object: {exc!r}") from None
        if isinstance(counts, str):
            raise CorruptMaskError("compressed string RLE is not supported")
        return cls(h, w, tuple(counts))

    @classmethod
    def empty(cls, height: int, width: int) -> "RleMask":
        return cls(height, width, (height * width,))


def rle_encode(bitmap) -> RleMask:
    """Encode an H x W binary grid (anything truthy counts as set)."""
    arr = np.asarray(bitmap)
    if arr.ndim != 2:
        raise DimensionError(f"bitmap must be 2-D, got shape {arr.shape}")
    h, w = arr.shape
    if h == 0 or w == 0:
        raise DimensionError(f"bitmap dimensions must be positive, got {h}x{w}")
    flat = arr.astype(bool).ravel(order="F")
    change = np.flatnonzero(flat[1:] != flat[:-1]) + 1
    bounds = np.concatenate(([0], change, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs.insert(0, 0)
    return RleMask(h, w, tuple(runs))


def rle_decode(mask: RleMask) -> np.ndarray:
    counts = np.asarray(mask.counts, dtype=np.int64)
    if counts.sum() != mask.height * mask.width:
        raise CorruptMaskError("run lengths do not cover the mask")
    values = np.arange(counts.size) % 2 == 1
    flat = np.repeat(values, counts)
    return flat.reshape((mask.height, mask.width), order="F")


def mask_area(mask: RleMask) -> int:
    return int(sum(mask.counts[1::2]))


def _one_runs(mask: RleMask):
    """Half-open [start, end) intervals of set pixels in flattened order."""
    pos = 0
    runs = []
    for i, c in enumerate(mask.counts):
        if i % 2 == 1 and c:
            runs.append((pos, pos + c))
        pos += c
    return runs


def _check_same_shape(a: RleMask, b: RleMask):
    if a.shape != b.shape:
        raise DimensionError(f"mask shapes differ: {a.shape} vs {b.shape}")


def intersection_area(a: RleMask, b: RleMask) -> int:
    _check_same_shape(a, b)
    ra, rb = _one_runs(a), _one_runs(b)
    i = j = 0
    total = 0
    while i < len(ra) and j < len(rb):
        lo = max(ra[i][0], rb[j][0])
        hi = min(ra[i][1], rb[j][1])
        if hi > lo:
            total += hi - lo
        if ra[i][1] < rb[j][1]:
            i += 1
        else:
            j += 1
    return total


def union_area(a: RleMask, b: RleMask) -> int:
    return mask_area(a) + mask_area(b) - intersection_area(a, b)


def box_mask(height: int, width: int, top: int, left: int, box_h: int, box_w: int) -> RleMask:
    """Axis-aligned rectangle, clipped to the canvas."""
    grid = np.zeros((height, width), dtype=bool)
    grid[max(top, 0):max(top + box_h, 0), max(left, 0):max(left + box_w, 0)] = True
    return rle_encode(grid)
