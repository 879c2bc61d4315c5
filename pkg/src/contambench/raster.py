"""Synthetic cropland scenes and the mis-registration pipeline.

A scene is a stack of per-pixel feature planes (one vegetation-index value
per acquisition time) over a land-class label map.  Mis-registration rotates
the stack about the scene center, shifts each plane by a small random offset,
resamples (bilinear for bands, nearest-neighbor for labels), and crops away
the blank edges.  The fraction of pixels whose label changed is the
ground-truth contamination rate of a training set built from the distorted
stack, and boundary-pixel counting estimates that rate without ground truth.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass

import numpy as np

from .data import LabeledDataset
from .rng import derive_seed
from .synthgen import counter_rng

__all__ = [
    "RasterScene",
    "VegetationProfileSet",
    "gen_cropland",
    "bilinear_sample",
    "misregister",
    "misreg_epsilon",
    "boundary_fraction",
    "scene_to_dataset",
    "save_scene",
    "load_scene",
]


@dataclass(frozen=True)
class RasterScene:
    """Band stack + label plane + validity mask on a shared pixel grid.

    ``origin`` locates pixel (0, 0) of this scene on the grid of the scene it
    was cropped from, so distorted scenes stay alignable to their source.
    """

    bands: np.ndarray  # (B, H, W) float64
    labels: np.ndarray  # (H, W) int64
    valid: np.ndarray  # (H, W) bool
    class_count: int
    origin: tuple[int, int] = (0, 0)

    def __post_init__(self):
        bands = np.asarray(self.bands, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int64)
        valid = np.asarray(self.valid, dtype=bool)
        if bands.ndim != 3:
            raise ValueError("bands must be a (B, H, W) stack")
        if labels.shape != bands.shape[1:] or valid.shape != labels.shape:
            raise ValueError("labels/valid must match the band plane shape")
        if not np.all(np.isfinite(bands[:, valid])):
            raise ValueError("band values must be finite on valid pixels")
        object.__setattr__(self, "bands", bands)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]

    @property
    def band_count(self) -> int:
        return self.bands.shape[0]


@dataclass(frozen=True)
class VegetationProfileSet:
    """Per-class time series of band values plus i.i.d. Gaussian pixel noise."""

    values: np.ndarray  # (J, B)
    noise_sigma: float = 0.1

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("profile values must be (classes, bands)")
        object.__setattr__(self, "values", values)

    @classmethod
    def default(cls, class_count: int, n_bands: int = 10, noise_sigma: float = 0.1) -> "VegetationProfileSet":
        """Smooth unimodal curves peaking at distinct times, values in [0.1, 0.9]."""
        t = np.arange(n_bands, dtype=np.float64)
        peaks = np.linspace(1.5, n_bands - 1.5, class_count)
        amps = 0.8 - 0.25 * np.linspace(0.0, 1.0, class_count)
        values = 0.1 + amps[:, None] * np.exp(-((t[None, :] - peaks[:, None]) ** 2) / (2.0 * 1.8 ** 2))
        return cls(values, noise_sigma)


def gen_cropland(
    width: int,
    height: int,
    class_count: int,
    profiles: VegetationProfileSet | None = None,
    patchiness: float = 40.0,
    seed: int = 0,
) -> RasterScene:
    """Seeded Voronoi land-class map with profile-driven noisy bands.

    ``patchiness`` is the Voronoi cell count (rounded, at least one cell);
    cell classes are a shuffled balanced assignment over 0..J-1.
    """
    if class_count < 2:
        raise ValueError("class_count >= 2")
    if width < 8 or height < 8:
        raise ValueError("width and height must be >= 8")
    if profiles is None:
        profiles = VegetationProfileSet.default(class_count)
    if profiles.values.shape[0] != class_count:
        raise ValueError("profiles must provide one curve per class")
    rng = counter_rng(derive_seed("cropland", seed))
    n_cells = max(1, int(round(patchiness)))
    centers = rng.random((n_cells, 2)) * np.array([width, height], dtype=np.float64)
    reps = -(-n_cells // class_count)
    cell_class = np.tile(np.arange(class_count, dtype=np.int64), reps)[:n_cells]
    rng.shuffle(cell_class)

    labels = np.empty((height, width), dtype=np.int64)
    cols = np.arange(width, dtype=np.float64)
    for r in range(height):
        dx = cols[:, None] - centers[None, :, 0]
        dy = r - centers[None, :, 1]
        labels[r] = cell_class[np.argmin(dx * dx + dy * dy, axis=1)]

    bands = profiles.values[labels].transpose(2, 0, 1).copy()
    bands += rng.normal(0.0, profiles.noise_sigma, size=bands.shape)
    return RasterScene(bands, labels, np.ones((height, width), dtype=bool), class_count)


def _bilinear_arrays(plane: np.ndarray, valid: np.ndarray, xs: np.ndarray, ys: np.ndarray):
    """Vectorized bilinear sampling; neighbors with zero weight are not required
    to exist or be valid, so integer coordinates reproduce grid values exactly."""
    h, w = plane.shape
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    fx = xs - x0
    fy = ys - y0
    value = np.zeros(xs.shape, dtype=np.float64)
    ok = np.ones(xs.shape, dtype=bool)
    for dy, dx, weight in (
        (0, 0, (1.0 - fx) * (1.0 - fy)),
        (0, 1, fx * (1.0 - fy)),
        (1, 0, (1.0 - fx) * fy),
        (1, 1, fx * fy),
    ):
        yy = y0 + dy
        xx = x0 + dx
        inb = (yy >= 0) & (yy < h) & (xx >= 0) & (xx < w)
        yc = np.clip(yy, 0, h - 1)
        xc = np.clip(xx, 0, w - 1)
        needed = weight > 0
        ok &= ~needed | (inb & valid[yc, xc])
        value += np.where(needed, weight * plane[yc, xc], 0.0)
    return value, ok


def bilinear_sample(plane: np.ndarray, valid: np.ndarray, x: float, y: float) -> tuple[float, bool]:
    """Weighted average of the surrounding grid values at (x=column, y=row)."""
    value, ok = _bilinear_arrays(
        np.asarray(plane, dtype=np.float64),
        np.asarray(valid, dtype=bool),
        np.array([x], dtype=np.float64),
        np.array([y], dtype=np.float64),
    )
    return float(value[0]), bool(ok[0])


def _largest_true_rectangle(mask: np.ndarray) -> tuple[int, int, int, int]:
    """(row, col, height, width) of the maximum-area all-true rectangle."""
    h, w = mask.shape
    heights = np.zeros(w, dtype=np.int64)
    best = (0, 0, 0, 0)
    best_area = 0
    for r in range(h):
        heights = np.where(mask[r], heights + 1, 0)
        stack: list[int] = []
        for c in range(w + 1):
            cur = heights[c] if c < w else 0
            while stack and heights[stack[-1]] >= cur:
                top = stack.pop()
                hgt = int(heights[top])
                left = stack[-1] + 1 if stack else 0
                area = hgt * (c - left)
                if area > best_area:
                    best_area = area
                    best = (r - hgt + 1, left, hgt, c - left)
            if c < w:
                stack.append(c)
    return best


def misregister(
    scene: RasterScene,
    rotation_deg: float,
    offset_sigma: float,
    seed: int,
    shared_offset: bool = False,
) -> RasterScene:
    """Rotate clockwise about the scene center, shift each plane by a random
    offset ~ N(0, offset_sigma^2) per axis, resample, and crop blank edges.

    Bands are resampled bilinearly; the label plane uses nearest-neighbor
    (class ids are categorical) with its own offset draw.  The returned scene
    is the maximal all-valid rectangle, with ``origin`` recording where its
    pixel (0, 0) sits on the input grid.
    """
    h, w = scene.height, scene.width
    b = scene.band_count
    rng = counter_rng(derive_seed("misregister", seed))
    if shared_offset:
        one = rng.normal(0.0, offset_sigma, size=2)
        offsets = np.tile(one, (b + 1, 1))
    else:
        offsets = rng.normal(0.0, offset_sigma, size=(b + 1, 2))  # row 0: labels

    ang = math.radians(rotation_deg)
    cos_a, sin_a = math.cos(ang), math.sin(ang)
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    grid_y, grid_x = np.mgrid[0:h, 0:w]
    grid_x = grid_x.astype(np.float64)
    grid_y = grid_y.astype(np.float64)

    def source_coords(tx: float, ty: float):
        # inverse of: dest = R_cw (src - center) + center + t
        vx = grid_x - cx - tx
        vy = grid_y - cy - ty
        src_x = cos_a * vx + sin_a * vy + cx
        src_y = -sin_a * vx + cos_a * vy + cy
        return src_x, src_y

    sx, sy = source_coords(*offsets[0])
    nx = np.rint(sx).astype(np.int64)
    ny = np.rint(sy).astype(np.int64)
    label_ok = (nx >= 0) & (nx < w) & (ny >= 0) & (ny < h)
    nxc = np.clip(nx, 0, w - 1)
    nyc = np.clip(ny, 0, h - 1)
    label_ok &= scene.valid[nyc, nxc]
    new_labels = np.where(label_ok, scene.labels[nyc, nxc], 0)

    new_bands = np.zeros((b, h, w), dtype=np.float64)
    all_ok = label_ok
    for i in range(b):
        sx, sy = source_coords(*offsets[i + 1])
        vals, ok = _bilinear_arrays(scene.bands[i], scene.valid, sx.ravel(), sy.ravel())
        new_bands[i] = vals.reshape(h, w)
        all_ok = all_ok & ok.reshape(h, w)

    r0, c0, ch, cw = _largest_true_rectangle(all_ok)
    if ch == 0 or cw == 0:
        raise ValueError("no valid region remains after the distortion")
    return RasterScene(
        bands=new_bands[:, r0 : r0 + ch, c0 : c0 + cw].copy(),
        labels=new_labels[r0 : r0 + ch, c0 : c0 + cw].copy(),
        valid=np.ones((ch, cw), dtype=bool),
        class_count=scene.class_count,
        origin=(scene.origin[0] + r0, scene.origin[1] + c0),
    )


def misreg_epsilon(
    original: RasterScene, distorted: RasterScene, alignment: tuple[int, int] | None = None
) -> float:
    """Fraction of aligned valid pixels whose label differs from the original.

    ``alignment`` is the (row, col) offset of the distorted scene's pixel
    (0, 0) on the original grid; by default it comes from the recorded origins.
    """
    if alignment is None:
        alignment = (
            distorted.origin[0] - original.origin[0],
            distorted.origin[1] - original.origin[1],
        )
    dr, dc = alignment
    rows, cols = np.nonzero(distorted.valid)
    orow = rows + dr
    ocol = cols + dc
    inb = (orow >= 0) & (orow < original.height) & (ocol >= 0) & (ocol < original.width)
    orow_c = np.clip(orow, 0, original.height - 1)
    ocol_c = np.clip(ocol, 0, original.width - 1)
    usable = inb & original.valid[orow_c, ocol_c]
    if not np.any(usable):
        raise ValueError("no overlapping valid region between the scenes")
    differs = distorted.labels[rows[usable], cols[usable]] != original.labels[orow[usable], ocol[usable]]
    return float(np.mean(differs))


def _boundary_map(labels: np.ndarray) -> np.ndarray:
    """Pixels whose truncated 3x3 neighborhood holds >= 2 labels differing
    from the neighborhood majority."""
    h, w = labels.shape
    j = int(labels.max()) + 1
    counts = np.zeros((j, h, w), dtype=np.int64)
    for c in range(j):
        mask = (labels == c).astype(np.int64)
        acc = counts[c]
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                ys = slice(max(0, -dy), h - max(0, dy))
                xs = slice(max(0, -dx), w - max(0, dx))
                ys_src = slice(max(0, dy), h + min(0, dy))
                xs_src = slice(max(0, dx), w + min(0, dx))
                acc[ys, xs] += mask[ys_src, xs_src]
    total = counts.sum(axis=0)
    majority = counts.max(axis=0)
    return (total - majority) >= 2


def boundary_fraction(labels: np.ndarray, mode: str = "patch", n_sample: int = 200, seed: int = 0) -> float:
    """Boundary-pixel fraction, exhaustively (``patch``) or on a random pixel
    sample (``sampling``)."""
    labels = np.asarray(labels, dtype=np.int64)
    if labels.ndim != 2 or labels.shape[0] < 3 or labels.shape[1] < 3:
        raise ValueError("label plane must be at least 3x3")
    bmap = _boundary_map(labels)
    if mode == "patch":
        return float(bmap.mean())
    if mode != "sampling":
        raise ValueError(f"unknown mode {mode!r}")
    total = labels.size
    if not 1 <= n_sample <= total:
        raise ValueError("n_sample must be in [1, number of pixels]")
    picks = counter_rng(derive_seed("boundary-sample", seed)).choice(total, size=n_sample, replace=False)
    return float(bmap.ravel()[picks].mean())


def scene_to_dataset(scene: RasterScene) -> LabeledDataset:
    """One row per valid pixel (row-major): features are the band values."""
    rows, cols = np.nonzero(scene.valid)
    if rows.size == 0:
        raise ValueError("scene has no valid pixels")
    features = scene.bands[:, rows, cols].T.copy()
    return LabeledDataset(features, scene.labels[rows, cols], scene.class_count)


def save_scene(scene: RasterScene, out_dir) -> None:
    os.makedirs(out_dir, exist_ok=True)
    for i in range(scene.band_count):
        _write_plane(os.path.join(out_dir, f"band_{i:02d}.csv"), scene.bands[i], float)
    _write_plane(os.path.join(out_dir, "labels.csv"), scene.labels, int)
    _write_plane(os.path.join(out_dir, "mask.csv"), scene.valid.astype(np.int64), int)
    manifest = {
        "width": scene.width,
        "height": scene.height,
        "band_count": scene.band_count,
        "class_count": scene.class_count,
        "origin": list(scene.origin),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(manifest, fh, sort_keys=True, indent=2)
        fh.write("\n")


def _write_plane(path, plane: np.ndarray, kind) -> None:
    with open(path, "w") as fh:
        for row in plane:
            if kind is float:
                fh.write(",".join(repr(float(v)) for v in row))
            else:
                fh.write(",".join(str(int(v)) for v in row))
            fh.write("\n")


def load_scene(in_dir) -> RasterScene:
    with open(os.path.join(in_dir, "manifest.json")) as fh:
        manifest = json.load(fh)
    bands = np.stack(
        [
            np.loadtxt(os.path.join(in_dir, f"band_{i:02d}.csv"), delimiter=",", ndmin=2)
            for i in range(manifest["band_count"])
        ]
    )
    labels = np.loadtxt(os.path.join(in_dir, "labels.csv"), delimiter=",", dtype=np.int64, ndmin=2)
    valid = np.loadtxt(os.path.join(in_dir, "mask.csv"), delimiter=",", dtype=np.int64, ndmin=2).astype(bool)
    return RasterScene(
        bands=bands,
        labels=labels,
        valid=valid,
        class_count=manifest["class_count"],
        origin=tuple(manifest["origin"]),
    )
