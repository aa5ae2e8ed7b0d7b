"""Synthetic RGB-D scene generation: paired sharp images and piecewise-constant
depth, plus the decimated low-resolution depth with dropout that stands in for
a mobile time-of-flight capture.
"""

import colorsys
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import DepthValidityError, SizingError

D_MAX_DEFAULT = 10.0
DROPOUT_RATE_DEFAULT = 0.05  # fraction of low-res pixels with lost light return

# Scene construction constants. Depth planes are quantized to whole millimeters
# (the on-disk raster unit) and separated enough that block-averaged boundary
# values cannot collide with a plane value used by the edge tests.
_DEPTH_RANGE = (0.5, 9.0)
_MIN_DEPTH_SEP = 0.1
_MIN_COLOR_SEP = 0.25  # max-norm RGB distance between any two region colors
_NOISE_AMPLITUDE = 0.04
_NOISE_GRID = 8  # band-limited texture: noise sampled every 8 pixels

# Gradient thresholds used by the depth/RGB edge-alignment property.
DEPTH_EDGE_THRESHOLD = 0.05
RGB_EDGE_THRESHOLD = 0.1


@dataclass
class DepthMap:
    """Metric depth raster (meters) with a per-pixel validity mask.

    Invalid pixels carry the sentinel 0.0.
    """

    data: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=np.float64)
        self.valid = np.asarray(self.valid, dtype=bool)
        if self.data.ndim != 2:
            raise SizingError(f"depth map must be 2-D, got shape {self.data.shape}")
        if self.valid.shape != self.data.shape:
            raise SizingError(f"validity mask shape {self.valid.shape} does not "
                              f"match depth shape {self.data.shape}")
        self.data = np.where(self.valid, self.data, 0.0)

    @property
    def shape(self):
        return self.data.shape

    @property
    def all_valid(self):
        return bool(self.valid.all())

    def check_range(self, d_max):
        vals = self.data[self.valid]
        if vals.size and (vals.min() <= 0.0 or vals.max() > d_max):
            raise ValueError(f"valid depths must lie in (0, {d_max}], got range "
                             f"[{vals.min():.4g}, {vals.max():.4g}]")

    def copy(self):
        return DepthMap(self.data.copy(), self.valid.copy())


@dataclass
class ScenePair:
    """Sharp image with aligned high-resolution and decimated low-resolution depth."""

    sharp: np.ndarray
    depth_hr: DepthMap
    depth_lr: DepthMap
    scene_id: str
    rng_seed: int

    def __post_init__(self):
        if self.sharp.shape[:2] != self.depth_hr.shape:
            raise SizingError(f"sharp {self.sharp.shape[:2]} and depth_hr "
                              f"{self.depth_hr.shape} dims differ")
        hh, hw = self.depth_hr.shape
        lh, lw = self.depth_lr.shape
        if lh == 0 or lw == 0 or hh % lh or hw % lw or hh // lh != hw // lw:
            raise SizingError(f"depth_lr {self.depth_lr.shape} is not an exact "
                              f"decimation of depth_hr {self.depth_hr.shape}")

    @property
    def scale(self):
        return self.depth_hr.shape[0] // self.depth_lr.shape[0]


def block_average(data, scale):
    """Decimate by block mean. Constant blocks pass through exactly."""
    h, w = data.shape
    if h % scale or w % scale:
        raise SizingError(f"dims {data.shape} not divisible by scale {scale}")
    blocks = data.reshape(h // scale, scale, w // scale, scale)
    bmax = blocks.max(axis=(1, 3))
    bmin = blocks.min(axis=(1, 3))
    return np.where(bmax == bmin, bmax, blocks.mean(axis=(1, 3)))


def _sample_depth_planes(rng, count):
    planes = []
    while len(planes) < count:
        d = round(rng.uniform(*_DEPTH_RANGE), 3)  # whole millimeters
        if all(abs(d - p) >= _MIN_DEPTH_SEP for p in planes):
            planes.append(d)
    return planes


def _sample_region_colors(rng, count):
    colors = []
    while len(colors) < count:
        hue = rng.uniform(0.0, 1.0)
        sat = rng.uniform(0.55, 0.95)
        val = rng.uniform(0.25, 0.9)
        c = np.array(colorsys.hsv_to_rgb(hue, sat, val))
        if all(np.max(np.abs(c - prev)) >= _MIN_COLOR_SEP for prev in colors):
            colors.append(c)
    return colors


def _band_limited_noise(rng, height, width):
    gh = max(1, height // _NOISE_GRID)
    gw = max(1, width // _NOISE_GRID)
    coarse = rng.uniform(-1.0, 1.0, size=(gh, gw, 3))
    out = np.empty((height, width, 3))
    for c in range(3):
        out[:, :, c] = ndimage.zoom(coarse[:, :, c],
                                    (height / gh, width / gw),
                                    order=1, mode="nearest", grid_mode=True)
    return _NOISE_AMPLITUDE * out


def generate_scene(height, width, n_objects, scale, rng_seed,
                   dropout_rate=DROPOUT_RATE_DEFAULT, d_max=D_MAX_DEFAULT,
                   decimation="block"):
    """Generate one synthetic scene pair, deterministic for a given seed.

    Random rectangles/ellipses at distinct depth planes are drawn far-to-near
    over a background plane; RGB regions get separated base colors plus
    band-limited texture noise so color edges coincide with depth edges.
    The low-resolution depth is the block-averaged (or nearest-subsampled)
    high-resolution depth with `dropout_rate` of pixels invalidated.
    """
    if height % scale or width % scale:
        raise SizingError(f"dims {height}x{width} not divisible by scale {scale}")
    if n_objects < 1:
        raise SizingError(f"n_objects must be >= 1, got {n_objects}")
    rng = np.random.default_rng(rng_seed)

    planes = _sample_depth_planes(rng, n_objects + 1)
    background = max(planes)
    object_depths = sorted((p for p in planes if p != background), reverse=True)
    colors = _sample_region_colors(rng, n_objects + 1)

    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    region = np.zeros((height, width), dtype=np.intp)  # 0 = background
    depth = np.full((height, width), background)
    for i, d in enumerate(object_depths):  # far to near: nearer occludes
        is_ellipse = rng.random() < 0.5
        cy = rng.uniform(0, height - 1)
        cx = rng.uniform(0, width - 1)
        hy = rng.uniform(max(2.0, height / 10), height / 3)
        hx = rng.uniform(max(2.0, width / 10), width / 3)
        if is_ellipse:
            mask = ((rows - cy) / hy) ** 2 + ((cols - cx) / hx) ** 2 <= 1.0
        else:
            mask = (np.abs(rows - cy) <= hy) & (np.abs(cols - cx) <= hx)
        region[mask] = i + 1
        depth[mask] = d

    sharp = np.stack([np.asarray(colors)[region][:, :, c] for c in range(3)], axis=-1)
    sharp = np.clip(sharp + _band_limited_noise(rng, height, width), 0.0, 1.0)

    depth_hr = DepthMap(depth, np.ones((height, width), dtype=bool))
    if decimation == "block":
        lr = block_average(depth, scale)
    elif decimation == "nearest":
        lr = depth[scale // 2::scale, scale // 2::scale].copy()
    else:
        raise ValueError(f"unknown decimation mode {decimation!r}")
    lr_valid = rng.random(lr.shape) >= dropout_rate
    depth_lr = DepthMap(lr, lr_valid)

    return ScenePair(sharp=sharp, depth_hr=depth_hr, depth_lr=depth_lr,
                     scene_id=f"scene_{rng_seed:08d}", rng_seed=rng_seed)


def scene_depth_planes(pair):
    """Distinct valid depth values present in the high-resolution map."""
    return sorted(set(np.unique(pair.depth_hr.data[pair.depth_hr.valid])))


def inpaint_depth(depth):
    """Replace every invalid pixel by its nearest valid pixel's value.

    Distance is Euclidean; ties are broken by row-major order of the valid
    pixels. The returned map is all-valid.
    """
    if not depth.valid.any():
        raise DepthValidityError("no valid measurements")
    if depth.all_valid:
        return depth.copy()
    out = depth.data.copy()
    vr, vc = np.nonzero(depth.valid)       # row-major enumeration
    ir, ic = np.nonzero(~depth.valid)
    vals = depth.data[vr, vc]
    chunk = 2048
    for start in range(0, ir.size, chunk):
        sl = slice(start, start + chunk)
        d2 = (ir[sl, None] - vr[None, :]) ** 2 + (ic[sl, None] - vc[None, :]) ** 2
        nearest = np.argmin(d2, axis=1)    # first minimum = row-major tie-break
        out[ir[sl], ic[sl]] = vals[nearest]
    return DepthMap(out, np.ones_like(depth.valid))


def depth_edge_alignment(pair, depth_threshold=DEPTH_EDGE_THRESHOLD,
                         rgb_threshold=RGB_EDGE_THRESHOLD):
    """Fraction of depth-discontinuity pixels with an RGB edge within 1 pixel."""
    d = pair.depth_hr.data
    gd = np.zeros_like(d)
    gd[:-1, :] = np.maximum(gd[:-1, :], np.abs(np.diff(d, axis=0)))
    gd[:, :-1] = np.maximum(gd[:, :-1], np.abs(np.diff(d, axis=1)))
    depth_edges = gd > depth_threshold
    if not depth_edges.any():
        return 1.0
    g = np.abs(np.diff(pair.sharp, axis=0)).max(axis=2)
    grgb = np.zeros(d.shape)
    grgb[:-1, :] = np.maximum(grgb[:-1, :], g)
    g = np.abs(np.diff(pair.sharp, axis=1)).max(axis=2)
    grgb[:, :-1] = np.maximum(grgb[:, :-1], g)
    rgb_edges = ndimage.maximum_filter(grgb, size=3) > rgb_threshold
    return float(rgb_edges[depth_edges].mean())
