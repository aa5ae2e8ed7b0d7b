"""Blur forward model, kernel synthesis/loading, and image quality metrics.

Images are float rasters of shape (H, W, 3) with values in [0, 1], RGB order.
All functions here are pure and safe to call from parallel workers.
"""

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy import ndimage, signal

from .errors import KernelFileError, SizingError

KERNEL_SUM_TOL = 1e-6
# Raw file kernels are renormalized only if their sum is within 1% of 1.
KERNEL_RAW_SUM_SLACK = 0.01

# Random-walk trajectory parameters (fixed; see random_motion_kernel).
WALK_INERTIA = 0.85
WALK_STEPS_PER_PIXEL = 32


def check_image(image, name="image"):
    """Validate an (H, W, 3) unit-range raster, returning it as float64."""
    arr = np.asarray(image, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise SizingError(f"{name} must have shape (H, W, 3), got {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise SizingError(f"{name} must be at least 1x1, got {arr.shape}")
    if arr.min() < -1e-9 or arr.max() > 1 + 1e-9:
        raise ValueError(f"{name} values must lie in [0, 1], got range "
                         f"[{arr.min():.4g}, {arr.max():.4g}]")
    return arr


@dataclass(frozen=True)
class BlurKernel:
    """Nonnegative, unit-sum, odd-sized square convolution kernel."""

    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        object.__setattr__(self, "weights", w)
        if w.ndim != 2 or w.shape[0] != w.shape[1]:
            raise SizingError(f"kernel must be square, got shape {w.shape}")
        if w.shape[0] % 2 == 0:
            raise SizingError(f"kernel size must be odd, got {w.shape[0]}")
        if w.min() < 0:
            raise ValueError("kernel entries must be nonnegative")
        if abs(w.sum() - 1.0) > KERNEL_SUM_TOL:
            raise ValueError(f"kernel must sum to 1 within {KERNEL_SUM_TOL}, "
                             f"got {w.sum():.8f}")

    @property
    def size(self):
        return self.weights.shape[0]


def identity_kernel():
    return BlurKernel(np.ones((1, 1)))


def apply_blur(image, kernel):
    """Convolve each color channel with the kernel (edge-replicated boundaries).

    Output has the same spatial size as the input and is clamped to [0, 1].
    """
    img = check_image(image)
    k = kernel.size
    if k > img.shape[0] or k > img.shape[1]:
        raise SizingError(f"kernel size {k} exceeds image dims "
                          f"{img.shape[0]}x{img.shape[1]}")
    out = np.empty_like(img)
    for c in range(3):
        out[:, :, c] = ndimage.convolve(img[:, :, c], kernel.weights, mode="nearest")
    return np.clip(out, 0.0, 1.0)


def random_motion_kernel(size, rng_seed, inertia=WALK_INERTIA):
    """Synthesize a motion-blur kernel by rasterizing a random-walk trajectory.

    A 2-D velocity random walk with inertia is integrated, the trajectory is
    centered and rescaled to span the kernel, and every sample is splatted
    bilinearly onto the grid. Deterministic for a given (size, rng_seed).
    """
    if size % 2 == 0:
        raise SizingError(f"kernel size must be odd, got {size}")
    if not 3 <= size <= 63:
        raise SizingError(f"kernel size must be within [3, 63], got {size}")
    rng = np.random.default_rng(rng_seed)
    n_steps = WALK_STEPS_PER_PIXEL * size
    vel = np.zeros(2)
    pos = np.zeros(2)
    pts = np.empty((n_steps + 1, 2))
    pts[0] = pos
    for i in range(n_steps):
        vel = inertia * vel + (1.0 - inertia) * rng.normal(size=2)
        pos = pos + vel
        pts[i + 1] = pos
    pts -= pts.mean(axis=0)
    half = (size - 1) / 2.0
    extent = np.abs(pts).max()
    if extent > 0:
        pts *= (half * 0.9) / extent

    grid = np.zeros((size, size))
    rows = pts[:, 0] + half
    cols = pts[:, 1] + half
    r0 = np.floor(rows).astype(int)
    c0 = np.floor(cols).astype(int)
    fr = rows - r0
    fc = cols - c0
    for dr, dc, w in ((0, 0, (1 - fr) * (1 - fc)), (0, 1, (1 - fr) * fc),
                      (1, 0, fr * (1 - fc)), (1, 1, fr * fc)):
        np.add.at(grid, (np.clip(r0 + dr, 0, size - 1),
                         np.clip(c0 + dc, 0, size - 1)), w)
    grid /= grid.sum()
    return BlurKernel(grid)


def load_kernel_file(path):
    """Parse a plain-text kernel file (one row per line, whitespace-separated)."""
    text = Path(path).read_text()
    rows = []
    for line in text.splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            rows.append([float(tok) for tok in line.split()])
        except ValueError as exc:
            raise KernelFileError(f"non-numeric kernel entry: {exc}") from None
    if not rows:
        raise KernelFileError("empty kernel file")
    width = len(rows[0])
    if any(len(r) != width for r in rows):
        raise KernelFileError("non-square kernel: ragged rows")
    raw = np.array(rows, dtype=np.float64)
    if raw.shape[0] != raw.shape[1]:
        raise KernelFileError(f"non-square kernel: shape {raw.shape}")
    if raw.shape[0] % 2 == 0:
        raise KernelFileError(f"even-sized kernel: size {raw.shape[0]}")
    if raw.min() < 0:
        raise KernelFileError("negative kernel entries")
    total = raw.sum()
    # Benchmark kernels are often stored as integer counts; accept a raw sum
    # within 1% (relative) of a positive integer scale, reject anything else.
    scale = round(total)
    if scale < 1 or abs(total - scale) > KERNEL_RAW_SUM_SLACK * scale:
        raise KernelFileError(f"kernel sum {total:.6f} deviates by >= 1% from a "
                              "unit or integer-count normalization")
    return BlurKernel(raw / total)


def save_kernel_file(kernel, path):
    """Write a kernel in the plain-text row format accepted by load_kernel_file."""
    lines = [" ".join(f"{v:.17g}" for v in row) for row in kernel.weights]
    Path(path).write_text("\n".join(lines) + "\n")


def psnr(reference, test):
    """Peak signal-to-noise ratio in dB for unit-range images (+inf if equal)."""
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise SizingError(f"shape mismatch: {ref.shape} vs {tst.shape}")
    mse = np.mean((ref - tst) ** 2)
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(1.0 / mse)


def _gaussian_window(size=11, sigma=1.5):
    ax = np.arange(size) - (size - 1) / 2.0
    g = np.exp(-(ax ** 2) / (2.0 * sigma ** 2))
    win = np.outer(g, g)
    return win / win.sum()


def ssim(reference, test, window_size=11, sigma=1.5):
    """Mean SSIM over all fully-contained 11x11 Gaussian windows, channel-averaged.

    Stabilizers C1=(0.01)^2 and C2=(0.03)^2 assume unit dynamic range. Local
    moments are Gaussian-weighted and biased, per the standard definition.
    """
    ref = np.asarray(reference, dtype=np.float64)
    tst = np.asarray(test, dtype=np.float64)
    if ref.shape != tst.shape:
        raise SizingError(f"shape mismatch: {ref.shape} vs {tst.shape}")
    if ref.ndim == 2:
        ref = ref[:, :, None]
        tst = tst[:, :, None]
    if min(ref.shape[0], ref.shape[1]) < window_size:
        raise SizingError(f"image dims {ref.shape[:2]} smaller than "
                          f"{window_size}x{window_size} window")
    win = _gaussian_window(window_size, sigma)
    c1 = 0.01 ** 2
    c2 = 0.03 ** 2
    vals = []
    for c in range(ref.shape[2]):
        x = ref[:, :, c]
        y = tst[:, :, c]
        mu_x = signal.correlate2d(x, win, mode="valid")
        mu_y = signal.correlate2d(y, win, mode="valid")
        sxx = signal.correlate2d(x * x, win, mode="valid") - mu_x ** 2
        syy = signal.correlate2d(y * y, win, mode="valid") - mu_y ** 2
        sxy = signal.correlate2d(x * y, win, mode="valid") - mu_x * mu_y
        num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
        den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
        vals.append(np.mean(num / den))
    return float(np.mean(vals))


def add_noise(image, sigma, rng):
    """Additive Gaussian sensor noise, clamped back to [0, 1]. Off by default."""
    img = check_image(image)
    return np.clip(img + rng.normal(scale=sigma, size=img.shape), 0.0, 1.0)


@dataclass
class MetricReport:
    """Aggregate PSNR/SSIM plus the per-image breakdown they were averaged from."""

    psnr_db: float
    ssim: float
    per_image: list = field(default_factory=list)  # (image_id, psnr_db, ssim)

    @classmethod
    def from_per_image(cls, entries):
        """Aggregate by arithmetic mean; +inf PSNR entries are excluded."""
        if not entries:
            return cls(psnr_db=math.nan, ssim=math.nan, per_image=[])
        psnrs = [p for _, p, _ in entries if math.isfinite(p)]
        agg_psnr = float(np.mean(psnrs)) if psnrs else math.inf
        agg_ssim = float(np.mean([s for _, _, s in entries]))
        return cls(psnr_db=agg_psnr, ssim=agg_ssim, per_image=list(entries))

    def write(self, txt_path, csv_path):
        txt = Path(txt_path)
        txt.write_text(
            f"psnr_db: {self.psnr_db:.6f}\n"
            f"ssim: {self.ssim:.6f}\n"
            f"n_images: {len(self.per_image)}\n"
        )
        rows = ["image_id,psnr_db,ssim"]
        rows += [f"{iid},{p:.6f},{s:.6f}" for iid, p, s in self.per_image]
        Path(csv_path).write_text("\n".join(rows) + "\n")
