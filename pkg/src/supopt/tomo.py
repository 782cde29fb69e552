"""Test-data generation: phantom, parallel-beam system matrix, noise.

The projector is a Siddon-style ray tracer over a unit pixel grid. Rows
are ordered angle-major: row index = angle_index * n_rays + ray_index.
All-zero rows (rays missing the image) are kept so m = n_angles * n_rays.
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .opslin import SparseOperator

# Shepp-Logan ellipse table: (intensity_original, intensity_modified,
# semi_axis_x, semi_axis_y, center_x, center_y, rotation_deg).
# The "modified" column is the MATLAB phantom() default (values in [0,1]).
_ELLIPSES = [
    (2.00, 1.00, 0.6900, 0.9200, 0.00, 0.0000, 0.0),
    (-0.98, -0.80, 0.6624, 0.8740, 0.00, -0.0184, 0.0),
    (-0.02, -0.20, 0.1100, 0.3100, 0.22, 0.0000, -18.0),
    (-0.02, -0.20, 0.1600, 0.4100, -0.22, 0.0000, 18.0),
    (0.01, 0.10, 0.2100, 0.2500, 0.00, 0.3500, 0.0),
    (0.01, 0.10, 0.0460, 0.0460, 0.00, 0.1000, 0.0),
    (0.01, 0.10, 0.0460, 0.0460, 0.00, -0.1000, 0.0),
    (0.01, 0.10, 0.0460, 0.0230, -0.08, -0.6050, 0.0),
    (0.01, 0.10, 0.0230, 0.0230, 0.00, -0.6060, 0.0),
    (0.01, 0.10, 0.0230, 0.0460, 0.06, -0.6050, 0.0),
]


@dataclass(frozen=True)
class Geometry:
    """Parallel-beam acquisition geometry over an N x N image (n = N^2)."""

    image_side: int
    n_angles: int
    n_rays: int
    angles: np.ndarray = None  # degrees, strictly increasing in [0, 180)

    def __post_init__(self):
        if self.angles is None:
            object.__setattr__(
                self, "angles",
                np.linspace(1.0, 180.0, self.n_angles, endpoint=False))
        angles = np.asarray(self.angles, dtype=np.float64)
        if len(angles) != self.n_angles:
            raise ValueError("angles length must equal n_angles")
        if np.any(np.diff(angles) <= 0) or angles[0] < 0 or angles[-1] >= 180:
            raise ValueError("angles must be strictly increasing in [0, 180)")
        object.__setattr__(self, "angles", angles)

    @property
    def n_pixels(self):
        return self.image_side * self.image_side

    @property
    def n_measurements(self):
        return self.n_angles * self.n_rays


@dataclass(frozen=True)
class NoiseModel:
    """Additive Gaussian noise with sigma = relative_level/m * sum(b)."""

    relative_level: float = 0.02
    seed: int = 0


def shepp_logan(image_side, variant="modified"):
    """Rasterize the 10-ellipse Shepp-Logan phantom, row-major flat vector.

    Pixel value is the sum of intensities of all ellipses containing the
    pixel center. `variant="modified"` uses the MATLAB default table with
    values confined to [0, 1]; `variant="original"` uses the low-contrast
    1974 intensities.
    """
    if image_side < 2:
        raise ValueError("image_side must be >= 2")
    if variant not in ("original", "modified"):
        raise ValueError(f"unknown variant {variant!r}")
    N = image_side
    # pixel centers on [-1, 1]^2, row 0 at the top
    coords = (2.0 * np.arange(N) + 1.0) / N - 1.0
    xs = coords[None, :].repeat(N, axis=0)
    ys = (-coords)[:, None].repeat(N, axis=1)
    img = np.zeros((N, N))
    col = 0 if variant == "original" else 1
    for ell in _ELLIPSES:
        a = ell[col]
        ax, ay, x0, y0, phi = ell[2], ell[3], ell[4], ell[5], ell[6]
        c, s = np.cos(np.deg2rad(phi)), np.sin(np.deg2rad(phi))
        xr = (xs - x0) * c + (ys - y0) * s
        yr = -(xs - x0) * s + (ys - y0) * c
        img[(xr / ax) ** 2 + (yr / ay) ** 2 <= 1.0] += a
    return img.ravel()


def _trace_ray(N, theta_rad, offset):
    """Intersection lengths of one ray with the unit cells of an N x N grid.

    The grid covers [-N/2, N/2]^2. The ray passes through
    offset * (-sin t, cos t) with direction (cos t, sin t). Returns
    (flat_indices, lengths) with row-major image indexing (row 0 at top).
    """
    half = N / 2.0
    dx, dy = np.cos(theta_rad), np.sin(theta_rad)
    px, py = -offset * np.sin(theta_rad), offset * np.cos(theta_rad)

    # clip the ray against the image square
    t_lo, t_hi = -np.inf, np.inf
    for p, d in ((px, dx), (py, dy)):
        if abs(d) < 1e-14:
            if abs(p) >= half:
                return np.empty(0, dtype=np.int64), np.empty(0)
        else:
            t0, t1 = (-half - p) / d, (half - p) / d
            t_lo = max(t_lo, min(t0, t1))
            t_hi = min(t_hi, max(t0, t1))
    if t_hi <= t_lo:
        return np.empty(0, dtype=np.int64), np.empty(0)

    ts = [np.array([t_lo, t_hi])]
    grid = np.arange(-half, half + 1.0)
    if abs(dx) >= 1e-14:
        tx = (grid - px) / dx
        ts.append(tx[(tx > t_lo) & (tx < t_hi)])
    if abs(dy) >= 1e-14:
        ty = (grid - py) / dy
        ts.append(ty[(ty > t_lo) & (ty < t_hi)])
    t = np.unique(np.concatenate(ts))
    lengths = np.diff(t)
    tm = 0.5 * (t[:-1] + t[1:])
    cx = px + tm * dx
    cy = py + tm * dy
    ix = np.clip(np.floor(cx + half).astype(np.int64), 0, N - 1)
    iy = np.clip(np.floor(cy + half).astype(np.int64), 0, N - 1)
    keep = lengths > 1e-12
    rows = (N - 1) - iy[keep]  # image row 0 corresponds to largest y
    return rows * N + ix[keep], lengths[keep]


def build_parallel_system(geom):
    """Assemble the parallel-beam system matrix as a SparseOperator.

    Rays are equispaced and centered, spanning a detector width of
    image_side - 1 pixel units; entries are exact ray/pixel intersection
    lengths.
    """
    N = geom.image_side
    offsets = np.linspace(-(N - 1) / 2.0, (N - 1) / 2.0, geom.n_rays)
    data, indices, indptr = [], [], [0]
    for angle in geom.angles:
        theta = np.deg2rad(angle)
        for off in offsets:
            cols, lengths = _trace_ray(N, theta, off)
            order = np.argsort(cols)
            indices.append(cols[order])
            data.append(lengths[order])
            indptr.append(indptr[-1] + len(cols))
    csr = sp.csr_matrix(
        (np.concatenate(data), np.concatenate(indices), np.array(indptr)),
        shape=(geom.n_measurements, geom.n_pixels))
    return SparseOperator(csr)


def noise_sigma(b, model):
    """sigma = relative_level / m * sum_j b_j; requires sum(b) > 0."""
    b = np.asarray(b, dtype=np.float64)
    total = float(np.sum(b))
    if total <= 0:
        raise ValueError("sum(b) must be positive to define sigma")
    return model.relative_level / len(b) * total


def add_noise(b, model):
    """Add i.i.d. N(0, sigma^2) noise to b.

    Noise is drawn from numpy's PCG64 generator seeded with `model.seed`,
    so results are bit-reproducible across runs and platforms.
    """
    b = np.asarray(b, dtype=np.float64)
    if model.relative_level == 0:
        return b.copy()
    sigma = noise_sigma(b, model)
    rng = np.random.default_rng(model.seed)
    return b + sigma * rng.standard_normal(len(b))


def save_flat_binary(path, vec, shape):
    """Write a one-line text header 'rows cols' then little-endian float64."""
    vec = np.asarray(vec, dtype="<f8")
    with open(path, "wb") as fh:
        fh.write(f"{shape[0]} {shape[1]}\n".encode("ascii"))
        fh.write(vec.tobytes())


def load_flat_binary(path):
    """Read a vector written by save_flat_binary; returns (vec, shape)."""
    with open(path, "rb") as fh:
        header = fh.readline().decode("ascii").split()
        rows, cols = int(header[0]), int(header[1])
        vec = np.frombuffer(fh.read(), dtype="<f8").copy()
    if len(vec) != rows * cols:
        raise ValueError("payload size does not match header")
    return vec, (rows, cols)


def save_pgm(path, vec, shape):
    """8-bit PGM preview, min/max scaled."""
    img = np.asarray(vec, dtype=np.float64).reshape(shape)
    lo, hi = float(img.min()), float(img.max())
    scale = 255.0 / (hi - lo) if hi > lo else 0.0
    pix = np.round((img - lo) * scale).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P5\n{shape[1]} {shape[0]}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
