"""Exact sampling of stationary Gaussian processes by circulant embedding.

The covariance row (rho(k h))_k is wrapped into a circulant of size M whose
eigenvalues are given by one FFT.  When they are all nonnegative, the
real and imaginary parts of FFT(sqrt(lambda / M) * Z), with Z complex white
noise, are two independent exact samples of the process on the grid.

Random streams: stream ``s`` under master ``seed`` lives in the imaginary
(odd ``s``) or real (even ``s``) half of the FFT driven by the Philox
counter-based generator keyed by ``(seed, s // 2)``.  A sample therefore
depends only on ``(model, grid, seed, stream_id)``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .covariance import CovarianceModel
from .errors import NotEmbeddable

CLAMP_REL = 1e-10
MAX_DOUBLINGS = 4
HEADER = struct.Struct("<8sQdQ")
MAGIC = b"BMFIELD1"


@dataclass(frozen=True)
class GridSpec:
    n_points: int
    spacing: float
    origin: float = 0.0
    dim: int = 1

    def __post_init__(self):
        if self.n_points < 2:
            raise ValueError("n_points must be >= 2")
        if not self.spacing > 0:
            raise ValueError("spacing must be > 0")
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")

    @property
    def shape(self):
        return (self.n_points,) * self.dim

    def coordinates(self):
        """Axis coordinates (shared by both axes in d=2)."""
        return self.origin + self.spacing * np.arange(self.n_points)


@dataclass(frozen=True)
class EmbeddingSpectrum:
    eigenvalues: np.ndarray
    min_eigenvalue: float
    clamped: bool
    size: int
    dim: int = 1

    @property
    def sqrt_scaled(self) -> np.ndarray:
        return np.sqrt(self.eigenvalues / self.eigenvalues.size)


@dataclass(frozen=True)
class FieldSample:
    grid: GridSpec
    values: np.ndarray
    seed: int
    stream_id: int


def _next_pow2(k: int) -> int:
    return 1 << max(1, int(k - 1).bit_length())


def _wrapped_lags(spacing: float, size: int) -> np.ndarray:
    k = np.arange(size)
    return np.minimum(k, size - k) * spacing


def embedding_spectrum(model: CovarianceModel, grid: GridSpec,
                       clamp_rel: float = CLAMP_REL,
                       max_doublings: int = MAX_DOUBLINGS) -> EmbeddingSpectrum:
    """Eigenvalues of the minimal nonnegative circulant embedding.

    Starts from M = next power of two >= 2(n-1) and doubles M at most
    ``max_doublings`` times while the embedding is indefinite.
    """
    if model.dim != grid.dim:
        raise ValueError(f"model dim {model.dim} != grid dim {grid.dim}")
    size = _next_pow2(2 * (grid.n_points - 1))
    for _ in range(max_doublings + 1):
        lags = _wrapped_lags(grid.spacing, size)
        if grid.dim == 1:
            lam = np.fft.fft(model.radial(lags)).real
        else:
            lam = np.fft.fft2(model.radial(np.hypot(lags[:, None], lags[None, :]))).real
        lo = float(lam.min())
        tol = clamp_rel * float(lam.max())
        if lo >= -tol:
            clamped = bool(lo < 0.0)
            return EmbeddingSpectrum(np.maximum(lam, 0.0), lo, clamped, size, grid.dim)
        size *= 2
    raise NotEmbeddable(
        f"circulant embedding indefinite (min eigenvalue {lo:.3e}) up to M={size // 2}")


def _pair_noise(seed: int, pair: int, shape) -> np.ndarray:
    ss = np.random.SeedSequence(int(seed), spawn_key=(int(pair),))
    rng = np.random.Generator(np.random.Philox(ss))
    z = rng.standard_normal((2,) + tuple(shape))
    return z[0] + 1j * z[1]


def sample_streams(spectrum: EmbeddingSpectrum, grid: GridSpec, seed: int,
                   start: int, count: int) -> np.ndarray:
    """Samples for streams ``start .. start+count-1``, stacked on axis 0."""
    if count <= 0:
        return np.empty((0,) + grid.shape)
    first, last = start // 2, (start + count - 1) // 2
    shape = (spectrum.size,) * spectrum.dim
    noise = np.stack([_pair_noise(seed, p, shape) for p in range(first, last + 1)])
    noise *= spectrum.sqrt_scaled
    if spectrum.dim == 1:
        y = np.fft.fft(noise, axis=-1)[:, : grid.n_points]
    else:
        y = np.fft.fft2(noise, axes=(-2, -1))[:, : grid.n_points, : grid.n_points]
    # interleave real (even stream) and imaginary (odd stream) halves
    both = np.empty((2 * y.shape[0],) + y.shape[1:])
    both[0::2] = y.real
    both[1::2] = y.imag
    offset = start - 2 * first
    return both[offset: offset + count]


def sample_grid(model: CovarianceModel, grid: GridSpec, seed: int, stream_id: int,
                spectrum: EmbeddingSpectrum | None = None) -> FieldSample:
    """One exact draw of the process on ``grid``."""
    if spectrum is None:
        spectrum = embedding_spectrum(model, grid)
    values = sample_streams(spectrum, grid, seed, stream_id, 1)[0]
    return FieldSample(grid, values, int(seed), int(stream_id))


def write_field(path, sample: FieldSample) -> None:
    """Little-endian dump: 32-byte header then float64 values (d=1 only)."""
    if sample.grid.dim != 1:
        raise ValueError("binary field dumps are 1-d only")
    vals = np.asarray(sample.values, dtype="<f8")
    header = HEADER.pack(MAGIC, vals.size, float(sample.grid.spacing),
                         int(sample.seed) & 0xFFFFFFFFFFFFFFFF)
    Path(path).write_bytes(header + vals.tobytes())


def read_field(path) -> FieldSample:
    raw = Path(path).read_bytes()
    magic, n, spacing, seed = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise ValueError(f"bad magic {magic!r}")
    values = np.frombuffer(raw, dtype="<f8", count=n, offset=HEADER.size).copy()
    return FieldSample(GridSpec(int(n), spacing), values, int(seed), -1)
