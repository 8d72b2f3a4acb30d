"""Spectral search: full-location, angular, and distance spectra plus peak picking.

Every spectrum value is ``1 / (a^H U_n U_n^H a + eps)`` for a steering vector
``a`` and a noise subspace ``U_n``; the guard ``eps = 1e-15 * ||a||**2`` keeps
values finite at exact orthogonality.  An :class:`EvalCounter` can be threaded
through to audit how many steering-vector quotients a search spends.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .geometry import ArrayGeometry, PolarLocation
from .signal import SnapshotBlock
from .subspace import NoiseSubspace, noise_subspace, smoothed_covariance

EPS_SCALE = 1e-15
_CHUNK = 16384

CARTESIAN_AXES = ("x", "y", "z")
ANGULAR_AXES = ("azimuth", "elevation")


class EvalCounter:
    """Counts steering-vector quotient evaluations."""

    def __init__(self):
        self.count = 0

    def add(self, n: int):
        self.count += int(n)


@dataclass(frozen=True)
class GridAxis:
    """One search-grid axis.

    ``spacing`` is "uniform" or, for distance axes, "inverse-distance"
    (points uniform in 1/d, concentrating resolution at short range).
    """

    name: str
    lo: float
    hi: float
    count: int
    spacing: str = "uniform"

    def __post_init__(self):
        if self.count < 2:
            raise ValueError(f"axis {self.name!r} needs at least 2 points")
        if not self.lo < self.hi:
            raise ValueError(f"axis {self.name!r} needs lo < hi")
        if self.spacing not in ("uniform", "inverse-distance"):
            raise ValueError(f"unknown spacing {self.spacing!r}")
        if (self.name == "distance" or self.spacing == "inverse-distance") and self.lo <= 0:
            raise ValueError(f"axis {self.name!r} must be strictly positive")

    def points(self) -> np.ndarray:
        if self.spacing == "inverse-distance":
            return 1.0 / np.linspace(1.0 / self.lo, 1.0 / self.hi, self.count)
        return np.linspace(self.lo, self.hi, self.count)


@dataclass(frozen=True)
class GridSpec:
    """Ordered collection of grid axes defining a 1-D, 2-D, or 3-D search."""

    axes: tuple[GridAxis, ...]

    def __post_init__(self):
        if not 1 <= len(self.axes) <= 3:
            raise ValueError("grids must have 1 to 3 axes")

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(ax.count for ax in self.axes)

    @property
    def n_points(self) -> int:
        return int(np.prod(self.shape))

    def axis_points(self) -> list[np.ndarray]:
        return [ax.points() for ax in self.axes]

    def names(self) -> tuple[str, ...]:
        return tuple(ax.name for ax in self.axes)


@dataclass(frozen=True)
class SpectrumGrid:
    """Spectrum values sampled over a grid; strictly positive everywhere."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self):
        if self.values.shape != self.grid.shape:
            raise ValueError("value array shape must match the grid shape")
        if not np.all(np.isfinite(self.values)) or not np.all(self.values > 0):
            raise ValueError("spectrum values must be finite and strictly positive")


@dataclass(frozen=True)
class Peak:
    indices: tuple[int, ...]
    coords: tuple[float, ...]
    value: float


@dataclass(frozen=True)
class PeakSet:
    """Up to ``requested`` tallest strict local maxima, sorted by height."""

    peaks: tuple[Peak, ...]
    requested: int

    @property
    def found(self) -> int:
        return len(self.peaks)

    @property
    def complete(self) -> bool:
        return self.found >= self.requested


def _quotient_denominators(
    un: np.ndarray, steering: np.ndarray, counter: Optional[EvalCounter]
) -> np.ndarray:
    """||U_n^H a||**2 + eps for each column of ``steering``."""
    proj = un.conj().T @ steering
    denom = np.sum(proj.real**2 + proj.imag**2, axis=0)
    norms = np.sum(steering.real**2 + steering.imag**2, axis=0)
    if counter is not None:
        counter.add(steering.shape[1])
    return denom + EPS_SCALE * norms


def _check_dim(un: NoiseSubspace, expected: int, what: str):
    if un.dim != expected:
        raise ValueError(f"noise subspace dimension {un.dim} does not match {what} ({expected})")


def _subgrid_side(un: NoiseSubspace, g: ArrayGeometry) -> int:
    side = math.isqrt(un.dim)
    if side * side != un.dim or side > g.side:
        raise ValueError(
            f"noise subspace dimension {un.dim} is not a square subgrid of the array"
        )
    return side


def _steering_subgrid(g: ArrayGeometry, side: int) -> np.ndarray:
    """Steering centers for a smoothed subspace: the subgrid shifted to the
    mean subarray position.

    A smoothed covariance averages subarrays at offsets 0..c_r, so the
    effective phase reference sits half the total shift away from the first
    subarray.  Centering there cancels the leading-order distance bias; for
    the planar-wave angular scan the shift is only a constant phase and does
    not change the spectrum.
    """
    centers = g.subgrid_centers(side)
    offset = (g.side - side) * g.spacing / 2.0
    if offset:
        centers = centers + np.array([offset, offset, 0.0])
    return centers


def spectrum_3d(
    un: NoiseSubspace,
    grid: GridSpec,
    g: ArrayGeometry,
    counter: Optional[EvalCounter] = None,
) -> SpectrumGrid:
    """Spectrum over Cartesian locations using the exact array response.

    The grid axes must be named among x/y/z (in that relative order); an
    omitted coordinate is held at 0, so an (x, z) grid scans the y=0 plane.
    The z coordinate, when present, must be positive.

    The quotient is evaluated with unit-normalized steering vectors.  The
    exact response's amplitude varies by orders of magnitude over a Cartesian
    box, and the unnormalized quotient rewards low-gain cells near the array
    plane instead of subspace alignment, drowning genuine source peaks.
    """
    names = grid.names()
    if any(n not in CARTESIAN_AXES for n in names) or list(names) != sorted(
        names, key=CARTESIAN_AXES.index
    ):
        raise ValueError(f"grid axes must be ordered from {CARTESIAN_AXES}, got {names}")
    _check_dim(un, g.n_antennas, "the full array size")

    coords = dict.fromkeys(CARTESIAN_AXES, None)
    for ax, pts in zip(grid.axes, grid.axis_points()):
        coords[ax.name] = pts
    mesh_axes = [coords[n] if coords[n] is not None else np.array([0.0]) for n in CARTESIAN_AXES]
    xg, yg, zg = np.meshgrid(*mesh_axes, indexing="ij")
    px, py, pz = xg.ravel(), yg.ravel(), zg.ravel()
    if np.any(pz <= 0):
        raise ValueError("grid z coordinates must be positive")

    cx = g.centers[:, 0][:, None]
    cy = g.centers[:, 1][:, None]
    k_wave = 2.0 * math.pi / g.wavelength
    amp_scale = g.element_diag / math.sqrt(8.0 * math.pi)

    values = np.empty(px.size)
    for start in range(0, px.size, _CHUNK):
        sl = slice(start, min(start + _CHUNK, px.size))
        dx = cx - px[sl][None, :]
        r = np.sqrt(dx**2 + (cy - py[sl][None, :]) ** 2 + pz[sl][None, :] ** 2)
        amp = amp_scale * np.sqrt(pz[sl][None, :] * (dx**2 + pz[sl][None, :] ** 2)) / r**2.5
        steering = amp * np.exp(-1j * k_wave * r)
        steering /= np.linalg.norm(steering, axis=0, keepdims=True)
        values[sl] = 1.0 / _quotient_denominators(un.matrix, steering, counter)
    return SpectrumGrid(grid=grid, values=values.reshape(grid.shape))


def spectrum_2d_angular(
    un: NoiseSubspace,
    grid: GridSpec,
    g: ArrayGeometry,
    counter: Optional[EvalCounter] = None,
) -> SpectrumGrid:
    """Spectrum over (azimuth, elevation) using the planar-wave response.

    The steering vectors live on the leading square subgrid matching the
    noise-subspace dimension (the full array when no smoothing was applied).
    """
    if grid.names() != ANGULAR_AXES:
        raise ValueError(f"expected axes {ANGULAR_AXES}, got {grid.names()}")
    side = _subgrid_side(un, g)
    centers = _steering_subgrid(g, side)
    az, el = grid.axis_points()
    azg, elg = np.meshgrid(az, el, indexing="ij")
    u = (np.cos(elg) * np.sin(azg)).ravel()
    v = np.sin(elg).ravel()

    k_wave = 2.0 * math.pi / g.wavelength
    phase = k_wave * (centers[:, 0][:, None] * u[None, :] + centers[:, 1][:, None] * v[None, :])
    steering = np.exp(1j * phase)
    values = 1.0 / _quotient_denominators(un.matrix, steering, counter)
    return SpectrumGrid(grid=grid, values=values.reshape(grid.shape))


def spectrum_1d_distance(
    un: NoiseSubspace,
    azimuth: float,
    elevation: float,
    grid: GridSpec,
    g: ArrayGeometry,
    counter: Optional[EvalCounter] = None,
) -> SpectrumGrid:
    """Spectrum over distance at fixed angles, using the expanded-phase response."""
    if grid.names() != ("distance",):
        raise ValueError(f"expected a single 'distance' axis, got {grid.names()}")
    side = _subgrid_side(un, g)
    centers = _steering_subgrid(g, side)
    x, y = centers[:, 0][:, None], centers[:, 1][:, None]
    d = grid.axis_points()[0][None, :]
    u = math.cos(elevation) * math.sin(azimuth)
    v = math.sin(elevation)
    r = np.sqrt(d * d + x * x + y * y - 2.0 * d * (u * x + v * y))
    steering = np.exp(-2j * math.pi * r / g.wavelength)
    values = 1.0 / _quotient_denominators(un.matrix, steering, counter)
    return SpectrumGrid(grid=grid, values=values.reshape(grid.shape))


def _strict_interior_maxima(values: np.ndarray) -> np.ndarray:
    mask = np.ones(values.shape, dtype=bool)
    nd = values.ndim
    for ax in range(nd):
        edge = [slice(None)] * nd
        edge[ax] = 0
        mask[tuple(edge)] = False
        edge[ax] = values.shape[ax] - 1
        mask[tuple(edge)] = False
    for ax in range(nd):
        mask &= values > np.roll(values, 1, axis=ax)
        mask &= values > np.roll(values, -1, axis=ax)
    return mask


def find_peaks(spectrum: SpectrumGrid, k: int) -> PeakSet:
    """Top-k strict local maxima of a spectrum.

    A peak must strictly exceed its immediate axis neighbors (2 in 1-D, 4 in
    2-D, 6 in 3-D) and cannot sit on the grid boundary.  Ties break toward
    the lower linear index.  Fewer than k maxima is reported, not raised.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    values = spectrum.values
    mask = _strict_interior_maxima(values)
    idx = np.argwhere(mask)
    if idx.size == 0:
        return PeakSet(peaks=(), requested=k)
    peak_vals = values[tuple(idx.T)]
    linear = np.ravel_multi_index(tuple(idx.T), values.shape)
    order = np.lexsort((linear, -peak_vals))[:k]
    axis_pts = spectrum.grid.axis_points()
    peaks = tuple(
        Peak(
            indices=tuple(int(i) for i in idx[o]),
            coords=tuple(float(axis_pts[a][idx[o][a]]) for a in range(len(axis_pts))),
            value=float(peak_vals[o]),
        )
        for o in order
    )
    return PeakSet(peaks=peaks, requested=k)


@dataclass(frozen=True)
class TwoStepResult:
    """Output of the angular-then-distance estimation pipeline.

    ``locations[i]`` pairs with ``angular_peaks.peaks[i]`` (descending peak
    height); the labeling relative to true users is arbitrary and resolved by
    the evaluation layer.
    """

    locations: tuple[PolarLocation, ...]
    angular_peaks: PeakSet
    distance_peaks: tuple[PeakSet, ...]
    angular_spectrum: SpectrumGrid
    distance_spectra: tuple[SpectrumGrid, ...]
    eval_count: int
    boundary_fallbacks: int
    warnings: tuple[str, ...] = ()

    @property
    def complete(self) -> bool:
        return self.angular_peaks.complete and len(self.locations) == self.angular_peaks.requested


def two_step_estimate(
    block: SnapshotBlock,
    g: ArrayGeometry,
    k_sources: int,
    c_r: int,
    angle_grid: GridSpec,
    distance_grid: GridSpec,
    per_ue_angular_rescan: bool = False,
    counter: Optional[EvalCounter] = None,
) -> TwoStepResult:
    """Estimate up to ``k_sources`` polar locations from one snapshot block.

    Pipeline: subarray-smoothed covariance -> noise subspace -> one angular
    spectrum whose k tallest peaks give the angles -> one distance spectrum
    per angle.  ``per_ue_angular_rescan`` recomputes the (identical) angular
    spectrum once per source instead of once total; results match, only the
    evaluation count changes.

    A distance spectrum without an interior peak falls back to its grid
    argmax (counted in ``boundary_fallbacks``) so a far user at the edge of
    the search range still yields an estimate.
    """
    warnings: list[str] = []
    side = g.side
    n_d = side - c_r
    if n_d < 1:
        raise ValueError(f"c_r={c_r} leaves no subarray for a {side}x{side} array")
    if n_d * n_d < k_sources:
        raise ValueError(
            f"subarray size {n_d}x{n_d} cannot resolve {k_sources} sources"
        )
    snapshot_budget = block.n_pilots * (c_r + 1) ** 2
    if snapshot_budget < k_sources:
        warnings.append(
            f"snapshot budget L*T^2={snapshot_budget} is below the source count "
            f"{k_sources}; covariance rank may be deficient"
        )

    counter = counter if counter is not None else EvalCounter()
    cov = smoothed_covariance(block, c_r)
    un = noise_subspace(cov, k_sources)

    if per_ue_angular_rescan:
        angular_spectrum = None
        peaks: list[Peak] = []
        for k in range(k_sources):
            angular_spectrum = spectrum_2d_angular(un, angle_grid, g, counter)
            found = find_peaks(angular_spectrum, k_sources)
            if found.found > k:
                peaks.append(found.peaks[k])
        angular_peaks = PeakSet(peaks=tuple(peaks), requested=k_sources)
    else:
        angular_spectrum = spectrum_2d_angular(un, angle_grid, g, counter)
        angular_peaks = find_peaks(angular_spectrum, k_sources)

    if not angular_peaks.complete:
        warnings.append(
            f"only {angular_peaks.found} of {k_sources} angular peaks found"
        )

    locations: list[PolarLocation] = []
    dist_peaksets: list[PeakSet] = []
    dist_spectra: list[SpectrumGrid] = []
    fallbacks = 0
    for peak in angular_peaks.peaks:
        az, el = peak.coords
        spec_d = spectrum_1d_distance(un, az, el, distance_grid, g, counter)
        pset = find_peaks(spec_d, 1)
        if pset.found:
            d_hat = pset.peaks[0].coords[0]
        else:
            arg = int(np.argmax(spec_d.values))
            d_hat = float(distance_grid.axis_points()[0][arg])
            fallbacks += 1
        locations.append(PolarLocation(azimuth=az, elevation=el, distance=d_hat))
        dist_peaksets.append(pset)
        dist_spectra.append(spec_d)

    return TwoStepResult(
        locations=tuple(locations),
        angular_peaks=angular_peaks,
        distance_peaks=tuple(dist_peaksets),
        angular_spectrum=angular_spectrum,
        distance_spectra=tuple(dist_spectra),
        eval_count=counter.count,
        boundary_fallbacks=fallbacks,
        warnings=tuple(warnings),
    )
