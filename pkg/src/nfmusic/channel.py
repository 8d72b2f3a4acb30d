"""Near-field channel coefficients and array response vectors.

Three response models are provided:

* :func:`array_response` — exact spherical-wave model with per-element
  amplitude, used to synthesize data and to reconstruct channels.
* :func:`farfield_response` — unit-modulus planar-wave model, used by the
  angular spectral search.
* :func:`polar_response` — unit-modulus model whose phase follows the
  first-order distance expansion, used by the distance spectral search.

:func:`channel_exact_integral` integrates the incident field over the element
aperture and serves as a numerical cross-check of the closed-form coefficient.
"""

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

import numpy as np

from .geometry import ArrayGeometry, UeLocation


@dataclass(frozen=True)
class ChannelMatrix:
    """N x K matrix whose column k is an array response for one user.

    Attributes:
        entries: (N, K) complex matrix.
        geometry: Array the responses were evaluated on.
        provenance: Per-column tag, each "true" or "estimated".
    """

    entries: np.ndarray
    geometry: ArrayGeometry
    provenance: tuple[str, ...]

    def __post_init__(self):
        if self.entries.ndim != 2:
            raise ValueError("channel matrix must be 2-D")
        if self.entries.shape[0] != self.geometry.n_antennas:
            raise ValueError("row count must equal the antenna count")
        if len(self.provenance) != self.entries.shape[1]:
            raise ValueError("one provenance tag per column required")
        if not np.all(np.isfinite(self.entries)):
            raise ValueError("channel entries must be finite")

    @property
    def n_users(self) -> int:
        return self.entries.shape[1]


def _amplitude(g: ArrayGeometry, loc: UeLocation, cx: np.ndarray, r: np.ndarray) -> np.ndarray:
    # Element gain depends on the x offset and height only, not on the y offset.
    return (
        g.element_diag
        / math.sqrt(8.0 * math.pi)
        * np.sqrt(loc.z * ((cx - loc.x) ** 2 + loc.z**2))
        / r**2.5
    )


def channel_coefficient(g: ArrayGeometry, loc: UeLocation, n: int, m: int) -> complex:
    """Closed-form channel from a user at ``loc`` to element (n, m), 1-based."""
    cx, cy, _ = g.centers[g.index(n, m)]
    r = math.sqrt((cx - loc.x) ** 2 + (cy - loc.y) ** 2 + loc.z**2)
    amp = _amplitude(g, loc, np.asarray(cx), np.asarray(r))
    return complex(amp * np.exp(-2j * math.pi * r / g.wavelength))


def array_response(g: ArrayGeometry, loc: UeLocation) -> np.ndarray:
    """Exact array response vector of length N, row-major element order."""
    diff = g.centers - np.array([loc.x, loc.y, 0.0])
    r = np.sqrt(diff[:, 0] ** 2 + diff[:, 1] ** 2 + loc.z**2)
    amp = _amplitude(g, loc, g.centers[:, 0], r)
    return amp * np.exp(-2j * math.pi * r / g.wavelength)


def _steering_centers(g: ArrayGeometry, n_d: Optional[int]) -> np.ndarray:
    if n_d is None:
        return g.centers
    return g.subgrid_centers(n_d)


def farfield_response(
    g: ArrayGeometry, azimuth: float, elevation: float, n_d: Optional[int] = None
) -> np.ndarray:
    """Planar-wave response, unit modulus per entry.

    Entry (n, m) is exp(+i (2 pi / wavelength) (cos(el) sin(az) x_n + sin(el) y_m)).
    With ``n_d`` given, only the leading n_d x n_d element block is used.
    """
    centers = _steering_centers(g, n_d)
    k = 2.0 * math.pi / g.wavelength
    u = math.cos(elevation) * math.sin(azimuth)
    v = math.sin(elevation)
    return np.exp(1j * k * (u * centers[:, 0] + v * centers[:, 1]))


def polar_response(
    g: ArrayGeometry,
    azimuth: float,
    elevation: float,
    distance: float,
    n_d: Optional[int] = None,
) -> np.ndarray:
    """Unit-modulus spherical-phase response parameterized in polar form.

    Phase per element is -(2 pi / wavelength) times the polar-form distance
    sqrt(d**2 + x**2 + y**2 - 2 d (cos(el) sin(az) x + sin(el) y)), so the
    vector is a literal phase-only version of the exact response; only the
    per-element amplitude is dropped.  The common distance-dependent phase is
    kept (spectral quotients are invariant to it).
    """
    if distance <= 0:
        raise ValueError("distance must be positive")
    centers = _steering_centers(g, n_d)
    x, y = centers[:, 0], centers[:, 1]
    u = math.cos(elevation) * math.sin(azimuth)
    v = math.sin(elevation)
    r = np.sqrt(distance**2 + x * x + y * y - 2.0 * distance * (u * x + v * y))
    return np.exp(-2j * math.pi * r / g.wavelength)


def channel_matrix(
    g: ArrayGeometry, locations: Sequence[UeLocation], provenance: str = "true"
) -> ChannelMatrix:
    """Stack exact array responses for several users into a channel matrix."""
    if not locations:
        raise ValueError("at least one user location required")
    cols = np.column_stack([array_response(g, loc) for loc in locations])
    return ChannelMatrix(entries=cols, geometry=g, provenance=(provenance,) * len(locations))


class QuadratureResult(NamedTuple):
    value: complex
    converged: bool
    rel_change: float


def channel_exact_integral(
    g: ArrayGeometry, loc: UeLocation, n: int, m: int, quad_order: int = 16
) -> QuadratureResult:
    """Aperture-integral channel to element (n, m) via Gauss-Legendre quadrature.

    Integrates the normalized incident field over the square element area
    (side D/sqrt(2)) with a tensor-product rule of ``quad_order`` nodes per
    axis.  ``converged`` is False when doubling the order moves the result
    by more than 1e-6 relative.
    """
    if quad_order < 2:
        raise ValueError("quad_order must be >= 2")

    def integrate(order: int) -> complex:
        nodes, weights = np.polynomial.legendre.leggauss(order)
        half = g.element_diag / math.sqrt(8.0)  # half of the element side
        cx, cy, _ = g.centers[g.index(n, m)]
        xs = cx + half * nodes
        ys = cy + half * nodes
        xg, yg = np.meshgrid(xs, ys, indexing="ij")
        r = np.sqrt((xg - loc.x) ** 2 + (yg - loc.y) ** 2 + loc.z**2)
        field = (
            1.0
            / math.sqrt(4.0 * math.pi)
            * np.sqrt(loc.z * ((xg - loc.x) ** 2 + loc.z**2))
            / r**2.5
            * np.exp(-2j * math.pi * r / g.wavelength)
        )
        w2d = np.outer(weights, weights) * half * half
        integral = np.sum(w2d * field)
        return complex(math.sqrt(2.0) / g.element_diag * integral)

    coarse = integrate(quad_order)
    fine = integrate(2 * quad_order)
    rel = abs(fine - coarse) / max(abs(fine), 1e-300)
    return QuadratureResult(value=fine, converged=rel <= 1e-6, rel_change=rel)
