"""Uniform planar array layout, coordinate transforms, and near-field range limits.

The array sits in the z=0 plane, centered on the origin, with sqrt(N) x sqrt(N)
square elements placed edge to edge.  Element (n, m) (1-based, n along x,
m along y) maps to flat index ``(n-1)*sqrt(N) + (m-1)``; every vector-valued
quantity in this package uses that row-major ordering.
"""

import math
from dataclasses import dataclass

import numpy as np

Point = tuple[float, float, float]


@dataclass(frozen=True)
class ArrayGeometry:
    """Square uniform planar array of ``n_antennas`` elements.

    Attributes:
        n_antennas: Total element count N (perfect square).
        element_diag: Diagonal length D of one square element, meters.
            Inter-element spacing along x and y is D/sqrt(2).
        wavelength: Carrier wavelength in meters.
        centers: (N, 3) element-center coordinates, row-major in (n, m).
    """

    n_antennas: int
    element_diag: float
    wavelength: float
    centers: np.ndarray

    @property
    def side(self) -> int:
        """Elements per row/column, sqrt(N)."""
        return math.isqrt(self.n_antennas)

    @property
    def spacing(self) -> float:
        """Inter-element spacing D/sqrt(2), meters."""
        return self.element_diag / math.sqrt(2.0)

    def index(self, n: int, m: int) -> int:
        """Flat index of element (n, m), both 1-based."""
        return (n - 1) * self.side + (m - 1)

    def subgrid_centers(self, n_d: int) -> np.ndarray:
        """Centers of the leading n_d x n_d block of elements, shape (n_d**2, 3)."""
        if not 1 <= n_d <= self.side:
            raise ValueError(f"subgrid side {n_d} outside [1, {self.side}]")
        grid = self.centers.reshape(self.side, self.side, 3)
        return grid[:n_d, :n_d, :].reshape(n_d * n_d, 3)


@dataclass(frozen=True)
class UeLocation:
    """Cartesian user location (meters); z > 0 puts the user in front of the array."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not self.z > 0:
            raise ValueError(f"UE must lie in front of the array plane, got z={self.z}")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


@dataclass(frozen=True)
class PolarLocation:
    """Polar user location: azimuth/elevation in radians, distance in meters."""

    azimuth: float
    elevation: float
    distance: float

    def __post_init__(self):
        if not self.distance > 0:
            raise ValueError(f"distance must be positive, got {self.distance}")
        half_pi = math.pi / 2
        if not (-half_pi < self.azimuth < half_pi and -half_pi < self.elevation < half_pi):
            raise ValueError(
                f"angles must lie in (-pi/2, pi/2), got azimuth={self.azimuth}, "
                f"elevation={self.elevation}"
            )


def build_geometry(n_antennas: int, element_diag: float, wavelength: float) -> ArrayGeometry:
    """Build the element-center layout for a square UPA.

    Args:
        n_antennas: Element count N; must be a perfect square >= 4.
        element_diag: Element diagonal D in meters.
        wavelength: Carrier wavelength in meters.

    Returns:
        ArrayGeometry with centers at
        ((n - (sqrt(N)+1)/2) * D/sqrt(2), (m - (sqrt(N)+1)/2) * D/sqrt(2), 0).
    """
    side = math.isqrt(int(n_antennas))
    if n_antennas < 4 or side * side != n_antennas:
        raise ValueError(f"n_antennas must be a perfect square >= 4, got {n_antennas}")
    if element_diag <= 0 or wavelength <= 0:
        raise ValueError("element_diag and wavelength must be positive")

    spacing = element_diag / math.sqrt(2.0)
    offsets = (np.arange(1, side + 1) - (side + 1) / 2.0) * spacing
    xs, ys = np.meshgrid(offsets, offsets, indexing="ij")  # n over x, m over y
    centers = np.column_stack([xs.ravel(), ys.ravel(), np.zeros(n_antennas)])
    return ArrayGeometry(
        n_antennas=int(n_antennas),
        element_diag=float(element_diag),
        wavelength=float(wavelength),
        centers=centers,
    )


def cart_to_polar(loc: UeLocation) -> PolarLocation:
    """Convert Cartesian (x, y, z) to (azimuth, elevation, distance).

    Inverse of :func:`polar_to_cart`; distance is the Euclidean norm.
    """
    d = math.sqrt(loc.x**2 + loc.y**2 + loc.z**2)
    if d <= 0:
        raise ValueError("location must be away from the origin")
    return PolarLocation(
        azimuth=math.atan2(loc.x, loc.z),
        elevation=math.asin(loc.y / d),
        distance=d,
    )


def polar_to_cart(p: PolarLocation) -> UeLocation:
    """Convert (azimuth, elevation, distance) to Cartesian (x, y, z).

    x = d cos(el) sin(az), y = d sin(el), z = d cos(el) cos(az).
    """
    cos_el = math.cos(p.elevation)
    return UeLocation(
        x=p.distance * cos_el * math.sin(p.azimuth),
        y=p.distance * math.sin(p.elevation),
        z=p.distance * cos_el * math.cos(p.azimuth),
    )


def fresnel_distance(p: PolarLocation, center: Point) -> float:
    """First-order expansion of the user-to-element distance.

    Returns d + (xc**2 + yc**2) / (2 d) - cos(el) sin(az) * xc - sin(el) * yc
    for an element centered at ``center`` = (xc, yc, 0).  Exact (returns d)
    when the element sits at the origin.
    """
    xc, yc = center[0], center[1]
    return (
        p.distance
        + (xc * xc + yc * yc) / (2.0 * p.distance)
        - math.cos(p.elevation) * math.sin(p.azimuth) * xc
        - math.sin(p.elevation) * yc
    )


def near_field_bounds(g: ArrayGeometry) -> tuple[float, float]:
    """Radiative near-field range limits (d_lower, d_upper) in meters.

    Lower limit is 2 * D * sqrt(N); upper limit is the Fraunhofer distance
    of the full aperture, 2 * (D * sqrt(N))**2 / wavelength.
    """
    root_n = math.sqrt(g.n_antennas)
    d_lower = 2.0 * g.element_diag * root_n
    d_upper = 2.0 * g.n_antennas * g.element_diag**2 / g.wavelength
    return d_lower, d_upper
