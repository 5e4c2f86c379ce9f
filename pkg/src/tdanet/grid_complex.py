"""Grid complex construction for 2-d intensity images.

An image is treated as a piecewise-linear function on a 1-d simplicial
complex: one vertex per pixel, edges between 8-neighbors, each edge valued
at the maximum of its two endpoint pixels. Vertices sorted by
(value, row-major index) define the lower-star filtration consumed by the
persistence module.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "ImageTensor",
    "GridEdge",
    "LowerStarFiltration",
    "build_grid_edges",
    "edge_filtration_value",
    "build_lower_star_filtration",
    "grid_edge_count",
]

# 8-neighborhood offsets, fixed order for determinism
_NEIGHBOR_OFFSETS = (
    (-1, -1), (-1, 0), (-1, 1),
    (0, -1), (0, 1),
    (1, -1), (1, 0), (1, 1),
)


@dataclass(frozen=True)
class ImageTensor:
    """A 2-d grid of real intensities.

    `values` is a (height, width) float64 array; intensities are unitless
    and must be finite.
    """

    values: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(np.asarray(self.values, dtype=np.float64))
        if arr.ndim != 2:
            raise ValueError(f"image must be 2-d, got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"image must have positive dimensions, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("image values must be finite")
        object.__setattr__(self, "values", arr)

    @property
    def height(self) -> int:
        return self.values.shape[0]

    @property
    def width(self) -> int:
        return self.values.shape[1]

    @property
    def flat(self) -> np.ndarray:
        """Row-major flattened view of the intensities."""
        return self.values.ravel()

    def value_at(self, index: int) -> float:
        """Intensity at a row-major linear vertex index."""
        return float(self.flat[index])


@dataclass(frozen=True, order=True)
class GridEdge:
    """An edge of the grid complex with its filtration value.

    Canonical orientation u < v; endpoints are Chebyshev-distance-1
    neighbors; filt_value = max of the two endpoint intensities.
    """

    u: int
    v: int
    filt_value: float


@dataclass
class LowerStarFiltration:
    """Implicit lower-star filtration of an image's grid complex.

    The nested subcomplex sequence is realized as the sorted processing
    order `vertex_order` over `vertex_values`; the edge list is generated
    on demand rather than stored per subcomplex.
    """

    height: int
    width: int
    vertex_values: np.ndarray  # aligned to original linear indices
    vertex_order: np.ndarray  # permutation sorted by (value, index)
    _edges: list[GridEdge] | None = field(default=None, repr=False)

    @property
    def edges(self) -> list[GridEdge]:
        if self._edges is None:
            image = ImageTensor(self.vertex_values.reshape(self.height, self.width))
            self._edges = build_grid_edges(image)
        return self._edges

    @property
    def n_vertices(self) -> int:
        return self.height * self.width


def grid_edge_count(height: int, width: int) -> int:
    """Number of 8-neighbor edges in an H x W grid."""
    h, w = height, width
    return h * (w - 1) + w * (h - 1) + 2 * (h - 1) * (w - 1)


def edge_filtration_value(image: ImageTensor, u: int, v: int) -> float:
    """Filtration value of the edge (u, v): max of the endpoint intensities."""
    flat = image.flat
    n = flat.size
    if not (0 <= u < n and 0 <= v < n):
        raise IndexError(f"vertex index out of range: u={u}, v={v}, n={n}")
    return float(max(flat[u], flat[v]))


def build_grid_edges(image: ImageTensor) -> list[GridEdge]:
    """Every unordered 8-neighbor pair exactly once, with max-valued edges.

    Boundary pixels simply have fewer neighbors.
    """
    h, w = image.height, image.width
    vals = image.values
    edges: list[GridEdge] = []
    for r in range(h):
        for c in range(w):
            u = r * w + c
            fu = vals[r, c]
            for dr, dc in _NEIGHBOR_OFFSETS:
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w:
                    v = rr * w + cc
                    if u < v:
                        edges.append(GridEdge(u, v, float(max(fu, vals[rr, cc]))))
    return edges


def build_lower_star_filtration(image: ImageTensor) -> LowerStarFiltration:
    """Sort vertices by (value ascending, linear index ascending).

    Stable sort breaks ties by row-major index, making all downstream
    output deterministic on real images with repeated values.
    """
    flat = image.flat.copy()
    order = np.argsort(flat, kind="stable")
    return LowerStarFiltration(
        height=image.height,
        width=image.width,
        vertex_values=flat,
        vertex_order=order,
    )
