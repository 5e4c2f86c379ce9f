"""0-dimensional persistence of lower-star filtrations.

Union-find with path compression and union by rank; the elder rule is
applied on top of rank by carrying each root's (birth value, birth vertex)
record and letting the earlier-born component survive every merge. The
hot kernel is numba-compiled so 128x128 images stay in the
hundreds-per-second range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

from .grid_complex import ImageTensor, LowerStarFiltration, build_lower_star_filtration

__all__ = [
    "PersistentBar",
    "PersistenceDiagram",
    "compute_pd0",
    "betti0_at",
    "filter_bars",
    "diagram_for_image",
    "export_diagram",
]


@dataclass(frozen=True)
class PersistentBar:
    """One feature of the diagram: a component's birth and death f-values.

    The single essential bar never dies by merging; its death is set to
    the global maximum intensity.
    """

    birth: float
    death: float
    essential: bool
    birth_vertex: int

    @property
    def persistence(self) -> float:
        return self.death - self.birth


@dataclass(frozen=True)
class PersistenceDiagram:
    """Multiset of bars plus the image's value range.

    With zero-persistence bars retained there are exactly H*W bars (every
    vertex births a component; the V-1 merges kill V-1 of them) and
    exactly one essential bar.
    """

    bars: tuple[PersistentBar, ...]
    global_min: float
    global_max: float

    @property
    def essential_bar(self) -> PersistentBar:
        for bar in self.bars:
            if bar.essential:
                return bar
        raise ValueError("diagram has no essential bar")


@njit(cache=True)
def _uf_find(parent, x):
    root = x
    while parent[root] != root:
        root = parent[root]
    # path compression
    while parent[x] != root:
        parent[x], x = root, parent[x]
    return root


@njit(cache=True)
def _pd0_kernel(values, height, width):
    """Elder-rule union-find over the lower-star processing order.

    Returns (births, deaths, birth_vertices, essential_index) with one
    entry per vertex; zero-persistence bars are retained.
    """
    n = height * width
    order = np.argsort(values, kind="mergesort")  # stable: ties by index
    pos = np.empty(n, np.int64)
    for i in range(n):
        pos[order[i]] = i

    parent = np.arange(n)
    rank = np.zeros(n, np.int8)
    comp_birth = values.copy()  # per-root elder birth record
    comp_bvert = np.arange(n)

    births = np.empty(n, np.float64)
    deaths = np.empty(n, np.float64)
    bverts = np.empty(n, np.int64)
    nbars = 0

    for i in range(n):
        v = order[i]
        fv = values[v]
        r = v // width
        c = v % width
        for dr in range(-1, 2):
            rr = r + dr
            if rr < 0 or rr >= height:
                continue
            for dc in range(-1, 2):
                if dr == 0 and dc == 0:
                    continue
                cc = c + dc
                if cc < 0 or cc >= width:
                    continue
                u = rr * width + cc
                if pos[u] >= i:
                    continue  # lower-star edge enters with its later vertex
                ru = _uf_find(parent, u)
                rv = _uf_find(parent, v)
                if ru == rv:
                    continue
                # elder rule: larger (birth, birth_vertex) dies
                if comp_birth[ru] > comp_birth[rv] or (
                    comp_birth[ru] == comp_birth[rv] and comp_bvert[ru] > comp_bvert[rv]
                ):
                    younger, elder = ru, rv
                else:
                    younger, elder = rv, ru
                births[nbars] = comp_birth[younger]
                deaths[nbars] = fv
                bverts[nbars] = comp_bvert[younger]
                nbars += 1
                # union by rank; winner carries the elder's record
                if rank[ru] < rank[rv]:
                    ru, rv = rv, ru
                parent[rv] = ru
                if rank[ru] == rank[rv]:
                    rank[ru] += 1
                comp_birth[ru] = comp_birth[elder]
                comp_bvert[ru] = comp_bvert[elder]

    root = _uf_find(parent, 0)
    births[nbars] = comp_birth[root]
    deaths[nbars] = values.max()
    bverts[nbars] = comp_bvert[root]
    return births, deaths, bverts, nbars


def _pd0_arrays(values: np.ndarray, height: int, width: int):
    vals = np.ascontiguousarray(values, dtype=np.float64).ravel()
    return _pd0_kernel(vals, height, width)


def compute_pd0(filtration: LowerStarFiltration) -> PersistenceDiagram:
    """Persistence diagram PD_0 of a lower-star filtration.

    Each vertex births a component at its f-value; every edge whose both
    endpoints are present merges two components, killing the younger
    (larger birth, ties by larger birth vertex) at the current f-value.
    The surviving component becomes the essential bar, dying at the
    global maximum.
    """
    births, deaths, bverts, ess = _pd0_arrays(
        filtration.vertex_values, filtration.height, filtration.width
    )
    bars = tuple(
        PersistentBar(float(births[i]), float(deaths[i]), i == ess, int(bverts[i]))
        for i in range(len(births))
    )
    return PersistenceDiagram(
        bars=bars,
        global_min=float(filtration.vertex_values.min()),
        global_max=float(filtration.vertex_values.max()),
    )


def diagram_for_image(image: ImageTensor) -> PersistenceDiagram:
    """Convenience composition: filtration then PD_0."""
    return compute_pd0(build_lower_star_filtration(image))


def betti0_at(pd: PersistenceDiagram, t: float) -> int:
    """Number of bars alive at threshold t.

    Non-essential bars live on the half-open [birth, death); the essential
    bar is alive for every t >= its birth. This is the unique convention
    matching sublevel-set component counts at all thresholds.
    """
    count = 0
    for bar in pd.bars:
        if bar.essential:
            if t >= bar.birth:
                count += 1
        elif bar.birth <= t < bar.death:
            count += 1
    return count


def filter_bars(pd: PersistenceDiagram, min_persistence: float) -> PersistenceDiagram:
    """Drop bars with persistence <= min_persistence; keep the essential bar."""
    if min_persistence < 0:
        raise ValueError(f"min_persistence must be >= 0, got {min_persistence}")
    kept = tuple(
        bar
        for bar in pd.bars
        if bar.essential or bar.persistence > min_persistence
    )
    return PersistenceDiagram(kept, pd.global_min, pd.global_max)


def export_diagram(pd: PersistenceDiagram) -> str:
    """Text export: one `birth,death,essential_flag` line, sorted by (birth, death)."""
    rows = sorted((bar.birth, bar.death, int(bar.essential)) for bar in pd.bars)
    return "".join(f"{b!r},{d!r},{e}\n" for b, d, e in rows)
