"""Connected components at conductance thresholds.

The largest component of the subgraph {b : omega_b >= alpha} stands in for
the infinite cluster C_infty (alpha = 0, meaning omega > 0) or the strong
component C_{infty,alpha}.  Weak components are the finite islands a walk
can explore between consecutive strong-component visits.
"""

from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _scipy_cc

from .field import ConductanceField, _passes
from .laws import p_c


class ClusterError(ValueError):
    pass


class UnionFind:
    """Array union-find with path halving and union by size."""

    def __init__(self, n: int):
        self.parent = np.arange(n, dtype=np.int64)
        self.size = np.ones(n, dtype=np.int64)

    def find(self, i: int) -> int:
        p = self.parent
        while p[i] != i:
            p[i] = p[p[i]]
            i = p[i]
        return int(i)

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]

    def connected(self, a: int, b: int) -> bool:
        return self.find(a) == self.find(b)


@dataclass
class ClusterLabeling:
    """Per-site component ids at a threshold; -1 marks sites with no
    incident bond passing the threshold."""

    field: ConductanceField
    alpha: float
    labels: np.ndarray  # box-shaped int32, -1 = none
    sizes: np.ndarray  # per component id
    largest: int
    touches_boundary: np.ndarray  # bool per component id

    @property
    def largest_size(self) -> int:
        return int(self.sizes[self.largest]) if self.sizes.size else 0

    def second_largest_size(self) -> int:
        if self.sizes.size < 2:
            return 0
        return int(np.sort(self.sizes)[-2])

    def label_of(self, x) -> int:
        if not self.field.in_box(x):
            raise ClusterError(f"site {tuple(x)} outside the box")
        return int(self.labels[self.field._index(x)])

    def is_strong(self, x) -> bool:
        return self.sizes.size > 0 and self.label_of(x) == self.largest

    def strong_mask(self) -> np.ndarray:
        return self.labels == self.largest

    def strong_sites(self):
        idx = np.argwhere(self.strong_mask())
        L = self.field.L
        return [tuple(int(c) - L for c in row) for row in idx]

    def open_neighbors(self, x):
        """Neighbors of x across bonds passing this labeling's threshold."""
        for y, w in self.field.incident_bonds(x):
            if _passes(np.float64(w), self.alpha):
                yield y

    def histogram_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["alpha", "comp_id", "size", "touches_boundary"])
            for cid in range(self.sizes.size):
                writer.writerow(
                    [
                        repr(float(self.alpha)),
                        cid,
                        int(self.sizes[cid]),
                        int(self.touches_boundary[cid]),
                    ]
                )


def components(field: ConductanceField, alpha: float) -> ClusterLabeling:
    """Label connected components of {b : omega_b >= alpha} (omega > 0 when
    alpha = 0).  Sites with no passing incident bond get label -1."""
    if not 0.0 <= alpha <= 1.0:
        raise ClusterError("alpha must lie in [0, 1]")
    shape = (field.side,) * field.d
    n = field.n_sites
    idx_dtype = np.int32 if n < 2**31 else np.int64
    flat = np.arange(n, dtype=idx_dtype).reshape(shape)
    rows, cols = [], []
    covered = np.zeros(shape, dtype=bool)
    for a in range(field.d):
        mask = _passes(field.edges[a], alpha)
        lo = tuple(
            slice(0, field.side - 1) if j == a else slice(None)
            for j in range(field.d)
        )
        hi = tuple(
            slice(1, field.side) if j == a else slice(None) for j in range(field.d)
        )
        rows.append(flat[lo][mask])
        cols.append(flat[hi][mask])
        covered[lo] |= mask
        covered[hi] |= mask
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=idx_dtype)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=idx_dtype)
    graph = coo_matrix(
        (np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n)
    )
    _, raw = _scipy_cc(graph, directed=False)
    raw = raw.astype(np.int64)
    del graph, rows, cols
    covered_flat = covered.reshape(-1)
    labels = np.full(n, -1, dtype=np.int64)
    if covered_flat.any():
        _, dense = np.unique(raw[covered_flat], return_inverse=True)
        labels[covered_flat] = dense
    n_comp = int(labels.max()) + 1 if covered_flat.any() else 0
    sizes = np.bincount(labels[labels >= 0], minlength=n_comp)
    largest = int(np.argmax(sizes)) if n_comp else -1
    touches = np.zeros(n_comp, dtype=bool)
    if n_comp:
        surface = np.zeros(shape, dtype=bool)
        for j in range(field.d):
            face0 = tuple(0 if k == j else slice(None) for k in range(field.d))
            face1 = tuple(
                field.side - 1 if k == j else slice(None) for k in range(field.d)
            )
            surface[face0] = True
            surface[face1] = True
        lab_surf = labels.reshape(shape)[surface]
        touches[np.unique(lab_surf[lab_surf >= 0])] = True
    return ClusterLabeling(
        field, float(alpha), labels.reshape(shape).astype(np.int32), sizes, largest, touches
    )


@dataclass
class WeakComponent:
    """The region the walk can explore between strong-component visits."""

    anchor: tuple
    g_sites: frozenset  # G_x: anchor + weak sites + their strong boundary
    g_prime: frozenset  # G'_x: the weak sites themselves
    f_components: tuple  # the constituent weak clusters F_y
    f_diameters: tuple  # l_infinity diameter of each F_y

    @property
    def size(self) -> int:
        return len(self.g_sites)

    @property
    def max_diameter(self) -> int:
        return max(self.f_diameters) if self.f_diameters else 0


def weak_component(
    field: ConductanceField, labeling: ClusterLabeling, x
) -> WeakComponent:
    """G_x: the anchor, all weak-cluster sites reachable from x over
    positive bonds without touching the strong component, plus the strong
    neighbors of those weak sites.  G_x = {x} when x has no weak neighbor."""
    x = tuple(int(c) for c in x)
    if not labeling.is_strong(x):
        raise ClusterError(f"site {x} is not in the strong component")
    strong = labeling.strong_mask()
    L = field.L

    def is_strong(site):
        return bool(strong[tuple(c + L for c in site)])

    seeds = [
        y for y, w in field.incident_bonds(x) if w > 0.0 and not is_strong(y)
    ]
    visited = set()
    f_comps = []
    f_diams = []
    for seed_site in seeds:
        if seed_site in visited:
            continue
        comp = set()
        queue = deque([seed_site])
        visited.add(seed_site)
        while queue:
            s = queue.popleft()
            comp.add(s)
            for nbr, w in field.incident_bonds(s):
                if w > 0.0 and not is_strong(nbr) and nbr not in visited:
                    visited.add(nbr)
                    queue.append(nbr)
        f_comps.append(frozenset(comp))
        lo = [min(c[j] for c in comp) for j in range(field.d)]
        hi = [max(c[j] for c in comp) for j in range(field.d)]
        f_diams.append(max(h - l for h, l in zip(hi, lo)))
    g_prime = frozenset().union(*f_comps) if f_comps else frozenset()
    boundary = set()
    for w_site in g_prime:
        for nbr, w in field.incident_bonds(w_site):
            if w > 0.0 and is_strong(nbr):
                boundary.add(nbr)
    g_sites = frozenset({x}) | g_prime | boundary
    return WeakComponent(x, g_sites, g_prime, tuple(f_comps), tuple(f_diams))


def chemical_distances_from(labeling: ClusterLabeling, x) -> dict:
    """Hop distance from x to every site of its component (BFS)."""
    x = tuple(int(c) for c in x)
    if labeling.label_of(x) < 0:
        raise ClusterError(f"site {x} has no component at alpha={labeling.alpha}")
    dist = {x: 0}
    queue = deque([x])
    while queue:
        s = queue.popleft()
        for nbr in labeling.open_neighbors(s):
            if nbr not in dist:
                dist[nbr] = dist[s] + 1
                queue.append(nbr)
    return dist


def chemical_distance(labeling: ClusterLabeling, x, y) -> int:
    """Shortest hop count between x and y within their component."""
    x = tuple(int(c) for c in x)
    y = tuple(int(c) for c in y)
    if x == y:
        return 0
    la, lb = labeling.label_of(x), labeling.label_of(y)
    if la < 0 or lb < 0 or la != lb:
        raise ClusterError(f"{x} and {y} are disconnected at alpha={labeling.alpha}")
    dist = {x: 0}
    queue = deque([x])
    while queue:
        s = queue.popleft()
        for nbr in labeling.open_neighbors(s):
            if nbr == y:
                return dist[s] + 1
            if nbr not in dist:
                dist[nbr] = dist[s] + 1
                queue.append(nbr)
    raise ClusterError(f"{x} and {y} share a label but BFS found no path")


def select_alpha(field: ConductanceField, weak_mass_max: float = 0.05) -> float:
    """Smallest support value alpha with empirical P(omega >= alpha) > p_c(d)
    and empirical P(0 < omega < alpha) <= weak_mass_max.  Callers may
    override freely; this is a convenience grid search."""
    values = np.concatenate([e.reshape(-1) for e in field.edges])
    total = values.size
    candidates = sorted(v for v in set(field.law.values) if v > 0.0)
    threshold = p_c(field.d)
    for alpha in candidates:
        frac_ge = float(np.count_nonzero(values >= alpha)) / total
        frac_weak = float(np.count_nonzero((values > 0.0) & (values < alpha))) / total
        if frac_ge > threshold and frac_weak <= weak_mass_max:
            return float(alpha)
    raise ClusterError("no support value satisfies the strong-component conditions")
