"""Trap census, hitting probabilities and the trap strategy bound.

A trap anchored at x along a lattice direction is a strong bond (y, z),
y = x + e, z = x + 2e, reachable only across weak bonds: every other bond
at y or z is at most the weak scale.  The walk pays two weak crossings to
idle on (y, z), which floors the return probability near 1/n^2.
"""

from __future__ import annotations

import csv
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from . import rng
from .cluster import ClusterLabeling, ClusterError, chemical_distances_from, components
from .field import ConductanceField, sample_occupancy
from .laws import two_value as _two_value_law


class TrapError(ValueError):
    pass


@dataclass
class TrapRecord:
    anchor: tuple
    axis: int
    sign: int
    y: tuple
    z: tuple
    weak_scale: float
    in_largest: bool
    chem_dist: int = None

    def distance(self) -> float:
        return math.sqrt(sum(c * c for c in self.anchor))


def _other_bond_vectors(d, a, s):
    """Read vectors into per-axis edge arrays for every bond at y or z
    except the (y, z) bond itself.  Yields (b, vec)."""
    e_a = np.zeros(d, dtype=int)
    e_a[a] = 1
    for shift_mult in (s, 2 * s):
        site_shift = shift_mult * e_a
        for b in range(d):
            for t in (1, -1):
                # the (y,z) bond is direction +s at y and -s at z
                if b == a and (
                    (shift_mult == s and t == s) or (shift_mult == 2 * s and t == -s)
                ):
                    continue
                vec = site_shift.copy()
                if t < 0:
                    vec[b] -= 1
                yield b, tuple(int(v) for v in vec)


def _yz_vector(d, a, s):
    """Read vector for the (y, z) bond into the axis-a edge array."""
    return tuple((s if s > 0 else -2) if j == a else 0 for j in range(d))


def _trap_masks(edge_arrays, d, shape, yz_test, weak_test):
    """Yield ((axis, sign), window_lo, mask) for the trap pattern.

    All anchors outside the yielded window fail the pattern (some bond at
    y or z would leave the box).  Masks are computed one orientation at a
    time on the valid window only, which keeps peak memory at two
    window-sized temporaries.
    """
    for a in range(d):
        for s in (1, -1):
            conds = [(a, _yz_vector(d, a, s))] + list(_other_bond_vectors(d, a, s))
            lo = [0] * d
            hi = [shape[j] for j in range(d)]
            for b, vec in conds:
                for j in range(d):
                    lo[j] = max(lo[j], -vec[j])
                    hi[j] = min(hi[j], edge_arrays[b].shape[j] - vec[j])
            if any(h <= l for l, h in zip(lo, hi)):
                continue

            def view(b, vec):
                sl = tuple(
                    slice(lo[j] + vec[j], hi[j] + vec[j]) for j in range(d)
                )
                return edge_arrays[b][sl]

            b0, vec0 = conds[0]
            ok = yz_test(view(b0, vec0))
            for b, vec in conds[1:]:
                ok &= weak_test(view(b, vec))
            yield (a, s), tuple(lo), ok


def detect_traps(
    field: ConductanceField,
    labeling: ClusterLabeling,
    weak_max: float,
    connect_box_side: int = None,
    with_chem_dist: bool = False,
):
    """Scan all sites and the 2d axis orientations for trap triples with
    weak scale <= weak_max and the anchor in the largest cluster.

    `connect_box_side` additionally requires the anchor to be connected to
    the boundary of the box of that side centered at it by unit bonds
    (checked by BFS), the local-connectivity variant of the pattern event.
    """
    if not 0.0 < weak_max < 1.0:
        raise TrapError("weak_max must lie in (0, 1)")
    d, L = field.d, field.L
    shape = (field.side,) * d

    def yz_test(vals):
        return vals == 1.0

    def weak_test(vals):
        return vals <= weak_max

    chem = None
    origin = (0,) * d
    if with_chem_dist and labeling.is_strong(origin):
        chem = chemical_distances_from(labeling, origin)
    records = []
    for (a, s), lo, mask in _trap_masks(field.edges, d, shape, yz_test, weak_test):
        for idx in np.argwhere(mask):
            x = tuple(int(c) + o - L for c, o in zip(idx, lo))
            y = tuple(c + (s if j == a else 0) for j, c in enumerate(x))
            z = tuple(c + (2 * s if j == a else 0) for j, c in enumerate(x))
            in_largest = labeling.is_strong(x)
            if not in_largest:
                continue
            if connect_box_side is not None and not _connected_to_box_boundary(
                field, x, connect_box_side
            ):
                continue
            scale = max(
                (w for site in (y, z) for nbr, w in field.incident_bonds(site)
                 if not (set((site, nbr)) == set((y, z)))),
                default=0.0,
            )
            records.append(
                TrapRecord(
                    anchor=x,
                    axis=a,
                    sign=s,
                    y=y,
                    z=z,
                    weak_scale=float(scale),
                    in_largest=True,
                    chem_dist=chem.get(x) if chem is not None else None,
                )
            )
    records.sort(key=lambda r: (r.anchor, r.axis, r.sign))
    return records


def an_box_side(ell: float) -> int:
    """Connectivity box side (log ell)^2, rounded up to the next odd int."""
    side = math.ceil(math.log(ell) ** 2)
    return side if side % 2 == 1 else side + 1


def _connected_to_box_boundary(field, x, side):
    """BFS over unit bonds from x within the centered box of given side."""
    half = (side - 1) // 2
    target = half

    def within(s):
        return all(abs(a - b) <= half for a, b in zip(s, x)) and field.in_box(s)

    seen = {x}
    queue = deque([x])
    while queue:
        s = queue.popleft()
        if max(abs(a - b) for a, b in zip(s, x)) == target:
            return True
        for nbr, w in field.incident_bonds(s):
            if w == 1.0 and within(nbr) and nbr not in seen:
                seen.add(nbr)
                queue.append(nbr)
    return False


def census_two_value(
    d: int,
    L: int,
    p: float,
    seed: int,
    member_threshold: int = 1000,
    membership: str = "reach",
) -> list:
    """Memory-lean trap census for the two-value environment: only the
    occupancy pattern (omega == 1) matters, so the scan runs on boolean
    per-axis arrays without materializing float conductances.

    membership="reach": anchor membership in the giant cluster is certified
    by BFS with early exit once the component reaches `member_threshold`
    sites (cheap when anchors are rare and the second-largest cluster is
    far smaller).  membership="exact": one global component labeling, the
    right choice when anchors are dense but the box fits in memory.
    """
    law = _two_value_law(p, 2)  # occupancy only; the weak value is irrelevant
    occ = sample_occupancy(d, L, law, seed)
    shape = (2 * L + 1,) * d
    largest_mask = None
    if membership == "exact":
        largest_mask = _occ_largest_mask(occ, shape)
    elif membership != "reach":
        raise TrapError(f"unknown membership mode {membership!r}")

    def yz_test(vals):
        return vals.copy()

    def weak_test(vals):
        return ~vals

    records = []
    for (a, s), lo, mask in _trap_masks(occ, d, shape, yz_test, weak_test):
        for idx in np.argwhere(mask):
            x = tuple(int(c) + o - L for c, o in zip(idx, lo))
            if largest_mask is not None:
                if not largest_mask[tuple(c + L for c in x)]:
                    continue
            elif not _occ_component_reaches(occ, x, L, member_threshold):
                continue
            y = tuple(c + (s if j == a else 0) for j, c in enumerate(x))
            z = tuple(c + (2 * s if j == a else 0) for j, c in enumerate(x))
            records.append(
                TrapRecord(
                    anchor=x, axis=a, sign=s, y=y, z=z,
                    weak_scale=0.0, in_largest=True,
                )
            )
    records.sort(key=lambda r: (r.anchor, r.axis, r.sign))
    return records


def _occ_largest_mask(occ, shape):
    """Boolean mask of the largest occupied cluster."""
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import connected_components as _scipy_cc

    d = len(shape)
    n = int(np.prod(shape))
    idx_dtype = np.int32 if n < 2**31 else np.int64
    flat = np.arange(n, dtype=idx_dtype).reshape(shape)
    rows, cols = [], []
    for a in range(d):
        lo = tuple(slice(0, shape[j] - 1) if j == a else slice(None) for j in range(d))
        hi = tuple(slice(1, shape[j]) if j == a else slice(None) for j in range(d))
        rows.append(flat[lo][occ[a]])
        cols.append(flat[hi][occ[a]])
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    _, labels = _scipy_cc(graph, directed=False)
    counts = np.bincount(labels)
    return (labels == int(np.argmax(counts))).reshape(shape)


def _occ_component_reaches(occ, x, L, threshold):
    """True when the occupied cluster of x reaches `threshold` sites."""
    d = len(occ)
    start = tuple(c + L for c in x)
    side = 2 * L + 1
    seen = {start}
    queue = deque([start])
    while queue:
        if len(seen) >= threshold:
            return True
        s = queue.popleft()
        for a in range(d):
            for t in (1, -1):
                if t > 0:
                    if s[a] >= side - 1 or not occ[a][s]:
                        continue
                    nbr = s[:a] + (s[a] + 1,) + s[a + 1 :]
                else:
                    if s[a] <= 0:
                        continue
                    prev = s[:a] + (s[a] - 1,) + s[a + 1 :]
                    if not occ[a][prev]:
                        continue
                    nbr = prev
                if nbr not in seen:
                    seen.add(nbr)
                    queue.append(nbr)
    return len(seen) >= threshold


def trap_sum(traps, n: int, d: int) -> float:
    """Sum over trap anchors with |x| <= sqrt(n) of |x|^{-(2d-4)}; an
    anchor at the origin (|x| < 1) contributes weight 1."""
    radius = math.sqrt(n)
    total = 0.0
    exponent = 2 * d - 4
    for t in traps:
        r = t.distance()
        if r > radius:
            continue
        total += 1.0 if r < 1.0 else r**-exponent
    return total


def hitting_prob(
    field: ConductanceField, target, n: int, walkers: int, seed: int
) -> tuple:
    """Monte Carlo first-passage: P(S_target <= n) for the walk from the
    origin, with binomial stderr."""
    from .kernel import _walk_tables, _advance

    origin = (0,) * field.d
    target = tuple(int(c) for c in target)
    lab = components(field, 0.0)
    la, lb = lab.label_of(origin), lab.label_of(target)
    if la < 0 or la != lb:
        raise ClusterError(f"origin and {target} are in different clusters")
    if target == origin:
        return 1.0, 0.0
    cum, offsets, src, flat_pi, shape, lo = _walk_tables(field, origin, n)
    tgt = int(np.ravel_multi_index([c - l for c, l in zip(target, lo)], shape))
    pos = np.full(walkers, src, dtype=np.int64)
    hit = np.zeros(walkers, dtype=bool)
    widx = np.arange(walkers, dtype=np.int64)
    for t in range(1, n + 1):
        u = rng.uniform(seed, rng.TAG_WALK, widx, t)
        pos = _advance(pos, cum, offsets, u)
        hit |= pos == tgt
        if hit.all():
            break
    est = float(np.count_nonzero(hit)) / walkers
    stderr = math.sqrt(est * (1.0 - est) / walkers)
    return est, stderr


def _strong_path(field, start, goal, strong_min):
    """Shortest path start -> goal over bonds with omega >= strong_min."""
    if start == goal:
        return [start]
    prev = {start: None}
    queue = deque([start])
    while queue:
        s = queue.popleft()
        for nbr, w in field.incident_bonds(s):
            if w >= strong_min and nbr not in prev:
                prev[nbr] = s
                if nbr == goal:
                    path = [goal]
                    while prev[path[-1]] is not None:
                        path.append(prev[path[-1]])
                    return path[::-1]
                queue.append(nbr)
    return None


def trap_lower_bound(
    field: ConductanceField,
    trap: TrapRecord,
    n: int,
    path=None,
    strong_min: float = 1.0,
) -> float:
    """Strategy lower bound for P^{2n}(0,0): walk the path to the anchor,
    cross the weak bond, idle on the strong bond for the residual time,
    cross back and retrace.  Uses the exact realized one-step
    probabilities, not worst-case constants."""
    origin = (0,) * field.d
    x, y, z = trap.anchor, trap.y, trap.z
    if path is None:
        path = _strong_path(field, origin, x, strong_min)
        if path is None:
            raise TrapError(f"no strong path from the origin to {x}")
    if path[0] != origin or path[-1] != x:
        raise TrapError("path must run from the origin to the trap anchor")
    r = len(path) - 1
    m = 2 * n - 2 * r - 2
    if m < 0 or m % 2:
        return 0.0
    logp = 0.0
    for a, b in zip(path, path[1:]):
        logp += math.log(field.omega(a, b) / field.pi(a))
    w_entry = field.omega(x, y)
    pi_x, pi_y, pi_z = field.pi(x), field.pi(y), field.pi(z)
    w_yz = field.omega(y, z)
    logp += math.log(w_entry / pi_x)
    logp += (m // 2) * (math.log(w_yz / pi_y) + math.log(w_yz / pi_z))
    logp += math.log(w_entry / pi_y)
    for a, b in zip(path[::-1], path[::-1][1:]):
        logp += math.log(field.omega(a, b) / field.pi(a))
    return math.exp(logp)


def traps_csv(records, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "z", "weak_scale", "dist_chem"])
        for r in records:
            writer.writerow(
                [
                    " ".join(str(c) for c in r.anchor),
                    " ".join(str(c) for c in r.y),
                    " ".join(str(c) for c in r.z),
                    repr(float(r.weak_scale)),
                    "" if r.chem_dist is None else r.chem_dist,
                ]
            )


def bounds_csv(rows, path) -> None:
    """rows: (n, exact, lower_bound) triples."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["n", "exact", "lower_bound", "ratio"])
        for n, exact, bound in rows:
            ratio = exact / bound if bound > 0 else math.inf
            writer.writerow(
                [n, repr(float(exact)), repr(float(bound)), repr(float(ratio))]
            )
