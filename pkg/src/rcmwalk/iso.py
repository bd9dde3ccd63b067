"""Isoperimetric machinery for reversible chains on clusters.

A ChainView bundles a state space, transition rows, stationary weights and
graph adjacency; cut statistics, isoperimetric profiles, the evolving-set
step-count bound, cluster isoperimetry scans and the block renormalization
event estimate all run on top of it.  Stationary weights follow the
conductance convention (pi(x) = total incident weight, not normalized).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components as _scipy_cc

from . import rng
from .cluster import ClusterLabeling, components
from .field import ConductanceField, _passes


class IsoError(ValueError):
    pass


class ChainView:
    """A reversible chain: sites, rows, stationary weights, adjacency."""

    def __init__(self, name, sites, row_fn, pi_fn, neighbors_fn, boundary_fn=None):
        self.name = name
        self.sites = tuple(sites)
        self._site_set = frozenset(self.sites)
        self._row = row_fn
        self._pi = pi_fn
        self._neighbors = neighbors_fn
        self._boundary = boundary_fn
        self._row_cache = {}

    def row(self, x) -> dict:
        r = self._row_cache.get(x)
        if r is None:
            r = self._row(x)
            self._row_cache[x] = r
        return r

    def pi(self, x) -> float:
        return self._pi(x)

    def neighbors(self, x):
        return self._neighbors(x)

    def boundary_edges(self, lam):
        if self._boundary is None:
            return None
        return self._boundary(lam)

    def contains(self, x) -> bool:
        return x in self._site_set

    def pi_total(self) -> float:
        return float(sum(self._pi(x) for x in self.sites))

    def dense(self):
        """(P, pi, index) dense matrix form; small chains only."""
        idx = {s: i for i, s in enumerate(self.sites)}
        m = len(self.sites)
        p = np.zeros((m, m))
        for s in self.sites:
            for y, v in self.row(s).items():
                p[idx[s], idx[y]] += v
        pi = np.array([self._pi(s) for s in self.sites])
        return p, pi, idx


def lattice_chain(
    field: ConductanceField, alpha=None, labeling: ClusterLabeling = None
) -> ChainView:
    """The walk on the box (alpha=None: all positive bonds) or, with a
    labeling, the threshold-restricted walk on the strong component."""
    if labeling is not None:
        if alpha is None:
            alpha = labeling.alpha
        strong = labeling.strong_mask()
        L = field.L

        def member(x):
            return bool(strong[tuple(c + L for c in x)])

        sites = labeling.strong_sites()
    else:

        def member(x):
            return field.in_box(x)

        sites = None

    def passing(w):
        return bool(_passes(np.float64(w), alpha)) if alpha is not None else w > 0.0

    def pi_fn(x):
        return sum(w for _, w in field.incident_bonds(x) if passing(w))

    def row_fn(x):
        pi = pi_fn(x)
        out = {}
        if pi <= 0.0:
            return out
        for y, w in field.incident_bonds(x):
            if passing(w) and member(y):
                out[y] = out.get(y, 0.0) + w / pi
        return out

    def neighbors_fn(x):
        return [y for y, w in field.incident_bonds(x) if passing(w) and member(y)]

    def boundary_fn(lam):
        lam = set(lam)
        count = 0
        for x in lam:
            for y, w in field.incident_bonds(x):
                if passing(w) and y not in lam:
                    count += 1
        return count

    if sites is None:
        all_sites = []
        rng_sites = range(-field.L, field.L + 1)
        import itertools

        for coords in itertools.product(rng_sites, repeat=field.d):
            if pi_fn(coords) > 0.0:
                all_sites.append(coords)
        sites = all_sites
    name = "tilde" if labeling is not None else "plain"
    return ChainView(name, sites, row_fn, pi_fn, neighbors_fn, boundary_fn)


def hat_chain_view(
    field: ConductanceField, labeling: ClusterLabeling, alpha: float
) -> ChainView:
    """The coarse-grained walk as a chain on the strong component, with
    stationary weights pi restricted to it."""
    from .coarse import hat_chain

    sites = labeling.strong_sites()
    cache = {}

    def row_fn(x):
        hc = cache.get(x)
        if hc is None:
            hc = hat_chain(field, labeling, alpha, x)
            cache[x] = hc
        return dict(hc.row)

    def pi_fn(x):
        return field.pi(x)

    def neighbors_fn(x):
        return list(row_fn(x).keys())

    def boundary_fn(lam):
        lam = set(lam)
        count = 0
        for x in lam:
            for y, w in field.incident_bonds(x):
                if _passes(np.float64(w), alpha) and y not in lam:
                    count += 1
        return count

    return ChainView("hat", sites, row_fn, pi_fn, neighbors_fn, boundary_fn)


def matrix_chain(p, pi, labels=None, name="matrix") -> ChainView:
    """Wrap an explicit transition matrix and stationary weight vector."""
    p = np.asarray(p, dtype=float)
    pi = np.asarray(pi, dtype=float)
    m = p.shape[0]
    if p.shape != (m, m) or pi.shape != (m,):
        raise IsoError("matrix_chain needs square P and matching pi")
    sites = tuple(labels) if labels is not None else tuple(range(m))
    idx = {s: i for i, s in enumerate(sites)}

    def row_fn(x):
        i = idx[x]
        return {sites[j]: float(p[i, j]) for j in range(m) if p[i, j] != 0.0}

    def pi_fn(x):
        return float(pi[idx[x]])

    def neighbors_fn(x):
        i = idx[x]
        return [sites[j] for j in range(m) if j != i and p[i, j] != 0.0]

    return ChainView(name, sites, row_fn, pi_fn, neighbors_fn, None)


def two_step(chain: ChainView) -> ChainView:
    """The two-step chain P^2 with the same stationary weights and the
    base chain's graph adjacency."""

    def row_fn(x):
        out = {}
        for z, p in chain.row(x).items():
            for y, q in chain.row(z).items():
                out[y] = out.get(y, 0.0) + p * q
        return out

    return ChainView(
        chain.name + "^2",
        chain.sites,
        row_fn,
        chain.pi,
        chain.neighbors,
        chain._boundary,
    )


def is_stationary(chain: ChainView, tol: float = 1e-10) -> bool:
    """Check sum_x pi(x) P(x, y) == pi(y) on the whole (small) chain."""
    acc = {s: 0.0 for s in chain.sites}
    for x in chain.sites:
        px = chain.pi(x)
        for y, p in chain.row(x).items():
            acc[y] += px * p
    return all(abs(acc[s] - chain.pi(s)) <= tol * max(1.0, chain.pi(s)) for s in chain.sites)


@dataclass
class CutRecord:
    """Exact cut statistics of one set against the rest of the chain."""

    sites: frozenset
    pi_set: float
    q_in: float
    q_cross: float
    phi: float
    boundary_edges: int  # |d^omega Lambda| for lattice chains, else -1
    size: int


def cut_stats(chain: ChainView, lam) -> CutRecord:
    """Q(S,S), Q(S,S^c), Phi_S and the occupied edge boundary for S=lam."""
    lam = frozenset(
        tuple(int(c) for c in x) if isinstance(x, (list, tuple, np.ndarray)) else x
        for x in lam
    )
    if not lam:
        raise IsoError("empty set")
    for x in lam:
        if not chain.contains(x):
            raise IsoError(f"site {x} not in the chain's state space")
    pi_set = 0.0
    q_in = 0.0
    q_cross = 0.0
    for x in lam:
        px = chain.pi(x)
        pi_set += px
        for y, p in chain.row(x).items():
            if y in lam:
                q_in += px * p
            else:
                q_cross += px * p
    if pi_set <= 0.0:
        raise IsoError("set has zero stationary mass")
    b = chain.boundary_edges(lam)
    return CutRecord(
        sites=lam,
        pi_set=float(pi_set),
        q_in=float(q_in),
        q_cross=float(q_cross),
        phi=float(q_cross / pi_set),
        boundary_edges=-1 if b is None else int(b),
        size=len(lam),
    )


def connected_subsets(vertices, neighbors_fn, max_size):
    """Enumerate every connected subset of size <= max_size exactly once.

    Standard enumeration-tree extension (each subgraph is reached once,
    rooted at its minimal vertex in a fixed order).
    """
    vs = sorted(vertices)
    order = {v: i for i, v in enumerate(vs)}
    adj = {v: sorted((u for u in neighbors_fn(v) if u in order), key=order.get) for v in vs}
    out = []

    def extend(sub, ext, nbr_sub, root_rank):
        out.append(frozenset(sub))
        if len(sub) >= max_size:
            return
        ext = list(ext)
        while ext:
            w = ext.pop()
            new_ext = ext + [
                u
                for u in adj[w]
                if order[u] > root_rank and u not in sub and u not in nbr_sub
            ]
            extend(
                sub | {w},
                new_ext,
                nbr_sub | set(adj[w]),
                root_rank,
            )

    for v in vs:
        rank = order[v]
        ext0 = [u for u in adj[v] if order[u] > rank]
        extend({v}, ext0, set(adj[v]) | {v}, rank)
    return out


@dataclass
class ProfileEstimate:
    """Phi(r) on a grid: the best Phi_S found with pi(S) <= r."""

    rs: np.ndarray
    phis: np.ndarray
    mode: str  # "exhaustive" | "grown-set heuristic"
    exact: bool

    def __post_init__(self):
        self.rs = np.asarray(self.rs, dtype=float)
        self.phis = np.asarray(self.phis, dtype=float)
        if np.any(np.diff(self.rs) <= 0):
            raise IsoError("profile grid must be strictly increasing")
        if np.any(np.diff(self.phis) > 1e-15):
            raise IsoError("profile must be non-increasing in r")

    def value_at(self, u: float):
        """Conservative step lookup: the profile value at the smallest
        grid point >= u (None below the grid, last value above it)."""
        if u < self.rs[0]:
            return None
        j = int(np.searchsorted(self.rs, u, side="left"))
        if j >= self.rs.size:
            return float(self.phis[-1])
        return float(self.phis[j])

    def to_csv(self, path):
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["r", "phi", "exact_flag"])
            for r, p in zip(self.rs, self.phis):
                writer.writerow([repr(float(r)), repr(float(p)), int(self.exact)])


EXHAUSTIVE_SITE_LIMIT = 20


def profile(
    chain: ChainView,
    r_max: float,
    mode: str = "exhaustive",
    budget: int = 200,
    seed: int = 0,
) -> ProfileEstimate:
    """Isoperimetric profile over connected proper subsets with
    pi(S) <= r_max.

    Exhaustive mode (state spaces of at most 20 sites) is exact; heuristic
    mode samples grown connected sets with local swap refinement and is an
    upper bound on the true profile, flagged exact=False.
    """
    pairs = []
    n_sites = len(chain.sites)
    min_pi = min(chain.pi(s) for s in chain.sites)
    if r_max < min_pi:
        raise IsoError(f"r_max={r_max} below the minimal site weight {min_pi}")
    if mode == "exhaustive":
        if n_sites > EXHAUSTIVE_SITE_LIMIT:
            raise IsoError(
                f"exhaustive profile limited to {EXHAUSTIVE_SITE_LIMIT} sites, "
                f"got {n_sites}"
            )
        for sub in connected_subsets(chain.sites, chain.neighbors, n_sites - 1):
            rec = cut_stats(chain, sub)
            if rec.pi_set <= r_max:
                pairs.append((rec.pi_set, rec.phi))
        tag = "exhaustive"
    elif mode == "heuristic":
        for i in range(budget):
            gen = np.random.default_rng(rng.derive_seed(seed, i))
            start = chain.sites[int(gen.integers(n_sites))]
            target = int(gen.integers(1, max(2, n_sites // 2) + 1))
            lam = grow_connected_set(
                chain.neighbors, start, target, gen, limit_pi=(chain.pi, r_max)
            )
            if len(lam) >= n_sites:
                continue
            lam = _swap_refine(chain, lam, gen, r_max)
            rec = cut_stats(chain, lam)
            if rec.pi_set <= r_max:
                pairs.append((rec.pi_set, rec.phi))
        tag = "grown-set heuristic"
    else:
        raise IsoError(f"unknown profile mode {mode!r}")
    if not pairs:
        raise IsoError("no candidate sets found under r_max")
    pairs.sort()
    rs, phis = [], []
    best = math.inf
    for r, phi in pairs:
        best = min(best, phi)
        if rs and r == rs[-1]:
            phis[-1] = min(phis[-1], best)
        else:
            rs.append(r)
            phis.append(best)
    # enforce the running minimum across duplicates merged above
    phis = np.minimum.accumulate(phis)
    return ProfileEstimate(np.array(rs), phis, tag, mode == "exhaustive")


def grow_connected_set(neighbors_fn, start, target_size, gen, limit_pi=None):
    """Uniform random connected growth: repeatedly add a uniformly chosen
    boundary site until `target_size` (or the pi cap) is reached."""
    lam = {start}
    boundary = set(neighbors_fn(start)) - lam
    pi_fn, cap = limit_pi if limit_pi is not None else (None, None)
    total = pi_fn(start) if pi_fn else 0.0
    while len(lam) < target_size and boundary:
        cand = sorted(boundary)
        pick = cand[int(gen.integers(len(cand)))]
        if pi_fn is not None and total + pi_fn(pick) > cap:
            break
        lam.add(pick)
        total += pi_fn(pick) if pi_fn else 0.0
        boundary |= set(neighbors_fn(pick))
        boundary -= lam
    return frozenset(lam)


def _still_connected(lam, neighbors_fn):
    lam = set(lam)
    if not lam:
        return False
    start = next(iter(lam))
    seen = {start}
    stack = [start]
    while stack:
        s = stack.pop()
        for y in neighbors_fn(s):
            if y in lam and y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == len(lam)


def _swap_refine(chain, lam, gen, r_max, objective=None):
    """2|lam| local swaps accepting moves that lower the objective
    (default: Phi_S) while keeping the set connected and under r_max."""
    lam = set(lam)

    def score(s):
        rec = cut_stats(chain, s)
        return rec.phi if objective is None else objective(rec)

    current = score(lam)
    for _ in range(2 * len(lam)):
        if len(lam) < 2:
            break
        inside = sorted(lam)
        out_boundary = sorted(
            {y for x in lam for y in chain.neighbors(x) if y not in lam}
        )
        if not out_boundary:
            break
        drop = inside[int(gen.integers(len(inside)))]
        add = out_boundary[int(gen.integers(len(out_boundary)))]
        trial = (lam - {drop}) | {add}
        if not _still_connected(trial, chain.neighbors):
            continue
        rec = cut_stats(chain, trial)
        if rec.pi_set > r_max:
            continue
        val = rec.phi if objective is None else objective(rec)
        if val < current:
            lam = set(trial)
            current = val
    return frozenset(lam)


def morris_peres_n(
    profile_or_phi,
    gamma: float,
    eps: float,
    pi_x: float,
    pi_y: float,
    grid: int = 2048,
) -> float:
    """Evolving-set step-count bound:

        n = 1 + ((1-gamma)^2/gamma^2) *
            integral_{4 (pi_x ^ pi_y)}^{4/eps} 4 / (u Phi(u)^2) du.

    With a ProfileEstimate the integrand uses the conservative
    piecewise-constant profile (the grid's smaller Phi on each cell); with
    a callable Phi the integral is a midpoint rule on a log-spaced grid.
    """
    if not 0.0 < gamma <= 0.5:
        raise IsoError("gamma must lie in (0, 1/2]")
    if eps <= 0.0:
        raise IsoError("eps must be positive")
    lo = 4.0 * min(pi_x, pi_y)
    hi = 4.0 / eps
    if hi <= lo:
        return 1.0
    pref = (1.0 - gamma) ** 2 / gamma**2
    if callable(profile_or_phi):
        edges = np.geomspace(lo, hi, grid + 1)
        mids = np.sqrt(edges[:-1] * edges[1:])
        widths = edges[1:] - edges[:-1]
        phi_vals = np.array([profile_or_phi(u) for u in mids], dtype=float)
        if np.any(phi_vals <= 0.0):
            raise IsoError("Phi must be positive on the integration range")
        terms = widths * (4.0 / (mids * phi_vals**2))
        integral = math.fsum(terms.tolist())
    else:
        prof: ProfileEstimate = profile_or_phi
        cuts = [lo] + [float(r) for r in prof.rs if lo < r < hi] + [hi]
        integral = 0.0
        for a, b in zip(cuts, cuts[1:]):
            phi = prof.value_at(b)
            if phi is None:
                continue  # no sets this small: no constraint from this cell
            if phi <= 0.0:
                return math.inf
            integral += 4.0 * math.log(b / a) / phi**2
    return 1.0 + pref * integral


def check_isoperimetry(
    field: ConductanceField,
    alpha: float,
    R: int,
    c1: float,
    samples: int,
    seed: int = 0,
    labeling: ClusterLabeling = None,
):
    """Minimum of |d^omega Lambda| / |Lambda|^{(d-1)/d} over sampled grown
    connected subsets of the strong cluster inside [-R, R]^d with
    |Lambda| >= (c1 log R)^{d/(d-1)}.  Returns (min_ratio, witness, ratios).
    """
    d = field.d
    if R >= field.L:
        raise IsoError("R must be < L so boundary edges stay in the box")
    if labeling is None:
        labeling = components(field, alpha)
    strong = labeling.strong_mask()
    L = field.L
    floor = max(2, math.ceil((c1 * math.log(R)) ** (d / (d - 1))))

    def member(x):
        return all(abs(c) <= R for c in x) and strong[tuple(c + L for c in x)]

    def neighbors_fn(x):
        out = []
        for y, w in field.incident_bonds(x):
            if _passes(np.float64(w), alpha) and member(y):
                out.append(y)
        return out

    def boundary(lam):
        count = 0
        for x in lam:
            for y, w in field.incident_bonds(x):
                if _passes(np.float64(w), alpha) and y not in lam:
                    count += 1
        return count

    universe = [s for s in labeling.strong_sites() if all(abs(c) <= R for c in s)]
    if not universe:
        raise IsoError("strong component does not meet the sampling window")
    expo = (d - 1) / d

    def ratio(lam):
        return boundary(lam) / len(lam) ** expo

    best = math.inf
    witness = None
    ratios = []
    found = 0
    for i in range(samples):
        gen = np.random.default_rng(rng.derive_seed(seed, i))
        start = universe[int(gen.integers(len(universe)))]
        target = floor + int(gen.integers(max(1, floor)))
        lam = grow_connected_set(neighbors_fn, start, target, gen)
        if len(lam) < floor:
            continue
        found += 1
        # swap refinement minimizing the surface ratio
        lam_set = set(lam)
        cur = ratio(lam_set)
        for _ in range(2 * len(lam_set)):
            inside = sorted(lam_set)
            out_b = sorted(
                {y for x in lam_set for y in neighbors_fn(x) if y not in lam_set}
            )
            if not out_b:
                break
            drop = inside[int(gen.integers(len(inside)))]
            add = out_b[int(gen.integers(len(out_b)))]
            trial = (lam_set - {drop}) | {add}
            if len(trial) < floor or not _still_connected(trial, neighbors_fn):
                continue
            val = ratio(trial)
            if val < cur:
                lam_set = trial
                cur = val
        ratios.append(cur)
        if cur < best:
            best = cur
            witness = frozenset(lam_set)
    if not ratios:
        raise IsoError(f"no sampled set met the size floor {floor}")
    return best, witness, ratios


def isoperimetry_csv(rows, path):
    """rows: (R, min_ratio, witness_size) triples."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["R", "min_ratio", "witness_size"])
        for R, ratio, size in rows:
            writer.writerow([R, repr(float(ratio)), int(size)])


def gn_csv(rows, path):
    """rows: (N, p, estimate, stderr) tuples."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["N", "p", "estimate", "stderr"])
        for N, p, est, se in rows:
            writer.writerow([N, repr(float(p)), repr(float(est)), repr(float(se))])


def _bern_occupancy(d, side, p, gen):
    """Per-axis occupied-bond arrays for one Bernoulli(p) configuration."""
    out = []
    for a in range(d):
        shape = tuple(side - 1 if j == a else side for j in range(d))
        out.append(gen.random(shape) < p)
    return out


def _cc_labels(occ, shape):
    """Connected component labels for an occupancy configuration."""
    n = int(np.prod(shape))
    flat = np.arange(n, dtype=np.int64).reshape(shape)
    rows, cols = [], []
    d = len(shape)
    for a in range(d):
        lo = tuple(slice(0, shape[j] - 1) if j == a else slice(None) for j in range(d))
        hi = tuple(slice(1, shape[j]) if j == a else slice(None) for j in range(d))
        m = occ[a]
        rows.append(flat[lo][m])
        cols.append(flat[hi][m])
    rows = np.concatenate(rows) if rows else np.empty(0, dtype=np.int64)
    cols = np.concatenate(cols) if cols else np.empty(0, dtype=np.int64)
    graph = coo_matrix((np.ones(rows.size, dtype=np.int8), (rows, cols)), shape=(n, n))
    _, labels = _scipy_cc(graph, directed=False)
    return labels.reshape(shape)


def _block_crossing(occ_sub, shape, axis):
    """True if the sub-box has an occupied path from face axis=0 to
    face axis=max (side-to-opposite-side crossing)."""
    labels = _cc_labels(occ_sub, shape)
    lo_face = labels[tuple(0 if j == axis else slice(None) for j in range(len(shape)))]
    hi_face = labels[
        tuple(shape[j] - 1 if j == axis else slice(None) for j in range(len(shape)))
    ]
    return bool(np.intersect1d(lo_face.reshape(-1), hi_face.reshape(-1)).size > 0)


def gn_probability(p: float, N: int, d: int, ensemble: int, seed: int) -> tuple:
    """Monte Carlo estimate of the block renormalization event probability.

    The event at block scale N: (1) each neighboring N-block is crossed
    side-to-opposite-side by an occupied path, and (2) all occupied
    connections from the central block to the boundary of the concentric
    3N-box belong to a single cluster.  Returns (estimate, stderr).
    """
    if N < 1 or d < 2:
        raise IsoError("need N >= 1 and d >= 2")
    side = 3 * N + 1  # sites of [-N, 2N]^d
    hits = 0
    for i in range(ensemble):
        gen = np.random.default_rng(rng.derive_seed(seed, i))
        occ = _bern_occupancy(d, side, p, gen)
        ok = True
        # part (1): crossings of the 2d neighbor blocks B_N(N * (+-e_j))
        for axis in range(d):
            for sign in (1, -1):
                # block occupies coords axis: [N,2N] (sign +) or [-N,0] (-)
                sl = []
                for j in range(d):
                    if j == axis:
                        sl.append(slice(2 * N, 3 * N + 1) if sign > 0 else slice(0, N + 1))
                    else:
                        sl.append(slice(N, 2 * N + 1))
                block_shape = tuple(N + 1 for _ in range(d))
                occ_sub = []
                for a in range(d):
                    esl = []
                    for j in range(d):
                        s = sl[j]
                        if j == a:
                            esl.append(slice(s.start, s.stop - 1))
                        else:
                            esl.append(s)
                    occ_sub.append(occ[a][tuple(esl)])
                if not _block_crossing(occ_sub, block_shape, axis):
                    ok = False
                    break
            if not ok:
                break
        if ok:
            # part (2): all occupied connections from the central block to
            # the 3N-boundary lie in one cluster (clusters meeting both are
            # at most one; isolated sites cannot meet both for N >= 1)
            labels = _cc_labels(occ, (side,) * d)
            central = labels[tuple(slice(N, 2 * N + 1) for _ in range(d))].reshape(-1)
            surface_mask = np.zeros((side,) * d, dtype=bool)
            for j in range(d):
                surface_mask[tuple(0 if k == j else slice(None) for k in range(d))] = True
                surface_mask[
                    tuple(side - 1 if k == j else slice(None) for k in range(d))
                ] = True
            surf = labels[surface_mask]
            crossing = np.intersect1d(np.unique(central), np.unique(surf))
            if crossing.size > 1:
                ok = False
        if ok:
            hits += 1
    est = hits / ensemble
    stderr = math.sqrt(est * (1.0 - est) / ensemble)
    return est, stderr
