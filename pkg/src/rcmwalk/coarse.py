"""The coarse-grained walk on the strong component.

Observing the walk only when it sits on the strong component gives a chain
whose transition row at x is computed exactly by solving the absorbing
linear system on the weak component incident to x: from each interior weak
site, the hitting distribution over strong sites, combined with the first
step out of x.  The same system yields the expected hiding time E(T_1).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.linalg import splu

from . import rng
from .cluster import ClusterLabeling, ClusterError, weak_component
from .field import ConductanceField

#: Component sizes up to this use a dense direct solve.
DENSE_LIMIT = 100
#: Sizes up to this use a sparse LU solve; beyond, rows fall back to Monte
#: Carlo estimation and are flagged.
EXACT_LIMIT = 10_000


class CoarseError(RuntimeError):
    pass


class StrandedComponentError(CoarseError):
    """A weak site has no escape route to the strong component."""


@dataclass
class HatChain:
    """Exact transition row of the coarse-grained walk at one anchor."""

    anchor: tuple
    row: dict  # strong site -> probability
    omega_hat: dict  # strong site -> pi(x) * row prob (re-wired conductance)
    expected_hiding: float  # E(T_1)
    g_size: int  # |G_x|
    pi_x: float
    estimated: bool = False  # True when the row came from the MC fallback

    def row_sum(self) -> float:
        return float(sum(self.row.values()))

    def entropy(self) -> float:
        return float(-sum(p * math.log(p) for p in self.row.values() if p > 0.0))


def _solve_absorbing(field, weak_sites, targets):
    """Hitting probabilities H[w, t] and expected absorption times for the
    walk restricted to `weak_sites` with absorption on `targets`."""
    m = len(weak_sites)
    w_index = {s: i for i, s in enumerate(weak_sites)}
    t_index = {s: j for j, s in enumerate(targets)}
    rows, cols, vals = [], [], []
    rhs = np.zeros((m, len(targets)))
    for i, s in enumerate(weak_sites):
        pi_s = field.pi(s)
        if pi_s == 0.0:
            raise StrandedComponentError(f"weak site {s} is isolated")
        for nbr, w in field.incident_bonds(s):
            if w <= 0.0:
                continue
            p = w / pi_s
            if nbr in w_index:
                rows.append(i)
                cols.append(w_index[nbr])
                vals.append(p)
            elif nbr in t_index:
                rhs[i, t_index[nbr]] += p
            else:
                raise StrandedComponentError(
                    f"walk escapes the weak component at {s} -> {nbr}"
                )
    ones = np.ones(m)
    if m <= DENSE_LIMIT:
        q = np.zeros((m, m))
        for r, c, v in zip(rows, cols, vals):
            q[r, c] += v
        a = np.eye(m) - q
        try:
            hit = np.linalg.solve(a, rhs)
            times = np.linalg.solve(a, ones)
        except np.linalg.LinAlgError as exc:
            raise StrandedComponentError(str(exc)) from exc
    else:
        from scipy.sparse import identity

        q = csr_matrix((vals, (rows, cols)), shape=(m, m))
        a = (identity(m, format="csc") - q.tocsc()).tocsc()
        try:
            lu = splu(a)
        except RuntimeError as exc:
            raise StrandedComponentError(str(exc)) from exc
        hit = np.column_stack([lu.solve(rhs[:, j]) for j in range(rhs.shape[1])])
        times = lu.solve(ones)
    return hit, times


def hat_chain(
    field: ConductanceField,
    labeling: ClusterLabeling,
    alpha: float,
    x,
    mc_walkers: int = 200_000,
) -> HatChain:
    """Exact P_hat(x, .), re-wired conductances and E(T_1) at a strong x.

    Weak components larger than EXACT_LIMIT sites fall back to Monte Carlo
    row estimation (flagged via .estimated); at desk scale this never
    triggers because weak components are tiny.
    """
    x = tuple(int(c) for c in x)
    if not labeling.is_strong(x):
        raise ClusterError(f"anchor {x} is not in the strong component")
    wc = weak_component(field, labeling, x)
    weak_sites = sorted(wc.g_prime)
    pi_x = field.pi(x)
    strong = labeling.strong_mask()
    L = field.L

    def is_strong(site):
        return bool(strong[tuple(c + L for c in site)])

    # absorbing targets: strong sites adjacent to the weak region or to x
    targets = set()
    for s in list(weak_sites) + [x]:
        for nbr, w in field.incident_bonds(s):
            if w > 0.0 and is_strong(nbr):
                targets.add(nbr)
    targets = sorted(targets)
    row = {}
    et1 = 1.0
    if len(weak_sites) > EXACT_LIMIT:
        return _hat_chain_mc(field, labeling, x, wc, mc_walkers)
    if weak_sites:
        hit, times = _solve_absorbing(field, weak_sites, targets)
        w_index = {s: i for i, s in enumerate(weak_sites)}
        for nbr, w in field.incident_bonds(x):
            if w <= 0.0:
                continue
            p = w / pi_x
            if is_strong(nbr):
                row[nbr] = row.get(nbr, 0.0) + p
            else:
                i = w_index[nbr]
                et1 += p * times[i]
                for j, t in enumerate(targets):
                    if hit[i, j] > 0.0:
                        row[t] = row.get(t, 0.0) + p * hit[i, j]
    else:
        for nbr, w in field.incident_bonds(x):
            if w > 0.0:
                row[nbr] = row.get(nbr, 0.0) + w / pi_x
    omega_hat = {y: pi_x * p for y, p in row.items()}
    return HatChain(
        anchor=x,
        row=row,
        omega_hat=omega_hat,
        expected_hiding=float(et1),
        g_size=wc.size,
        pi_x=float(pi_x),
    )


def _hat_chain_mc(field, labeling, x, wc, walkers):
    """Monte Carlo fallback for oversized weak components (flagged)."""
    counts = {}
    total_t = 0.0
    seed = rng.derive_seed(field.seed, *x)
    strong = labeling.strong_mask()
    L = field.L
    for w in range(walkers):
        site = x
        t = 0
        while True:
            step = rng.uniform(seed, w, t)
            nbrs = [(y, wt) for y, wt in field.incident_bonds(site) if wt > 0.0]
            pi_s = sum(wt for _, wt in nbrs)
            acc = 0.0
            nxt = nbrs[-1][0]
            for y, wt in nbrs:
                acc += wt / pi_s
                if step < acc:
                    nxt = y
                    break
            site = nxt
            t += 1
            if strong[tuple(c + L for c in site)]:
                break
        counts[site] = counts.get(site, 0) + 1
        total_t += t
    row = {y: c / walkers for y, c in counts.items()}
    pi_x = field.pi(x)
    return HatChain(
        anchor=x,
        row=row,
        omega_hat={y: pi_x * p for y, p in row.items()},
        expected_hiding=total_t / walkers,
        g_size=wc.size,
        pi_x=float(pi_x),
        estimated=True,
    )


def mc_coarse_return(
    field: ConductanceField,
    labeling: ClusterLabeling,
    alpha: float,
    ell: int,
    n: int,
    walkers: int,
    seed: int,
    max_steps: int = None,
) -> tuple:
    """Monte Carlo estimate of P(hat X_ell = origin, T_1+...+T_ell >= n).

    Simulates the full walk from the origin, counting strong-component
    visits; the ell-th visit's position and time give the joint event.
    Returns (estimate, stderr).
    """
    from .kernel import _walk_tables, _advance

    origin = (0,) * field.d
    if not labeling.is_strong(origin):
        raise ClusterError("origin is not in the strong component")
    if max_steps is None:
        max_steps = 1000 * ell + 10 * n
    cum, offsets, src, flat_pi, shape, lo = _walk_tables(field, origin, field.L)
    strong_flat = labeling.strong_mask().reshape(-1)
    pos = np.full(walkers, src, dtype=np.int64)
    visits = np.zeros(walkers, dtype=np.int64)
    done = np.zeros(walkers, dtype=bool)
    final_pos = np.full(walkers, -1, dtype=np.int64)
    final_time = np.zeros(walkers, dtype=np.int64)
    widx = np.arange(walkers, dtype=np.int64)
    t = 0
    while not done.all():
        t += 1
        if t > max_steps:
            raise CoarseError(
                f"walkers still hiding after {max_steps} steps; raise max_steps"
            )
        active = ~done
        ids = widx[active]
        u = rng.uniform(seed, rng.TAG_WALK, ids, t)
        new_pos = _advance(pos[active], cum, offsets, u)
        pos[active] = new_pos
        on_strong = strong_flat[new_pos]
        visits[active] += on_strong
        newly = active.copy()
        newly[active] = on_strong & (visits[active] >= ell)
        final_pos[newly] = pos[newly]
        final_time[newly] = t
        done |= newly
    hits = (final_pos == src) & (final_time >= n)
    est = float(np.count_nonzero(hits)) / walkers
    stderr = math.sqrt(est * (1.0 - est) / walkers)
    return est, stderr


def hiding_time_census(
    field: ConductanceField,
    labeling: ClusterLabeling,
    alpha: float,
    sample_sites,
) -> list:
    """Exact (x, |G_x|, E T_1) rows with the hiding-time bound checked
    pointwise: E T_1 <= (4d/alpha) |G_x| (hard assertion)."""
    rows = []
    bound_const = 4.0 * field.d / alpha
    for x in sample_sites:
        hc = hat_chain(field, labeling, alpha, x)
        bound = bound_const * hc.g_size
        if hc.expected_hiding > bound + 1e-9:
            raise CoarseError(
                f"hiding-time bound violated at {x}: "
                f"E T_1 = {hc.expected_hiding} > {bound}"
            )
        rows.append(
            {
                "x": tuple(x),
                "size_Gx": hc.g_size,
                "ET1": hc.expected_hiding,
                "bound": bound,
                "row_entropy": hc.entropy(),
            }
        )
    return rows


def census_csv(rows, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "size_Gx", "ET1", "bound", "row_entropy"])
        for r in rows:
            writer.writerow(
                [
                    " ".join(str(c) for c in r["x"]),
                    r["size_Gx"],
                    repr(float(r["ET1"])),
                    repr(float(r["bound"])),
                    repr(float(r["row_entropy"])),
                ]
            )


def hat_rows_csv(chains, path) -> None:
    """Sparse triple dump (x, y, prob) of computed hat rows."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["x", "y", "prob"])
        for hc in chains:
            for y, p in sorted(hc.row.items()):
                writer.writerow(
                    [
                        " ".join(str(c) for c in hc.anchor),
                        " ".join(str(c) for c in y),
                        repr(float(p)),
                    ]
                )
