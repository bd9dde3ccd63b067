"""Exact and Monte Carlo n-step return probabilities and decay fits.

The exact kernel is computed by forward evolution of the mass vector over a
sub-box that grows with the step count (the walk started at the source
cannot leave the radius-n ball), so memory scales with the support rather
than with a materialized transition matrix.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from . import rng
from .field import ConductanceField, FieldError, IsolatedSiteError, _passes

#: Mass entries below this are flushed to zero (with a counter); harmless at
#: desk scale but keeps denormals out of long evolutions.
FLUSH_EPS = 1e-300

MASS_TOL = 1e-12
MONOTONE_SLACK = 1e-12


class KernelError(RuntimeError):
    pass


class MonotonicityError(KernelError):
    """An exact even-step return series increased beyond tolerance."""


@dataclass
class Evolution:
    """Distribution mu_n over the sub-box after n exact steps."""

    mu: np.ndarray
    lo: tuple  # coordinates of mu[0,...,0]
    n: int
    flushed: int
    max_mass_dev: float = 0.0  # max over steps of |sum(mu) - 1|

    def value_at(self, site) -> float:
        idx = tuple(int(c) - l for c, l in zip(site, self.lo))
        if any(i < 0 or i >= s for i, s in zip(idx, self.mu.shape)):
            return 0.0
        return float(self.mu[idx])

    @property
    def total_mass(self) -> float:
        return float(self.mu.sum())


@dataclass
class KernelSeries:
    """n -> P^n(source, source), exact or Monte Carlo, with provenance."""

    origin: tuple
    entries: list  # (n, value, stderr); stderr == 0 for exact
    method: str  # "exact" | "mc"
    env: dict  # law descriptor, d, L, seed, alpha

    def ns(self) -> np.ndarray:
        return np.array([e[0] for e in self.entries], dtype=int)

    def values(self) -> np.ndarray:
        return np.array([e[1] for e in self.entries], dtype=float)

    def stderrs(self) -> np.ndarray:
        return np.array([e[2] for e in self.entries], dtype=float)

    def to_csv(self, path) -> None:
        env = self.env
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(
                ["n", "value", "stderr", "method", "d", "L", "alpha", "law_id", "seed"]
            )
            for n, v, s in self.entries:
                writer.writerow(
                    [
                        n,
                        repr(float(v)),
                        repr(float(s)),
                        self.method,
                        env.get("d"),
                        env.get("L"),
                        env.get("alpha"),
                        env.get("law_id"),
                        env.get("seed"),
                    ]
                )

    def plot_data(self, path) -> None:
        """Two-column log10(n) log10(value) file, positives only."""
        with open(path, "w") as fh:
            for n, v, _ in self.entries:
                if v > 0.0 and n > 0:
                    fh.write(f"{math.log10(n):.12g} {math.log10(v):.12g}\n")


def _check_even_monotone(entries, slack=MONOTONE_SLACK):
    prev = None
    for n, v, _ in entries:
        if n % 2:
            continue
        if prev is not None and v > prev + slack:
            raise MonotonicityError(
                f"even-step series increased at n={n}: {prev!r} -> {v!r}"
            )
        prev = v


def _evolution_windows(field, source, n, alpha):
    """Set up sub-box views for exact evolution; returns arrays + center."""
    source = tuple(int(c) for c in source)
    if not field.in_box(source):
        raise FieldError(f"source {source} outside the box")
    if max(abs(c) for c in source) + n > field.L:
        raise FieldError(
            f"L={field.L} < n={n} + source offset: exact evolution would touch "
            "the free boundary"
        )
    L = field.L
    lo_idx = tuple(c + L - n for c in source)
    side = 2 * n + 1
    w_sub = []
    for a in range(field.d):
        sl = tuple(
            slice(lo_idx[j], lo_idx[j] + (side - 1 if j == a else side))
            for j in range(field.d)
        )
        w = field.edges[a][sl]
        if alpha is not None:
            w = np.where(_passes(w, alpha), w, 0.0)
        w_sub.append(np.ascontiguousarray(w, dtype=float))
    pi = np.zeros((side,) * field.d)
    for a in range(field.d):
        lo = tuple(slice(0, side - 1) if j == a else slice(None) for j in range(field.d))
        hi = tuple(slice(1, side) if j == a else slice(None) for j in range(field.d))
        pi[tuple(lo)] += w_sub[a]
        pi[tuple(hi)] += w_sub[a]
    lo_coord = tuple(c - n for c in source)
    return w_sub, pi, lo_coord


def _evolve_impl(field, source, n, alpha=None, record=None):
    """Exact forward iteration; calls record(k, mu_k(source)) when given."""
    d = field.d
    source = tuple(int(c) for c in source)
    if n == 0:
        if field.pi(source) == 0.0:
            raise IsolatedSiteError(f"isolated source {source}")
        mu0 = np.ones((1,) * d)
        if record is not None:
            record(0, 1.0)
        return Evolution(mu0, source, 0, 0)
    w_sub, pi, lo_coord = _evolution_windows(field, source, n, alpha)
    center = (n,) * d
    if pi[center] == 0.0:
        raise IsolatedSiteError(f"isolated source {source}")
    side = 2 * n + 1
    mu = np.zeros((side,) * d)
    nxt = np.zeros((side,) * d)
    ratio = np.zeros((side,) * d)
    mu[center] = 1.0
    flushed = 0
    mass_dev = 0.0
    if record is not None:
        record(0, 1.0)
    for k in range(n):
        r = min(k + 1, n)
        win = tuple(slice(n - r, n + r + 1) for _ in range(d))
        mu_w = mu[win]
        pi_w = pi[win]
        ratio_w = ratio[win]
        np.divide(mu_w, pi_w, out=ratio_w, where=pi_w > 0.0)
        ratio_w[pi_w == 0.0] = 0.0
        nxt_w = nxt[win]
        nxt_w[...] = 0.0
        for a in range(d):
            w_win = tuple(
                slice(n - r, n + r) if j == a else slice(n - r, n + r + 1)
                for j in range(d)
            )
            w = w_sub[a][w_win]
            low = tuple(
                slice(0, 2 * r) if j == a else slice(None) for j in range(d)
            )
            high = tuple(
                slice(1, 2 * r + 1) if j == a else slice(None) for j in range(d)
            )
            nxt_w[high] += ratio_w[low] * w
            nxt_w[low] += ratio_w[high] * w
        tiny = (nxt_w != 0.0) & (np.abs(nxt_w) < FLUSH_EPS)
        if tiny.any():
            flushed += int(np.count_nonzero(tiny))
            nxt_w[tiny] = 0.0
        mu[win] = nxt_w
        mass_dev = max(mass_dev, abs(float(nxt_w.sum()) - 1.0))
        if record is not None:
            record(k + 1, float(mu[center]))
    return Evolution(mu, lo_coord, n, flushed, mass_dev)


def evolve(field: ConductanceField, source, n: int, alpha=None) -> Evolution:
    """Exact distribution of the walk after n steps from `source`.

    With `alpha`, the dynamics are restricted to bonds passing the
    threshold (alpha = 0 means omega > 0).  Requires the radius-n ball
    around the source to fit inside the box.
    """
    if n < 0:
        raise KernelError("n must be non-negative")
    return _evolve_impl(field, source, n, alpha=alpha)


def return_series(
    field: ConductanceField,
    source,
    n_max: int,
    stride: int = 2,
    alpha=None,
) -> KernelSeries:
    """Exact P^n(source, source) at n = stride, 2*stride, ..., n_max.

    The even-step subsequence is checked to be non-increasing within
    1e-12; a violation raises MonotonicityError.
    """
    if stride < 1:
        raise KernelError("stride must be >= 1")
    wanted = set(range(stride, n_max + 1, stride))
    got = {}

    def rec(k, v):
        if k in wanted:
            got[k] = v

    ev = _evolve_impl(field, source, n_max, alpha=alpha, record=rec)
    if ev.max_mass_dev > MASS_TOL:
        raise KernelError(
            f"mass conservation violated: max deviation {ev.max_mass_dev:.3e}"
        )
    entries = [(k, got[k], 0.0) for k in sorted(got)]
    _check_even_monotone(entries)
    env = {
        "law_id": field.law.kind,
        "law": field.law.descriptor(),
        "d": field.d,
        "L": field.L,
        "seed": field.seed,
        "alpha": alpha,
    }
    return KernelSeries(tuple(int(c) for c in source), entries, "exact", env)


def _walk_tables(field, source, n, alpha=None):
    """Padded per-site cumulative transition tables over the reachable
    rectangle (radius n around the source, clipped to the box)."""
    d = field.d
    L = field.L
    source = tuple(int(c) for c in source)
    lo = tuple(max(-L, c - n) for c in source)
    hi = tuple(min(L, c + n) for c in source)
    shape = tuple(h - l + 1 for l, h in zip(lo, hi))
    nsites = int(np.prod(shape))
    probs = np.zeros((nsites, 2 * d))
    offsets = np.zeros(2 * d, dtype=np.int64)
    strides = np.ones(d, dtype=np.int64)
    for j in range(d - 2, -1, -1):
        strides[j] = strides[j + 1] * shape[j + 1]
    w_dir = np.zeros((2 * d,) + shape)
    for a in range(d):
        sl = tuple(
            slice(lo[j] + L, hi[j] + L + (0 if j == a else 1)) for j in range(d)
        )
        w = field.edges[a][sl]
        if alpha is not None:
            w = np.where(_passes(w, alpha), w, 0.0)
        low = tuple(slice(0, shape[j] - 1) if j == a else slice(None) for j in range(d))
        high = tuple(slice(1, shape[j]) if j == a else slice(None) for j in range(d))
        w_dir[(2 * a,) + low] = w  # step +e_a
        w_dir[(2 * a + 1,) + high] = w  # step -e_a
        offsets[2 * a] = strides[a]
        offsets[2 * a + 1] = -strides[a]
    pi = w_dir.sum(axis=0)
    flat_pi = pi.reshape(-1)
    for k in range(2 * d):
        probs[:, k] = w_dir[k].reshape(-1)
    alive = flat_pi > 0.0
    probs[alive] /= flat_pi[alive, None]
    cum = np.cumsum(probs, axis=1)
    cum[alive, -1] = 1.0
    src_flat = int(np.ravel_multi_index([c - l for c, l in zip(source, lo)], shape))
    return cum, offsets, src_flat, flat_pi, shape, lo


def _advance(pos, cum, offsets, u):
    choice = np.argmax(u[:, None] < cum[pos], axis=1)
    return pos + offsets[choice]


def mc_return(
    field: ConductanceField, source, n: int, walkers: int, seed: int
) -> tuple:
    """Monte Carlo estimate of P^n(source, source) over independent
    walkers with counter-based per-walker substreams.  Returns
    (estimate, stderr)."""
    if walkers < 1:
        raise KernelError("walkers must be >= 1")
    cum, offsets, src, flat_pi, _, _ = _walk_tables(field, source, n)
    if flat_pi[src] == 0.0:
        raise IsolatedSiteError(f"isolated source {source}")
    pos = np.full(walkers, src, dtype=np.int64)
    widx = np.arange(walkers, dtype=np.int64)
    for t in range(1, n + 1):
        u = rng.uniform(seed, rng.TAG_WALK, widx, t)
        pos = _advance(pos, cum, offsets, u)
    est = float(np.count_nonzero(pos == src)) / walkers
    stderr = math.sqrt(est * (1.0 - est) / walkers)
    return est, stderr


@dataclass
class DecayFit:
    """Least-squares fit of value ~ C * n^-a * (log n)^b on a log scale."""

    exponent: float
    log_coeff: float
    prefactor: float
    n_min: int
    n_max: int
    residual_norm: float
    n_points: int
    with_log: bool
    exponent_stderr: float = 0.0

    def summary(self) -> str:
        tail = f" * (log n)^{self.log_coeff:.3g}" if self.with_log else ""
        return (
            f"value ~ {self.prefactor:.4g} * n^-{self.exponent:.4g}"
            f"(+-{self.exponent_stderr:.2g}){tail} "
            f"on n in [{self.n_min}, {self.n_max}] "
            f"({self.n_points} points, residual {self.residual_norm:.3g})"
        )


def fit_decay(series: KernelSeries, n_range: tuple, with_log: bool = False) -> DecayFit:
    """Fit log(value) = c0 - a log(n) [+ b log log n] over the range."""
    n_lo, n_hi = n_range
    pts = [(n, v) for n, v, _ in series.entries if n_lo <= n <= n_hi]
    if len(pts) < 4:
        raise KernelError(f"need >= 4 points in range, got {len(pts)}")
    ns = np.array([p[0] for p in pts], dtype=float)
    vs = np.array([p[1] for p in pts], dtype=float)
    if np.any(vs <= 0.0):
        raise KernelError("nonpositive values in fit range")
    if with_log and np.any(ns <= 1.0):
        raise KernelError("log-corrected fit needs n > 1")
    cols = [np.ones_like(ns), np.log(ns)]
    if with_log:
        cols.append(np.log(np.log(ns)))
    design = np.column_stack(cols)
    target = np.log(vs)
    coef, _, _, _ = np.linalg.lstsq(design, target, rcond=None)
    resid = float(np.linalg.norm(design @ coef - target))
    dof = max(len(pts) - design.shape[1], 1)
    cov = (resid**2 / dof) * np.linalg.inv(design.T @ design)
    return DecayFit(
        exponent=float(-coef[1]),
        log_coeff=float(coef[2]) if with_log else 0.0,
        prefactor=float(np.exp(coef[0])),
        n_min=int(n_lo),
        n_max=int(n_hi),
        residual_norm=resid,
        n_points=len(pts),
        with_log=with_log,
        exponent_stderr=float(np.sqrt(max(cov[1, 1], 0.0))),
    )


def annealed_return(
    law, d: int, L: int, n: int, ensemble: int, seed: int
) -> tuple:
    """Mean exact P^n(0,0) over independently sampled fields, conditioned
    on the origin lying in the largest positive-conductance component
    (rejected fields are resampled and counted).  Returns (mean, stderr)."""
    from .cluster import components
    from .field import sample_field

    if ensemble < 2:
        raise KernelError("ensemble must be >= 2")
    if L < n:
        raise KernelError(f"L={L} < n={n}: exact kernel needs L >= n")
    origin = (0,) * d
    values = []
    rejections = 0
    for i in range(ensemble):
        for attempt in range(10_000):
            fseed = rng.derive_seed(seed, i, attempt)
            fld = sample_field(d, L, law, fseed)
            lab = components(fld, 0.0)
            if lab.is_strong(origin):
                break
            rejections += 1
            if rejections > 99 * (len(values) + 1) + 100:
                raise KernelError(
                    f"rejection rate above 99% ({rejections} rejections)"
                )
        else:
            raise KernelError("could not find a field with origin in the cluster")
        ev = _evolve_impl(fld, origin, n)
        values.append(ev.value_at(origin))
    arr = np.array(values)
    mean = float(arr.mean())
    stderr = float(arr.std(ddof=1) / math.sqrt(ensemble))
    return mean, stderr
