"""Finite-box conductance environments on Z^d.

A field stores one float64 array per axis: ``edges[a]`` holds the bond
between site ``x`` and ``x + e_a`` at index ``x + L`` (free boundary, so the
axis-``a`` dimension is one shorter than the box side).  The store is
undirected by construction, and every bond value is a pure function of
(seed, axis, lower-endpoint coordinates), so sampling is order-independent
and a field restricted to a smaller concentric box is bit-identical to a
field sampled directly at that size.
"""

from __future__ import annotations

import hashlib
import json
import struct
from dataclasses import dataclass, field as dataclass_field

import numpy as np

from . import rng
from .laws import ConductanceLaw, LawError, custom_table

_MAGIC = b"RCMF"
_VERSION = 1

# target elements per generation chunk; keeps uint64 temporaries ~128 MB
_CHUNK_ELEMS = 1 << 24


class FieldError(ValueError):
    """Invalid field construction or query."""


class IsolatedSiteError(FieldError):
    """The site has no incident bond with positive conductance."""


def _axis_shape(d: int, L: int, axis: int) -> tuple:
    side = 2 * L + 1
    return tuple(side - 1 if j == axis else side for j in range(d))


def _fill_keyed(out, seed, tag, extra, lo, value_map):
    """Fill `out` with value_map(uniforms) keyed on true coordinates.

    out: array of shape S; element at index idx has coordinates idx + lo.
    Chunked along dim 0 so uint64 temporaries stay bounded.
    """
    shape = out.shape
    d = out.ndim
    rest = int(np.prod(shape[1:])) if d > 1 else 1
    rows = max(1, _CHUNK_ELEMS // max(rest, 1))
    base = rng.mix(seed, tag, extra)
    for r0 in range(0, shape[0], rows):
        r1 = min(shape[0], r0 + rows)
        h = base
        for j in range(d):
            if j == 0:
                coords = np.arange(r0, r1, dtype=np.int64) + lo[0]
            else:
                coords = np.arange(shape[j], dtype=np.int64) + lo[j]
            bshape = [1] * d
            bshape[j] = coords.size
            h = rng._fold(h, coords.reshape(bshape))
        u = (h >> np.uint64(11)) * np.float64(2.0**-53)
        out[r0:r1] = value_map(u)


@dataclass
class LocalStep:
    """One-step structure at a site: positive neighbors and pi = sum."""

    site: tuple
    neighbors: tuple  # ((site, omega), ...)
    pi: float

    def probabilities(self) -> tuple:
        return tuple((y, w / self.pi) for y, w in self.neighbors)


@dataclass
class ConductanceField:
    d: int
    L: int
    law: ConductanceLaw
    seed: int
    edges: list  # d arrays, float64
    plantings: list = dataclass_field(default_factory=list)

    # -- geometry ----------------------------------------------------------

    @property
    def side(self) -> int:
        return 2 * self.L + 1

    @property
    def n_sites(self) -> int:
        return self.side**self.d

    @property
    def edge_count(self) -> int:
        return self.d * self.side ** (self.d - 1) * (2 * self.L)

    def in_box(self, x) -> bool:
        return all(-self.L <= int(c) <= self.L for c in x)

    def _index(self, x) -> tuple:
        return tuple(int(c) + self.L for c in x)

    def _bond_index(self, x, y):
        """(axis, store index) for the bond between neighbors x and y."""
        diff = [int(b) - int(a) for a, b in zip(x, y)]
        nz = [j for j, v in enumerate(diff) if v != 0]
        if len(nz) != 1 or abs(diff[nz[0]]) != 1:
            raise FieldError(f"{x} and {y} are not nearest neighbors")
        axis = nz[0]
        lower = x if diff[axis] == 1 else y
        if not self.in_box(x) or not self.in_box(y):
            raise FieldError(f"bond {x}-{y} leaves the box")
        return axis, self._index(lower)

    # -- queries -----------------------------------------------------------

    def omega(self, x, y) -> float:
        axis, idx = self._bond_index(x, y)
        return float(self.edges[axis][idx])

    def set_omega(self, x, y, value: float) -> None:
        axis, idx = self._bond_index(x, y)
        self.edges[axis][idx] = value

    def incident_bonds(self, x):
        """Yield (neighbor, omega) over all in-box bonds at x."""
        x = tuple(int(c) for c in x)
        for a in range(self.d):
            for s in (1, -1):
                y = tuple(c + s if j == a else c for j, c in enumerate(x))
                if self.in_box(y):
                    yield y, self.omega(x, y)

    def pi(self, x) -> float:
        return sum(w for _, w in self.incident_bonds(x))

    def pi_array(self, alpha=None) -> np.ndarray:
        """pi over the whole box; with alpha, only bonds passing the
        threshold count (alpha=0 means omega > 0)."""
        out = np.zeros((self.side,) * self.d)
        for a in range(self.d):
            w = self.edges[a]
            if alpha is not None:
                w = np.where(_passes(w, alpha), w, 0.0)
            lo = [slice(None)] * self.d
            hi = [slice(None)] * self.d
            lo[a] = slice(0, self.side - 1)
            hi[a] = slice(1, self.side)
            out[tuple(lo)] += w
            out[tuple(hi)] += w
        return out

    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(struct.pack("<II", self.d, self.L))
        h.update(self.law.to_json().encode())
        h.update(struct.pack("<Q", self.seed % (1 << 64)))
        for a in range(self.d):
            h.update(np.ascontiguousarray(self.edges[a]).tobytes())
        return h.hexdigest()

    def copy(self) -> "ConductanceField":
        return ConductanceField(
            self.d,
            self.L,
            self.law,
            self.seed,
            [e.copy() for e in self.edges],
            [dict(p) for p in self.plantings],
        )

    def window(self, radius: int) -> "ConductanceField":
        """The concentric sub-box of the given radius (identical values)."""
        if radius > self.L:
            raise FieldError("window radius exceeds box radius")
        off = self.L - radius
        out_edges = []
        for a in range(self.d):
            sl = tuple(
                slice(off, off + (2 * radius if j == a else 2 * radius + 1))
                for j in range(self.d)
            )
            out_edges.append(self.edges[a][sl].copy())
        keep = [
            p
            for p in self.plantings
            if all(abs(c) <= radius - 1 for c in p["x"])
        ]
        return ConductanceField(self.d, radius, self.law, self.seed, out_edges, keep)


def _passes(w, alpha):
    """Threshold convention: alpha=0 means omega > 0, else omega >= alpha."""
    if alpha is None:
        return w > 0.0
    if alpha == 0.0:
        return w > 0.0
    return w >= alpha


def sample_field(d: int, L: int, law: ConductanceLaw, seed: int) -> ConductanceField:
    """Draw a field with i.i.d. bonds (or i.i.d. sites for wedge laws).

    Each bond is a pure function of (seed, axis, lower-endpoint coords); a
    wedge law samples per-site variables first and takes bond minima.
    """
    if d < 2:
        raise FieldError("dimension must be >= 2")
    if L < 1:
        raise FieldError("box radius must be >= 1")
    law.warn_if_subcritical(d)
    lo = (-L,) * d
    edges = []
    if law.site_marginal:
        sites = np.empty((2 * L + 1,) * d)
        _fill_keyed(sites, seed, rng.TAG_SITE, 0, lo, law.sample_from_uniform)
        for a in range(d):
            low = tuple(
                slice(0, 2 * L) if j == a else slice(None) for j in range(d)
            )
            high = tuple(
                slice(1, 2 * L + 1) if j == a else slice(None) for j in range(d)
            )
            edges.append(np.minimum(sites[low], sites[high]))
    else:
        for a in range(d):
            arr = np.empty(_axis_shape(d, L, a))
            _fill_keyed(arr, seed, rng.TAG_EDGE, a, lo, law.sample_from_uniform)
            edges.append(arr)
    return ConductanceField(d, L, law, seed, edges)


def sample_occupancy(d: int, L: int, law: ConductanceLaw, seed: int) -> list:
    """Boolean 'omega == 1' arrays per axis, bit-consistent with
    sample_field but without materializing float values (memory-lean path
    for large censuses of two-value style laws)."""
    if law.site_marginal:
        raise LawError("occupancy sampling is for bond-table laws")
    lo = (-L,) * d
    out = []
    for a in range(d):
        arr = np.empty(_axis_shape(d, L, a), dtype=bool)
        _fill_keyed(arr, seed, rng.TAG_EDGE, a, lo, law.occupied_from_uniform)
        out.append(arr)
    return out


def field_from_arrays(edges, law=None, seed: int = 0) -> ConductanceField:
    """Wrap explicit per-axis edge arrays (handy for handcrafted tests)."""
    d = len(edges)
    if d < 2:
        raise FieldError("dimension must be >= 2")
    # dim 1 of the axis-0 array is a full box side
    side = np.asarray(edges[0]).shape[1]
    L = (side - 1) // 2
    arrays = []
    for a in range(d):
        arr = np.asarray(edges[a], dtype=float)
        if arr.shape != _axis_shape(d, L, a):
            raise FieldError(
                f"axis {a} array has shape {arr.shape}, want {_axis_shape(d, L, a)}"
            )
        if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
            raise FieldError("conductances must lie in [0, 1]")
        arrays.append(arr.copy())
    if law is None:
        law = custom_table([0.0, 1.0], [0.5, 0.5])
        law = ConductanceLaw("explicit", law.values, law.probs, {})
    return ConductanceField(d, L, law, seed, arrays)


def step_distribution(field: ConductanceField, x) -> LocalStep:
    """Positive-conductance neighbors of x and the total weight pi(x)."""
    if not field.in_box(x):
        raise FieldError(f"site {x} outside the box")
    x = tuple(int(c) for c in x)
    nbrs = tuple((y, w) for y, w in field.incident_bonds(x) if w > 0.0)
    pi = sum(w for _, w in field.incident_bonds(x))
    if pi == 0.0:
        raise IsolatedSiteError(f"isolated site {x}")
    return LocalStep(x, nbrs, pi)


def plant_trap(field: ConductanceField, x, weak: float, orient: int) -> ConductanceField:
    """Plant a trap anchored at x along +e_orient: omega(y,z)=1 for
    y=x+e, z=x+2e, and every other bond at y or z set to `weak`.

    Returns a modified copy; the planting is recorded in metadata.
    """
    if not 0.0 < weak < 1.0:
        raise FieldError("weak value must lie in (0, 1)")
    if not 0 <= orient < field.d:
        raise FieldError("orient must be an axis index")
    x = tuple(int(c) for c in x)
    e = tuple(1 if j == orient else 0 for j in range(field.d))
    y = tuple(a + b for a, b in zip(x, e))
    z = tuple(a + 2 * b for a, b in zip(x, e))
    for site in (y, z):
        if any(abs(c) > field.L - 1 for c in site):
            raise FieldError("sites too close to the boundary")
    out = field.copy()
    for site in (y, z):
        for nbr, _ in out.incident_bonds(site):
            out.set_omega(site, nbr, weak)
    out.set_omega(y, z, 1.0)
    out.set_omega(x, y, weak)
    out.plantings.append({"x": x, "orient": orient, "weak": weak})
    return out


# -- serialization ----------------------------------------------------------


def save_field(field: ConductanceField, path) -> None:
    """Binary container: RCMF magic, version, d, L, seed, JSON meta
    (law descriptor + plantings), then raw float64 edge values per axis."""
    meta = json.dumps(
        {"law": field.law.descriptor(), "plantings": field.plantings},
        sort_keys=True,
    ).encode()
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<IIIQ", _VERSION, field.d, field.L, field.seed % (1 << 64)))
        fh.write(struct.pack("<I", len(meta)))
        fh.write(meta)
        for a in range(field.d):
            fh.write(np.ascontiguousarray(field.edges[a]).tobytes())


def load_field(path) -> ConductanceField:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != _MAGIC:
            raise FieldError(f"not an RCMF file (magic {magic!r})")
        version, d, L, seed = struct.unpack("<IIIQ", fh.read(20))
        if version != _VERSION:
            raise FieldError(f"unsupported RCMF version {version}")
        (meta_len,) = struct.unpack("<I", fh.read(4))
        meta = json.loads(fh.read(meta_len).decode())
        edges = []
        for a in range(d):
            shape = _axis_shape(d, L, a)
            n = int(np.prod(shape))
            buf = fh.read(8 * n)
            edges.append(np.frombuffer(buf, dtype="<f8").reshape(shape).copy())
    law = ConductanceLaw.from_descriptor(meta["law"])
    return ConductanceField(d, L, law, int(seed), edges, list(meta.get("plantings", [])))
