"""Conductance laws: discrete distributions on [0, 1] for bond weights.

Every law is reduced to a finite table of (value, probability) pairs plus a
tag saying whether the table describes bonds directly or a per-site variable
whose bond value is the minimum over the two endpoints.  Sampling is by
inverse CDF on a uniform produced by the counter-based generator, so the
value order in the table is part of the law's identity.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import zeta

#: Bond percolation thresholds on Z^d used for supercriticality warnings.
#: d=2 is exact; d>=3 are standard numerical values.
P_C = {2: 0.5, 3: 0.2488126, 4: 0.1601314, 5: 0.1181718, 6: 0.0942702}

#: Depth at which the dyadic tail 2^{-N} is truncated; the residual mass is
#: assigned to the last value so the table still sums to one.
DYADIC_N_MAX = 63

_PROB_TOL = 1e-12


class LawError(ValueError):
    """Invalid law parameters."""


def p_c(d: int) -> float:
    """Percolation threshold estimate for Z^d (configuration constant)."""
    if d in P_C:
        return P_C[d]
    return 1.0 / (2 * d - 1)


@dataclass(frozen=True)
class ConductanceLaw:
    """A finite-support conductance (or site-variable) distribution.

    kind: variant tag, e.g. "homogeneous", "bernoulli", "dyadic_polylog",
        "sparse_scales", "two_value", "wedge_min", "custom".
    values / probs: the support table, in sampling order.
    params: the constructor parameters, for descriptors and round-trips.
    site_marginal: True for wedge laws (table describes the per-site
        variable; bond value is the min over endpoints).
    """

    kind: str
    values: tuple
    probs: tuple
    params: dict = field(default_factory=dict)
    site_marginal: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        p = np.asarray(self.probs, dtype=float)
        if v.shape != p.shape or v.ndim != 1 or v.size == 0:
            raise LawError("law table must be parallel non-empty value/prob lists")
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise LawError("conductance values must lie in [0, 1]")
        if np.any(p < 0.0):
            raise LawError("probabilities must be non-negative")
        total = float(p.sum())
        if abs(total - 1.0) > _PROB_TOL:
            raise LawError(f"probabilities sum to {total!r}, not 1 within {_PROB_TOL}")

    # -- sampling ---------------------------------------------------------

    def cdf(self) -> np.ndarray:
        c = np.cumsum(np.asarray(self.probs, dtype=float))
        c[-1] = 1.0
        return c

    def sample_from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms in [0,1) to law values by inverse CDF."""
        idx = np.searchsorted(self.cdf(), u, side="right")
        return np.asarray(self.values, dtype=float)[idx]

    def prob_of_value(self, v: float) -> float:
        total = 0.0
        for value, p in zip(self.values, self.probs):
            if value == v:
                total += p
        return total

    @property
    def p_one(self) -> float:
        """Probability that a table draw equals exactly 1 (occupied bond)."""
        return self.prob_of_value(1.0)

    def occupied_from_uniform(self, u: np.ndarray) -> np.ndarray:
        """Boolean 'value == 1' without materializing the float values.

        Only valid when the value 1 occupies a prefix of the table, which
        holds for every built-in constructor that has 1 in its support.
        """
        if not self.values or self.values[0] != 1.0:
            raise LawError("occupancy shortcut requires value 1 first in table")
        return u < self.probs[0]

    def warn_if_subcritical(self, d: int) -> None:
        """Warn (not error) when P(omega_b > 0) fails to exceed p_c(d)."""
        p_pos = sum(p for v, p in zip(self.values, self.probs) if v > 0)
        if self.site_marginal:
            # bond positive iff both endpoint variables positive (i.i.d.)
            p_pos = p_pos**2
        if p_pos <= p_c(d):
            warnings.warn(
                f"law {self.kind}: P(omega>0)={p_pos:.6g} <= p_c({d})={p_c(d):.6g}; "
                "positive bonds do not percolate",
                stacklevel=2,
            )
        p_param = self.params.get("p", self.params.get("p1"))
        if p_param is not None and p_param <= p_c(d):
            warnings.warn(
                f"law {self.kind}: p={p_param:.6g} <= p_c({d})={p_c(d):.6g}",
                stacklevel=2,
            )

    # -- descriptors ------------------------------------------------------

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "values": [float(v) for v in self.values],
            "probs": [float(p) for p in self.probs],
            "params": self.params,
            "site_marginal": self.site_marginal,
        }

    def to_json(self) -> str:
        return json.dumps(self.descriptor(), sort_keys=True)

    @staticmethod
    def from_descriptor(desc: dict) -> "ConductanceLaw":
        return ConductanceLaw(
            kind=desc["kind"],
            values=tuple(desc["values"]),
            probs=tuple(desc["probs"]),
            params=dict(desc.get("params", {})),
            site_marginal=bool(desc.get("site_marginal", False)),
        )

    @staticmethod
    def from_json(text: str) -> "ConductanceLaw":
        return ConductanceLaw.from_descriptor(json.loads(text))


# -- constructors ----------------------------------------------------------


def homogeneous(value: float) -> ConductanceLaw:
    """All bonds equal to `value` in (0, 1]."""
    if not 0.0 < value <= 1.0:
        raise LawError("homogeneous value must lie in (0, 1]")
    return ConductanceLaw("homogeneous", (float(value),), (1.0,), {"value": value})


def bernoulli_perc(p: float) -> ConductanceLaw:
    """Bond percolation: omega in {1, 0} with P(1) = p."""
    if not 0.0 <= p <= 1.0:
        raise LawError("bernoulli p must lie in [0, 1]")
    if p == 1.0:
        return ConductanceLaw("bernoulli", (1.0,), (1.0,), {"p": p})
    return ConductanceLaw("bernoulli", (1.0, 0.0), (p, 1.0 - p), {"p": p})


def dyadic_polylog(p1: float, eps: float, n_max: int = DYADIC_N_MAX) -> ConductanceLaw:
    """P(omega=1)=p1 and P(omega=2^-N) = c N^{-(1+eps)} for N >= 1.

    c = (1-p1)/zeta(1+eps).  Values below 2^-n_max are folded into the last
    table entry so the distribution stays normalized; for eps >= 0.1 and
    n_max = 63 that residual is far below 1e-12 of mass moved per value.
    """
    if not 0.0 < p1 <= 1.0:
        raise LawError("dyadic_polylog p1 must lie in (0, 1]")
    if eps <= 0.0:
        raise LawError("dyadic_polylog eps must be positive")
    if p1 == 1.0:
        return ConductanceLaw(
            "dyadic_polylog", (1.0,), (1.0,), {"p1": p1, "eps": eps, "n_max": n_max}
        )
    c = (1.0 - p1) / float(zeta(1.0 + eps, 1))
    ns = np.arange(1, n_max + 1, dtype=float)
    probs = c * ns ** -(1.0 + eps)
    # residual tail mass onto the deepest value
    probs[-1] = (1.0 - p1) - float(probs[:-1].sum())
    values = (1.0,) + tuple(2.0 ** -float(n) for n in range(1, n_max + 1))
    return ConductanceLaw(
        "dyadic_polylog",
        values,
        (p1,) + tuple(float(q) for q in probs),
        {"p1": p1, "eps": eps, "n_max": n_max},
    )


def q_from_lambda(lam: float, d: int) -> float:
    """The scale q_n = ((1/2) log(lambda_n) / log(2d))^{1/4}."""
    return (0.5 * math.log(lam) / math.log(2 * d)) ** 0.25


def sparse_scales(n_ks, q_ks, d: int = None) -> ConductanceLaw:
    """Sparse weak scales: P(omega=1) = 1 - 1/q_{n_1},
    P(omega=1/n_k) = 1/q_{n_k} - 1/q_{n_{k+1}}, last entry takes the tail.

    `n_ks` and `q_ks` are user-supplied parallel tables; we validate the
    growth constraint q_{n_{k+1}} > 2 q_{n_k} and (when d is given) warn if
    1 - 1/q_{n_1} fails to clear p_c(d).
    """
    n_ks = [int(n) for n in n_ks]
    q_ks = [float(q) for q in q_ks]
    if len(n_ks) != len(q_ks) or not n_ks:
        raise LawError("sparse_scales needs parallel non-empty n_k / q_k tables")
    if any(n <= 0 or n % 2 for n in n_ks):
        raise LawError("sparse_scales n_k values must be positive even integers")
    if any(q <= 1.0 for q in q_ks):
        raise LawError("sparse_scales q values must exceed 1")
    for a, b in zip(q_ks, q_ks[1:]):
        if not b > 2 * a:
            raise LawError(f"sparse_scales requires q_(k+1) > 2 q_k, got {b} <= 2*{a}")
    values = [1.0] + [1.0 / n for n in n_ks]
    probs = [1.0 - 1.0 / q_ks[0]]
    for k in range(len(n_ks) - 1):
        probs.append(1.0 / q_ks[k] - 1.0 / q_ks[k + 1])
    probs.append(1.0 / q_ks[-1])
    law = ConductanceLaw(
        "sparse_scales",
        tuple(values),
        tuple(probs),
        {"n_ks": n_ks, "q_ks": q_ks},
    )
    if d is not None:
        law.warn_if_subcritical(d)
    return law


def two_value(p: float, n: int) -> ConductanceLaw:
    """omega = 1 w.p. p, else 1/n (the n-dependent trap environment)."""
    if not 0.0 < p <= 1.0:
        raise LawError("two_value p must lie in (0, 1]")
    if n < 1:
        raise LawError("two_value n must be >= 1")
    if p == 1.0 or n == 1:
        return ConductanceLaw("two_value", (1.0,), (1.0,), {"p": p, "n": n})
    return ConductanceLaw(
        "two_value", (1.0, 1.0 / n), (p, 1.0 - p), {"p": p, "n": n}
    )


def wedge_min(values, probs) -> ConductanceLaw:
    """Site-variable table; bond value is min over the two endpoints."""
    v = [float(x) for x in values]
    if any(x <= 0.0 for x in v):
        raise LawError("wedge_min site values must lie in (0, 1]")
    return ConductanceLaw(
        "wedge_min",
        tuple(v),
        tuple(float(p) for p in probs),
        {"values": v, "probs": [float(p) for p in probs]},
        site_marginal=True,
    )


def custom_table(values, probs) -> ConductanceLaw:
    return ConductanceLaw(
        "custom",
        tuple(float(v) for v in values),
        tuple(float(p) for p in probs),
        {"values": [float(v) for v in values], "probs": [float(p) for p in probs]},
    )
