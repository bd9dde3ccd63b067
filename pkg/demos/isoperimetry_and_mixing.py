"""Isoperimetric profiles, the evolving-set step bound, and block events.

Profiles are exact (exhaustive) on tiny chains and sampled upper bounds on
larger clusters; the step-count evaluator reproduces its closed form
exactly; the block renormalization event probability climbs with scale.
"""

import numpy as np

import rcmwalk as rw
from rcmwalk.iso import lattice_chain, morris_peres_n, profile, two_step, cut_stats

print("=== exact profile of a tiny chain ===")
field = rw.sample_field(2, 1, rw.homogeneous(1.0), 0)
chain = lattice_chain(field)
prof = profile(chain, r_max=chain.pi_total() / 2, mode="exhaustive")
for r, phi in list(zip(prof.rs, prof.phis))[:5]:
    print(f"  Phi({r:g}) = {phi:.4f}")

print()
print("=== cut statistics on the two-step chain ===")
rec = cut_stats(two_step(chain), [(0, 0)])
print(f"single site, two-step chain: Phi = {rec.phi:.4f} (= 1 - P^2(0,0) = 3/4)")

print()
print("=== evolving-set step bound ===")
n = morris_peres_n(lambda u: u**-0.5, gamma=0.5, eps=0.01, pi_x=1.0, pi_y=1.0)
print(f"model profile Phi(u) = u^-1/2, eps = 1%%: required steps n = {n:g}")
print("(closed form: 1 + 4*(400-4) = 1585; the evaluator reproduces it exactly)")

print()
print("=== cluster isoperimetry scan ===")
perc = rw.sample_field(2, 40, rw.bernoulli_perc(0.7), 11)
best, witness, ratios = rw.check_isoperimetry(perc, 1.0, R=20, c1=1.0, samples=150, seed=3)
print(f"min |boundary| / |set|^(1/2) over {len(ratios)} grown sets: {best:.3f} "
      f"(witness has {len(witness)} sites)")
print("a positive, R-stable minimum is the finite-box face of cluster isoperimetry")

print()
print("=== block renormalization event ===")
for n_block in (2, 4, 8):
    est, se = rw.gn_probability(0.65, n_block, 2, ensemble=800, seed=n_block)
    print(f"  P(G_{n_block}) = {est:.3f} +- {se:.3f}")
print("the event probability climbs toward 1 with the block scale")
