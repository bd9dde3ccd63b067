"""Sampling conductance environments and reading their cluster structure.

Walks through the built-in laws, deterministic field sampling, threshold
components, weak components and chemical distances, printing as it goes.
Everything here runs in a few seconds.
"""

import numpy as np

import rcmwalk as rw

print("=== conductance laws ===")
for law in (
    rw.homogeneous(1.0),
    rw.bernoulli_perc(0.7),
    rw.two_value(0.7, 10),
    rw.dyadic_polylog(0.7, 0.5),
    rw.wedge_min([0.2, 1.0], [0.4, 0.6]),
):
    support = ", ".join(f"{v:g}" for v in law.values[:4])
    more = " ..." if len(law.values) > 4 else ""
    print(f"{law.kind:15s} support [{support}{more}]  P(omega=1) = {law.p_one:.3f}")

print()
print("=== deterministic sampling ===")
law = rw.two_value(0.7, 10)
field = rw.sample_field(2, 40, law, seed=12345)
again = rw.sample_field(2, 40, law, seed=12345)
print(f"box [-40,40]^2: {field.edge_count} bonds, digest {field.digest()[:16]}...")
print("re-sample with the same seed is bit-identical:", field.digest() == again.digest())
window = field.window(10)
direct = rw.sample_field(2, 10, law, seed=12345)
print("a concentric window equals the directly sampled small box:",
      window.digest() == direct.digest())

print()
print("=== components at a threshold ===")
labeling = rw.components(field, 1.0)
print(f"alpha=1.0: {labeling.sizes.size} components, largest {labeling.largest_size} "
      f"sites, second largest {labeling.second_largest_size()}")
full = rw.components(field, 0.0)
print(f"alpha=0+ : largest component covers {full.largest_size}/{field.n_sites} sites "
      "(all bonds are positive in this law)")

print()
print("=== weak components seen from strong anchors ===")
sizes = []
for anchor in labeling.strong_sites()[:2000]:
    wc = rw.weak_component(field, labeling, anchor)
    sizes.append(wc.size)
sizes = np.array(sizes)
print(f"|G_x| over {sizes.size} anchors: mean {sizes.mean():.2f}, max {sizes.max()}")
print("anchors with no weak neighbors have G_x = {x}:",
      int(np.count_nonzero(sizes == 1)), "of", sizes.size)

print()
print("=== chemical distance vs Euclidean distance ===")
base = (0, 0)
dists = rw.chemical_distances_from(labeling, base)
ratios = [hops / float(np.hypot(*site)) for site, hops in dists.items()
          if 15 <= float(np.hypot(*site)) <= 35]
print(f"mean detour ratio over {len(ratios)} sites at distance 15..35: "
      f"{np.mean(ratios):.3f}")
