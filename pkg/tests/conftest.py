"""Shared test helpers: dense chain builders used by iso and acceptance."""

import numpy as np

import rcmwalk as rw


def build_strong_chains(field, labeling, alpha):
    """Dense one-step matrices of the coarse-grained and the
    threshold-restricted walks on the strong component.

    Returns (sites, index, P_hat, P_tilde, pi, pi_tilde, neighbors_fn).
    """
    sites = labeling.strong_sites()
    idx = {s: i for i, s in enumerate(sites)}
    m = len(sites)
    p_hat = np.zeros((m, m))
    for s in sites:
        hc = rw.hat_chain(field, labeling, alpha, s)
        for y, q in hc.row.items():
            p_hat[idx[s], idx[y]] += q
    p_tilde = np.zeros((m, m))
    pi = np.zeros(m)
    pi_tilde = np.zeros(m)
    for s in sites:
        i = idx[s]
        pi[i] = field.pi(s)
        for y, w in field.incident_bonds(s):
            if w >= alpha:
                pi_tilde[i] += w
        for y, w in field.incident_bonds(s):
            if w >= alpha and y in idx:
                p_tilde[i, idx[y]] += w / pi_tilde[i]

    def neighbors_fn(s):
        return [y for y, w in field.incident_bonds(s) if w >= alpha and y in idx]

    return sites, idx, p_hat, p_tilde, pi, pi_tilde, neighbors_fn


def two_step_cut(q2, pi_vec, idx_list):
    """(pi_S, Q2(S, S^c), Phi_S) for the two-step flow matrix Q2 =
    diag(pi) P^2 and the index list of S."""
    sel = np.asarray(idx_list, dtype=int)
    pi_s = float(pi_vec[sel].sum())
    inside = float(q2[np.ix_(sel, sel)].sum())
    total = float(q2[sel, :].sum())
    return pi_s, total - inside, (total - inside) / pi_s
