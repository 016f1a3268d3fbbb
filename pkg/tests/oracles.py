"""Brute-force reference implementations used only by the tests.

They share no code with the package beyond divergence arithmetic and the
mechanism being evaluated.
"""

import itertools
import math

import numpy as np

from userdp.core import hockey_stick


def inner_params(eps, delta):
    eps_bar = eps / 3
    delta_bar = delta / (math.exp(2 * eps_bar) + math.exp(eps_bar) + 2)
    kappa = 1 + math.ceil(math.log(1 / delta_bar) / eps_bar)
    return eps_bar, delta_bar, kappa


def indist(p, q, eps, delta):
    return hockey_stick(p, q, eps) <= delta and hockey_stick(q, p, eps) <= delta


def lddp_brute(mech, ds, r, eps, delta):
    """Every pair of (n - r)-user sub-datasets gives indistinguishable outputs."""
    outs = [mech(ds.subset(J)) for J in itertools.combinations(range(ds.n), ds.n - r)]
    return all(indist(p, q, eps, delta) for p, q in itertools.combinations(outs, 2))


def delstab_law_brute(mech, ds, eps, delta):
    """Exact DelStab output law by enumerating every removed set S and every remaining set J.

    The last entry is the probability of Bottom.
    """
    eps_bar, delta_bar, kappa = inner_params(eps, delta)
    noise = np.exp(-eps_bar * np.abs(np.arange(2 * kappa + 1) - kappa))
    noise /= noise.sum()
    n, keep = ds.n, ds.n - 4 * kappa
    js = list(itertools.combinations(range(n), keep))
    masks = np.array([sum(1 << i for i in J) for J in js], dtype=np.int64)
    outs = [mech(ds.subset(J)) for J in js]
    dense = np.stack([o.masses for o in outs])
    bad_unions = np.array(
        [masks[a] | masks[b] for a, b in itertools.combinations(range(len(js)), 2) if not indist(outs[a], outs[b], eps_bar, delta_bar)],
        dtype=np.int64,
    )
    law = np.zeros(dense.shape[1] + 1)
    for r1, p in enumerate(noise):
        acc, count = np.zeros(dense.shape[1]), 0
        for S in itertools.combinations(range(n), r1):
            smask = sum(1 << i for i in S)
            if bad_unions.size and np.any((bad_unions & smask) == 0):
                continue
            inside = (masks & smask) == 0
            acc += dense[inside].mean(axis=0)
            count += 1
        if count == 0:
            law[-1] += p
        else:
            law[:-1] += p * acc / count
    return law
