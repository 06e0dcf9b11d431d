"""Inner loop of the agent-based market simulation.

One participant session: draw a product from the trial probabilities, buy
it with probability q_i; on a decline the session re-draws (same list,
same social state, full choice set) with probability c_i / (1 - q_i), so
that the joint decline-and-continue probability per try is exactly c_i,
the continuation probability of the analytical model.  The loop is plain
scalar code so numba can compile it; without numba it runs interpreted
with identical results (numba's generator implementation is bit-compatible
with numpy's).

Each try consumes up to three uniforms from the stream, in a fixed order:
product selection, purchase decision, continuation decision.  The
continuation uniform is not drawn when the session purchases or hits the
try cap.
"""

from __future__ import annotations

import numpy as np

try:
    from numba import njit

    NUMBA_ENABLED = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    njit = None
    NUMBA_ENABLED = False


def _session_block_impl(
    rng,
    n_participants,
    vis_by_product,
    appeal,
    downloads,
    quality,
    cont,
    social_influence,
    max_tries,
):
    """Simulate a block of consecutive participants under a fixed ranking.

    ``vis_by_product[i]`` is the visibility of product i's current position.
    ``downloads`` is mutated in place when social influence is on; trial
    weights are updated incrementally on each purchase.  Returns the
    purchased product per participant (-1 for none), the number of tries
    per participant, and how many sessions hit the try cap.
    """
    n = quality.shape[0]
    weights = np.empty(n)
    total = 0.0
    for i in range(n):
        weights[i] = vis_by_product[i] * (appeal[i] + downloads[i])
        total += weights[i]
    purchased = np.full(n_participants, -1, dtype=np.int64)
    tries = np.zeros(n_participants, dtype=np.int64)
    truncated = 0
    for t in range(n_participants):
        k = 0
        outcome = -1
        while True:
            k += 1
            u = rng.random() * total
            acc = 0.0
            pick = n - 1
            for i in range(n):
                acc += weights[i]
                if u < acc:
                    pick = i
                    break
            if rng.random() < quality[pick]:
                outcome = pick
                break
            if k >= max_tries:
                truncated += 1
                break
            # continue iff u < c / (1 - q), written multiplicatively; the
            # purchase branch already handled q = 1
            if rng.random() * (1.0 - quality[pick]) >= cont[pick]:
                break
        purchased[t] = outcome
        tries[t] = k
        if outcome >= 0 and social_influence:
            downloads[outcome] += 1
            weights[outcome] += vis_by_product[outcome]
            total += vis_by_product[outcome]
    return purchased, tries, truncated


# Interpreted reference kept importable for jit-vs-python equivalence tests.
session_block_py = _session_block_impl

if NUMBA_ENABLED:
    session_block = njit(cache=True)(_session_block_impl)
else:  # pragma: no cover
    session_block = _session_block_impl
