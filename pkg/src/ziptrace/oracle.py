"""Brute-force reference implementations used to validate the attacker.

These recompute everything from raw counts with exact rational arithmetic and
naive scans, deliberately sharing no code with the fast paths: probabilities
are rebuilt with `fractions.Fraction`, likelihoods are plain products (no
logs), and candidate search is a linear sweep.
"""

from __future__ import annotations

from fractions import Fraction
from typing import Mapping, Sequence

from .attacker import LinkMatrix, TransitionMatrix, collapse_repeats
from .traces import AnonTrace


def _exact_row(counts: Mapping[int, int], universe_size: int) -> tuple[dict[int, Fraction], Fraction]:
    """Exact-rational version of the row smoothing scheme."""
    d = len(counts)
    if d == 0:
        return {}, Fraction(1, universe_size)
    n = sum(counts.values())
    unseen = universe_size - d
    eps = Fraction(1, 1 + d)
    if unseen <= 0:
        return {q: Fraction(c, n) for q, c in counts.items()}, eps
    probs = {q: Fraction(c, n) * (1 - eps) for q, c in counts.items()}
    return probs, eps / unseen


def _exact_transition(m: TransitionMatrix, p: int, q: int) -> Fraction:
    row = {t: c for (f, t), c in m.counts.items() if f == p}
    probs, unseen = _exact_row(row, len(m.universe))
    return probs.get(q, unseen)


def _exact_start(m: TransitionMatrix, q: int) -> Fraction:
    probs, unseen = _exact_row(m.prior_counts, len(m.universe))
    return probs.get(q, unseen)


def exact_sequence_likelihood(m: TransitionMatrix, seq: Sequence[int]) -> Fraction:
    like = _exact_start(m, seq[0])
    for p, q in zip(seq, seq[1:]):
        like *= _exact_transition(m, p, q)
    return like


def exact_classify(profiles: Mapping[int, TransitionMatrix], seq: Sequence[int],
                   collapse: bool = True) -> tuple[int, Fraction]:
    """Argmax user by exact rational likelihood; ties go to the smallest id."""
    if len(seq) == 0:
        raise ValueError("cannot classify an empty tower sequence")
    s = collapse_repeats(seq) if collapse else list(seq)
    best_user = -1
    best: Fraction | None = None
    for user in sorted(profiles):
        like = exact_sequence_likelihood(profiles[user], s)
        if best is None or like > best:
            best_user, best = user, like
    return best_user, best


def exact_link_chain(lm: LinkMatrix, views: Sequence[AnonTrace], target: int,
                     max_links: int | None = None) -> list[int]:
    """Greedy linking replayed with linear scans and exact probabilities.

    Returns the chain as pseudonym ids, target first.
    """
    ordinal = next(i for i, v in enumerate(views) if v.pseudonym == target)
    chain = [ordinal]
    consumed = {ordinal}
    while max_links is None or len(chain) - 1 < max_links:
        tail = views[chain[-1]]
        cands = [
            i for i, v in enumerate(views)
            if i not in consumed and tail.end < v.start <= tail.end + lm.window
        ]
        if not cands:
            break
        last_tower = tail.events[-1].tower
        best = None
        best_prob: Fraction | None = None
        best_key = None
        for i in cands:
            prob = _exact_transition(lm.matrix, last_tower, views[i].events[0].tower)
            key = (views[i].start, i)
            if best_prob is None or prob > best_prob or (prob == best_prob and key < best_key):
                best, best_prob, best_key = i, prob, key
        chain.append(best)
        consumed.add(best)
    return [views[i].pseudonym for i in chain]
