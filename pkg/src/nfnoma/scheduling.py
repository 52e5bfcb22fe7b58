"""Greedy assignment of beams to far-field users.

Users pick beams one at a time, in user-index order, maximizing the smaller
of the two normalized gains (near gain of the beam owner, far gain toward
the picking user). Normalizers are the maxima over all beams, fixed before
any beam is taken. Deterministic: ties go to the lowest beam index.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .precoding import EffectiveChannels


@dataclass(frozen=True)
class Assignment:
    """Disjoint beam sets, one per far-field user."""

    beam_sets: tuple[tuple[int, ...], ...]
    owner: np.ndarray  # (M,) int, -1 where the beam serves no far-field user

    @property
    def beams_per_user(self) -> int:
        return len(self.beam_sets[0]) if self.beam_sets else 0


def greedy_assign(eff: EffectiveChannels, n_far: int, beams_per_far: int,
                  user_order: list[int] | None = None,
                  allowed: np.ndarray | None = None) -> Assignment:
    """Each user in turn grabs its best remaining beams by the max-min score.

    Score normalizers are fixed over all beams up front, even when a
    boolean `allowed` mask excludes some beams from being taken (the
    harness uses it to keep far-field traffic off beams whose near user
    already needs the whole budget).
    """
    n_beams = eff.nf_gain.shape[0]
    available = n_beams if allowed is None else int(np.sum(allowed))
    if n_far * beams_per_far > available:
        raise ValueError(
            f"cannot give {beams_per_far} beams to each of {n_far} users "
            f"with only {available} beams available")
    nf_norm = eff.nf_gain / eff.nf_gain.max()
    order = list(range(n_far)) if user_order is None else list(user_order)
    taken = np.zeros(n_beams, dtype=bool)
    if allowed is not None:
        taken |= ~np.asarray(allowed, dtype=bool)
    owner = np.full(n_beams, -1, dtype=int)
    beam_sets: list[tuple[int, ...]] = [() for _ in range(n_far)]
    for k in order:
        ff_max = eff.ff_gain[:, k].max()
        ff_norm = eff.ff_gain[:, k] / ff_max if ff_max > 0 else np.zeros(n_beams)
        score = np.minimum(nf_norm, ff_norm)
        picks = []
        for _ in range(beams_per_far):
            masked = np.where(taken, -np.inf, score)
            best = int(np.argmax(masked))  # argmax takes the first (lowest) index on ties
            taken[best] = True
            owner[best] = k
            picks.append(best)
        beam_sets[k] = tuple(picks)
    return Assignment(beam_sets=tuple(beam_sets), owner=owner)
