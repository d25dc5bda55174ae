"""Exact cooperative-game quantities by brute-force enumeration.

Works on small games (player counts up to 20) with every subset value
memoized, and provides the Shapley values, pairwise and grouped interactions,
and the self-context/full-context forms that the greedy engine's selection
rule decomposes into. The decomposition residual checks here are the ground
truth that the engine is verified against.

Subsets are passed as iterables of player indices; internally they are
bitmasks into the memo table. Grouped quantities treat a collection of
players as a single composite element, and composite elements flatten to
their member sets wherever a subset value is looked up (so a context like
"everyone, with B fused into one element" still evaluates on plain subsets).
"""

from __future__ import annotations

from itertools import combinations
from math import factorial

import numpy as np

from .rng import SplitMix64

MAX_PLAYERS = 20


class GameSpec:
    """A finite cooperative game: player count plus all 2**n subset values."""

    def __init__(self, n: int, values) -> None:
        if not 1 <= n <= MAX_PLAYERS:
            raise ValueError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
        values = np.asarray(values, dtype=np.float64)
        if values.shape != (1 << n,):
            raise ValueError(f"expected {1 << n} subset values, got shape {values.shape}")
        self.n = n
        self.values = values

    @classmethod
    def from_function(cls, n: int, fn) -> "GameSpec":
        """Memoize ``fn`` (taking a tuple of ascending player indices) over all subsets."""
        if not 1 <= n <= MAX_PLAYERS:
            raise ValueError(f"player count must be in [1, {MAX_PLAYERS}], got {n}")
        values = np.empty(1 << n, dtype=np.float64)
        for mask in range(1 << n):
            values[mask] = fn(_mask_to_subset(mask))
        return cls(n, values)

    def mask_of(self, subset) -> int:
        mask = 0
        for i in subset:
            i = int(i)
            if not 0 <= i < self.n:
                raise ValueError(f"player {i} out of range")
            bit = 1 << i
            if mask & bit:
                raise ValueError(f"duplicate player {i}")
            mask |= bit
        return mask

    def value(self, subset) -> float:
        return float(self.values[self.mask_of(subset)])

    def value_mask(self, mask: int) -> float:
        return float(self.values[mask])

    @property
    def full_mask(self) -> int:
        return (1 << self.n) - 1


def _mask_to_subset(mask: int) -> tuple[int, ...]:
    out = []
    i = 0
    while mask:
        if mask & 1:
            out.append(i)
        mask >>= 1
        i += 1
    return tuple(out)


def _popcounts(masks: np.ndarray) -> np.ndarray:
    if hasattr(np, "bitwise_count"):
        return np.bitwise_count(masks.astype(np.uint64)).astype(np.int64)
    return np.array([bin(int(m)).count("1") for m in masks], dtype=np.int64)


def random_game(n: int, seed: int) -> GameSpec:
    """Game with every subset value drawn uniformly from [0, 1)."""
    rng = SplitMix64(seed)
    values = np.empty(1 << n, dtype=np.float64)
    for mask in range(1 << n):
        values[mask] = rng.uniform()
    return GameSpec(n, values)


def additive_game(weights) -> GameSpec:
    """Game whose subset value is the sum of member weights."""
    weights = np.asarray(weights, dtype=np.float64)
    n = weights.size
    values = np.zeros(1 << n, dtype=np.float64)
    masks = np.arange(1 << n, dtype=np.int64)
    for i in range(n):
        values[(masks >> i) & 1 == 1] += weights[i]
    return GameSpec(n, values)


def shapley_exact(game: GameSpec, player: int) -> float:
    """Average marginal contribution of one player over all subsets of the rest."""
    n = game.n
    if not 0 <= player < n:
        raise ValueError(f"player {player} out of range")
    masks = np.arange(1 << n, dtype=np.int64)
    without = masks[(masks >> player) & 1 == 0]
    sizes = _popcounts(without)
    weight_by_size = np.array(
        [factorial(n - 1 - s) * factorial(s) / factorial(n) for s in range(n)]
    )
    gains = game.values[without | (1 << player)] - game.values[without]
    return float(np.sum(weight_by_size[sizes] * gains))


def absence_shapley(game: GameSpec, player: int) -> float:
    """Average reward drop from removing one player, over all subsets containing it.

    Enumerated literally over subsets that contain the player (an independent
    code path from ``shapley_exact``, to which it is mathematically equal).
    """
    n = game.n
    if not 0 <= player < n:
        raise ValueError(f"player {player} out of range")
    bit = 1 << player
    total = 0.0
    for mask in range(1 << n):
        if not mask & bit:
            continue
        rest = mask & ~bit
        a = int(rest).bit_count()
        weight = factorial(n - a - 1) * factorial(a) / factorial(n)
        total += weight * (game.value_mask(mask) - game.value_mask(rest))
    return total


def _shapley_in_view(game: GameSpec, elements: tuple[int, ...], index: int) -> float:
    """Shapley value of one element in a game whose players are the given
    (possibly composite) element bitmasks."""
    others = elements[:index] + elements[index + 1 :]
    m = len(elements)
    target = elements[index]
    total = 0.0
    for k in range(len(others) + 1):
        weight = factorial(m - 1 - k) * factorial(k) / factorial(m)
        for combo in combinations(others, k):
            u = 0
            for mask in combo:
                u |= mask
            total += weight * (game.value_mask(u | target) - game.value_mask(u))
    return total


def interaction_exact(game: GameSpec, i: int, j: int) -> float:
    """Joint contribution of players i and j beyond their individual ones.

    The pair is fused into a single element within the full player set; the
    individual terms are Shapley values in the game with the partner removed.
    """
    if i == j:
        raise ValueError("interaction requires two distinct players")
    n = game.n
    pair = (1 << i) | (1 << j)
    singles = [1 << k for k in range(n) if k != i and k != j]
    fused = tuple(singles) + (pair,)
    joint = _shapley_in_view(game, fused, len(fused) - 1)

    def _solo(player: int, removed: int) -> float:
        members = tuple(1 << k for k in range(n) if k != removed)
        return _shapley_in_view(game, members, members.index(1 << player))

    return joint - _solo(i, removed=j) - _solo(j, removed=i)


def self_context_shapley(game: GameSpec, subset) -> float:
    """Reward of a subset against the empty coalition: f(B) - f(empty)."""
    return game.value(subset) - game.value_mask(0)


def _flatten(element_masks) -> int:
    u = 0
    for mask in element_masks:
        u |= mask
    return u


def _self_context_interaction_masks(game: GameSpec, elements: tuple[int, ...]) -> float:
    m = len(elements)
    if m < 2:
        raise ValueError("interaction requires at least two elements")
    whole = self_context_shapley_mask(game, _flatten(elements))
    parts = 0.0
    for size in range(1, m):
        for combo in combinations(elements, size):
            parts += self_context_shapley_mask(game, _flatten(combo))
    return whole - parts


def self_context_shapley_mask(game: GameSpec, mask: int) -> float:
    return game.value_mask(mask) - game.value_mask(0)


def self_context_interaction(game: GameSpec, subset) -> float:
    """Contribution of a patch group beyond all of its proper sub-groups.

    The group's empty-baseline reward minus the same quantity for every
    proper nonempty sub-group.
    """
    members = [game.mask_of([i]) for i in subset]
    return _self_context_interaction_masks(game, tuple(members))


def full_context_shapley(game: GameSpec, subset, context=None) -> float:
    """Weighted reward drop when a subset leaves its context coalition.

    ``context`` defaults to the full player set. The subset is treated as one
    element; the weight is the probability of drawing the leave-one-out
    arrangement among all orderings of the context's members.
    """
    sub_mask = game.mask_of(subset)
    if sub_mask == 0:
        raise ValueError("subset must be nonempty")
    ctx_mask = game.full_mask if context is None else game.mask_of(context)
    if sub_mask & ~ctx_mask:
        raise ValueError("subset must lie within the context")
    return _full_context_shapley_masks(game, sub_mask, ctx_mask)


def _full_context_shapley_masks(game: GameSpec, sub_mask: int, ctx_mask: int) -> float:
    b = int(sub_mask).bit_count()
    m = int(ctx_mask).bit_count()
    weight = factorial(b - 1) * factorial(m - b) / factorial(m)
    return weight * (game.value_mask(ctx_mask) - game.value_mask(ctx_mask & ~sub_mask))


def _full_context_interaction_masks(game: GameSpec, elements: tuple[int, ...]) -> float:
    m = len(elements)
    if m < 2:
        raise ValueError("interaction requires at least two elements")
    whole_mask = _flatten(elements)
    whole = _full_context_shapley_masks(game, whole_mask, game.full_mask)
    parts = 0.0
    for size in range(1, m):
        for combo in combinations(elements, size):
            combo_mask = _flatten(combo)
            ctx = game.full_mask & ~(whole_mask & ~combo_mask)
            parts += _full_context_shapley_masks(game, combo_mask, ctx)
    return whole - parts


def full_context_interaction(game: GameSpec, subset) -> float:
    """Full-context analogue of the grouped interaction: the group's weighted
    full-coalition drop minus each proper sub-group's drop in the context
    with the rest of the group removed."""
    members = [game.mask_of([i]) for i in subset]
    return _full_context_interaction_masks(game, tuple(members))


def _elements_for(game: GameSpec, prior, group) -> tuple[int, ...]:
    prior_mask = game.mask_of(prior)
    group = [int(b) for b in group]
    group_masks = [game.mask_of([b]) for b in group]
    flat = _flatten(group_masks)
    if prior_mask & flat:
        raise ValueError("prior and group must be disjoint")
    elements = ([prior_mask] if prior_mask else []) + group_masks
    if len(elements) < 2:
        raise ValueError("decomposition needs at least two elements")
    return tuple(elements)


def insertion_decomposition_residual(game: GameSpec, prior, group) -> float:
    """|whole - (interaction + sub-group terms)| for the insertion-side split.

    The empty-baseline reward of prior+group, with the prior fused as one
    element, must equal the grouped interaction plus the empty-baseline
    rewards of every proper element combination. Zero in exact arithmetic.
    """
    elements = _elements_for(game, prior, group)
    lhs = self_context_shapley_mask(game, _flatten(elements))
    rhs = _self_context_interaction_masks(game, elements)
    for size in range(1, len(elements)):
        for combo in combinations(elements, size):
            rhs += self_context_shapley_mask(game, _flatten(combo))
    return abs(lhs - rhs)


def deletion_decomposition_residual(game: GameSpec, prior, group) -> float:
    """|whole - (interaction + sub-group terms)| for the deletion-side split.

    Same structure as the insertion residual but in terms of weighted
    full-coalition drops, each sub-group evaluated in the context that
    excludes the rest of the fused element set."""
    elements = _elements_for(game, prior, group)
    whole_mask = _flatten(elements)
    lhs = _full_context_shapley_masks(game, whole_mask, game.full_mask)
    rhs = _full_context_interaction_masks(game, elements)
    for size in range(1, len(elements)):
        for combo in combinations(elements, size):
            combo_mask = _flatten(combo)
            ctx = game.full_mask & ~(whole_mask & ~combo_mask)
            rhs += _full_context_shapley_masks(game, combo_mask, ctx)
    return abs(lhs - rhs)
