"""Action spaces: which subsets a procedure may reject or recommend."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from .trial import H01, H02, H0C, HYPOTHESES


@dataclass(frozen=True)
class ActionSpace:
    """Ordered actions; ``actions[0]`` is the do-nothing action.

    Only ``actions[1:]`` become LP variables, the first one is implied by
    the per-cell remainder.
    """

    name: str
    actions: tuple

    @property
    def n_free(self) -> int:
        return len(self.actions) - 1

    def index(self, action) -> int:
        return self.actions.index(frozenset(action))

    def labels(self) -> list[str]:
        return [action_label(a) for a in self.actions]

    def contains(self, item) -> list[bool]:
        """Per-action flag telling whether ``item`` belongs to the action."""
        return [item in a for a in self.actions]


def action_label(action) -> str:
    if not action:
        return "none"
    order = {H01: 0, H02: 1, H0C: 2, 1: 0, 2: 1}
    return "+".join(str(x) for x in sorted(action, key=lambda x: order.get(x, 9)))


TESTING = ActionSpace(
    "testing",
    (
        frozenset(),
        frozenset({H01}),
        frozenset({H02}),
        frozenset({H0C}),
        frozenset({H01, H0C}),
        frozenset({H02, H0C}),
        frozenset({H01, H02, H0C}),
    ),
)

# every subset of the family, including the incoherent {H01, H02}
ALL_SUBSETS = ActionSpace(
    "all-subsets",
    tuple(frozenset(c) for r in range(4) for c in combinations(HYPOTHESES, r)),
)

DECISION = ActionSpace(
    "decision",
    (frozenset(), frozenset({1}), frozenset({2}), frozenset({1, 2})),
)
