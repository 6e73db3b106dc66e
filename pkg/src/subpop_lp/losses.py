"""Loss functions for testing and treatment-recommendation procedures.

Every loss here is a sum of single-axis terms, each of the form
``coef(action) * g(delta_k)`` with ``g`` one of

* ``"ge"``:  1[delta_k >= dmin_k]
* ``"lt"``:  1[delta_k <  dmin_k]
* ``"dge"``: delta_k * 1[delta_k >= dmin_k]

which is what lets the coefficient engine integrate them axis by axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .actions import ALL_SUBSETS, DECISION
from .trial import H01, H02, DerivedScale

_SUBPOP_NULL = (H01, H02)


def _g(kind: str, delta, threshold):
    delta = np.asarray(delta, dtype=float)
    if kind == "ge":
        return (delta >= threshold).astype(float)
    if kind == "lt":
        return (delta < threshold).astype(float)
    if kind == "dge":
        return np.where(delta >= threshold, delta, 0.0)
    raise ValueError(kind)


class Loss:
    """Base class: subclasses define ``space`` and ``terms``."""

    space = ALL_SUBSETS
    thresholds = (0.0, 0.0)

    def check_action(self, action) -> frozenset:
        action = frozenset(action)
        if action not in self.space.actions:
            raise ValueError(f"{action!r} is not an action of {type(self).__name__}")
        return action

    def terms(self, action) -> list[tuple[float, int, str]]:
        raise NotImplementedError

    def __call__(self, action, delta1, delta2):
        action = self.check_action(action)
        d = (delta1, delta2)
        total = 0.0
        for coef, axis, kind in self.terms(action):
            total = total + coef * _g(kind, d[axis], self.thresholds[axis])
        return total

    def max_value(self, box=None) -> float:
        """Upper bound of the loss over ``box`` (needed for bounded losses)."""
        best = 0.0
        for a in self.space.actions:
            v = 0.0
            for coef, axis, kind in self.terms(a):
                if kind == "dge":
                    if box is None:
                        return float("inf")
                    v += coef * max(box[axis][1], 0.0)
                else:
                    v += coef
            best = max(best, v)
        return best

    def is_zero(self) -> bool:
        return all(not self.terms(a) for a in self.space.actions)


@dataclass(frozen=True)
class IndicatorLoss(Loss):
    """One unit per subpopulation null left unrejected at a meaningful effect."""

    delta1_min: float
    delta2_min: float

    @property
    def thresholds(self):
        return (self.delta1_min, self.delta2_min)

    def terms(self, action):
        return [(1.0, k, "ge") for k in range(2) if _SUBPOP_NULL[k] not in action]


@dataclass(frozen=True)
class ProportionalLoss(Loss):
    """Like :class:`IndicatorLoss` but the penalty is delta_k itself."""

    delta1_min: float
    delta2_min: float

    @property
    def thresholds(self):
        return (self.delta1_min, self.delta2_min)

    def terms(self, action):
        return [(1.0, k, "dge") for k in range(2) if _SUBPOP_NULL[k] not in action]


@dataclass(frozen=True)
class DecisionLoss(Loss):
    """False-positive / false-negative penalties for recommending treatment."""

    delta1_min: float
    delta2_min: float
    l1_fp: float = 1.0
    l1_fn: float = 1.0
    l2_fp: float = 1.0
    l2_fn: float = 1.0

    space = DECISION

    def __post_init__(self):
        if min(self.l1_fp, self.l1_fn, self.l2_fp, self.l2_fn) < 0:
            raise ValueError("penalties must be nonnegative")

    @property
    def thresholds(self):
        return (self.delta1_min, self.delta2_min)

    def terms(self, action):
        fp = (self.l1_fp, self.l2_fp)
        fn = (self.l1_fn, self.l2_fn)
        out = []
        for k in range(2):
            if (k + 1) in action:
                if fp[k]:
                    out.append((fp[k], k, "lt"))
            elif fn[k]:
                out.append((fn[k], k, "ge"))
        return out


@dataclass(frozen=True)
class ZeroLoss(Loss):
    """Identically zero; handy for feasibility problems and tests."""

    def check_action(self, action) -> frozenset:
        return frozenset(action)

    def terms(self, action):
        return []


def loss_eval(spec: Loss, action, delta1, delta2):
    return spec(action, delta1, delta2)


def make_loss(kind: str, scale: DerivedScale, **params) -> Loss:
    d1, d2 = scale.delta1_min, scale.delta2_min
    if kind in ("indicator", "L~"):
        return IndicatorLoss(d1, d2)
    if kind in ("proportional", "L~'"):
        return ProportionalLoss(d1, d2)
    if kind == "decision":
        if "l_fp" in params or "l_fn" in params:
            fp, fn = params.get("l_fp", 1.0), params.get("l_fn", 1.0)
            params = {"l1_fp": fp, "l2_fp": fp, "l1_fn": fn, "l2_fn": fn}
        return DecisionLoss(d1, d2, **params)
    if kind == "zero":
        return ZeroLoss()
    raise ValueError(f"unknown loss kind {kind!r}")


def check_bounded(loss: Loss, prior) -> float:
    """Sup of the loss over the prior's effective support; raises if infinite."""
    box = prior.support_box()
    bound = loss.max_value(box)
    if not np.isfinite(bound):
        raise ValueError("loss is unbounded on the prior support")
    return bound
