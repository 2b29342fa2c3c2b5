import math
from dataclasses import dataclass
from typing import Iterable, Tuple

from app.core.exceptions import InvalidArgumentError
from app.schemas.market import Label


@dataclass(frozen=True)
class ConfusionCounts:
    """
    * binary confusion counts, Up is the positive class
    """

    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        for name in ("tp", "tn", "fp", "fn"):
            if getattr(self, name) < 0:
                raise InvalidArgumentError(f"confusion count {name} must be nonnegative")

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion_from_pairs(pairs: Iterable[Tuple[Label, Label]]) -> ConfusionCounts:
    """
    * (truth, predicted) pairs to counts
    """
    tp = tn = fp = fn = 0
    for truth, predicted in pairs:
        if truth not in (Label.up, Label.down) or predicted not in (Label.up, Label.down):
            raise InvalidArgumentError(f"only Up/Down pairs can be scored, got ({truth}, {predicted})")
        if truth == Label.up:
            tp += predicted == Label.up
            fn += predicted == Label.down
        else:
            tn += predicted == Label.down
            fp += predicted == Label.up
    return ConfusionCounts(tp=tp, tn=tn, fp=fp, fn=fn)


def _check(counts: ConfusionCounts):
    if counts.total == 0:
        raise InvalidArgumentError("cannot score an empty prediction set")


def accuracy(counts: ConfusionCounts) -> float:
    _check(counts)
    return (counts.tp + counts.tn) / counts.total


def mcc(counts: ConfusionCounts) -> float:
    """
    Matthews correlation coefficient in [-1, 1].

    Defined as 0 when any marginal is empty (zero denominator).
    """
    _check(counts)
    tp, tn, fp, fn = counts.tp, counts.tn, counts.fp, counts.fn
    denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn)
    if denom == 0:
        return 0.0
    value = (tp * tn - fp * fn) / math.sqrt(denom)
    return max(-1.0, min(1.0, value))
