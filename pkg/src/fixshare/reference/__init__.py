"""Reference-scheme losses, regret-bound terms and optimal segmentations.

Three reference schemes are supported (:class:`SchemeKind`): the standard
one charges every cell the loss of a black-box member that has seen all
data; the two local-learner variants charge each cell the loss of a fresh
copy of the member restricted to that cell, started either from its
initial distribution (freezing) or from its initial distribution evolved
to the cell's first round (sleeping).

The brute-force oracles live in :mod:`fixshare.reference.oracles`.
"""

from __future__ import annotations

import enum
import itertools
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from ..constructions import (ModelAdvice, SegmentMode, build_bayes, build_bayes_union,
                             build_fs_learning, segment_model)
from ..core import (BoundViolationError, FiniteDist, InvalidInputError, Labelling, Segment,
                    Segmentation, enumerate_segmentations)
from ..ehmm import SPARSE, Ehmm, ExpertAdvice, Share, TransitionOp, run_forward

BOUND_TOL = 1e-9


class SchemeKind(enum.Enum):
    STANDARD = "standard"
    LL_FREEZING = "freezing"
    LL_SLEEPING = "sleeping"

    @classmethod
    def parse(cls, value) -> "SchemeKind":
        if isinstance(value, cls):
            return value
        if isinstance(value, SegmentMode):
            return cls(value.value)
        aliases = {"s-tbe": "standard", "stbe": "standard", "fr": "freezing", "sl": "sleeping",
                   "ll_freezing": "freezing", "ll_sleeping": "sleeping"}
        key = str(value).lower()
        return cls(aliases.get(key, key))

    @property
    def mode(self) -> SegmentMode | None:
        return None if self is SchemeKind.STANDARD else SegmentMode(self.value)


def entropy_cross(a: float, b: float) -> float:
    """``-a ln b - (1 - a) ln(1 - b)`` with ``0 ln 0 = 0``."""
    if not (0.0 <= a <= 1.0 and 0.0 <= b <= 1.0):
        raise InvalidInputError(f"arguments must lie in [0, 1], got ({a!r}, {b!r})")
    h = 0.0
    if a > 0:
        h -= a * math.log(b) if b > 0 else -math.inf
    if a < 1:
        h -= (1 - a) * math.log1p(-b) if b < 1 else -math.inf
    return h


def segment_loss(mode: SegmentMode | str, model: Ehmm, seg: Segment, advice: ExpertAdvice,
                 data: Sequence) -> float:
    """Loss of a fresh freezing or sleeping copy of ``model`` on cell ``seg``."""
    return segment_model(mode, model, seg).run(advice, data).total_log_loss


def _check_labels(labels: Labelling, seg: Segmentation, n_members: int):
    if labels.segmentation != seg:
        raise InvalidInputError("labelling belongs to a different segmentation")
    for lab in labels.labels:
        if not (isinstance(lab, (int, np.integer)) and 0 <= lab < n_members):
            raise InvalidInputError(f"label {lab!r} is not a member index")


def reference_round_losses(kind: SchemeKind | str, seg: Segmentation, labels: Labelling,
                           members: Sequence[Ehmm], advice: ExpertAdvice, data: Sequence) -> np.ndarray:
    """Per-round losses of the reference scheme for one segmentation and labelling."""
    kind = SchemeKind.parse(kind)
    if seg.horizon != len(data):
        raise InvalidInputError(f"segmentation covers 1:{seg.horizon}, data has {len(data)} rounds")
    _check_labels(labels, seg, len(members))
    out = np.empty(len(data))
    full = {}
    for cell, lab in labels.items():
        if kind is SchemeKind.STANDARD:
            if lab not in full:
                full[lab] = run_forward(members[lab], SPARSE, advice, data).per_round_losses
            out[cell.start - 1:cell.end] = full[lab][cell.start - 1:cell.end]
        else:
            run = segment_model(kind.mode, members[lab], cell).run(advice, data)
            out[cell.start - 1:cell.end] = run.per_round_losses
    return out


def reference_loss(kind: SchemeKind | str, seg: Segmentation, labels: Labelling,
                   members: Sequence[Ehmm], advice: ExpertAdvice, data: Sequence) -> float:
    """Total loss of the reference scheme for one segmentation and labelling."""
    total = 0.0
    for v in reference_round_losses(kind, seg, labels, members, advice, data):
        total += v
    return float(total)


@dataclass(frozen=True)
class BoundReport:
    reference_loss: float
    switching_term: float
    selection_term: float
    rhs: float
    algorithm_loss: float
    slack: float
    alpha_star: float


def bound_rhs(T: int, seg: Segmentation, labels: Labelling, prior: FiniteDist, alpha: float,
              reference_loss: float, algorithm_loss: float = math.nan) -> BoundReport:
    """Right-hand side of the fixed-share regret bound for one reference scheme.

    A label outside the prior's support gives an infinite selection term.
    """
    if T < 1 or seg.horizon != T:
        raise InvalidInputError(f"segmentation does not cover 1:{T}")
    if not 0.0 <= alpha <= 1.0:
        raise InvalidInputError(f"switching rate must be in [0, 1], got {alpha!r}")
    n = len(seg)
    if T > 1:
        alpha_star = (n - 1) / (T - 1)
        switching = (T - 1) * entropy_cross(alpha_star, alpha)
    else:
        alpha_star, switching = 0.0, 0.0
    selection = 0.0
    for lab in labels.labels:
        w = prior[lab]
        selection += -math.log(w) if w > 0 else math.inf
    rhs = reference_loss + switching + selection
    return BoundReport(reference_loss, switching, selection, rhs, algorithm_loss,
                       rhs - algorithm_loss, alpha_star)


def _as_prior(prior, n: int) -> FiniteDist:
    if prior is None:
        return FiniteDist.uniform(range(n))
    if isinstance(prior, FiniteDist):
        return prior
    return FiniteDist(enumerate(prior))


def build_algorithm(kind: SchemeKind | str, members: Sequence[Ehmm], prior, alpha: float,
                    advice: ExpertAdvice, data: Sequence) -> tuple[Ehmm, TransitionOp, ExpertAdvice]:
    """The algorithm whose regret bound matches ``kind``.

    Standard: fixed share over the members as black boxes. Local-learner
    kinds: fixed share on the union of the members with freezing or
    sleeping resets.
    """
    kind = SchemeKind.parse(kind)
    prior = _as_prior(prior, len(members))
    if kind is SchemeKind.STANDARD:
        return build_bayes(prior), Share(alpha, "initial"), ModelAdvice(members, advice, data)
    union = build_bayes_union(prior, members)
    model, op = build_fs_learning(kind.mode, alpha, union)
    return model, op, advice


def algorithm_loss(kind, members, prior, alpha, advice, data) -> float:
    model, op, adv = build_algorithm(kind, members, prior, alpha, advice, data)
    return run_forward(model, op, adv, data).total_log_loss


def check_bound(kind: SchemeKind | str, members: Sequence[Ehmm], prior, alpha: float,
                advice: ExpertAdvice, data: Sequence, seg: Segmentation, labels: Labelling,
                *, alg_loss: float | None = None, tol: float = BOUND_TOL) -> BoundReport:
    """Evaluate the bound for one reference scheme; raise if it is violated."""
    kind = SchemeKind.parse(kind)
    prior = _as_prior(prior, len(members))
    if alg_loss is None:
        alg_loss = algorithm_loss(kind, members, prior, alpha, advice, data)
    ref = reference_loss(kind, seg, labels, members, advice, data)
    report = bound_rhs(len(data), seg, labels, prior, alpha, ref, alg_loss)
    if report.slack < -tol:
        raise BoundViolationError(report)
    return report


def segment_loss_table(kind: SchemeKind | str, members: Sequence[Ehmm], advice: ExpertAdvice,
                       data: Sequence) -> np.ndarray:
    """``table[m, i, j]``: loss of member ``m`` on cell ``i:j`` (1-indexed)."""
    kind = SchemeKind.parse(kind)
    T = len(data)
    table = np.full((len(members), T + 1, T + 1), np.nan)
    for m, member in enumerate(members):
        if kind is SchemeKind.STANDARD:
            losses = run_forward(member, SPARSE, advice, data).per_round_losses
            cum = np.concatenate(([0.0], np.cumsum(losses)))
            for i in range(1, T + 1):
                table[m, i, i:] = cum[i:] - cum[i - 1]
            continue
        for i in range(1, T + 1):
            sm = segment_model(kind.mode, member, Segment(i, T))
            run = sm.run(advice, data)
            table[m, i, i:] = np.cumsum(run.per_round_losses)
    return table


def iter_labellings(seg: Segmentation, n_members: int) -> Iterator[Labelling]:
    for labs in itertools.product(range(n_members), repeat=len(seg)):
        yield Labelling(seg, labs)


def sweep_bounds(kind: SchemeKind | str, members: Sequence[Ehmm], prior, alpha: float,
                 advice: ExpertAdvice, data: Sequence, *, segmentations=None, labellings=None,
                 tol: float = BOUND_TOL) -> Iterator[tuple[Segmentation, Labelling, BoundReport]]:
    """Bound reports for every segmentation and every labelling.

    ``labellings``, if given, replaces the exhaustive sweep by exactly those
    labellings. Raises :class:`BoundViolationError` at the first violated
    instance.
    """
    kind = SchemeKind.parse(kind)
    prior = _as_prior(prior, len(members))
    T = len(data)
    alg = algorithm_loss(kind, members, prior, alpha, advice, data)
    table = segment_loss_table(kind, members, advice, data)
    if labellings is None:
        if segmentations is None:
            segmentations = enumerate_segmentations(T)
        labellings = (lab for seg in segmentations for lab in iter_labellings(seg, len(members)))
    for labels in labellings:
        seg = labels.segmentation
        _check_labels(labels, seg, len(members))
        ref = 0.0
        for cell, lab in labels.items():
            ref += table[lab, cell.start, cell.end]
        report = bound_rhs(T, seg, labels, prior, alpha, float(ref), alg)
        if report.slack < -tol:
            raise BoundViolationError(report)
        yield seg, labels, report


def best_segmentation(kind: SchemeKind | str, members: Sequence[Ehmm], advice: ExpertAdvice,
                      data: Sequence, max_cells: int | None = None, *, table: np.ndarray | None = None
                      ) -> tuple[Segmentation, Labelling, float]:
    """Segmentation and labelling of least total reference loss.

    Dynamic program over the last cut point, O(T^2 |members|) given the
    cell-loss table. Ties go to the earlier cut point and the lower member
    index. ``max_cells`` caps the number of cells.
    """
    kind = SchemeKind.parse(kind)
    T = len(data)
    if table is None:
        table = segment_loss_table(kind, members, advice, data)
    # best member per cell; argmin returns the first (lowest) index on ties
    cell_best = np.argmin(table[:, 1:, 1:], axis=0)
    cell_loss = np.min(table[:, 1:, 1:], axis=0)
    inf = math.inf
    if max_cells is None:
        # value[j]: best loss of x_1..x_j; back[j]: start of the last cell
        value, back = [0.0] + [inf] * T, [0] * (T + 1)
        for j in range(1, T + 1):
            for i in range(1, j + 1):
                v = value[i - 1] + float(cell_loss[i - 1, j - 1])
                if v < value[j]:
                    value[j], back[j] = v, i
        starts, j = [], T
        while j > 0:
            starts.append(back[j])
            j = back[j] - 1
        total = value[T]
    else:
        K = max(1, min(int(max_cells), T))
        # value[k][j]: best loss of x_1..x_j with exactly k cells
        value = [[inf] * (T + 1) for _ in range(K + 1)]
        back = [[0] * (T + 1) for _ in range(K + 1)]
        value[0][0] = 0.0
        for k in range(1, K + 1):
            for j in range(k, T + 1):
                for i in range(k, j + 1):
                    v = value[k - 1][i - 1] + float(cell_loss[i - 1, j - 1])
                    if v < value[k][j]:
                        value[k][j], back[k][j] = v, i
        best_k = min(range(1, K + 1), key=lambda k: (value[k][T], k))
        starts, j, k = [], T, best_k
        while k > 0:
            starts.append(back[k][j])
            j, k = back[k][j] - 1, k - 1
        total = value[best_k][T]
    seg = Segmentation.from_starts(T, starts)
    labels = Labelling(seg, tuple(int(cell_best[c.start - 1, c.end - 1]) for c in seg))
    return seg, labels, total


__all__ = [
    "BOUND_TOL", "BoundReport", "SchemeKind", "algorithm_loss", "best_segmentation",
    "bound_rhs", "build_algorithm", "check_bound", "entropy_cross", "iter_labellings",
    "reference_loss", "reference_round_losses", "segment_loss", "segment_loss_table", "sweep_bounds",
]
