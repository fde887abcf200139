"""Brute-force verification oracles.

These deliberately avoid the indexed forward pass in :mod:`fixshare.ehmm`:
everything here works on plain dicts keyed by state id, in log domain, so
it can serve as an independent check. Every oracle is exponential in
something and is guarded by an explicit size limit.
"""

from __future__ import annotations

import math
from typing import Sequence

from ..constructions import SegmentMode
from ..core import (LimitExceededError, enumerate_segmentations, log_add, log_sum)
from ..ehmm import Ehmm, ExpertAdvice, Share, Sparse

MAX_PATHS = 10 ** 6
MAX_MIXTURE_HORIZON = 14


def _push_dict(model: Ehmm, dist: dict) -> dict:
    out: dict = {}
    for q, p in dist.items():
        for r, pr in model.transition(q).items():
            out[r] = out.get(r, 0.0) + p * pr
    return out


def _forwarded(model: Ehmm, steps: int) -> dict:
    dist = dict(model.initial.items())
    for _ in range(steps):
        dist = _push_dict(model, dist)
    return dist


def _log_emission(model: Ehmm, advice: ExpertAdvice, q, t: int, x) -> float:
    return log_sum(math.log(p) + advice.log_density(t, e, x)
                   for e, p in model.production(q).items())


def _row(model: Ehmm, op, q, t: int, start: int) -> dict:
    """Transition row from state ``q`` at round ``t`` to round ``t + 1``."""
    base = dict(model.transition(q).items())
    if op is None or isinstance(op, Sparse) or op.alpha == 0.0:
        return base
    if op.sleeping:
        reset = _forwarded(model, t + 1 - start)
    elif op.reset == "initial":
        reset = dict(model.initial.items())
    else:
        reset = dict(op.reset.items())
    a = op.alpha
    row = {r: (1 - a) * p for r, p in base.items()} if a < 1.0 else {}
    for r, p in reset.items():
        row[r] = row.get(r, 0.0) + a * p
    return {r: p for r, p in row.items() if p > 0}


def count_paths(model: Ehmm, T: int, op=None, *, start: int = 1, limit: int = MAX_PATHS) -> int:
    """Number of positive-probability state paths of length ``T``."""
    counts = {q: 1 for q in model.initial}
    for k in range(T - 1):
        nxt: dict = {}
        for q, c in counts.items():
            for r in _row(model, op, q, start + k, start):
                nxt[r] = nxt.get(r, 0) + c
        counts = nxt
        if sum(counts.values()) > limit:
            raise LimitExceededError(f"more than {limit} paths")
    total = sum(counts.values())
    if total > limit:
        raise LimitExceededError(f"{total} paths exceed the limit {limit}")
    return total


def oracle_path_sum(model: Ehmm, advice: ExpertAdvice, data: Sequence, op: Share | Sparse | None = None,
                    *, start: int = 1, max_paths: int = MAX_PATHS) -> float:
    """``-ln`` of the joint probability of ``data``, summed path by path."""
    T = len(data)
    count_paths(model, T, op, start=start, limit=max_paths)
    path_logs: list[float] = []

    def walk(k: int, q, acc: float):
        t = start + k
        acc += _log_emission(model, advice, q, t, data[k])
        if k == T - 1:
            path_logs.append(acc)
            return
        for r, p in _row(model, op, q, t, start).items():
            walk(k + 1, r, acc + math.log(p))

    for q, p in model.initial.items():
        walk(0, q, math.log(p))
    return -log_sum(path_logs)


def naive_cumulative_log_probs(model: Ehmm, advice: ExpertAdvice, data: Sequence,
                               initial: dict | None = None, *, start: int = 1) -> list[float]:
    """``ln P(x_start..x_j)`` for every ``j`` by an unnormalised dict forward pass."""
    alpha = {q: math.log(p) for q, p in (initial or dict(model.initial.items())).items() if p > 0}
    out = []
    for k, x in enumerate(data):
        t = start + k
        joint = {q: lw + _log_emission(model, advice, q, t, x) for q, lw in alpha.items()}
        out.append(log_sum(joint.values()))
        nxt: dict = {}
        for q, lw in joint.items():
            for r, p in model.transition(q).items():
                nxt[r] = log_add(nxt.get(r, -math.inf), lw + math.log(p))
        alpha = nxt
    return out


def cell_log_probs(mode: SegmentMode, model: Ehmm, advice: ExpertAdvice, data: Sequence) -> dict:
    """``{(i, j): ln model^mode_{i:j}(x_{i:j})}`` for all cells of ``1:T``."""
    mode = SegmentMode.parse(mode)
    T = len(data)
    table = {}
    for i in range(1, T + 1):
        init = None
        if mode is SegmentMode.SLEEPING:
            init = _forwarded(model, i - 1)
        cum = naive_cumulative_log_probs(model, advice, data[i - 1:], init, start=i)
        for j in range(i, T + 1):
            table[i, j] = cum[j - i]
    return table


def oracle_segmentation_mixture(mode: SegmentMode | str, alpha: float, union: Ehmm,
                                advice: ExpertAdvice, data: Sequence,
                                *, max_horizon: int = MAX_MIXTURE_HORIZON) -> float:
    """``-ln`` of the switching-rate-weighted sum over all segmentations of the
    product of per-cell freezing or sleeping probabilities."""
    T = len(data)
    if T > max_horizon:
        raise LimitExceededError(f"horizon {T} exceeds {max_horizon}")
    cells = cell_log_probs(mode, union, advice, data)
    la = math.log(alpha) if alpha > 0 else -math.inf
    lb = math.log1p(-alpha) if alpha < 1 else -math.inf
    terms = []
    for seg in enumerate_segmentations(T):
        n = len(seg)
        if (n > 1 and alpha == 0) or (T - n > 0 and alpha == 1):
            continue
        lw = (n - 1) * la if n > 1 else 0.0
        lw += (T - n) * lb if T > n else 0.0
        terms.append(lw + sum(cells[c.start, c.end] for c in seg))
    return -log_sum(terms)
