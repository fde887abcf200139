"""Builders for the EHMMs used as learning experts and as algorithms."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import FiniteDist, InvalidInputError, Segment
from .ehmm import (SPARSE, Ehmm, ExpertAdvice, ForwardState, Share, forward_distribution,
                   forward_init, observe, predictive_log_density, run_forward)


class SegmentMode(enum.Enum):
    FREEZING = "freezing"
    SLEEPING = "sleeping"

    @classmethod
    def parse(cls, value) -> "SegmentMode":
        if isinstance(value, cls):
            return value
        aliases = {"fr": "freezing", "sl": "sleeping"}
        key = str(value).lower()
        return cls(aliases.get(key, key))


@dataclass(frozen=True)
class DriftParams:
    theta: float

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise InvalidInputError(f"drift probability must be in [0, 1], got {self.theta!r}")


@dataclass(frozen=True)
class SwitchParams:
    alpha: float
    prior: FiniteDist

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"switching rate must be in [0, 1], got {self.alpha!r}")
        if not isinstance(self.prior, FiniteDist):
            object.__setattr__(self, "prior", FiniteDist(self.prior))


def build_dm(params: DriftParams | float) -> Ehmm:
    """Drifting-mean expert: state ``mu`` moves to ``mu + 1`` with probability theta.

    States and experts are the nonnegative integers; state ``mu`` predicts
    with the expert of mean ``mu``.
    """
    if not isinstance(params, DriftParams):
        params = DriftParams(float(params))
    theta = params.theta
    if theta == 0.0:
        return Ehmm(FiniteDist.point(0), None, None, name=f"dm:{theta:g}")

    stay = 1.0 - theta
    if theta == 1.0:
        def transition(mu):
            return FiniteDist._trusted({mu + 1: 1.0})
    else:
        def transition(mu):
            return FiniteDist._trusted({mu: stay, mu + 1: theta})

    return Ehmm(FiniteDist.point(0), transition, None, name=f"dm:{theta:g}")


def build_bayes(prior: FiniteDist | Mapping) -> Ehmm:
    """Bayesian mixture over base experts: identity dynamics, initial = prior."""
    if not isinstance(prior, FiniteDist):
        prior = FiniteDist(prior)
    return Ehmm(prior, None, None, name=f"bayes[{len(prior)}]")


def build_hmm(initial: Mapping, transitions: Mapping, production: Mapping | None = None,
              *, name: str = "hmm") -> Ehmm:
    """Finite EHMM from explicit tables ``{state: {succ: p}}`` and ``{state: {expert: p}}``."""
    rows = {q: FiniteDist(r) for q, r in transitions.items()}
    prods = None if production is None else {q: FiniteDist(r) for q, r in production.items()}

    def transition(q):
        try:
            return rows[q]
        except KeyError:
            raise InvalidInputError(f"no transition row for state {q!r}") from None

    def emit(q):
        try:
            return prods[q]
        except KeyError:
            raise InvalidInputError(f"no production row for state {q!r}") from None

    return Ehmm(FiniteDist(initial), transition, None if prods is None else emit, name=name)


class UnionEhmm(Ehmm):
    """Bayesian mixture of member EHMMs on the tagged union of their state spaces.

    A union state is ``(member_index, member_state)``; it keeps the
    member's transition row (tagged) and production row.
    """

    def __init__(self, prior: FiniteDist, members: Sequence[Ehmm]):
        self.members = tuple(members)
        self.prior = prior
        initial = FiniteDist(((i, q), prior[i] * p)
                             for i, m in enumerate(self.members) if prior[i] > 0
                             for q, p in m.initial.items())
        identity = all(m.identity_transition for m in self.members)
        transition = None if identity else self._transition_row
        names = ",".join(m.name for m in self.members)
        super().__init__(initial, transition, self._production_row, name=f"union[{names}]")

    def _transition_row(self, q):
        i, s = q
        row = self.members[i].transition(s)
        if not isinstance(row, FiniteDist):
            row = FiniteDist(row)
        return FiniteDist._trusted({(i, r): p for r, p in row.items()})

    def _production_row(self, q):
        i, s = q
        return self.members[i].production(s)


def _member_prior(prior, n: int) -> FiniteDist:
    if prior is None:
        return FiniteDist.uniform(range(n))
    if not isinstance(prior, FiniteDist):
        if isinstance(prior, Mapping):
            prior = FiniteDist(prior)
        else:
            prior = list(prior)
            if len(prior) != n:
                raise InvalidInputError(f"{len(prior)} prior weights for {n} members")
            prior = FiniteDist(enumerate(prior))
    if set(prior) != set(range(n)):
        raise InvalidInputError(
            f"prior support {sorted(prior, key=repr)} does not match members 0..{n - 1}")
    return prior


def build_bayes_union(prior, members: Sequence[Ehmm]) -> UnionEhmm:
    """Combine learning experts into one EHMM; ``prior`` is over member indices."""
    if not members:
        raise InvalidInputError("need at least one member")
    return UnionEhmm(_member_prior(prior, len(members)), members)


def build_fixed_share(params: SwitchParams) -> tuple[Ehmm, Share]:
    """Fixed share over base experts: Bayes mixture plus a constant reset to the prior."""
    return build_bayes(params.prior), Share(params.alpha, "initial")


def build_fs_learning(mode: SegmentMode | str, alpha: float, union: Ehmm) -> tuple[Ehmm, Share]:
    """Fixed share that resets the whole union state on a switch.

    Freezing resets to the initial distribution; sleeping resets to the
    initial distribution evolved to the current round.
    """
    mode = SegmentMode.parse(mode)
    reset = "initial" if mode is SegmentMode.FREEZING else "forwarded"
    return union, Share(alpha, reset)


@dataclass(frozen=True)
class SegmentModel:
    """A model restricted to one segment, started at the segment's first round."""

    model: Ehmm
    segment: Segment
    mode: SegmentMode

    def run(self, advice: ExpertAdvice, data: Sequence):
        """Forward run over ``data[start-1:end]`` with the true round indices."""
        seg = self.segment
        if seg.end > len(data):
            raise InvalidInputError(f"segment {seg} exceeds data horizon {len(data)}")
        return run_forward(self.model, SPARSE, advice, data[seg.start - 1:seg.end], start=seg.start)


def freeze_segment(model: Ehmm, seg: Segment) -> SegmentModel:
    return SegmentModel(model, seg, SegmentMode.FREEZING)


def sleep_segment(model: Ehmm, seg: Segment) -> SegmentModel:
    init = forward_distribution(model, seg.start - 1)
    return SegmentModel(model.with_initial(init, name=f"{model.name}@sl{seg.start}"),
                        seg, SegmentMode.SLEEPING)


def segment_model(mode: SegmentMode | str, model: Ehmm, seg: Segment) -> SegmentModel:
    mode = SegmentMode.parse(mode)
    return freeze_segment(model, seg) if mode is SegmentMode.FREEZING else sleep_segment(model, seg)


class ModelAdvice(ExpertAdvice):
    """Learning experts exposed as black boxes.

    Expert ``i`` is member ``i`` run on the true outcomes ``data``; its
    round-``t`` density is its predictive density given ``data[:t-1]``.
    Queries are expected in nondecreasing round order; an earlier round
    restarts the members.
    """

    def __init__(self, members: Sequence[Ehmm], advice: ExpertAdvice, data: Sequence):
        self.members = tuple(members)
        self.advice = advice
        self.data = data
        self._restart()

    def _restart(self):
        self._states = [forward_init(m) for m in self.members]

    def _at(self, t: int) -> list[ForwardState]:
        if t < 1 or t > len(self.data):
            raise InvalidInputError(f"round {t} outside the data horizon")
        if self._states[0].t > t:
            self._restart()
        while self._states[0].t < t:
            x = self.data[self._states[0].t - 1]
            self._states = [observe(s, m, SPARSE, self.advice, x)[0]
                            for s, m in zip(self._states, self.members)]
        return self._states

    def log_densities(self, t, experts, x):
        states = self._at(t)
        return np.array([predictive_log_density(states[int(e)], self.advice, x) for e in experts])

    def density(self, t, expert, x):
        return float(np.exp(self.log_densities(t, [expert], x)[0]))

    def active_count(self, t: int) -> int:
        """Total active member states at round ``t``."""
        return sum(s.n_active for s in self._at(t))
