"""Expert hidden Markov models and the forward algorithm.

An :class:`Ehmm` is given by an initial distribution over hidden states, a
transition function and a production function mapping each state to a
distribution over expert identities. State spaces may be unbounded: the
transition function is only evaluated for states that become active, and
each row is cached the first time it is needed.

Internally every run works on integer state indices assigned in discovery
order, with per-state log weights held in flat arrays. The per-round
arithmetic is delegated to :mod:`fixshare._kernels`.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterator, Sequence

import numpy as np

from . import _kernels
from .core import FiniteDist, InvalidInputError, ZeroDensityError

StateId = Hashable
ExpertId = Hashable

NEG_INF = -np.inf


class ExpertAdvice:
    """Per-round predictive densities of base experts.

    Subclasses implement :meth:`density` or, preferably, a vectorised
    :meth:`log_densities`. Set ``numeric_experts = True`` when expert ids
    are real numbers; the forward pass then hands over a float array of ids
    instead of an object array.
    """

    numeric_experts = False

    def density(self, t: int, expert: ExpertId, x) -> float:
        raise NotImplementedError

    def log_density(self, t: int, expert: ExpertId, x) -> float:
        d = self.density(t, expert, x)
        if d < 0:
            raise InvalidInputError(f"negative density {d!r} from expert {expert!r}")
        return math.log(d) if d > 0 else -math.inf

    def log_densities(self, t: int, experts: np.ndarray, x) -> np.ndarray:
        return np.fromiter((self.log_density(t, e, x) for e in experts),
                           dtype=float, count=len(experts))


class FunctionAdvice(ExpertAdvice):
    """Advice from a plain callable ``density(t, expert, x)``."""

    def __init__(self, fn: Callable[[int, ExpertId, object], float]):
        self.fn = fn

    def density(self, t, expert, x):
        return self.fn(t, expert, x)


class _Buf:
    """Append-only numpy buffer with amortised doubling."""

    __slots__ = ("data", "n")

    def __init__(self, dtype, cap=64):
        self.data = np.empty(cap, dtype=dtype)
        self.n = 0

    def _reserve(self, extra):
        need = self.n + extra
        if need > self.data.size:
            new = np.empty(max(need, 2 * self.data.size), dtype=self.data.dtype)
            new[:self.n] = self.data[:self.n]
            self.data = new

    def append(self, value):
        n = self.n
        if n == self.data.size:
            self._reserve(1)
        self.data[n] = value
        self.n = n + 1

    def extend(self, values: list):
        self._reserve(len(values))
        self.data[self.n:self.n + len(values)] = values
        self.n += len(values)

    def view(self):
        return self.data[:self.n]


@dataclass(frozen=True)
class _Arrays:
    n_states: int
    t_start: np.ndarray
    t_len: np.ndarray
    t_col: np.ndarray
    t_logp: np.ndarray
    p_start: np.ndarray
    p_len: np.ndarray
    p_col: np.ndarray
    p_logp: np.ndarray
    experts: np.ndarray
    expert_values: np.ndarray
    single_production: bool


class _Graph:
    """Integer-indexed, lazily expanded view of an EHMM's state graph.

    New states, experts and rows are first collected in Python lists and
    moved into the numpy buffers in one vectorised step by :meth:`_flush`,
    which runs at the end of :meth:`ensure` and before every snapshot.

    Whenever :meth:`ensure` has to expand something it also expands
    already-registered successors in discovery order, up to as many states
    as have been expanded so far. Batches therefore double in size and the
    per-batch overhead is amortised, at the price of expanding at most
    twice the states a purely on-demand scheme would. Rows are pure
    functions of reachable states, so this does not change any result.
    """

    def __init__(self, transition, production, identity):
        self.transition = transition
        self.production = production
        self.identity = identity
        self.lock = threading.RLock()
        self.index: dict = {}
        self.states: list = []
        self.expert_index: dict = {}
        self.experts = _Buf(object)
        self.expert_values = _Buf(np.float64)
        self.expanded = _Buf(np.bool_)
        self.t_start, self.t_len = _Buf(np.int64), _Buf(np.int64)
        self.p_start, self.p_len = _Buf(np.int64), _Buf(np.int64)
        self.t_col, self.t_logp = _Buf(np.int64), _Buf(np.float64)
        self.p_col, self.p_logp = _Buf(np.int64), _Buf(np.float64)
        self.single_production = True
        self._snapshot = None
        self._new_experts: list = []
        # pending rows: state index, then CSR offsets/lengths into the pending lists
        self._rows: list = []
        self._tc: list = []
        self._tl: list = []
        self._pc: list = []
        self._pl: list = []
        self._done: list = []  # expanded flags, Python side
        self._n_done = 0
        self._scan = 0

    def register(self, q) -> int:
        i = self.index.get(q)
        if i is None:
            i = self.index[q] = len(self.states)
            self.states.append(q)
            self._done.append(False)
        return i

    def _register_expert(self, e) -> int:
        i = self.expert_index.get(e)
        if i is None:
            i = self.expert_index[e] = len(self.expert_index)
            self._new_experts.append(e)
        return i

    def register_dist(self, dist: FiniteDist) -> tuple[np.ndarray, np.ndarray]:
        with self.lock:
            idx = np.fromiter((self.register(q) for q in dist), dtype=np.int64, count=len(dist))
            self._flush()
        logp = np.fromiter((math.log(p) for p in dist.values()), dtype=float, count=len(dist))
        return idx, logp

    def _expand(self, i: int):
        q = self.states[i]
        prod = self.production(q)
        if not isinstance(prod, FiniteDist):
            prod = FiniteDist(prod)
        p0 = len(self._pc)
        if len(prod) == 1:
            (e, p), = prod.items()
            self._pc.append(self._register_expert(e))
            self._pl.append(math.log(p))
        else:
            self.single_production = False
            reg = self._register_expert
            for e, p in prod.items():
                self._pc.append(reg(e))
                self._pl.append(math.log(p))
        t0 = len(self._tc)
        if not self.identity:
            row = self.transition(q)
            if not isinstance(row, FiniteDist):
                row = FiniteDist(row)
            register = self.register
            for r, p in row.items():
                self._tc.append(register(r))
                self._tl.append(math.log(p))
        self._rows.append((i, t0, len(self._tc) - t0, p0, len(self._pc) - p0))
        self._done[i] = True
        self._n_done += 1

    def _flush(self):
        n_new = len(self.states) - self.expanded.n
        changed = bool(n_new or self._new_experts or self._rows)
        if n_new:
            zeros = np.zeros(n_new, dtype=np.int64)
            for buf in (self.t_start, self.t_len, self.p_start, self.p_len):
                buf.extend(zeros)
            self.expanded.extend(np.zeros(n_new, dtype=np.bool_))
        if self._new_experts:
            vals = []
            for e in self._new_experts:
                try:
                    vals.append(float(e))
                except (TypeError, ValueError):
                    vals.append(np.nan)
            obj = np.empty(len(self._new_experts), dtype=object)
            obj[:] = self._new_experts
            self.experts.extend(obj)
            self.expert_values.extend(np.array(vals))
            self._new_experts = []
        if self._rows:
            rows = np.array(self._rows, dtype=np.int64).reshape(-1, 5)
            idx = rows[:, 0]
            self.t_start.data[idx] = rows[:, 1] + self.t_col.n
            self.t_len.data[idx] = rows[:, 2]
            self.p_start.data[idx] = rows[:, 3] + self.p_col.n
            self.p_len.data[idx] = rows[:, 4]
            self.expanded.data[idx] = True
            self.t_col.extend(np.array(self._tc, dtype=np.int64))
            self.t_logp.extend(np.array(self._tl, dtype=np.float64))
            self.p_col.extend(np.array(self._pc, dtype=np.int64))
            self.p_logp.extend(np.array(self._pl, dtype=np.float64))
            self._rows, self._tc, self._tl, self._pc, self._pl = [], [], [], [], []
        if changed:
            self._snapshot = None

    def ensure(self, act: np.ndarray):
        """Expand every state in ``act`` that has not been expanded yet."""
        flags = self.expanded.data[act]
        if flags.all():
            return
        for i in act[~flags].tolist():
            self._expand(i)
        budget = max(16, self._n_done)
        done, j = self._done, self._scan
        while budget > 0 and j < len(done):
            if not done[j]:
                self._expand(j)
                budget -= 1
            j += 1
        self._scan = j
        self._flush()

    def snapshot(self) -> _Arrays:
        if self._rows or self._new_experts or len(self.states) != self.expanded.n:
            self._flush()
        if self._snapshot is None:
            self._snapshot = _Arrays(
                len(self.states),
                self.t_start.view(), self.t_len.view(), self.t_col.view(), self.t_logp.view(),
                self.p_start.view(), self.p_len.view(), self.p_col.view(), self.p_logp.view(),
                self.experts.view(), self.expert_values.view(), self.single_production)
        return self._snapshot


def _identity_row(q):
    return FiniteDist.point(q)


class Ehmm:
    """An expert hidden Markov model ``(initial, transition, production)``.

    ``transition=None`` means the identity transition and
    ``production=None`` means every state predicts with the expert of the
    same identifier. Both functions must be pure.
    """

    def __init__(self, initial: FiniteDist,
                 transition: Callable[[StateId], FiniteDist] | None = None,
                 production: Callable[[StateId], FiniteDist] | None = None,
                 *, name: str = "ehmm"):
        if not isinstance(initial, FiniteDist):
            initial = FiniteDist(initial)
        self.initial = initial
        self.identity_transition = transition is None
        self._transition = transition or _identity_row
        self._production = production or _identity_row
        self.name = name
        self._graph = _Graph(self._transition, self._production, self.identity_transition)

    def __repr__(self) -> str:
        return f"Ehmm({self.name})"

    def transition(self, q: StateId) -> FiniteDist:
        return self._transition(q)

    def production(self, q: StateId) -> FiniteDist:
        return self._production(q)

    def with_initial(self, initial: FiniteDist, name: str | None = None) -> "Ehmm":
        """Same dynamics and production, different initial distribution."""
        clone = object.__new__(type(self))
        clone.__dict__.update(self.__dict__)
        clone.initial = initial if isinstance(initial, FiniteDist) else FiniteDist(initial)
        clone.name = name or self.name
        return clone


@dataclass(frozen=True)
class Sparse:
    """Plain evolution through the model's own transition function."""


SPARSE = Sparse()


@dataclass(frozen=True)
class Share:
    """Evolution ``(1 - alpha) * P @ lam + alpha * reset_t``.

    ``reset`` is ``"initial"`` (the model's initial distribution, every
    round), ``"forwarded"`` (the initial distribution pushed through the
    transition function once per elapsed round, i.e. the state
    distribution the model would have now had nothing been observed) or an
    explicit :class:`FiniteDist`.
    """

    alpha: float
    reset: object = "initial"

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise InvalidInputError(f"switching rate must lie in [0, 1], got {self.alpha!r}")
        if not (self.reset in ("initial", "forwarded") or isinstance(self.reset, FiniteDist)):
            raise InvalidInputError(f"unknown reset {self.reset!r}")

    @property
    def sleeping(self) -> bool:
        return isinstance(self.reset, str) and self.reset == "forwarded"


TransitionOp = Sparse | Share


class _Workspace:
    """Per-run scratch space and cached reset arrays."""

    def __init__(self):
        self._scratch = np.full(64, -1, dtype=np.int64)
        self.resets: dict = {}

    def scratch(self, n: int) -> np.ndarray:
        if self._scratch.size < n:
            self._scratch = np.full(max(n, 2 * self._scratch.size), -1, dtype=np.int64)
        return self._scratch


@dataclass(frozen=True, eq=False)
class ForwardState:
    """Posterior over active states before round ``t`` is observed.

    ``active`` and ``log_weights`` are parallel arrays of state indices and
    normalised log weights; their support is exactly the set of states with
    positive forward probability.
    """

    t: int
    active: np.ndarray
    log_weights: np.ndarray
    cum_log_loss: float
    model: Ehmm = field(repr=False)
    forwarded: tuple[np.ndarray, np.ndarray] | None = field(default=None, repr=False)
    _ws: _Workspace = field(default_factory=_Workspace, repr=False)

    @property
    def n_active(self) -> int:
        return int(self.active.size)

    def active_states(self) -> list:
        states = self.model._graph.states
        return [states[i] for i in self.active.tolist()]

    def _as_dist(self, idx, lw) -> FiniteDist:
        states = self.model._graph.states
        return FiniteDist(zip((states[i] for i in idx.tolist()), np.exp(lw).tolist()))

    @property
    def weights(self) -> FiniteDist:
        return self._as_dist(self.active, self.log_weights)

    @property
    def forwarded_prior(self) -> FiniteDist | None:
        if self.forwarded is None:
            return None
        return self._as_dist(*self.forwarded)


def forward_init(model: Ehmm, op: TransitionOp = SPARSE, *, start: int = 1) -> ForwardState:
    """Initial forward state at round ``start`` with weights ``model.initial``."""
    idx, logp = model._graph.register_dist(model.initial)
    fwd = (idx, logp) if isinstance(op, Share) and op.sleeping else None
    return ForwardState(start, idx, logp, 0.0, model, fwd)


def _emission(arrays: _Arrays, act, advice: ExpertAdvice, t, x, K) -> np.ndarray:
    """Per-state log of ``sum_e production(q)(e) * density_e(x)``."""
    if arrays.single_production:
        ent = arrays.p_start[act]
        offsets = None
    else:
        ent, offsets = K.gather(act, arrays.p_start, arrays.p_len)
    cols = arrays.p_col[ent]
    keys = arrays.expert_values if advice.numeric_experts else arrays.experts
    ld = advice.log_densities(t, keys[cols], x)
    if not (isinstance(ld, np.ndarray) and ld.dtype == np.float64):
        ld = np.asarray(ld, dtype=np.float64)
    if ld.shape != cols.shape:
        raise InvalidInputError("advice returned the wrong number of densities")
    ld = ld + arrays.p_logp[ent]
    if offsets is None:
        return ld
    return K.segment_lse(ld, offsets)


def _prepare(state: ForwardState):
    g = state.model._graph
    with g.lock:
        g.ensure(state.active)
        if state.forwarded is not None:
            g.ensure(state.forwarded[0])
        return g.snapshot()


def predict(state: ForwardState, model: Ehmm | None = None) -> FiniteDist:
    """Mixture weights over expert identities for round ``state.t``."""
    model = model or state.model
    arrays = _prepare(state)
    K = _kernels.impl
    ent, offsets = K.gather(state.active, arrays.p_start, arrays.p_len)
    src = np.repeat(state.log_weights, np.diff(offsets))
    w = np.exp(src + arrays.p_logp[ent])
    cols = arrays.p_col[ent]
    uniq, first, inv = np.unique(cols, return_index=True, return_inverse=True)
    sums = np.bincount(inv, weights=w, minlength=uniq.size)
    order = np.argsort(first, kind="stable")
    experts = arrays.experts
    return FiniteDist((experts[uniq[k]], sums[k]) for k in order.tolist())


def predictive_log_density(state: ForwardState, advice: ExpertAdvice, x) -> float:
    """``ln`` of the round-``t`` mixture density at outcome ``x``."""
    arrays = _prepare(state)
    K = _kernels.impl
    le = _emission(arrays, state.active, advice, state.t, x, K)
    return K.logsumexp(state.log_weights + le)


def _push(arrays: _Arrays, model: Ehmm, ws: _Workspace, idx, lw, K):
    if model.identity_transition:
        return idx, lw
    return K.propagate(idx, lw, arrays.t_start, arrays.t_len, arrays.t_col,
                       arrays.t_logp, ws.scratch(arrays.n_states))


def _reset_arrays(model: Ehmm, op: Share, ws: _Workspace):
    arrs = ws.resets.get(op)
    if arrs is None:
        dist = model.initial if op.reset == "initial" else op.reset
        arrs = ws.resets[op] = model._graph.register_dist(dist)
    return arrs


def observe(state: ForwardState, model: Ehmm | None, op: TransitionOp, advice: ExpertAdvice,
            x, *, prune_below: float | None = None) -> tuple[ForwardState, float]:
    """Observe ``x`` at round ``state.t``; return the next state and the round's loss.

    Raises :class:`ZeroDensityError` when the mixture gives ``x`` zero
    density.
    """
    model = model or state.model
    if model is not state.model:
        raise InvalidInputError("forward state belongs to a different model")
    K = _kernels.impl
    arrays = _prepare(state)
    t, act = state.t, state.active

    le = _emission(arrays, act, advice, t, x, K)
    post, logz = K.loss_update(state.log_weights, le)
    if not -math.inf < logz < math.inf:
        if logz == -math.inf:
            raise ZeroDensityError(t)
        raise InvalidInputError(f"advice produced a non-finite density at round {t}")
    loss = -logz

    ws = state._ws
    base = _push(arrays, model, ws, act, post, K)
    fwd = None
    if isinstance(op, Share):
        if op.sleeping:
            fwd_idx, fwd_lw = _push(arrays, model, ws, *state.forwarded, K)
            fwd = (fwd_idx, K.normalize(fwd_lw)[0])
            reset = fwd
        else:
            reset = _reset_arrays(model, op, ws)
            arrays = model._graph.snapshot()
        if op.alpha == 1.0:
            base = reset
        elif op.alpha > 0.0:
            base = K.mix(base[0], base[1], math.log1p(-op.alpha), reset[0], reset[1],
                         math.log(op.alpha), ws.scratch(arrays.n_states))
    new_act, new_lw = base
    new_lw = K.normalize(new_lw)[0]
    if prune_below is not None:
        keep = new_lw >= prune_below
        if not keep.all():
            new_act, new_lw = new_act[keep], K.normalize(new_lw[keep])[0]
    nxt = ForwardState(t + 1, new_act, new_lw, state.cum_log_loss + loss, model, fwd, ws)
    return nxt, loss


@dataclass
class ForwardRun:
    per_round_losses: np.ndarray
    total_log_loss: float
    active_counts: np.ndarray
    final_state: ForwardState | None = None


def iter_forward(model: Ehmm, op: TransitionOp, advice: ExpertAdvice, data: Sequence,
                 *, start: int = 1, prune_below: float | None = None
                 ) -> Iterator[tuple[ForwardState, float, ForwardState]]:
    """Yield ``(state_before, loss, state_after)`` for every outcome."""
    state = forward_init(model, op, start=start)
    for x in data:
        nxt, loss = observe(state, model, op, advice, x, prune_below=prune_below)
        yield state, loss, nxt
        state = nxt


def run_forward(model: Ehmm, op: TransitionOp, advice: ExpertAdvice, data: Sequence,
                *, start: int = 1, prune_below: float | None = None) -> ForwardRun:
    """Run the forward algorithm over ``data`` (first outcome at round ``start``).

    A :class:`ZeroDensityError` raised mid-run carries the rounds completed
    so far in its ``partial`` attribute.
    """
    if len(data) == 0:
        raise InvalidInputError("data must be nonempty")
    losses = np.empty(len(data))
    counts = np.empty(len(data), dtype=np.int64)
    state = forward_init(model, op, start=start)
    for k, x in enumerate(data):
        counts[k] = state.active.size
        try:
            state, losses[k] = observe(state, model, op, advice, x, prune_below=prune_below)
        except ZeroDensityError as exc:
            exc.partial = ForwardRun(losses[:k].copy(), state.cum_log_loss, counts[:k + 1].copy(), state)
            raise
    return ForwardRun(losses, state.cum_log_loss, counts, state)


def forward_distribution(model: Ehmm, steps: int) -> FiniteDist:
    """The initial distribution pushed ``steps`` times through the transitions."""
    if steps < 0:
        raise InvalidInputError("steps must be nonnegative")
    if steps == 0 or model.identity_transition:
        return model.initial
    K = _kernels.impl
    g = model._graph
    ws = _Workspace()
    idx, lw = g.register_dist(model.initial)
    for _ in range(steps):
        with g.lock:
            g.ensure(idx)
            arrays = g.snapshot()
        idx, lw = _push(arrays, model, ws, idx, lw, K)
        lw = K.normalize(lw)[0]
    states = g.states
    return FiniteDist(zip((states[i] for i in idx.tolist()), np.exp(lw).tolist()))
