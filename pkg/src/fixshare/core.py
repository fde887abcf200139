"""Log-domain arithmetic, finite distributions, segments and segmentations."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Iterator, Mapping, Sequence

NEG_INF = float("-inf")

#: Absolute tolerance on the total mass of a stored distribution.
DIST_TOL = 1e-12
#: Inputs whose mass is within this distance of one are renormalized.
RENORM_TOL = 1e-9

MAX_ENUM_HORIZON = 20


class InvalidInputError(ValueError):
    """An argument violates the documented domain of an operation."""


class LimitExceededError(ValueError):
    """A size guard protecting an exponential computation was hit."""


class ZeroDensityError(ArithmeticError):
    """The mixture assigned zero density to an observed outcome."""

    def __init__(self, t: int, message: str | None = None):
        super().__init__(message or f"zero predictive density at round {t}")
        self.t = t
        self.loss = math.inf


class BoundViolationError(AssertionError):
    """A regret bound was exceeded beyond the numerical tolerance."""

    def __init__(self, report, message: str | None = None):
        super().__init__(message or f"bound violated: slack {report.slack:.3e}")
        self.report = report


# LogWeight values are plain floats holding ln(weight); -inf is weight zero.
LogWeight = float


def log_add(a: float, b: float) -> float:
    """Return ln(e^a + e^b) without overflow."""
    if a == NEG_INF:
        return b
    if b == NEG_INF:
        return a
    if a < b:
        a, b = b, a
    return a + math.log1p(math.exp(b - a))


def log_sum(values: Iterable[float]) -> float:
    """Return ln(sum(exp(v))) of an iterable of log weights."""
    vals = list(values)
    if not vals:
        return NEG_INF
    m = max(vals)
    if m == NEG_INF:
        return NEG_INF
    if m == math.inf:
        return math.inf
    return m + math.log(math.fsum(math.exp(v - m) for v in vals))


def log_loss(density: float) -> float:
    """Logarithmic loss ``-ln(density)``.

    Densities above one are accepted and give negative loss.
    """
    if not density >= 0:
        raise InvalidInputError(f"density must be nonnegative, got {density!r}")
    if density == 0:
        return math.inf
    return -math.log(density)


class FiniteDist(Mapping):
    """Immutable probability distribution with finite support.

    Only strictly positive entries are stored and iteration follows
    insertion order, so results are reproducible run to run.

    >>> d = FiniteDist({"a": 0.25, "b": 0.75, "c": 0.0})
    >>> list(d), d["c"]
    (['a', 'b'], 0.0)
    """

    __slots__ = ("_probs",)

    def __init__(self, probs: Mapping[Hashable, float] | Iterable[tuple[Hashable, float]]):
        items = probs.items() if isinstance(probs, Mapping) else probs
        acc: dict = {}
        for k, p in items:
            p = float(p)
            if not (p >= 0 and math.isfinite(p)):
                raise InvalidInputError(f"invalid probability {p!r} for {k!r}")
            if p > 0:
                acc[k] = acc.get(k, 0.0) + p
        total = math.fsum(acc.values())
        if abs(total - 1.0) > RENORM_TOL:
            raise InvalidInputError(f"probabilities sum to {total!r}, not 1")
        if total != 1.0:
            acc = {k: p / total for k, p in acc.items()}
        self._probs = acc

    @classmethod
    def _trusted(cls, probs: dict) -> "FiniteDist":
        """Wrap a dict of positive probabilities summing to 1 without checks."""
        d = object.__new__(cls)
        d._probs = probs
        return d

    @classmethod
    def point(cls, key: Hashable) -> "FiniteDist":
        return cls._trusted({key: 1.0})

    @classmethod
    def uniform(cls, keys: Iterable[Hashable]) -> "FiniteDist":
        keys = list(keys)
        if not keys:
            raise InvalidInputError("uniform distribution needs at least one key")
        return cls((k, 1.0 / len(keys)) for k in keys)

    @classmethod
    def from_log(cls, keys: Sequence[Hashable], log_weights: Sequence[float]) -> "FiniteDist":
        """Normalize unnormalized log weights into a distribution."""
        z = log_sum(log_weights)
        if z == NEG_INF:
            raise InvalidInputError("all weights are zero")
        return cls((k, math.exp(lw - z)) for k, lw in zip(keys, log_weights))

    def __getitem__(self, key):
        return self._probs.get(key, 0.0)

    def __contains__(self, key) -> bool:
        return key in self._probs

    def __iter__(self) -> Iterator:
        return iter(self._probs)

    def __len__(self) -> int:
        return len(self._probs)

    def keys(self):
        return self._probs.keys()

    def values(self):
        return self._probs.values()

    def items(self):
        return self._probs.items()

    def __repr__(self) -> str:
        inner = ", ".join(f"{k!r}: {p:.6g}" for k, p in self._probs.items())
        return f"FiniteDist({{{inner}}})"

    def __eq__(self, other) -> bool:
        if isinstance(other, FiniteDist):
            return self._probs == other._probs
        return NotImplemented

    def __hash__(self) -> int:
        return hash(frozenset(self._probs.items()))

    @property
    def support(self) -> tuple:
        return tuple(self._probs)

    def log_items(self) -> list[tuple[Hashable, float]]:
        return [(k, math.log(p)) for k, p in self._probs.items()]

    def total(self) -> float:
        return math.fsum(self._probs.values())


@dataclass(frozen=True, order=True)
class Segment:
    """The rounds ``start..end`` inclusive, 1-indexed."""

    start: int
    end: int

    def __post_init__(self):
        if not (isinstance(self.start, int) and isinstance(self.end, int)):
            raise InvalidInputError("segment bounds must be integers")
        if self.start < 1 or self.end < self.start:
            raise InvalidInputError(f"invalid segment {self.start}:{self.end}")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def __contains__(self, t: int) -> bool:
        return self.start <= t <= self.end

    def __str__(self) -> str:
        return f"{self.start}:{self.end}"

    def rounds(self) -> range:
        return range(self.start, self.end + 1)


@dataclass(frozen=True)
class Segmentation:
    """Contiguous disjoint cells covering ``1:T`` in time order."""

    cells: tuple[Segment, ...]

    def __post_init__(self):
        cells = tuple(self.cells)
        object.__setattr__(self, "cells", cells)
        if not cells:
            raise InvalidInputError("a segmentation needs at least one cell")
        expected = 1
        for c in cells:
            if not isinstance(c, Segment):
                raise InvalidInputError(f"not a Segment: {c!r}")
            if c.start != expected:
                raise InvalidInputError(f"cell {c} does not start at round {expected}")
            expected = c.end + 1

    @property
    def horizon(self) -> int:
        return self.cells[-1].end

    def __len__(self) -> int:
        return len(self.cells)

    def __iter__(self) -> Iterator[Segment]:
        return iter(self.cells)

    def __str__(self) -> str:
        return "|".join(str(c) for c in self.cells)

    @classmethod
    def from_lengths(cls, lengths: Iterable[int]) -> "Segmentation":
        cells, t = [], 1
        for n in lengths:
            cells.append(Segment(t, t + int(n) - 1))
            t += int(n)
        return cls(tuple(cells))

    @classmethod
    def from_starts(cls, T: int, starts: Iterable[int]) -> "Segmentation":
        """Build from the first round of every cell (must include 1)."""
        s = sorted(set(starts))
        if not s or s[0] != 1 or s[-1] > T:
            raise InvalidInputError(f"cell starts {s} do not fit horizon {T}")
        ends = [b - 1 for b in s[1:]] + [T]
        return cls(tuple(Segment(a, b) for a, b in zip(s, ends)))

    @classmethod
    def parse(cls, text: str) -> "Segmentation":
        """Parse ``"1-4,5-8"`` (``:`` also accepted as separator)."""
        cells = []
        for part in text.split(","):
            part = part.strip().replace(":", "-")
            try:
                a, b = part.split("-")
                cells.append(Segment(int(a), int(b)))
            except ValueError as exc:
                raise InvalidInputError(f"cannot parse segment {part!r}") from exc
        return cls(tuple(cells))

    def format(self) -> str:
        return ",".join(f"{c.start}-{c.end}" for c in self.cells)


@dataclass(frozen=True)
class Labelling:
    """Assignment of a model identifier to every cell of a segmentation."""

    segmentation: Segmentation
    labels: tuple = field(default=())

    def __post_init__(self):
        labels = tuple(self.labels)
        object.__setattr__(self, "labels", labels)
        if len(labels) != len(self.segmentation):
            raise InvalidInputError(
                f"{len(labels)} labels for {len(self.segmentation)} cells")

    def __getitem__(self, cell: Segment):
        try:
            return self.labels[self.segmentation.cells.index(cell)]
        except ValueError:
            raise InvalidInputError(f"cell {cell} is not labelled") from None

    def items(self) -> Iterator[tuple[Segment, object]]:
        return zip(self.segmentation.cells, self.labels)

    @property
    def assignment(self) -> dict:
        return dict(self.items())


def enumerate_segmentations(T: int) -> list[Segmentation]:
    """All ``2**(T-1)`` segmentations of ``1:T``.

    Cut patterns are enumerated as binary counters, so the one-cell
    segmentation comes first and the all-singletons one last.
    """
    if not isinstance(T, int) or not 1 <= T <= MAX_ENUM_HORIZON:
        raise LimitExceededError(f"horizon must be in 1..{MAX_ENUM_HORIZON}, got {T!r}")
    out = []
    for mask in range(1 << (T - 1)):
        starts = [1] + [t + 2 for t in range(T - 1) if mask >> t & 1]
        out.append(Segmentation.from_starts(T, starts))
    return out
