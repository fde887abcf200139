"""Drifting-mean datasets and Gaussian base-expert advice."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .constructions import SegmentMode
from .core import InvalidInputError
from .ehmm import ExpertAdvice

LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


class GaussianAdvice(ExpertAdvice):
    """Expert ``mu`` predicts a unit-variance normal with mean ``mu`` every round."""

    numeric_experts = True

    def density(self, t, mu, x):
        return math.exp(-0.5 * (x - mu) ** 2) / math.sqrt(2.0 * math.pi)

    def log_density(self, t, mu, x):
        return -0.5 * (x - mu) ** 2 - LOG_SQRT_2PI

    def log_densities(self, t, experts, x):
        d = x - np.asarray(experts, dtype=float)
        return -0.5 * d * d - LOG_SQRT_2PI


@dataclass(frozen=True)
class DriftDatasetSpec:
    """Piecewise-linear outcomes: ``segments`` holds ``(length, rate)`` pairs.

    With ``noise > 0`` Gaussian noise of that standard deviation is added
    using ``seed``.
    """

    segments: tuple[tuple[int, float], ...]
    mode: SegmentMode
    noise: float = 0.0
    seed: int | None = None

    def __post_init__(self):
        segs = tuple((int(n), float(r)) for n, r in self.segments)
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "mode", SegmentMode.parse(self.mode))
        if not segs:
            raise InvalidInputError("need at least one segment")
        for n, r in segs:
            if n < 1 or not math.isfinite(r):
                raise InvalidInputError(f"invalid segment ({n}, {r})")
        if self.noise < 0:
            raise InvalidInputError("noise must be nonnegative")

    @property
    def horizon(self) -> int:
        return sum(n for n, _ in self.segments)

    @classmethod
    def parse(cls, text: str, mode, **kw) -> "DriftDatasetSpec":
        """Parse ``"2x3@1.0,1x100@0.3"``: ``count x length @ rate``, or ``length@rate``."""
        segments = []
        for part in text.split(","):
            part = part.strip()
            try:
                shape, rate = part.split("@")
                if "x" in shape:
                    count, length = shape.split("x")
                else:
                    count, length = "1", shape
                segments += [(int(length), float(rate))] * int(count)
            except ValueError as exc:
                raise InvalidInputError(f"cannot parse segment spec {part!r}") from exc
        return cls(tuple(segments), mode, **kw)


def gen_drift_data(spec: DriftDatasetSpec) -> np.ndarray:
    """Outcomes ``x_t`` for ``t = 1..T``.

    Freezing data restart from 0 in every segment; sleeping data follow
    ``rate * (t - 1)`` on the global clock.
    """
    out = np.empty(spec.horizon)
    t0 = 0
    for n, rate in spec.segments:
        t = np.arange(t0, t0 + n, dtype=float)
        if spec.mode is SegmentMode.FREEZING:
            out[t0:t0 + n] = rate * (t - t0)
        else:
            out[t0:t0 + n] = rate * t
        t0 += n
    if spec.noise > 0:
        out += np.random.default_rng(spec.seed).normal(0.0, spec.noise, size=out.size)
    return out


def fig2_specs(rates: Sequence[float] = (0.1, 0.3), n_segments: int = 10,
               length: int = 100) -> tuple[DriftDatasetSpec, DriftDatasetSpec]:
    """The two 10 x 100 drifting-mean datasets, rates alternating from the first."""
    segs = tuple((length, rates[k % len(rates)]) for k in range(n_segments))
    return (DriftDatasetSpec(segs, SegmentMode.SLEEPING),
            DriftDatasetSpec(segs, SegmentMode.FREEZING))


def random_drift_data(T: int, seed: int, rates: Sequence[float] = (0.1, 0.3),
                      noise: float = 0.5) -> np.ndarray:
    """Noisy drifting-mean walk with a random rate per round, for randomized checks."""
    if T < 1:
        raise InvalidInputError("horizon must be positive")
    rng = np.random.default_rng(seed)
    steps = rng.random(T) < rng.choice(np.asarray(rates, dtype=float), size=T)
    mu = np.concatenate(([0.0], np.cumsum(steps[:-1])))
    return mu + rng.normal(0.0, noise, size=T)


def format_value(v: float) -> str:
    return f"{v:.12g}"


def write_dataset_csv(path, data: Sequence[float]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "x"])
        for t, x in enumerate(data, start=1):
            w.writerow([t, format_value(float(x))])


def read_dataset_csv(path) -> np.ndarray:
    with open(Path(path), newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or "x" not in reader.fieldnames:
            raise InvalidInputError(f"{path}: expected a header with column 'x'")
        try:
            xs = [float(row["x"]) for row in reader]
        except (TypeError, ValueError) as exc:
            raise InvalidInputError(f"{path}: malformed outcome") from exc
    if not xs:
        raise InvalidInputError(f"{path}: no data rows")
    return np.array(xs)
