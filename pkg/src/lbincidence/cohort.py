"""Domain types for prevalent-cohort data with follow-up.

Durations are in years throughout. A prevalent case is observed at the
recruitment date with a fully observed backward recurrence time (onset to
recruitment) and a forward time that may be right-censored.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Sequence

import numpy as np

from .errors import CoverageGap, ValidationError


def _frozen(a, dtype=float) -> np.ndarray:
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PrevalentRecord:
    """One followed prevalent case.

    ``bwd`` is the time from onset to recruitment, ``fwd_obs`` the observed
    residual time ``min(fwd, C)`` and ``event`` is True when the failure was
    seen. ``age_cat`` is the onset-age category, if any.
    """

    bwd: float
    fwd_obs: float
    event: bool
    age_cat: str | None = None

    @property
    def total(self) -> float:
        return self.bwd + self.fwd_obs


def total_time(record: PrevalentRecord) -> float:
    """Length-biased lifetime when ``record.event``, else the total censoring time."""
    return record.bwd + record.fwd_obs


class Violation(NamedTuple):
    index: int | None
    rule: str

    def __str__(self) -> str:
        where = "frame" if self.index is None else f"record {self.index}"
        return f"{where}: {self.rule}"


@dataclass(frozen=True, eq=False)
class ScreeningFrame:
    """``s`` screened subjects, of whom ``len(records)`` were prevalent cases."""

    s: int
    records: tuple[PrevalentRecord, ...]

    def __post_init__(self):
        if not isinstance(self.records, tuple):
            object.__setattr__(self, "records", tuple(self.records))

    @property
    def n(self) -> int:
        return len(self.records)

    @cached_property
    def arrays(self) -> "CohortArrays":
        return CohortArrays.from_records(self.records)

    @classmethod
    def from_arrays(cls, s: int, bwd, fwd_obs, event, age_cat=None) -> "ScreeningFrame":
        bwd = np.asarray(bwd, dtype=float)
        fwd_obs = np.asarray(fwd_obs, dtype=float)
        event = np.asarray(event, dtype=bool)
        if age_cat is None:
            cats = [None] * len(bwd)
        else:
            cats = [None if c is None else str(c) for c in age_cat]
        records = tuple(
            PrevalentRecord(float(b), float(f), bool(e), c)
            for b, f, e, c in zip(bwd.tolist(), fwd_obs.tolist(), event.tolist(), cats)
        )
        frame = cls(int(s), records)
        frame.__dict__["arrays"] = CohortArrays(
            _frozen(bwd), _frozen(fwd_obs), _frozen(event, bool), tuple(cats)
        )
        return frame


@dataclass(frozen=True, eq=False)
class CohortArrays:
    """Column view of a list of records, used by the vectorised estimators."""

    bwd: np.ndarray
    fwd_obs: np.ndarray
    event: np.ndarray
    age_cat: tuple

    @classmethod
    def from_records(cls, records: Sequence[PrevalentRecord]) -> "CohortArrays":
        return cls(
            _frozen([r.bwd for r in records]),
            _frozen([r.fwd_obs for r in records]),
            _frozen([r.event for r in records], bool),
            tuple(r.age_cat for r in records),
        )

    @property
    def total(self) -> np.ndarray:
        return self.bwd + self.fwd_obs

    def __len__(self) -> int:
        return len(self.bwd)


def validate_frame(frame: ScreeningFrame) -> list[Violation]:
    """Check every type invariant; never raises."""
    out: list[Violation] = []
    s = frame.s
    if not isinstance(s, (int, np.integer)) or isinstance(s, bool) or s < 1:
        out.append(Violation(None, "s is a positive integer"))
    elif frame.n > s:
        out.append(Violation(None, "n <= s"))
    for i, r in enumerate(frame.records):
        try:
            bwd, fwd = float(r.bwd), float(r.fwd_obs)
        except (TypeError, ValueError):
            out.append(Violation(i, "durations are numeric"))
            continue
        if not (math.isfinite(bwd) and math.isfinite(fwd)):
            out.append(Violation(i, "durations are finite"))
            continue
        if bwd < 0:
            out.append(Violation(i, "bwd >= 0"))
        if fwd < 0:
            out.append(Violation(i, "fwd_obs >= 0"))
        if bwd + fwd <= 0:
            out.append(Violation(i, "bwd+fwd_obs > 0"))
        if not isinstance(r.event, (bool, np.bool_)):
            out.append(Violation(i, "event is boolean"))
    return out


def require_valid(frame: ScreeningFrame) -> None:
    problems = validate_frame(frame)
    if problems:
        shown = "; ".join(str(v) for v in problems[:5])
        more = f" (+{len(problems) - 5} more)" if len(problems) > 5 else ""
        raise ValidationError(f"invalid frame: {shown}{more}")


@dataclass(frozen=True, eq=False)
class SurvivalCurve:
    """Discrete survivor function with masses on ``support``.

    When ``complete_tail`` is False the masses sum to ``1 - tail_deficit``: the
    remaining probability lies beyond the largest support point at an
    unidentified location.
    """

    support: np.ndarray
    mass: np.ndarray
    complete_tail: bool = True
    flags: tuple[str, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "support", _frozen(self.support))
        object.__setattr__(self, "mass", _frozen(self.mass))
        if self.support.shape != self.mass.shape or self.support.ndim != 1:
            raise ValidationError("support and mass must be 1-d and of equal length")
        if len(self.support) and (np.any(self.support <= 0) or np.any(np.diff(self.support) <= 0)):
            raise ValidationError("support must be strictly increasing positive times")
        if np.any(self.mass <= 0):
            raise ValidationError("masses must be positive")
        total = float(self.mass.sum())
        if self.complete_tail and abs(total - 1.0) > 1e-9:
            raise ValidationError(f"masses sum to {total}, expected 1")
        if not self.complete_tail and total >= 1.0:
            raise ValidationError("incomplete curve must leave a positive tail deficit")

    @property
    def tail_deficit(self) -> float:
        return 0.0 if self.complete_tail else max(0.0, 1.0 - float(self.mass.sum()))

    def sf(self, x) -> np.ndarray:
        """Vectorised S(x) = sum of masses strictly beyond x (plus any deficit)."""
        x = np.asarray(x, dtype=float)
        tail = np.concatenate([np.cumsum(self.mass[::-1])[::-1], [0.0]])
        out = tail[np.searchsorted(self.support, x, side="right")]
        return out + self.tail_deficit


@dataclass(frozen=True, eq=False)
class LBMasses:
    """Discrete length-biased distribution: ``q`` on ``support``."""

    support: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "support", _frozen(self.support))
        object.__setattr__(self, "q", _frozen(self.q))
        if self.support.shape != self.q.shape:
            raise ValidationError("support and q must have equal length")
        if np.any(self.q < 0) or abs(float(self.q.sum()) - 1.0) > 1e-9:
            raise ValidationError("q must be a probability vector")

    @property
    def inverse_mean(self) -> float:
        """sum q_j / t_j, i.e. 1/mu."""
        return float(np.sum(self.q / self.support))

    def mean_duration(self) -> float:
        return 1.0 / self.inverse_mean

    def to_curve(self) -> SurvivalCurve:
        r = self.q / self.support
        keep = r > 0
        p = r[keep] / r.sum()
        return SurvivalCurve(self.support[keep], p, complete_tail=True)


@dataclass(frozen=True, eq=False)
class AgeDistribution:
    """Population age-category shares, piecewise constant in calendar time.

    ``segments`` holds ``(start, end, probs)`` with ``probs`` aligned to
    ``categories``. Time runs from 0 (earliest possible onset) to the
    recruitment date ``tau_star``. A single segment is the time-constant case;
    its bounds may be infinite.
    """

    categories: tuple[str, ...]
    segments: tuple[tuple[float, float, tuple[float, ...]], ...]

    def __post_init__(self):
        cats = tuple(str(c) for c in self.categories)
        object.__setattr__(self, "categories", cats)
        segs = tuple(
            (float(a), float(b), tuple(float(p) for p in probs)) for a, b, probs in self.segments
        )
        segs = tuple(sorted(segs, key=lambda seg: seg[0]))
        object.__setattr__(self, "segments", segs)
        if not segs:
            raise ValidationError("age distribution needs at least one segment")
        if len(set(cats)) != len(cats):
            raise ValidationError("duplicate age categories")
        for a, b, probs in segs:
            if len(probs) != len(cats):
                raise ValidationError("segment probability vector does not match categories")
            if not b > a:
                raise ValidationError(f"empty segment [{a}, {b})")
            if any(p < 0 or p > 1 for p in probs) or abs(sum(probs) - 1.0) > 1e-6:
                raise ValidationError(f"segment [{a}, {b}) probabilities must sum to 1")
        for (a0, b0, _), (a1, b1, _) in zip(segs, segs[1:]):
            if a1 < b0:
                raise ValidationError(f"segments [{a0}, {b0}) and [{a1}, {b1}) overlap")

    @classmethod
    def constant(cls, shares: dict) -> "AgeDistribution":
        cats = tuple(str(k) for k in shares)
        return cls(cats, ((0.0, math.inf, tuple(shares.values())),))

    @property
    def is_constant(self) -> bool:
        return len(self.segments) == 1

    def index(self, z) -> int:
        try:
            return self.categories.index(str(z))
        except ValueError:
            raise ValidationError(f"unknown age category {z!r}") from None

    def share(self, z) -> float:
        """P(A = z) for the constant case."""
        if not self.is_constant:
            raise ValidationError("age distribution varies over time; use share_at")
        return self.segments[0][2][self.index(z)]

    def share_at(self, z, t: float) -> float:
        k = self.index(z)
        for a, b, probs in self.segments:
            if a <= t < b:
                return probs[k]
        raise CoverageGap(f"no age segment covers calendar time {t}")

    def check_coverage(self, tau_star: float) -> None:
        """Raise CoverageGap unless the segments cover [0, tau_star]."""
        if self.is_constant:
            a, b, _ = self.segments[0]
            if a <= 0 and b >= tau_star:
                return
        cursor = 0.0
        for a, b, _ in self.segments:
            if b <= cursor:
                continue
            if a > cursor:
                raise CoverageGap(f"age segments leave a gap on [{cursor}, {a})")
            cursor = b
            if cursor >= tau_star:
                return
        raise CoverageGap(f"age segments stop at {cursor}, before tau_star={tau_star}")


__all__ = [
    "AgeDistribution",
    "CohortArrays",
    "LBMasses",
    "PrevalentRecord",
    "ScreeningFrame",
    "SurvivalCurve",
    "Violation",
    "require_valid",
    "total_time",
    "validate_frame",
]
