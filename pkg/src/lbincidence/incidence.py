"""Prevalence, overall incidence and age-specific incidence estimators.

Rates are returned per person-year. Reports multiply by ``DISPLAY_SCALE`` for
per-1,000 person-year tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .cohort import AgeDistribution, ScreeningFrame, SurvivalCurve
from .errors import (
    CoverageGap,
    InvalidCounts,
    MissingAgeCategory,
    ValidationError,
    ZeroAgeProbability,
    ZeroDenominator,
    ZeroDuration,
)
from .npmle import DEFAULT_MAX_ITER, DEFAULT_TOL, NpmleFit, fit_totals, mean_duration

DISPLAY_SCALE = 1000


@dataclass(frozen=True)
class CategoryEstimate:
    category: str
    lambda_z: float
    mu_z: float | None
    n_z: int
    share: float | None = None
    denominator: float | None = None

    def to_dict(self) -> dict:
        return {
            "category": self.category,
            "lambda_z": self.lambda_z,
            "mu_z": self.mu_z,
            "n_z": self.n_z,
            "share": self.share,
            "denominator": self.denominator,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CategoryEstimate":
        return cls(d["category"], d["lambda_z"], d["mu_z"], d["n_z"], d.get("share"),
                   d.get("denominator"))


@dataclass(frozen=True)
class IncidenceEstimate:
    lambda_: float
    prevalence: float
    mu: float
    per_category: tuple[CategoryEstimate, ...] | None = None
    flags: tuple[str, ...] = ()
    display_scale: int = DISPLAY_SCALE

    def to_dict(self) -> dict:
        return {
            "lambda": self.lambda_,
            "lambda_display": self.lambda_ * self.display_scale,
            "prevalence": self.prevalence,
            "mu": self.mu,
            "display_scale": self.display_scale,
            "per_category": None if self.per_category is None
            else [c.to_dict() for c in self.per_category],
            "flags": list(self.flags),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "IncidenceEstimate":
        cats = d.get("per_category")
        return cls(
            lambda_=d["lambda"],
            prevalence=d["prevalence"],
            mu=d["mu"],
            per_category=None if cats is None else tuple(CategoryEstimate.from_dict(c) for c in cats),
            flags=tuple(d.get("flags", ())),
            display_scale=d.get("display_scale", DISPLAY_SCALE),
        )


def prevalence_hat(n: int, s: int, override: float | None = None) -> float:
    """Point prevalence ``n / s``, or ``override`` (e.g. an age-standardised value)."""
    if isinstance(s, bool) or s < 1 or n < 0 or n > s:
        raise InvalidCounts(f"need 0 <= n <= s and s >= 1, got n={n}, s={s}")
    if override is not None:
        if not 0.0 < override < 1.0:
            raise InvalidCounts(f"prevalence override {override} not in (0, 1)")
        return float(override)
    return n / s


def lambda_hat(p_hat: float, mu_hat: float) -> float:
    """Incidence rate from ``P = lambda * mu``."""
    if not mu_hat > 0:
        raise ZeroDuration(f"mean duration must be positive, got {mu_hat}")
    return p_hat / mu_hat


def lemma1_residual(p_hat: float, mu_hat: float, p: float, mu: float) -> float:
    """Gap between ``lambda_hat - lambda`` and its linear decomposition in the
    prevalence and duration errors; zero up to round-off."""
    lhs = p_hat / mu_hat - p / mu
    rhs = (mu * (p_hat - p) - p * (mu_hat - mu)) / (mu_hat * mu)
    return lhs - rhs


def _aligned(values, categories: Sequence[str], what: str) -> list:
    if isinstance(values, Mapping):
        vals = {str(k): v for k, v in values.items()}
        missing = [z for z in categories if z not in vals]
        if missing:
            raise MissingAgeCategory(f"{what} missing for categories {missing}")
        return [vals[z] for z in categories]
    values = list(values)
    if len(values) != len(categories):
        raise ValidationError(f"{what} has {len(values)} entries for {len(categories)} categories")
    return values


def lambda_age_const(counts, s: int, mu_z, age: AgeDistribution) -> dict[str, float]:
    """Age-specific rates under a time-constant population age distribution.

    ``lambda_z = (n_z / s) / (mu_z * P(A = z))``. ``counts`` and ``mu_z`` are
    mappings keyed by category or sequences in ``age.categories`` order.
    """
    cats = age.categories
    n = _aligned(counts, cats, "counts")
    mus = _aligned(mu_z, cats, "mu_z")
    if sum(n) > s or any(c < 0 for c in n):
        raise InvalidCounts(f"category counts {n} inconsistent with s={s}")
    out = {}
    for z, nz, mz in zip(cats, n, mus):
        share = age.share(z)
        if nz == 0:
            out[z] = 0.0
            continue
        if share <= 0:
            raise ZeroAgeProbability(f"category {z!r} has cases but population share 0")
        if mz is None or not mz > 0:
            raise ZeroDuration(f"category {z!r} needs a positive mean duration")
        out[z] = (nz / s) / (mz * share)
    return out


def denom_integral(curve_z: SurvivalCurve, age: AgeDistribution, tau_star: float | None,
                   z) -> float:
    """``int_0^tau S_z(tau - t) P(A_t = z) dt``, computed exactly.

    Both factors are step functions of calendar time ``t``, so the integral is
    a finite sum over the merged breakpoints. For a constant age distribution
    and ``tau_star`` at or past the last support point (or None) this is
    ``P(A = z) * mu_z``.
    """
    mu = mean_duration(curve_z)
    if age.is_constant and (tau_star is None or tau_star >= curve_z.support[-1]):
        if tau_star is not None:
            age.check_coverage(tau_star)
        return mu * age.share(z)
    if tau_star is None:
        raise CoverageGap("a time-varying age distribution needs tau_star")
    age.check_coverage(tau_star)
    k = age.index(z)
    cuts = [0.0, tau_star]
    cuts += [a for a, _, _ in age.segments if 0 < a < tau_star]
    cuts += [b for _, b, _ in age.segments if 0 < b < tau_star]
    cuts += [tau_star - t for t in curve_z.support if 0 < tau_star - t < tau_star]
    grid = np.unique(np.array(cuts))
    total = 0.0
    for lo, hi in zip(grid[:-1], grid[1:]):
        mid = 0.5 * (lo + hi)
        share = age.share_at(z, mid) if not age.is_constant else age.segments[0][2][k]
        if share == 0:
            continue
        total += (hi - lo) * share * float(curve_z.sf(tau_star - mid))
    return total


def lambda_age_tv(p_joint_z: float, denom: float) -> float:
    """Age-specific rate ``P(D, A_o = z) / denominator``."""
    if not denom > 0:
        raise ZeroDenominator(f"age-specific denominator must be positive, got {denom}")
    return p_joint_z / denom


@dataclass
class _Fitted:
    estimate: IncidenceEstimate
    fit: NpmleFit | None
    category_fits: dict = field(default_factory=dict)


def _fit_frame(arrays, tail_policy, tol, max_iter) -> NpmleFit:
    return fit_totals(arrays.total, arrays.event, tol, max_iter, tail_policy)


def estimate_overall(frame: ScreeningFrame, tail_policy: str = "strict",
                     prevalence_override: float | None = None, tol: float = DEFAULT_TOL,
                     max_iter: int = DEFAULT_MAX_ITER) -> _Fitted:
    """NPMLE fit, prevalence and ``lambda_hat`` for a whole screening frame."""
    p = prevalence_hat(frame.n, frame.s, prevalence_override)
    fit = _fit_frame(frame.arrays, tail_policy, tol, max_iter)
    flags = []
    if fit.biased_tail:
        flags.append("biased-tail: largest total censored, tail mass placed at it")
    if not fit.converged:
        flags.append("npmle-not-converged")
    est = IncidenceEstimate(lambda_hat(p, fit.mu_hat), p, fit.mu_hat, flags=tuple(flags))
    return _Fitted(est, fit)


def estimate_by_age(frame: ScreeningFrame, age: AgeDistribution, tau_star: float | None = None,
                    tail_policy: str = "strict", tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER) -> _Fitted:
    """Overall and per-category incidence.

    Each category's duration law is fitted on its own records. With a single
    age segment the constant-share formula is used; otherwise the
    time-varying denominator, which needs ``tau_star``.
    """
    cats = age.categories
    arr = frame.arrays
    labels = arr.age_cat
    unknown = sorted({str(c) for c in labels if c is None or str(c) not in cats}, key=str)
    if unknown:
        raise MissingAgeCategory(f"records carry categories absent from the age distribution: {unknown}")
    if not age.is_constant:
        if tau_star is None:
            raise CoverageGap("a time-varying age distribution needs --tau-star")
        age.check_coverage(tau_star)

    overall = estimate_overall(frame, tail_policy, None, tol, max_iter)
    flags = list(overall.estimate.flags)
    labels_arr = np.array([str(c) for c in labels], dtype=object)
    per_cat = []
    fits = {}
    for z in cats:
        mask = labels_arr == z
        nz = int(mask.sum())
        if nz == 0:
            flags.append(f"no-cases-in-category:{z}")
            per_cat.append(CategoryEstimate(z, 0.0, None, 0,
                                            age.share(z) if age.is_constant else None))
            continue
        if age.is_constant and age.share(z) == 0:
            raise ZeroAgeProbability(f"category {z!r} has cases but population share 0")
        fit = fit_totals(arr.total[mask], arr.event[mask], tol, max_iter, tail_policy)
        fits[z] = fit
        if fit.biased_tail:
            flags.append(f"biased-tail:{z}")
        if age.is_constant and (tau_star is None or tau_star >= fit.curve.support[-1]):
            denom = fit.mu_hat * age.share(z)
        else:
            denom = denom_integral(fit.curve, age, tau_star, z)
        lam = lambda_age_tv(nz / frame.s, denom)
        per_cat.append(CategoryEstimate(z, lam, fit.mu_hat, nz,
                                        age.share(z) if age.is_constant else None, denom))
    est = IncidenceEstimate(
        overall.estimate.lambda_, overall.estimate.prevalence, overall.estimate.mu,
        per_category=tuple(per_cat), flags=tuple(flags),
    )
    return _Fitted(est, overall.fit, fits)


def rates_per_thousand(rates: Mapping[str, float]) -> dict[str, float]:
    return {z: r * DISPLAY_SCALE for z, r in rates.items()}


def relative_error(a: float, b: float) -> float:
    return abs(a - b) / abs(b) if b else math.inf
