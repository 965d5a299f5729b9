"""Percentile bootstrap for the incidence rate.

The screened cohort is resampled as a whole: the number of cases in a
replicate is Binomial(s, n/s), i.e. what resampling ``s`` subjects with
replacement gives, and the cases themselves are drawn with replacement from
the observed records. Replicate ``b`` uses its own generator derived from
``(seed, b)``, so results do not depend on how replicates are split among
workers.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import AgeDistribution, ScreeningFrame
from .errors import NoEvents, TooFewValidReplicates, UndefinedTail, ValidationError
from .incidence import denom_integral
from .npmle import DEFAULT_MAX_ITER, DEFAULT_TOL, TAIL_POLICIES, fit_totals

MAX_DEGENERATE_FRACTION = 0.20


@dataclass(frozen=True)
class BootstrapResult:
    estimates: tuple[float, ...]
    ci_lower: float
    ci_upper: float
    level: float
    B: int
    seed: int
    degenerate_count: int
    biased_tail_count: int = 0

    def to_dict(self) -> dict:
        return {
            "ci_lower": self.ci_lower,
            "ci_upper": self.ci_upper,
            "level": self.level,
            "B": self.B,
            "seed": self.seed,
            "degenerate_count": self.degenerate_count,
            "biased_tail_count": self.biased_tail_count,
            "estimates": list(self.estimates),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "BootstrapResult":
        return cls(
            estimates=tuple(d["estimates"]),
            ci_lower=d["ci_lower"],
            ci_upper=d["ci_upper"],
            level=d["level"],
            B=d["B"],
            seed=d["seed"],
            degenerate_count=d["degenerate_count"],
            biased_tail_count=d.get("biased_tail_count", 0),
        )


def percentile_ranks(B: int, level: float) -> tuple[int, int]:
    """1-based order-statistic ranks ``ceil(B a/2)`` and ``ceil(B (1 - a/2))``."""
    alpha = 1.0 - level
    # round first: 1 - 0.95 is 0.050000000000000044 in binary
    lo = math.ceil(round(B * alpha / 2, 9))
    hi = math.ceil(round(B * (1 - alpha / 2), 9))
    return max(lo, 1), min(max(hi, 1), B)


def percentile_ci(estimates: Sequence[float], level: float) -> tuple[float, float]:
    vals = np.sort(np.asarray(estimates, dtype=float))
    lo, hi = percentile_ranks(vals.size, level)
    return float(vals[lo - 1]), float(vals[hi - 1])


def replicate_rng(seed: int, b: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=(b,))))


def _draw_indices(n: int, s: int, rng: np.random.Generator) -> np.ndarray:
    n_star = int(rng.binomial(s, n / s)) if n else 0
    return rng.integers(0, n, n_star) if n_star else np.empty(0, dtype=np.int64)


def resample_frame(frame: ScreeningFrame, rng: np.random.Generator) -> ScreeningFrame:
    """One bootstrap copy of the screened cohort (``s`` is kept)."""
    a = frame.arrays
    idx = _draw_indices(frame.n, frame.s, rng)
    cats = None
    if any(c is not None for c in a.age_cat):
        cats = [a.age_cat[i] for i in idx.tolist()]
    return ScreeningFrame.from_arrays(frame.s, a.bwd[idx], a.fwd_obs[idx], a.event[idx], cats)


@dataclass(frozen=True)
class AgeEstimator:
    """Per-category bootstrap target: age shares and, if time-varying, tau_star."""

    age: AgeDistribution
    tau_star: float | None = None


@dataclass(frozen=True, eq=False)
class _Context:
    totals: np.ndarray
    events: np.ndarray
    codes: np.ndarray | None
    s: int
    seed: int
    tail_policy: str
    prevalence_scale: float
    tol: float
    max_iter: int
    estimator: AgeEstimator | None


def _fit_mu(totals, events, ctx: _Context):
    """Returns (fit, degenerate, biased)."""
    try:
        fit = fit_totals(totals, events, ctx.tol, ctx.max_iter, ctx.tail_policy,
                         keep_trace=False)
        return fit, False, fit.biased_tail
    except (UndefinedTail, NoEvents):
        fit = fit_totals(totals, events, ctx.tol, ctx.max_iter, "tail-at-max-censored",
                         allow_no_events=True, keep_trace=False)
        return fit, True, True


def _one_replicate(ctx: _Context, b: int):
    rng = replicate_rng(ctx.seed, b)
    n = ctx.totals.size
    idx = _draw_indices(n, ctx.s, rng)
    t, e = ctx.totals[idx], ctx.events[idx]
    if ctx.estimator is None:
        if idx.size == 0:
            return (0.0,), (True,), (False,)
        fit, degen, biased = _fit_mu(t, e, ctx)
        return ((idx.size / ctx.s) * ctx.prevalence_scale / fit.mu_hat,), (degen,), (biased,)
    age = ctx.estimator.age
    codes = ctx.codes[idx]
    lams, degens, biases = [], [], []
    for k, z in enumerate(age.categories):
        mask = codes == k
        nz = int(mask.sum())
        if nz == 0:
            lams.append(0.0)
            degens.append(True)
            biases.append(False)
            continue
        fit, degen, biased = _fit_mu(t[mask], e[mask], ctx)
        tau = ctx.estimator.tau_star
        if age.is_constant and (tau is None or tau >= fit.curve.support[-1]):
            denom = fit.mu_hat * age.share(z)
        else:
            denom = denom_integral(fit.curve, age, tau, z)
        lams.append((nz / ctx.s) / denom)
        degens.append(degen)
        biases.append(biased)
    return tuple(lams), tuple(degens), tuple(biases)


def _run_chunk(args):
    ctx, lo, hi = args
    return [_one_replicate(ctx, b) for b in range(lo, hi)]


def _run(ctx: _Context, B: int, workers: int):
    if workers <= 1:
        return _run_chunk((ctx, 0, B))
    step = math.ceil(B / (4 * workers))
    chunks = [(ctx, lo, min(lo + step, B)) for lo in range(0, B, step)]
    out = []
    with ProcessPoolExecutor(max_workers=workers) as pool:
        for part in pool.map(_run_chunk, chunks):
            out.extend(part)
    return out


def _assemble(values, degens, biases, level, B, seed) -> BootstrapResult:
    n_degen = int(sum(degens))
    if n_degen > MAX_DEGENERATE_FRACTION * B:
        raise TooFewValidReplicates(
            f"{n_degen} of {B} bootstrap replicates were degenerate "
            f"(more than {MAX_DEGENERATE_FRACTION:.0%})"
        )
    lo, hi = percentile_ci(values, level)
    return BootstrapResult(tuple(float(v) for v in values), lo, hi, level, B, seed, n_degen,
                           int(sum(biases)))


def bootstrap_lambda(frame: ScreeningFrame, B: int = 1000, level: float = 0.95, seed: int = 0,
                     estimator: str | AgeEstimator = "overall", tail_policy: str = "strict",
                     prevalence_override: float | None = None, workers: int = 1,
                     tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER):
    """Percentile bootstrap CI for the overall rate or for each age category.

    Returns a :class:`BootstrapResult` for ``estimator="overall"`` and a dict
    ``category -> BootstrapResult`` for an :class:`AgeEstimator`.

    Replicates with no cases give a rate of 0. Under the strict tail policy a
    replicate whose largest total is censored is refitted with the
    tail-at-max-censored fallback; both kinds count as degenerate, and more
    than 20% degenerate replicates raises :class:`TooFewValidReplicates`.
    With ``prevalence_override`` the replicate prevalence is
    ``override * n* / n``, keeping the external standardisation fixed.
    """
    if B < 100:
        raise ValidationError("B must be at least 100")
    if not 0.0 < level < 1.0:
        raise ValidationError("level must lie in (0, 1)")
    if tail_policy not in TAIL_POLICIES:
        raise ValidationError(f"unknown tail policy {tail_policy!r}")
    a = frame.arrays
    scale = 1.0
    if prevalence_override is not None:
        if frame.n == 0:
            raise ValidationError("prevalence override needs at least one case")
        scale = prevalence_override / (frame.n / frame.s)
    codes = None
    est = None if estimator == "overall" else estimator
    if est is not None:
        if not isinstance(est, AgeEstimator):
            raise ValidationError(f"unknown estimator {estimator!r}")
        lookup = {z: k for k, z in enumerate(est.age.categories)}
        codes = np.array([lookup.get(str(c), -1) for c in a.age_cat], dtype=np.int64)
    ctx = _Context(a.total, a.event, codes, frame.s, int(seed), tail_policy, scale, tol,
                   max_iter, est)
    reps = _run(ctx, int(B), int(workers))
    if est is None:
        return _assemble([r[0][0] for r in reps], [r[1][0] for r in reps],
                         [r[2][0] for r in reps], level, B, seed)
    return {
        z: _assemble([r[0][k] for r in reps], [r[1][k] for r in reps], [r[2][k] for r in reps],
                     level, B, seed)
        for k, z in enumerate(est.age.categories)
    }
