"""Synthetic prevalent cohorts under a stationary incidence process.

Two generators are provided and must agree in distribution:

* :func:`sim_window` builds the cohort mechanically. Onsets arrive as a
  Poisson process over calendar time ``[0, tau_star]``, durations are drawn
  from the survival law, and only subjects still alive at ``tau_star`` are
  kept (left truncation).
* :func:`sim_equilibrium` uses the limiting description directly: each of the
  ``s`` screened subjects is a case with probability ``P = lambda * mu``, a
  case's total duration is length-biased and its backward time is uniform on
  ``(0, total)``.

Residual censoring is drawn independently of the recurrence times.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate, special, stats

from .cohort import AgeDistribution, ScreeningFrame
from .errors import ConfigInvalid, InfiniteMoment, PrevalenceOutOfRange

FAMILIES = ("exponential", "weibull", "gamma", "discrete")
_TRUNCATION_QUANTILE = 0.9999


@dataclass(frozen=True)
class Dist:
    """A duration distribution: ``exponential{mean}``, ``weibull{shape,scale}``,
    ``gamma{shape,scale}`` or ``discrete{points,probs}``."""

    family: str
    mean_: float | None = None
    shape: float | None = None
    scale: float | None = None
    points: tuple[float, ...] = ()
    probs: tuple[float, ...] = ()

    def __post_init__(self):
        f = self.family
        if f not in FAMILIES:
            raise ConfigInvalid(f"unknown distribution family {f!r}")
        if f == "exponential":
            if self.mean_ is None or not self.mean_ > 0:
                raise ConfigInvalid("exponential needs mean > 0")
        elif f in ("weibull", "gamma"):
            if self.shape is None or self.scale is None or not (self.shape > 0 and self.scale > 0):
                raise ConfigInvalid(f"{f} needs shape > 0 and scale > 0")
        else:
            pts = tuple(float(x) for x in self.points)
            prs = tuple(float(x) for x in self.probs)
            object.__setattr__(self, "points", pts)
            object.__setattr__(self, "probs", prs)
            if not pts or len(pts) != len(prs):
                raise ConfigInvalid("discrete needs matching points and probs")
            if any(x <= 0 for x in pts) or any(p < 0 for p in prs) or abs(sum(prs) - 1) > 1e-9:
                raise ConfigInvalid("discrete needs positive points and probabilities summing to 1")

    @classmethod
    def exponential(cls, mean: float) -> "Dist":
        return cls("exponential", mean_=float(mean))

    @classmethod
    def weibull(cls, shape: float, scale: float) -> "Dist":
        return cls("weibull", shape=float(shape), scale=float(scale))

    @classmethod
    def gamma(cls, shape: float, scale: float) -> "Dist":
        return cls("gamma", shape=float(shape), scale=float(scale))

    @classmethod
    def discrete(cls, points, probs) -> "Dist":
        return cls("discrete", points=tuple(points), probs=tuple(probs))

    @classmethod
    def point(cls, d: float) -> "Dist":
        return cls.discrete((d,), (1.0,))

    @classmethod
    def from_dict(cls, spec: dict | None) -> "Dist | None":
        if spec is None or spec == "none" or spec.get("family") in (None, "none"):
            return None
        spec = dict(spec)
        fam = spec.pop("family")
        try:
            if fam == "exponential":
                return cls.exponential(spec["mean"])
            if fam in ("weibull", "gamma"):
                return cls(fam, shape=float(spec["shape"]), scale=float(spec["scale"]))
            if fam == "discrete":
                return cls.discrete(spec["points"], spec["probs"])
            if fam == "point":
                return cls.point(spec["value"])
        except KeyError as exc:
            raise ConfigInvalid(f"{fam} distribution is missing parameter {exc}") from None
        raise ConfigInvalid(f"unknown distribution family {fam!r}")

    def to_dict(self) -> dict:
        if self.family == "exponential":
            return {"family": "exponential", "mean": self.mean_}
        if self.family in ("weibull", "gamma"):
            return {"family": self.family, "shape": self.shape, "scale": self.scale}
        return {"family": "discrete", "points": list(self.points), "probs": list(self.probs)}

    # moments -------------------------------------------------------------

    def moment(self, k: int) -> float:
        f = self.family
        if f == "exponential":
            return math.factorial(k) * self.mean_ ** k
        if f == "weibull":
            lg = k * math.log(self.scale) + math.lgamma(1 + k / self.shape)
            return math.exp(lg) if lg < 700 else math.inf
        if f == "gamma":
            lg = k * math.log(self.scale) + math.lgamma(self.shape + k) - math.lgamma(self.shape)
            return math.exp(lg) if lg < 700 else math.inf
        return float(np.dot(np.power(self.points, k), self.probs))

    def mean(self) -> float:
        return self.moment(1)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        f = self.family
        if f == "exponential":
            return np.exp(-np.maximum(x, 0) / self.mean_)
        if f == "weibull":
            return np.exp(-np.power(np.maximum(x, 0) / self.scale, self.shape))
        if f == "gamma":
            return special.gammaincc(self.shape, np.maximum(x, 0) / self.scale)
        pts, prs = np.asarray(self.points), np.asarray(self.probs)
        return np.sum(prs * (pts > x[..., None]), axis=-1)

    def quantile(self, p: float) -> float:
        f = self.family
        if f == "exponential":
            return -self.mean_ * math.log1p(-p)
        if f == "weibull":
            return self.scale * (-math.log1p(-p)) ** (1 / self.shape)
        if f == "gamma":
            return float(stats.gamma.ppf(p, self.shape, scale=self.scale))
        order = np.argsort(self.points)
        cum = np.cumsum(np.asarray(self.probs)[order])
        return float(np.asarray(self.points)[order][min(np.searchsorted(cum, p), len(cum) - 1)])

    # sampling ------------------------------------------------------------

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        f = self.family
        if f == "exponential":
            return rng.exponential(self.mean_, size)
        if f == "weibull":
            return self.scale * rng.weibull(self.shape, size)
        if f == "gamma":
            return rng.gamma(self.shape, self.scale, size)
        return rng.choice(np.asarray(self.points), size=size, p=np.asarray(self.probs))

    def length_biased(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draws with density ``x f(x) / mean``."""
        m1 = self.mean()
        if not (math.isfinite(m1) and math.isfinite(self.moment(2))):
            raise InfiniteMoment(f"{self.family} distribution has no finite second moment")
        f = self.family
        if f == "exponential":
            return rng.gamma(2.0, self.mean_, size)
        if f == "gamma":
            return rng.gamma(self.shape + 1.0, self.scale, size)
        if f == "weibull":
            # (Y/scale)^shape is Gamma(1 + 1/shape, 1) under size-biasing
            g = rng.gamma(1.0 + 1.0 / self.shape, 1.0, size)
            return self.scale * np.power(g, 1.0 / self.shape)
        pts = np.asarray(self.points)
        w = np.asarray(self.probs) * pts
        return rng.choice(pts, size=size, p=w / w.sum())


def length_biased_draw(spec: Dist, rng: np.random.Generator) -> float:
    """One length-biased duration."""
    return float(spec.length_biased(rng, 1)[0])


@dataclass(frozen=True)
class AgeSimSpec:
    """Category-specific incidence rates and survival laws plus population shares."""

    rates: dict
    survival: dict
    distribution: AgeDistribution

    def __post_init__(self):
        cats = self.distribution.categories
        rates = {str(k): float(v) for k, v in self.rates.items()}
        surv = {str(k): v for k, v in self.survival.items()}
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "survival", surv)
        for z in cats:
            if z not in rates or z not in surv:
                raise ConfigInvalid(f"age category {z!r} needs a rate and a survival law")
            if rates[z] < 0:
                raise ConfigInvalid("category rates must be nonnegative")


@dataclass(frozen=True)
class SimConfig:
    s: int
    lambda_true: float
    survival: Dist
    censor: Dist | None = None
    tau_star: float = 100.0
    seed: int = 0
    age: AgeSimSpec | None = None
    ramp: float = 0.0

    def __post_init__(self):
        if isinstance(self.s, bool) or int(self.s) != self.s or self.s < 1:
            raise ConfigInvalid("s must be a positive integer")
        object.__setattr__(self, "s", int(self.s))
        if not (self.lambda_true >= 0 and math.isfinite(self.lambda_true)):
            raise ConfigInvalid("lambda_true must be a finite nonnegative rate")
        if not self.tau_star > 0:
            raise ConfigInvalid("tau_star must be positive")
        if not 0.0 <= self.ramp <= 1.0:
            raise ConfigInvalid("ramp must lie in [0, 1]")
        if self.age is None and self.lambda_true * self.survival.mean() >= 1:
            raise ConfigInvalid("lambda_true * mean duration must be below 1")

    def truth(self) -> dict:
        """True parameters, for oracle comparisons."""
        out: dict[str, Any] = {
            "lambda_true": self.lambda_true,
            "mu_true": self.survival.mean(),
            "prevalence_true": self.lambda_true * self.survival.mean(),
            "seed": self.seed,
            "s": self.s,
            "tau_star": self.tau_star,
            "ramp": self.ramp,
        }
        if self.age is not None:
            out["categories"] = {
                z: {
                    "lambda_z": self.age.rates[z],
                    "mu_z": self.age.survival[z].mean(),
                    "prevalence_z": _category_prevalence(self.age, z, self.tau_star),
                }
                for z in self.age.distribution.categories
            }
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "SimConfig":
        d = dict(d)
        try:
            survival = Dist.from_dict(d.pop("survival"))
            if survival is None:
                raise ConfigInvalid("survival distribution is required")
            censor = Dist.from_dict(d.pop("censor", None))
            age = None
            if d.get("age") is not None:
                a = d.pop("age")
                cats = [str(c) for c in a["categories"]]
                segs = [(seg["start"], seg["end"], seg["probs"]) for seg in a["segments"]]
                dist = AgeDistribution(tuple(cats), tuple(segs))
                age = AgeSimSpec(
                    rates={str(k): v for k, v in a["rates"].items()},
                    survival={str(k): Dist.from_dict(v) for k, v in a["survival"].items()},
                    distribution=dist,
                )
            else:
                d.pop("age", None)
            known = {"s", "lambda_true", "tau_star", "seed", "ramp"}
            extra = set(d) - known
            if extra:
                raise ConfigInvalid(f"unknown config keys: {sorted(extra)}")
            return cls(
                s=d["s"],
                lambda_true=float(d.get("lambda_true", 0.0)),
                survival=survival,
                censor=censor,
                tau_star=float(d.get("tau_star", 100.0)),
                seed=int(d.get("seed", 0)),
                age=age,
                ramp=float(d.get("ramp", 0.0)),
            )
        except (KeyError, TypeError, ValueError) as exc:
            if isinstance(exc, ConfigInvalid):
                raise
            raise ConfigInvalid(f"bad simulation config: {exc!r}") from None

    def to_dict(self) -> dict:
        out: dict[str, Any] = {
            "s": self.s,
            "lambda_true": self.lambda_true,
            "survival": self.survival.to_dict(),
            "censor": None if self.censor is None else self.censor.to_dict(),
            "tau_star": self.tau_star,
            "seed": self.seed,
            "ramp": self.ramp,
        }
        if self.age is not None:
            dist = self.age.distribution
            out["age"] = {
                "categories": list(dist.categories),
                "segments": [{"start": a, "end": b, "probs": list(p)} for a, b, p in dist.segments],
                "rates": dict(self.age.rates),
                "survival": {z: v.to_dict() for z, v in self.age.survival.items()},
            }
        return out


def _streams(seed: int, n: int) -> list[np.random.Generator]:
    """Independent generators for the separate sources of randomness of a run."""
    return [np.random.Generator(np.random.PCG64(ss))
            for ss in np.random.SeedSequence(seed).spawn(n)]


def _censor(fwd: np.ndarray, censor: Dist | None, rng: np.random.Generator):
    if censor is None:
        return fwd, np.ones(fwd.shape, dtype=bool)
    c = censor.sample(rng, fwd.size)
    return np.minimum(fwd, c), fwd <= c


def _segments_within(dist: AgeDistribution, tau_star: float):
    for a, b, probs in dist.segments:
        lo, hi = max(a, 0.0), min(b, tau_star)
        if hi > lo:
            yield lo, hi, probs


def _category_prevalence(age: AgeSimSpec, z: str, tau_star: float) -> float:
    """P(diseased at tau_star, onset category z) = lambda_z * int_0^tau S_z(tau - t) P(A_t = z) dt."""
    surv = age.survival[z]
    k = age.distribution.index(z)
    if age.distribution.is_constant:
        return age.rates[z] * age.distribution.segments[0][2][k] * surv.mean()
    total = 0.0
    for lo, hi, probs in _segments_within(age.distribution, tau_star):
        if probs[k] == 0:
            continue
        # substitute b = tau - t, the time before recruitment
        val, _ = integrate.quad(lambda b: float(surv.sf(b)), tau_star - hi, tau_star - lo,
                                limit=200)
        total += probs[k] * val
    return age.rates[z] * total


def _check_window(config: SimConfig) -> None:
    laws = [config.survival] if config.age is None else list(config.age.survival.values())
    if config.ramp:
        return
    for law in laws:
        q = law.quantile(_TRUNCATION_QUANTILE)
        if not config.tau_star > q:
            raise ConfigInvalid(
                f"tau_star={config.tau_star:g} does not exceed the 99.99% survival "
                f"quantile {q:.4g}; the window generator would be truncated"
            )


def sim_window(config: SimConfig) -> ScreeningFrame:
    """Mechanical calendar-window generator.

    Onsets arrive at rate ``s * lambda_true`` per year over ``[0, tau_star]``
    (optionally ramped: intensity ``lambda * (1 + ramp * (2t/tau - 1))``,
    a non-stationary negative control). A subject onset at ``t`` is prevalent
    at ``tau_star`` when its duration is at least ``tau_star - t``.
    """
    _check_window(config)
    r_onset, r_surv, r_cens, r_thin = _streams(config.seed, 4)
    tau = config.tau_star
    bwd_parts, fwd_parts, cats = [], [], []
    if config.age is None:
        peak = config.lambda_true * (1.0 + config.ramp)
        m = r_onset.poisson(config.s * peak * tau)
        onset = r_onset.uniform(0.0, tau, m)
        if config.ramp:
            keep = r_thin.uniform(size=m) * (1.0 + config.ramp) < 1.0 + config.ramp * (2 * onset / tau - 1)
            onset = onset[keep]
        x = config.survival.sample(r_surv, onset.size)
        bwd = tau - onset
        alive = x >= bwd
        bwd_parts.append(bwd[alive])
        fwd_parts.append(x[alive] - bwd[alive])
    else:
        dist = config.age.distribution
        for k, z in enumerate(dist.categories):
            rate = config.age.rates[z]
            for lo, hi, probs in _segments_within(dist, tau):
                m = r_onset.poisson(config.s * rate * probs[k] * (hi - lo))
                onset = r_onset.uniform(lo, hi, m)
                x = config.age.survival[z].sample(r_surv, m)
                bwd = tau - onset
                alive = x >= bwd
                bwd_parts.append(bwd[alive])
                fwd_parts.append(x[alive] - bwd[alive])
                cats.extend([z] * int(alive.sum()))
    bwd = np.concatenate(bwd_parts) if bwd_parts else np.empty(0)
    fwd = np.concatenate(fwd_parts) if fwd_parts else np.empty(0)
    fwd_obs, event = _censor(fwd, config.censor, r_cens)
    return ScreeningFrame.from_arrays(config.s, bwd, fwd_obs, event, cats if config.age else None)


def equilibrium_cases(n: int, survival: Dist, censor: Dist | None, rng: np.random.Generator):
    """``n`` equilibrium prevalent cases as ``(bwd, fwd_obs, event)`` arrays."""
    y = survival.length_biased(rng, n)
    bwd = y * rng.uniform(size=n)
    fwd = y - bwd
    fwd_obs, event = _censor(fwd, censor, rng)
    return bwd, fwd_obs, event


def sim_equilibrium(config: SimConfig) -> ScreeningFrame:
    """Equilibrium generator: Bernoulli(P) cases, length-biased totals, uniform backward times."""
    if config.ramp:
        raise ConfigInvalid("the equilibrium generator is stationary; use sim_window for ramps")
    r_case, r_surv, r_cens = _streams(config.seed, 3)
    if config.age is None:
        p = config.lambda_true * config.survival.mean()
        if not 0.0 <= p < 1.0:
            raise PrevalenceOutOfRange(f"prevalence {p:g} outside [0, 1)")
        n = int(r_case.binomial(config.s, p))
        y = config.survival.length_biased(r_surv, n)
        bwd = y * r_surv.uniform(size=n)
        fwd_obs, event = _censor(y - bwd, config.censor, r_cens)
        return ScreeningFrame.from_arrays(config.s, bwd, fwd_obs, event)

    dist = config.age.distribution
    probs = [_category_prevalence(config.age, z, config.tau_star) for z in dist.categories]
    if sum(probs) >= 1.0 or min(probs) < 0:
        raise PrevalenceOutOfRange(f"category prevalences {probs} are not a sub-probability")
    counts = r_case.multinomial(config.s, probs + [1.0 - sum(probs)])[:-1]
    bwd_parts, y_parts, cats = [], [], []
    for k, (z, nz) in enumerate(zip(dist.categories, counts)):
        law = config.age.survival[z]
        if dist.is_constant:
            y = law.length_biased(r_surv, nz)
            b = y * r_surv.uniform(size=nz)
        else:
            # backward time b carries weight P(A_{tau-b} = z); thin against the peak share
            peak = max(p[k] for _, _, p in dist.segments)
            ys, bs, got = [], [], 0
            while got < nz:
                batch = max(2 * (nz - got), 64)
                y = law.length_biased(r_surv, batch)
                b = y * r_surv.uniform(size=batch)
                t = config.tau_star - b
                share = np.array([_share_or_zero(dist, z, ti) for ti in t])
                ok = r_surv.uniform(size=batch) * peak < share
                ys.append(y[ok])
                bs.append(b[ok])
                got += int(ok.sum())
            y = np.concatenate(ys)[:nz]
            b = np.concatenate(bs)[:nz]
        y_parts.append(y)
        bwd_parts.append(b)
        cats.extend([z] * int(nz))
    y = np.concatenate(y_parts)
    bwd = np.concatenate(bwd_parts)
    fwd_obs, event = _censor(y - bwd, config.censor, r_cens)
    return ScreeningFrame.from_arrays(config.s, bwd, fwd_obs, event, cats)


def _share_or_zero(dist: AgeDistribution, z: str, t: float) -> float:
    if t < 0:
        return 0.0
    k = dist.index(z)
    for a, b, probs in dist.segments:
        if a <= t < b:
            return probs[k]
    return 0.0


__all__ = [
    "AgeSimSpec",
    "Dist",
    "SimConfig",
    "equilibrium_cases",
    "length_biased_draw",
    "sim_equilibrium",
    "sim_window",
]
