"""Unconditional NPMLE of the disease-duration distribution under length bias.

Observed totals ``bwd + fwd_obs`` of prevalent cases are length-biased draws
from the duration distribution F. Writing ``q`` for the length-biased masses
on the distinct uncensored totals ``t_j``, an uncensored total contributes
``q_j / t_j`` to the likelihood and a censored total ``v`` contributes
``sum_{t_j >= v} q_j / t_j``. The maximiser is found by EM and converted to
F via ``p_j ∝ q_j / t_j``; the mean duration is ``1 / sum_j q_j / t_j``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .cohort import CohortArrays, LBMasses, PrevalentRecord, SurvivalCurve
from .errors import NoEvents, SupportMismatch, UndefinedTail

TAIL_POLICIES = ("strict", "tail-at-max-censored")
DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 100_000


@dataclass(frozen=True, eq=False)
class NpmleFit:
    lb: LBMasses
    curve: SurvivalCurve
    mu_hat: float
    loglik: float
    iterations: int
    converged: bool
    tail_deficit: float = 0.0
    tail_policy: str = "strict"
    biased_tail: bool = False
    trace: tuple[float, ...] = ()

    @property
    def support_size(self) -> int:
        return len(self.lb.support)

    def summary(self) -> dict:
        return {
            "support_size": self.support_size,
            "iterations": self.iterations,
            "converged": self.converged,
            "tail_policy": self.tail_policy,
            "biased_tail": self.biased_tail,
        }


def _as_arrays(records) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(records, CohortArrays):
        return records.total, records.event
    records = list(records)
    totals = np.array([r.bwd + r.fwd_obs for r in records], dtype=float)
    events = np.array([bool(r.event) for r in records], dtype=bool)
    return totals, events


@dataclass
class _Problem:
    """Sufficient statistics of the duration likelihood on a fixed support."""

    t: np.ndarray          # support, increasing
    d: np.ndarray          # uncensored multiplicities per support point
    cens: np.ndarray       # censored counts grouped by first support index with t >= v
    n: int

    def loglik(self, q: np.ndarray) -> float:
        r = q / self.t
        tail = np.cumsum(r[::-1])[::-1]
        with np.errstate(divide="ignore"):
            a = np.where(self.d > 0, self.d * np.log(r), 0.0).sum()
            b = np.where(self.cens > 0, self.cens * np.log(tail), 0.0).sum()
        return float(a + b)

    def em_step(self, q: np.ndarray) -> np.ndarray:
        r = q / self.t
        # suffix sums from the largest support point down
        tail = np.cumsum(r[::-1])[::-1]
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = np.where(self.cens > 0, self.cens / tail, 0.0)
        w = r * np.cumsum(inv)
        return (self.d + w) / self.n


def _build_problem(totals: np.ndarray, events: np.ndarray, tail_policy: str,
                   allow_no_events: bool = False):
    if tail_policy not in TAIL_POLICIES:
        raise ValueError(f"unknown tail policy {tail_policy!r}")
    u = totals[events]
    v = totals[~events]
    if u.size == 0 and not (allow_no_events and tail_policy != "strict" and v.size):
        raise NoEvents("no uncensored records: the duration distribution is not identified")
    t, d = np.unique(u, return_counts=True)
    d = d.astype(float)
    biased = False
    beyond = 0
    if v.size and (t.size == 0 or v.max() > t[-1]):
        vmax = float(v.max())
        if tail_policy == "strict":
            raise UndefinedTail(
                f"largest observed total {vmax:g} is censored; the survivor function "
                f"is undefined beyond the largest failure time"
                + (f" {t[-1]:g}" if t.size else ""),
                largest_censored=vmax,
                policy=tail_policy,
            )
        beyond = int(np.sum(v > t[-1])) if t.size else int(v.size)
        t = np.append(t, vmax)
        d = np.append(d, 0.0)
        biased = True
    k = np.searchsorted(t, v, side="left")
    cens = np.bincount(k, minlength=t.size).astype(float)
    n = int(totals.size)
    q0 = d / max(u.size, 1)
    if biased:
        q0 = q0 * (n - beyond) / n
        q0[-1] = beyond / n
    return _Problem(t, d, cens, n), q0, biased


def _run_em(prob: _Problem, q: np.ndarray, tol: float, max_iter: int):
    ll = prob.loglik(q)
    trace = [ll]
    converged = False
    it = 0
    while it < max_iter:
        q_new = prob.em_step(q)
        it += 1
        delta = float(np.max(np.abs(q_new - q))) if q.size else 0.0
        q = q_new
        ll = prob.loglik(q)
        trace.append(ll)
        if delta < tol:
            converged = True
            break
    q = q / q.sum()
    return q, ll, it, converged, trace


def fit_totals(totals, events, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
               tail_policy: str = "strict", *, allow_no_events: bool = False,
               keep_trace: bool = True) -> NpmleFit:
    """Array-level entry point behind :func:`npmle_lb_em`."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    if max_iter < 1:
        raise ValueError("max_iter must be at least 1")
    totals = np.asarray(totals, dtype=float)
    events = np.asarray(events, dtype=bool)
    prob, q0, biased = _build_problem(totals, events, tail_policy, allow_no_events)
    q, ll, it, converged, trace = _run_em(prob, q0, tol, max_iter)
    lb = LBMasses(prob.t, q)
    r = q / prob.t
    inv_mu = float(np.sum(r))
    keep = r > 0
    curve = SurvivalCurve(
        prob.t[keep], r[keep] / inv_mu, complete_tail=True,
        flags=("biased-tail",) if biased else (),
    )
    return NpmleFit(
        lb=lb,
        curve=curve,
        mu_hat=1.0 / inv_mu,
        loglik=ll,
        iterations=it,
        converged=converged,
        tail_deficit=0.0,
        tail_policy=tail_policy,
        biased_tail=biased,
        trace=tuple(trace) if keep_trace else (),
    )


def npmle_lb_em(records: Sequence[PrevalentRecord] | CohortArrays, tol: float = DEFAULT_TOL,
                max_iter: int = DEFAULT_MAX_ITER, tail_policy: str = "strict") -> NpmleFit:
    """Fit the length-biased NPMLE by EM.

    Parameters
    ----------
    records : sequence of PrevalentRecord or CohortArrays
        Followed prevalent cases.
    tol : float
        Stop once the largest change in any length-biased mass is below ``tol``.
    max_iter : int
        Iteration cap; hitting it returns a fit with ``converged=False``.
    tail_policy : {'strict', 'tail-at-max-censored'}
        What to do when the largest total is censored. ``strict`` raises
        :class:`UndefinedTail`; the alternative appends an atom at the largest
        censored total and marks the fit ``biased_tail``.

    Raises
    ------
    NoEvents
        Every record is censored.
    UndefinedTail
        Under the strict policy, when the largest total is censored.
    """
    totals, events = _as_arrays(records)
    return fit_totals(totals, events, tol, max_iter, tail_policy)


def loglik_lb(q: LBMasses, records) -> float:
    """Duration factor of the full likelihood, evaluated at length-biased masses ``q``."""
    totals, events = _as_arrays(records)
    t = np.asarray(q.support, dtype=float)
    qq = np.asarray(q.q, dtype=float)
    u = totals[events]
    idx = np.searchsorted(t, u)
    ok = (idx < t.size)
    ok[ok] = np.isclose(t[idx[ok]], u[ok], rtol=1e-12, atol=0.0)
    if not np.all(ok):
        missing = u[~ok][0]
        raise SupportMismatch(f"uncensored total {missing:g} is not a support point")
    r = qq / t
    tail = np.concatenate([np.cumsum(r[::-1])[::-1], [0.0]])
    with np.errstate(divide="ignore"):
        a = np.sum(np.log(r[idx]))
        b = np.sum(np.log(tail[np.searchsorted(t, totals[~events], side="left")]))
    val = float(a + b)
    return val if not math.isnan(val) else -math.inf


def survival_at(curve: SurvivalCurve, x: float) -> float:
    """S(x), the mass strictly beyond ``x``.

    For a curve with an incomplete tail and ``x`` at or past the last support
    point this is only a lower bound (the unplaced deficit).
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    return float(curve.sf(x))


def mean_duration(curve: SurvivalCurve) -> float:
    if not curve.complete_tail:
        raise UndefinedTail(
            "mean duration is undefined: the survivor tail beyond "
            f"{curve.support[-1]:g} has unplaced mass {curve.tail_deficit:.4g}",
            largest_censored=float(curve.support[-1]) if curve.support.size else None,
        )
    return float(np.dot(curve.mass, curve.support))


def wang_product_limit(records) -> SurvivalCurve:
    """Product-limit estimator for left-truncated, right-censored totals.

    Truncation time is ``bwd``; risk set at ``u`` is ``{j: bwd_j <= u <= total_j}``.
    Does not use the stationarity assumption, so it is a less efficient
    comparator for the NPMLE.
    """
    if isinstance(records, CohortArrays):
        bwd, totals, events = records.bwd, records.total, records.event
    else:
        records = list(records)
        bwd = np.array([r.bwd for r in records], dtype=float)
        totals = bwd + np.array([r.fwd_obs for r in records], dtype=float)
        events = np.array([bool(r.event) for r in records], dtype=bool)
    if not np.any(events):
        raise NoEvents("no uncensored records")
    times, d = np.unique(totals[events], return_counts=True)
    entered = np.searchsorted(np.sort(bwd), times, side="right")
    exited = np.searchsorted(np.sort(totals), times, side="left")
    at_risk = entered - exited
    flags: list[str] = []
    surv = 1.0
    support, mass = [], []
    for j, (u, dj, rj) in enumerate(zip(times, d, at_risk)):
        if dj >= rj and j < times.size - 1:
            if "empty-risk-set" not in flags:
                flags.append("empty-risk-set")
            continue
        new = surv * (1.0 - dj / rj)
        if surv - new > 0:
            support.append(u)
            mass.append(surv - new)
        surv = new
    complete = surv <= 0.0
    return SurvivalCurve(np.array(support), np.array(mass), complete_tail=complete,
                         flags=tuple(flags))
