"""Command-line front end.

Subcommands: ``estimate``, ``estimate-age``, ``simulate`` and ``diagnose``.
Each writes a JSON run report to stdout (or ``--out``). Errors go to stderr
as a JSON object and map to exit codes: 2 parse, 3 validation, 4 undefined
tail, 5 insufficient data, 6 config.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import __version__
from .bootstrap import AgeEstimator, BootstrapResult, bootstrap_lambda
from .cohort import ScreeningFrame, require_valid
from .diagnostics import DiagnosticResult, exchangeability_test
from .errors import ConfigInvalid, InvalidCounts, LBIncidenceError, ValidationError
from .incidence import IncidenceEstimate, estimate_by_age, estimate_overall, lambda_hat
from .io import digest, read_age, read_records, write_records
from .npmle import TAIL_POLICIES
from .sim import SimConfig, sim_equilibrium, sim_window

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class RunReport:
    command: str
    inputs_digest: str
    estimates: IncidenceEstimate | None = None
    bootstrap: BootstrapResult | None = None
    bootstrap_by_category: dict | None = None
    diagnostics: DiagnosticResult | None = None
    npmle_summary: dict | None = None
    simulation: dict | None = None
    flags: tuple[str, ...] = ()
    timing: float = 0.0
    schema_version: int = SCHEMA_VERSION

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "command": self.command,
            "inputs_digest": self.inputs_digest,
            "estimates": None if self.estimates is None else self.estimates.to_dict(),
            "bootstrap": None if self.bootstrap is None else self.bootstrap.to_dict(),
            "bootstrap_by_category": None if self.bootstrap_by_category is None
            else {z: b.to_dict() for z, b in self.bootstrap_by_category.items()},
            "diagnostics": None if self.diagnostics is None else self.diagnostics.to_dict(),
            "npmle_summary": self.npmle_summary,
            "simulation": self.simulation,
            "flags": list(self.flags),
            "timing": self.timing,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunReport":
        bbc = d.get("bootstrap_by_category")
        return cls(
            command=d["command"],
            inputs_digest=d["inputs_digest"],
            estimates=None if d.get("estimates") is None
            else IncidenceEstimate.from_dict(d["estimates"]),
            bootstrap=None if d.get("bootstrap") is None
            else BootstrapResult.from_dict(d["bootstrap"]),
            bootstrap_by_category=None if bbc is None
            else {z: BootstrapResult.from_dict(b) for z, b in bbc.items()},
            diagnostics=None if d.get("diagnostics") is None
            else DiagnosticResult.from_dict(d["diagnostics"]),
            npmle_summary=d.get("npmle_summary"),
            simulation=d.get("simulation"),
            flags=tuple(d.get("flags", ())),
            timing=d.get("timing", 0.0),
            schema_version=d.get("schema_version", SCHEMA_VERSION),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunReport":
        return cls.from_dict(json.loads(text))


@dataclass
class _Timer:
    start: float = field(default_factory=time.perf_counter)

    def elapsed(self) -> float:
        return round(time.perf_counter() - self.start, 6)


def _load_frame(csv_path: str, s: int) -> ScreeningFrame:
    records = read_records(csv_path)
    if len(records) > s:
        raise InvalidCounts(f"{len(records)} records but only s={s} screened")
    frame = ScreeningFrame(s, tuple(records))
    require_valid(frame)
    return frame


def cmd_estimate(csv_path: str | None, s: int | None, prevalence_override: float | None = None,
                 tail_policy: str = "strict", bootstrap: int | None = None, level: float = 0.95,
                 seed: int = 0, mu: float | None = None, workers: int = 1) -> RunReport:
    timer = _Timer()
    if csv_path is None:
        # summary mode: published mean duration and prevalence only
        if mu is None or prevalence_override is None:
            raise ValidationError("without a CSV, both --mu and --prevalence are required")
        if bootstrap:
            raise ValidationError("bootstrap needs case records, not summary statistics")
        if not 0 < prevalence_override < 1:
            raise InvalidCounts("prevalence must lie in (0, 1)")
        est = IncidenceEstimate(lambda_hat(prevalence_override, mu), prevalence_override, mu,
                                flags=("summary-mode",))
        return RunReport("estimate", digest([]), est, timing=timer.elapsed())
    if mu is not None:
        raise ValidationError("--mu is only for summary mode (no CSV)")
    if s is None:
        raise ValidationError("--s is required with a CSV")
    frame = _load_frame(csv_path, s)
    fitted = estimate_overall(frame, tail_policy, prevalence_override)
    boot = None
    if bootstrap:
        boot = bootstrap_lambda(frame, bootstrap, level, seed, "overall", tail_policy,
                                prevalence_override, workers)
    return RunReport("estimate", digest([csv_path]), fitted.estimate, boot,
                     npmle_summary=fitted.fit.summary(), flags=fitted.estimate.flags,
                     timing=timer.elapsed())


def cmd_estimate_age(csv_path: str, s: int, age_csv_path: str, tau_star: float | None = None,
                     tail_policy: str = "strict", bootstrap: int | None = None,
                     level: float = 0.95, seed: int = 0, workers: int = 1) -> RunReport:
    timer = _Timer()
    frame = _load_frame(csv_path, s)
    age = read_age(age_csv_path)
    fitted = estimate_by_age(frame, age, tau_star, tail_policy)
    by_cat = None
    if bootstrap:
        by_cat = bootstrap_lambda(frame, bootstrap, level, seed, AgeEstimator(age, tau_star),
                                  tail_policy, None, workers)
    summary = fitted.fit.summary()
    summary["categories"] = {z: f.summary() for z, f in fitted.category_fits.items()}
    return RunReport("estimate-age", digest([csv_path, age_csv_path]), fitted.estimate,
                     bootstrap_by_category=by_cat, npmle_summary=summary,
                     flags=fitted.estimate.flags, timing=timer.elapsed())


def cmd_simulate(config_path: str, out_csv: str, generator: str = "equilibrium") -> RunReport:
    timer = _Timer()
    try:
        cfg = SimConfig.from_dict(json.loads(Path(config_path).read_text(encoding="utf-8")))
    except (OSError, json.JSONDecodeError, AttributeError) as exc:
        raise ConfigInvalid(f"cannot load simulation config {config_path}: {exc}") from None
    if generator == "equilibrium":
        frame = sim_equilibrium(cfg)
    elif generator == "window":
        frame = sim_window(cfg)
    else:
        raise ConfigInvalid(f"unknown generator {generator!r}")
    write_records(frame, out_csv)
    truth = cfg.truth()
    truth["generator"] = generator
    sidecar = Path(str(out_csv) + ".truth.json")
    sidecar.write_text(json.dumps(truth, indent=2) + "\n", encoding="utf-8")
    n_events = int(frame.arrays.event.sum())
    sim = {
        "generator": generator,
        "s": frame.s,
        "n": frame.n,
        "n_events": n_events,
        "truth": truth,
        "output_digest": digest([out_csv]),
        "truth_path": str(sidecar),
    }
    return RunReport("simulate", digest([config_path]), simulation=sim, timing=timer.elapsed())


def cmd_diagnose(csv_path: str, permutations: int = 999, seed: int = 0) -> RunReport:
    timer = _Timer()
    records = read_records(csv_path)
    frame = ScreeningFrame(max(len(records), 1), tuple(records))
    require_valid(frame)
    res = exchangeability_test(records, permutations, seed)
    flags = ["stationarity-rejected-at-0.05"] if res.p_value <= 0.05 else []
    n_cens = len(records) - res.n_pairs
    if n_cens:
        # dropping censored pairs biases the test toward rejection
        flags.append(f"censored-records-excluded:{n_cens}")
    flags = tuple(flags)
    return RunReport("diagnose", digest([csv_path]), diagnostics=res, flags=flags,
                     timing=timer.elapsed())


def _add_bootstrap_opts(p: argparse.ArgumentParser) -> None:
    p.add_argument("--bootstrap", type=int, default=None, metavar="B",
                   help="number of bootstrap replicates (>= 100)")
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--workers", type=int, default=1)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="lbincidence",
        description="Incidence rate estimation from prevalent cohorts with follow-up.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("estimate", help="overall incidence rate")
    p.add_argument("csv", nargs="?", help="case records (bwd,fwd_obs,event,age_cat)")
    p.add_argument("--s", type=int, help="number of subjects screened")
    p.add_argument("--prevalence", type=float, help="prevalence override (e.g. standardised)")
    p.add_argument("--mu", type=float, help="summary mode: mean duration in years")
    p.add_argument("--tail-policy", choices=TAIL_POLICIES, default="strict")
    _add_bootstrap_opts(p)
    p.add_argument("--out", help="write the report here instead of stdout")

    p = sub.add_parser("estimate-age", help="age-specific incidence rates")
    p.add_argument("csv")
    p.add_argument("--s", type=int, required=True)
    p.add_argument("--age", required=True, help="age distribution CSV")
    p.add_argument("--tau-star", type=float, default=None,
                   help="recruitment time; needed for a time-varying age distribution")
    p.add_argument("--tail-policy", choices=TAIL_POLICIES, default="strict")
    _add_bootstrap_opts(p)
    p.add_argument("--out")

    p = sub.add_parser("simulate", help="generate a synthetic prevalent cohort")
    p.add_argument("config", help="JSON simulation config")
    p.add_argument("--out", required=True, help="output CSV; truth goes to <out>.truth.json")
    p.add_argument("--generator", choices=("equilibrium", "window"), default="equilibrium")
    p.add_argument("--report", help="write the run report here instead of stdout")

    p = sub.add_parser("diagnose", help="backward/forward exchangeability check")
    p.add_argument("csv")
    p.add_argument("--permutations", type=int, default=999)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out")
    return parser


def _emit(report: RunReport, path: str | None) -> None:
    text = report.to_json()
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "estimate":
            report = cmd_estimate(args.csv, args.s, args.prevalence, args.tail_policy,
                                  args.bootstrap, args.level, args.seed, args.mu, args.workers)
            _emit(report, args.out)
        elif args.command == "estimate-age":
            report = cmd_estimate_age(args.csv, args.s, args.age, args.tau_star, args.tail_policy,
                                      args.bootstrap, args.level, args.seed, args.workers)
            _emit(report, args.out)
        elif args.command == "simulate":
            _emit(cmd_simulate(args.config, args.out, args.generator), args.report)
        else:
            _emit(cmd_diagnose(args.csv, args.permutations, args.seed), args.out)
    except LBIncidenceError as exc:
        sys.stderr.write(json.dumps(exc.to_dict()) + "\n")
        return exc.exit_code
    return 0


if __name__ == "__main__":
    sys.exit(main())
