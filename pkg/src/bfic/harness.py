"""Batch runner: sweeps schemes over p and seeds, writes flat CSV or JSON.

Every trial draws its generator from ``(root_seed, p index, trial index)``,
so results do not depend on how many worker processes run them or in which
order they finish.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from . import channel, regions
from .delayed import run_corner_C, run_point_A
from .entropy import verify_leakage_bound
from .feedback import run_dcsit_ofb_corner, run_dcsit_ofb_sum, run_icsit, run_icsit_ofb
from .regions import RateTuple, Scenario

CSV_FIELDS = ("scheme", "p", "m", "b", "delta", "trial", "seed", "slots", "r1", "r2", "halted")
REGION_SLACK = 0.02


class ConfigError(ValueError):
    pass


class Job(enum.Enum):
    point_A = "point_A"
    corner_C = "corner_C"
    dcsit_ofb_sum = "dcsit_ofb_sum"
    dcsit_ofb_corner = "dcsit_ofb_corner"
    icsit = "icsit"
    icsit_ofb = "icsit_ofb"
    regions = "regions"
    curves = "curves"
    entropy = "entropy"


SCHEME_JOBS = (Job.point_A, Job.corner_C, Job.dcsit_ofb_sum, Job.dcsit_ofb_corner, Job.icsit,
               Job.icsit_ofb)

SCENARIO_OF = {Job.point_A: Scenario.Dcsit, Job.corner_C: Scenario.Dcsit,
               Job.dcsit_ofb_sum: Scenario.DcsitOfb, Job.dcsit_ofb_corner: Scenario.DcsitOfb,
               Job.icsit: Scenario.Icsit, Job.icsit_ofb: Scenario.IcsitOfb}


@dataclass
class ExperimentConfig:
    scheme: str
    p: list = field(default_factory=lambda: [0.5])
    m: int = 10_000
    b: int = 10
    delta: float = 0.02
    trials: int = 1
    root_seed: int = 0
    out: str | None = None
    format: str = "csv"
    adaptive: bool = False
    max_block: int | None = None
    threads: int | None = None
    max_halt_rate: float = 0.05

    def __post_init__(self):
        try:
            self.job = Job(self.scheme)
        except ValueError:
            raise ConfigError(f"unknown scheme {self.scheme!r}; choose from "
                              f"{', '.join(j.value for j in Job)}") from None
        if isinstance(self.p, (int, float)):
            self.p = [self.p]
        self.p = [float(v) for v in self.p]
        self.validate()

    def validate(self):
        if self.trials < 1:
            raise ConfigError("trials must be at least 1")
        if self.format not in ("csv", "json"):
            raise ConfigError("format must be csv or json")
        if not self.p:
            raise ConfigError("need at least one p value")
        if self.job in SCHEME_JOBS:
            for v in self.p:
                if not 0.0 < v < 1.0:
                    raise ConfigError(f"p={v} outside (0, 1)")
            if self.m < 1:
                raise ConfigError("m must be positive")
            if self.job in (Job.dcsit_ofb_corner, Job.icsit, Job.icsit_ofb) and self.b < 1:
                raise ConfigError("b must be at least 1")
            if self.job in (Job.point_A, Job.corner_C, Job.dcsit_ofb_sum, Job.dcsit_ofb_corner):
                if self.delta <= 0:
                    raise ConfigError("delta must be positive")
            if self.job is Job.corner_C:
                for v in self.p:
                    if not regions.OFB_DCSIT_THRESHOLD < v:
                        raise ConfigError("corner_C needs p > (3 - sqrt 5)/2")
        elif any(not 0.0 <= v <= 1.0 for v in self.p):
            raise ConfigError("p values must lie in [0, 1]")
        if self.max_block is not None and self.max_block < 256:
            raise ConfigError("max_block must be at least 256")
        if not 0.0 <= self.max_halt_rate <= 1.0:
            raise ConfigError("max_halt_rate must lie in [0, 1]")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        known = {f for f in cls.__dataclass_fields__}
        extra = set(d) - known
        if extra:
            raise ConfigError(f"unknown config keys: {sorted(extra)}")
        return cls(**d)


@dataclass
class TrialRecord:
    scheme: str
    p: float
    m: int
    b: int
    delta: float
    trial: int
    seed: int
    slots: int
    r1: float
    r2: float
    halted: str
    phases: dict = field(default_factory=dict)


def trial_seed(root_seed: int, p_index: int, trial: int) -> int:
    ss = np.random.SeedSequence((root_seed, p_index, trial))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def target_rates(job: Job, p: float, b: int = 10) -> RateTuple:
    """The rate pair a scheme aims for at ``p``."""
    q = 1.0 - p
    if job is Job.point_A:
        r = min(p, regions.point_a_rate(p))
        return RateTuple(r, r)
    if job is Job.corner_C:
        return regions.corner_c(p)
    if job is Job.dcsit_ofb_sum:
        r = regions.point_a_rate(p)
        return RateTuple(r, r)
    f = b / (b + 1.0)
    if job is Job.dcsit_ofb_corner:
        return RateTuple(f * (1.0 - q * q), 0.0)
    if job is Job.icsit:
        return RateTuple(f * p, f * (p if p <= 0.5 else 2.0 * p * q))
    if job is Job.icsit_ofb:
        return RateTuple(f * (1.0 - q * q), f * p * q)
    raise ConfigError(f"{job.value} has no rate target")


def run_trial(job: Job, p: float, m: int, b: int, delta: float, adaptive: bool, trial: int,
              seed: int, max_block: int | None = None) -> TrialRecord:
    rng = np.random.default_rng(seed)
    if job is Job.point_A:
        res = run_point_A(m, p, delta, rng)
    elif job is Job.corner_C:
        res = run_corner_C(m, p, delta, rng, adaptive=adaptive)
    elif job is Job.dcsit_ofb_sum:
        extra = {"max_block": max_block} if max_block else {}
        res = run_dcsit_ofb_sum(m, p, delta, rng, **extra)
    elif job is Job.dcsit_ofb_corner:
        res = run_dcsit_ofb_corner(m, b, p, delta, rng, adaptive=adaptive)
    elif job is Job.icsit:
        res = run_icsit(m, b, p, rng)
    else:
        res = run_icsit_ofb(m, b, p, rng)
    phases = {s.name: s.slots for s in res.phase_stats}
    halted = res.halted.value if res.halted is not None else ""
    return TrialRecord(job.value, p, m, b, delta, trial, seed, res.slots_used,
                       res.empirical_rates.r1, res.empirical_rates.r2, halted, phases)


def _run_one(args):
    return run_trial(*args)


@dataclass
class PointSummary:
    p: float
    trials: int
    halts: int
    mean: RateTuple
    std: RateTuple
    target: RateTuple
    outside_region: int

    @property
    def halt_rate(self) -> float:
        return self.halts / self.trials

    def rel_error(self) -> RateTuple:
        return RateTuple(*(_rel(a, t) for a, t in zip(self.mean, self.target)))


def _rel(a: float, t: float) -> float:
    return (a - t) / t if t else a


@dataclass
class RunSummary:
    job: str
    points: list
    records: list
    elapsed: float
    text: str = ""

    @property
    def worst_halt_rate(self) -> float:
        return max((pt.halt_rate for pt in self.points), default=0.0)


def summarize(job: Job, b: int, records: list) -> list[PointSummary]:
    out = []
    for p in sorted({r.p for r in records}):
        rs = sorted((r for r in records if r.p == p), key=lambda r: r.trial)
        good = [r for r in rs if not r.halted]
        reg = regions.region(SCENARIO_OF[job], p)
        outside = sum(not reg.contains((r.r1, r.r2), REGION_SLACK) for r in good)
        if good:
            arr = np.array([[r.r1, r.r2] for r in good])
            mean = RateTuple(*arr.mean(axis=0))
            std = RateTuple(*(arr.std(axis=0, ddof=1) if len(good) > 1 else (0.0, 0.0)))
        else:
            mean = std = RateTuple(0.0, 0.0)
        out.append(PointSummary(p, len(rs), len(rs) - len(good), mean, std,
                                target_rates(job, p, b), outside))
    return out


def format_csv(records: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for r in records:
        w.writerow([r.scheme, f"{r.p:.10g}", r.m, r.b, f"{r.delta:.10g}", r.trial, r.seed, r.slots,
                    f"{r.r1:.10g}", f"{r.r2:.10g}", r.halted])
    return buf.getvalue()


def format_json(records: list, points: list) -> str:
    rows = []
    for r in records:
        d = asdict(r)
        d.pop("phases")
        rows.append({k: (float(f"{v:.10g}") if isinstance(v, float) else v) for k, v in d.items()})
    summary = [{"p": pt.p, "trials": pt.trials, "halt_rate": pt.halt_rate,
                "mean": list(pt.mean), "std": list(pt.std), "target": list(pt.target),
                "rel_error": list(pt.rel_error()), "outside_region": pt.outside_region}
               for pt in points]
    return json.dumps({"records": rows, "summary": summary}, indent=2, sort_keys=True) + "\n"


def write_atomic(path: str, text: str) -> None:
    """Write through a temporary file so a failure never leaves partial output."""
    folder = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".bfic-")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def run_config(cfg: ExperimentConfig) -> RunSummary:
    """Run every trial of a scheme job, write the records, return the summary."""
    if cfg.job not in SCHEME_JOBS:
        raise ConfigError(f"{cfg.job.value} is not a simulation job")
    t0 = time.perf_counter()
    tasks = [(cfg.job, p, cfg.m, cfg.b, cfg.delta, cfg.adaptive, i, trial_seed(cfg.root_seed, k, i),
              cfg.max_block)
             for k, p in enumerate(cfg.p) for i in range(cfg.trials)]
    threads = cfg.threads or os.cpu_count() or 1
    if threads > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            records = list(pool.map(_run_one, tasks))
    else:
        records = [_run_one(t) for t in tasks]
    records.sort(key=lambda r: (cfg.p.index(r.p), r.trial))
    points = summarize(cfg.job, cfg.b, records)
    text = format_csv(records) if cfg.format == "csv" else format_json(records, points)
    if cfg.out:
        write_atomic(cfg.out, text)
    return RunSummary(cfg.job.value, points, records, time.perf_counter() - t0, text)


def describe(summary: RunSummary) -> str:
    lines = [f"{summary.job}: {len(summary.records)} trials in {summary.elapsed:.1f}s"]
    for pt in summary.points:
        err = pt.rel_error()
        lines.append(f"  p={pt.p:g}  mean=({pt.mean.r1:.5f}, {pt.mean.r2:.5f})  "
                     f"sd=({pt.std.r1:.5f}, {pt.std.r2:.5f})  target=({pt.target.r1:.5f}, "
                     f"{pt.target.r2:.5f})  rel=({err.r1:+.2%}, {err.r2:+.2%})  "
                     f"halts={pt.halts}/{pt.trials}  outside_region={pt.outside_region}")
    return "\n".join(lines)


# -- non-simulation jobs -------------------------------------------------------

def regions_table(p_values) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "scenario", "r1", "r2"])
    for p in p_values:
        for s in Scenario:
            for r1, r2 in regions.corner_points(regions.region(s, p)):
                w.writerow([f"{p:.10g}", s.value, f"{r1:.10g}", f"{r2:.10g}"])
    return buf.getvalue()


def curves_table(p_values) -> str:
    rows = []
    for s in Scenario:
        rows += regions.sum_capacity_curve(s, p_values)
    return regions.write_curve_csv(rows)


def entropy_table(p_values, trials: int, root_seed: int) -> str:
    rng = np.random.default_rng(root_seed)
    checks = verify_leakage_bound([p for p in p_values if 0 < p < 1], trials, rng)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["p", "bound", "min_ratio", "worst", "leakage_ratio", "violations", "trials"])
    for c in checks:
        w.writerow([f"{c.p:.10g}", f"{c.bound:.10g}", f"{c.min_ratio:.10g}", c.worst,
                    f"{c.leakage_ratio:.10g}" if c.leakage_ratio is not None else "", c.violations,
                    c.trials])
    return buf.getvalue()


# -- selftest ----------------------------------------------------------------------

# canonical case table, one string per case id 1..16 in (g11, g21, g12, g22) order
REFERENCE_CASES = ("1111 1011 1101 1001 1000 1010 1100 1110 "
                   "0001 0101 0011 0111 0100 0010 0110 0000").split()


@dataclass
class CheckResult:
    name: str
    ok: bool
    detail: str = ""


@dataclass
class SelftestReport:
    results: list
    elapsed: float

    @property
    def ok(self) -> bool:
        return all(r.ok for r in self.results)


def _check_case_table(tuples) -> CheckResult:
    try:
        lookup = channel._build_lookup(tuples)
    except ValueError as exc:
        return CheckResult("case-classification", False, str(exc))
    bad = []
    for case, bits in enumerate(REFERENCE_CASES, start=1):
        g11, g21, g12, g22 = (int(c) for c in bits)
        got = int(lookup[8 * g11 + 4 * g21 + 2 * g12 + g22])
        if got != case:
            bad.append(f"{bits}->{got}")
    for state in range(16):
        g = ((state >> 3) & 1, (state >> 1) & 1, (state >> 2) & 1, state & 1)
        if tuples is channel.CASE_TUPLES and channel.classify_case(g) != lookup[state]:
            bad.append(f"classify_case disagrees on {g}")
    return CheckResult("case-classification", not bad, "; ".join(bad))


def selftest(*, corrupt_case_table: bool = False, m: int = 2000, trials: int = 3,
             seed: int = 7) -> SelftestReport:
    """Fast structural checks plus a reduced run of every scheme."""
    from .delayed import merged_common_mass
    from .gf2 import (DecodeFailure, ErasurePattern, LinearCode, decode_erasures, encode,
                      random_generator)

    t0 = time.perf_counter()
    results = []
    tuples = channel.CASE_TUPLES
    if corrupt_case_table:
        tuples = list(tuples)
        tuples[0], tuples[1] = tuples[1], tuples[0]
    results.append(_check_case_table(tuples))

    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in rng.uniform(0.01, 0.99, 100):
        for regime in ("type2", "type3"):
            worst = max(worst, abs(merged_common_mass(p, regime) - 0.5 * p))
    results.append(CheckResult("merge-mass", bool(worst < 1e-12), f"max error {worst:.2e}"))

    bad = 0
    for _ in range(20):
        k = int(rng.integers(1, 48))
        n = k + 40 + int(rng.integers(0, 40))
        g = random_generator(k, n, rng)
        msg = rng.integers(0, 2, k).astype(np.uint8)
        cw = encode(g, msg)
        keep = np.sort(rng.choice(n, k + 30, replace=False))
        try:
            got = decode_erasures(g, ErasurePattern(keep, cw[keep]))
            bad += int(not np.array_equal(got, msg))
        except DecodeFailure:
            bad += 1
        code = LinearCode.random(k, n, rng)
        bad += int(not np.array_equal(encode(code.generator(), msg), code.encode(msg)))
    results.append(CheckResult("gf2-roundtrip", bad == 0, f"{bad} mismatches"))

    for job, p in ((Job.point_A, 0.5), (Job.point_A, 0.3), (Job.corner_C, 0.6),
                   (Job.dcsit_ofb_sum, 0.5), (Job.dcsit_ofb_corner, 0.5), (Job.icsit, 0.4),
                   (Job.icsit, 0.7), (Job.icsit_ofb, 0.5)):
        recs = [run_trial(job, p, m, 3, 0.05, True, i, trial_seed(seed, 0, i)) for i in range(trials)]
        reg = regions.region(SCENARIO_OF[job], p)
        halts = sum(bool(r.halted) for r in recs)
        outside = sum(not reg.contains((r.r1, r.r2), REGION_SLACK) for r in recs if not r.halted)
        ok = outside == 0 and halts < trials
        results.append(CheckResult(f"run-{job.value}-p{p:g}", ok,
                                   f"halts {halts}/{trials}, outside region {outside}"))

    guards = 0
    for job in SCHEME_JOBS:
        for p in (0.0, 1.0):
            try:
                ExperimentConfig(job.value, [p])
            except ConfigError:
                guards += 1
    results.append(CheckResult("p-guards", guards == 2 * len(SCHEME_JOBS),
                               f"{guards}/{2 * len(SCHEME_JOBS)} rejected"))
    return SelftestReport(results, time.perf_counter() - t0)
