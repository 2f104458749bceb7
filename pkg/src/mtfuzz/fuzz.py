"""Campaign driver: seed corpus, coverage, constraint queue, persistence, stats."""

from __future__ import annotations

import json
import logging
import random
import threading
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Union

from .interp import ExecutionResult, Status, execute
from .ir import Program, TargetError, parse_target
from .solver import (STRATEGIES, ConstraintTarget, Executor, SolverConfig, SolverContext,
                     SolveStatus, prepare_target, solve_constraint)

log = logging.getLogger(__name__)


class ConfigError(ValueError):
    pass


class TargetParseError(ValueError):
    pass


class ForcedRunRejected(ValueError):
    pass


class QueueEmpty(LookupError):
    pass


class Coverage:
    """(StmtId, branch) edges covered so far; only ever grows."""

    def __init__(self, edges=()):
        self.edges: set = set(edges)

    def __contains__(self, edge) -> bool:
        return edge in self.edges

    def __len__(self) -> int:
        return len(self.edges)


def update_coverage(cov: Coverage, result: ExecutionResult) -> list:
    """Add the edges of an unforced run; returns the newly covered ones."""
    if result.forced:
        raise ForcedRunRejected("forced runs never contribute coverage")
    new = sorted(result.edges - cov.edges)
    cov.edges.update(new)
    return new


@dataclass
class SeedEntry:
    data: bytes
    index: int
    new_edges: list
    time: float
    parent: Optional[int] = None
    solved: Optional[str] = None  # "stmt:branch" of the constraint that produced it


def schedule_next(queue: list, coverage: Coverage, dropped: Optional[list] = None) -> ConstraintTarget:
    """Pop the target with the fewest attempts, oldest first.

    Targets whose desired edge got covered meanwhile are removed and
    appended to ``dropped``.
    """
    live = []
    for t in queue:
        if t.edge in coverage:
            if dropped is not None:
                dropped.append(t)
        else:
            live.append(t)
    queue[:] = live
    if not queue:
        raise QueueEmpty("no pending constraint targets")
    best = min(queue, key=lambda t: (t.total_attempts, t.discovered))
    queue.remove(best)
    return best


@dataclass
class CampaignConfig:
    target: Union[str, Path, Program]
    seeds: Union[str, Path, list]
    out_dir: Optional[Union[str, Path]] = None
    time_budget: float = 60.0
    rng_seed: int = 0
    workers: int = 1
    solver: SolverConfig = field(default_factory=SolverConfig)
    max_attempts: int = 2
    max_execs: Optional[int] = None
    log_implicit: bool = False


@dataclass
class ConstraintRecord:
    stmt: str
    occurrence: int
    branch: bool
    status: str = "pending"
    strategy: Optional[str] = None
    priors: Optional[int] = None
    effective: Optional[int] = None
    implicit: int = 0
    attempts: int = 0
    reason: Optional[str] = None


@dataclass
class CampaignStats:
    executions: int = 0
    discovered: int = 0
    solved: int = 0
    solved_by: dict = field(default_factory=lambda: {s: 0 for s in STRATEGIES})
    unsolved: int = 0
    vanished: int = 0
    implicit_detections: int = 0
    aborts: int = 0
    abort_tags: list = field(default_factory=list)
    seeds: int = 0
    crashes: int = 0
    coverage: int = 0
    elapsed: float = 0.0
    stopped_by: str = ""
    constraints: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def record_for(self, stmt: str, branch: bool) -> Optional[dict]:
        for c in self.constraints:
            if c["stmt"] == stmt and c["branch"] == branch:
                return c
        return None


def load_target(target) -> Program:
    if isinstance(target, Program):
        return target
    try:
        text = Path(target).read_text(encoding="utf-8")
    except OSError as e:
        raise ConfigError(f"cannot read target {target}: {e}") from e
    try:
        return parse_target(text)
    except TargetError as e:
        raise TargetParseError(f"{target}: {e}") from e


def load_seeds(seeds) -> list:
    if isinstance(seeds, (str, Path)):
        d = Path(seeds)
        if not d.is_dir():
            raise ConfigError(f"seed directory {d} does not exist")
        out = [f.read_bytes() for f in sorted(d.iterdir()) if f.is_file()]
    else:
        out = [bytes(s) for s in seeds]
    if not out:
        raise ConfigError("at least one seed input is required")
    return out


class Campaign:
    def __init__(self, config: CampaignConfig):
        if config.time_budget <= 0:
            raise ConfigError("time budget must be positive")
        if config.workers < 1:
            raise ConfigError("need at least one worker")
        self.config = config
        self.program = load_target(config.target)
        self.initial = load_seeds(config.seeds)
        self.coverage = Coverage()
        self.queue: list = []
        self.known: set = set()  # edges ever queued
        self.corpus: list = []
        self.stats = CampaignStats()
        self.records: dict = {}
        self.lock = threading.RLock()
        self.prior_cache: dict = {}
        self.start = 0.0
        self.deadline = 0.0
        self._seq = 0
        self._executors: list = []
        self.out = Path(config.out_dir) if config.out_dir is not None else None
        if self.out is not None:
            (self.out / "queue").mkdir(parents=True, exist_ok=True)
            (self.out / "crashes").mkdir(parents=True, exist_ok=True)

    # -- shared state, always under the lock

    def observe(self, data: bytes, result: ExecutionResult, parent: Optional[int] = None,
                solved: Optional[str] = None) -> list:
        with self.lock:
            if result.status is Status.ABORTED and result.detail not in self.stats.abort_tags:
                self.stats.abort_tags.append(result.detail)
                self.stats.aborts = len(self.stats.abort_tags)
                self._persist("crashes", self.stats.crashes, data)
                self.stats.crashes += 1
            new = update_coverage(self.coverage, result)
            if not new:
                return new
            entry = SeedEntry(bytes(data), len(self.corpus), new, time.monotonic() - self.start,
                              parent, solved)
            self.corpus.append(entry)
            self._persist("queue", entry.index, data)
            self.stats.seeds = len(self.corpus)
            self._harvest(entry, result)
            return new

    def _persist(self, kind: str, index: int, data: bytes) -> None:
        if self.out is not None:
            (self.out / kind / f"{index:06d}.bin").write_bytes(data)

    def _harvest(self, seed: SeedEntry, result: ExecutionResult) -> None:
        for e in result.trace:
            if e.occurrence != 0:
                continue
            edge = (e.stmt, not e.branch_taken)
            if edge in self.coverage or edge in self.known:
                continue
            self.known.add(edge)
            self._seq += 1
            t = ConstraintTarget(e.stmt, 0, not e.branch_taken, seed.data, result,
                                 discovered=self._seq, parent=seed.index)
            self.queue.append(t)
            self.stats.discovered += 1
            self.records[edge] = ConstraintRecord(str(e.stmt), 0, not e.branch_taken)

    def _next(self) -> Optional[ConstraintTarget]:
        with self.lock:
            dropped: list = []
            try:
                while True:
                    t = schedule_next(self.queue, self.coverage, dropped)
                    if t.total_attempts < self.config.max_attempts:
                        return t
                    self.records[t.edge].status = "unsolved"
            except QueueEmpty:
                return None
            finally:
                for d in dropped:
                    self.records[d.edge].status = "vanished"

    # -- workers

    def _context(self, worker: int) -> SolverContext:
        ex = Executor(self.program, self.config.solver.step_limit, self.observe)
        self._executors.append(ex)
        il = (lambda line: log.info("%s", line)) if self.config.log_implicit else None
        return SolverContext(self.program, ex, self.config.solver,
                             rng=random.Random(self.config.rng_seed * 1009 + worker),
                             deadline=self.deadline, prior_cache=self.prior_cache,
                             implicit_log=il)

    def _executions(self) -> int:
        return sum(ex.count for ex in self._executors)

    def _out_of_budget(self) -> Optional[str]:
        if time.monotonic() >= self.deadline:
            return "time"
        if self.config.max_execs is not None and self._executions() >= self.config.max_execs:
            return "executions"
        return None

    def _work(self, ctx: SolverContext, busy: list, worker: int) -> None:
        while True:
            why = self._out_of_budget()
            if why:
                with self.lock:
                    self.stats.stopped_by = self.stats.stopped_by or why
                return
            t = self._next()
            if t is None:
                with self.lock:
                    if not any(busy):
                        self.stats.stopped_by = self.stats.stopped_by or "queue-exhausted"
                        return
                time.sleep(0.01)
                continue
            busy[worker] = True
            try:
                self._solve(t, ctx)
            finally:
                busy[worker] = False

    def _solve(self, t: ConstraintTarget, ctx: SolverContext) -> None:
        rec = self.records[t.edge]
        before = ctx.implicit_detections
        if t.priors is None:
            prepare_target(t, ctx)
            rec.priors, rec.effective = len(t.priors), len(t.effective)
        out = solve_constraint(t, ctx)
        with self.lock:
            self.stats.implicit_detections += ctx.implicit_detections - before
            rec.attempts = t.total_attempts
            rec.implicit = len(t.implicit)
            if out.status is SolveStatus.SOLVED:
                if rec.status != "solved":
                    rec.status, rec.strategy, rec.reason = "solved", out.strategy, None
                    self.stats.solved += 1
                    self.stats.solved_by[out.strategy] += 1
                # credit the admission to this constraint when the solution was new
                for s in reversed(self.corpus):
                    if s.data == out.input and s.solved is None:
                        s.solved = f"{t.stmt}:{'t' if t.desired else 'f'}"
                        break
            else:
                rec.reason = out.reason
                if t.edge in self.coverage:
                    rec.status = "vanished"
                elif t.total_attempts < self.config.max_attempts:
                    self.queue.append(t)
                else:
                    rec.status = "unsolved"

    def run(self) -> CampaignStats:
        self.start = time.monotonic()
        self.deadline = self.start + self.config.time_budget
        boot = self._context(0)
        for data in self.initial:
            boot.executor.run(data)
        busy = [False] * self.config.workers
        if self.config.workers == 1:
            self._work(boot, busy, 0)
        else:
            ctxs = [boot] + [self._context(i) for i in range(1, self.config.workers)]
            threads = [threading.Thread(target=self._work, args=(c, busy, i), daemon=True)
                       for i, c in enumerate(ctxs)]
            for th in threads:
                th.start()
            for th in threads:
                th.join()
        return self._finish()

    def _finish(self) -> CampaignStats:
        s = self.stats
        for t in self.queue:
            if t.edge in self.coverage:
                self.records[t.edge].status = "vanished"
        s.vanished = sum(r.status == "vanished" for r in self.records.values())
        s.unsolved = sum(r.status == "unsolved" for r in self.records.values())
        s.constraints = [asdict(r) for r in self.records.values()]
        s.executions = self._executions()
        s.coverage = len(self.coverage)
        s.elapsed = time.monotonic() - self.start
        if self.out is not None:
            (self.out / "stats.json").write_text(s.to_json() + "\n")
        return s


def run_campaign(config: CampaignConfig) -> CampaignStats:
    return Campaign(config).run()


def replay_audit(program: Program, queue_dir: Union[str, Path]) -> list:
    """Replay a persisted queue in order; returns files that added no new edge."""
    cov = Coverage()
    bad = []
    for f in sorted(Path(queue_dir).iterdir()):
        if not update_coverage(cov, execute(program, f.read_bytes())):
            bad.append(f.name)
    return bad


def default_seed_dir(out: Union[str, Path], seeds: list) -> Path:
    d = Path(out)
    d.mkdir(parents=True, exist_ok=True)
    for i, s in enumerate(seeds):
        (d / f"seed{i:03d}.bin").write_bytes(bytes(s))
    return d


__all__ = [
    "Campaign", "CampaignConfig", "CampaignStats", "ConfigError", "ConstraintRecord",
    "Coverage", "ForcedRunRejected", "QueueEmpty", "SeedEntry", "TargetParseError",
    "load_seeds", "load_target", "replay_audit", "run_campaign", "schedule_next",
    "update_coverage", "default_seed_dir",
]
