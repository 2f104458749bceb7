import json

import pytest

from mtfuzz.bench import load_fixture
from mtfuzz.fuzz import (Campaign, CampaignConfig, ConfigError, Coverage, ForcedRunRejected,
                         QueueEmpty, TargetParseError, load_seeds, load_target, replay_audit,
                         run_campaign, schedule_next, update_coverage)
from mtfuzz.interp import ForcePlan, execute
from mtfuzz.ir import StmtId
from mtfuzz.solver import ConstraintTarget, SolverConfig

from conftest import pack3

STATS_KEYS = {"executions", "discovered", "solved", "solved_by", "unsolved", "vanished",
              "implicit_detections", "aborts", "abort_tags", "seeds", "crashes", "coverage",
              "elapsed", "stopped_by", "constraints"}


def campaign(name, tmp_path=None, seeds=None, **kw):
    spec = load_fixture(name)
    kw.setdefault("time_budget", 30)
    return run_campaign(CampaignConfig(spec.program(), seeds or spec.seeds,
                                       tmp_path, **kw))


def status_of(stats, stmt, branch):
    return stats.record_for(stmt, branch)["status"]


# -- coverage and scheduling


def test_update_coverage_reports_new_edges_once(nested_foo):
    cov = Coverage()
    r = execute(nested_foo, pack3(1, 1, 1111))
    new = update_coverage(cov, r)
    assert len(new) == 5 and len(cov) == 5
    assert update_coverage(cov, r) == []
    assert (StmtId(1, 0), True) in cov


def test_forced_runs_are_rejected(nested_foo):
    r = execute(nested_foo, pack3(1, 1, 1111), ForcePlan.listed({(StmtId(1, 0), 0): False}))
    with pytest.raises(ForcedRunRejected):
        update_coverage(Coverage(), r)


def _t(stmt, desired, attempts, seq):
    t = ConstraintTarget(StmtId(0, stmt), 0, desired, b"", None, discovered=seq)
    t.attempts["solve"] = attempts
    return t


def test_schedule_prefers_fewest_attempts_then_oldest():
    q = [_t(0, True, 1, 1), _t(1, True, 0, 3), _t(2, True, 0, 2)]
    order = [schedule_next(q, Coverage()).stmt.idx for _ in range(3)]
    assert order == [2, 1, 0]
    with pytest.raises(QueueEmpty):
        schedule_next(q, Coverage())


def test_schedule_drops_covered_targets():
    q = [_t(0, True, 0, 1), _t(1, False, 0, 2)]
    dropped = []
    got = schedule_next(q, Coverage({(StmtId(0, 0), True)}), dropped)
    assert got.stmt.idx == 1 and [d.stmt.idx for d in dropped] == [0] and q == []


# -- campaigns


def test_nested_foo_campaign(tmp_path):
    s = campaign("nested_foo", tmp_path, seeds=[pack3(1, 1, 0)])
    assert s.stopped_by == "queue-exhausted"
    assert (s.discovered, s.solved, s.unsolved, s.vanished) == (5, 4, 1, 0)
    assert s.solved_by == {"plain": 3, "pr": 0, "ps": 1, "jo": 0}
    assert s.record_for("1:5", True)["strategy"] == "ps"
    assert s.record_for("1:5", True)["effective"] == 2
    assert status_of(s, "1:3", True) == "unsolved"
    assert s.coverage == 9
    assert replay_audit(load_fixture("nested_foo").program(), tmp_path / "queue") == []


def test_crc_campaign_persists_crash(tmp_path):
    s = campaign("crc_gate", tmp_path)
    assert s.abort_tags == ["unit"] and s.crashes == 1
    crash = (tmp_path / "crashes" / "000000.bin").read_bytes()
    p = load_fixture("crc_gate").program()
    r = execute(p, crash)
    assert (r.status.value, r.detail) == ("aborted", "unit")
    assert s.record_for("1:4", False)["strategy"] == "ps"


def test_plain_only_crc_campaign_misses_crash():
    s = campaign("crc_gate", solver=SolverConfig(enable_pr=False, enable_ps=False,
                                                 enable_jo=False, max_execs=2000))
    assert s.aborts == 0
    assert [s.solved_by[k] for k in ("pr", "ps", "jo")] == [0, 0, 0]


def test_unsat_campaign_terminates(tmp_path):
    s = campaign("unsat_alpha", tmp_path,
                 solver=SolverConfig(budget_plain=0.3, budget_pr=0.3, budget_ps=0.5,
                                     budget_jo=0.5))
    rec = s.record_for("2:1", True)
    assert rec["status"] == "unsolved" and rec["attempts"] == 2
    assert s.stopped_by == "queue-exhausted"


def test_hidden_guard_campaign_reaches_abort():
    s = campaign("implicit_k")
    assert s.abort_tags == ["deep"]
    rec = s.record_for("2:6", True)
    assert (rec["status"], rec["strategy"], rec["effective"], rec["implicit"]) == \
        ("solved", "ps", 0, 2)
    assert s.implicit_detections == 1


def test_stats_are_consistent_and_written(tmp_path):
    s = campaign("unsat_alpha", tmp_path)
    on_disk = json.loads((tmp_path / "stats.json").read_text())
    assert set(on_disk) == STATS_KEYS
    assert on_disk["constraints"] == s.constraints
    statuses = [c["status"] for c in s.constraints]
    assert s.discovered == len(s.constraints)
    assert s.solved == statuses.count("solved") == sum(s.solved_by.values())
    assert s.unsolved == statuses.count("unsolved")
    assert s.vanished == statuses.count("vanished")
    assert s.seeds == len(list((tmp_path / "queue").iterdir()))


def test_queue_files_each_add_coverage(tmp_path):
    campaign("implicit_k", tmp_path)
    assert replay_audit(load_fixture("implicit_k").program(), tmp_path / "queue") == []


def test_campaign_is_deterministic_under_execution_cap():
    def run():
        d = campaign("nested_foo", seeds=[pack3(1, 1, 0)], max_execs=600, rng_seed=3).to_dict()
        d.pop("elapsed")
        return d

    assert run() == run()


def test_execution_cap_stops_campaign():
    s = campaign("unsat_alpha", max_execs=50)
    assert s.stopped_by == "executions"


def test_two_workers():
    s = campaign("crc_gate", workers=2)
    assert s.abort_tags == ["unit"]
    assert s.stopped_by == "queue-exhausted"


def test_seeds_from_directory(tmp_path):
    (tmp_path / "a.bin").write_bytes(b"\x01")
    (tmp_path / "b.bin").write_bytes(b"\x02")
    assert load_seeds(tmp_path) == [b"\x01", b"\x02"]


@pytest.mark.parametrize("kw", [dict(time_budget=0), dict(workers=0)])
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        Campaign(CampaignConfig(load_fixture("nested_foo").program(), [b"\x00" * 12], **kw))


def test_bad_inputs(tmp_path):
    with pytest.raises(ConfigError):
        load_seeds(tmp_path / "missing")
    with pytest.raises(ConfigError):
        load_seeds([])
    with pytest.raises(ConfigError):
        load_target(tmp_path / "missing.mtt")
    bad = tmp_path / "bad.mtt"
    bad.write_text("fn main( {")
    with pytest.raises(TargetParseError):
        load_target(bad)
