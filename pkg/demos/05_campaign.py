"""A short campaign on the checksum fixture, with and without nested solving."""

import tempfile

from mtfuzz import CampaignConfig, SolverConfig, load_fixture, run_campaign

spec = load_fixture("crc_gate")
configs = {"full": SolverConfig(),
           "plain only": SolverConfig(enable_pr=False, enable_ps=False, enable_jo=False)}
for label, solver in configs.items():
    with tempfile.TemporaryDirectory() as out:
        s = run_campaign(CampaignConfig(spec.program(), spec.seeds, out, time_budget=10,
                                        solver=solver))
    print(f"{label:10s} aborts {s.abort_tags}  solved {s.solved}/{s.discovered}  "
          f"by {s.solved_by}  executions {s.executions}")
    for c in s.constraints:
        print(f"    {c['stmt']}:{'t' if c['branch'] else 'f'} {c['status']:9s} "
              f"{c['strategy'] or '':5s} priors {c['priors']} effective {c['effective']}")
