"""Quorum arithmetic, tamper locality, majority repair, scenario determinism."""

from fractions import Fraction
from pathlib import Path

import pytest

from medledger.errors import NotAuthorized, ScriptError
from medledger.ledger import Role, verify_tree
from medledger.network import (
    Command,
    Network,
    SimConfig,
    parse_script,
    quorum_commits,
    repair_majority,
    run_scenario,
)

from helpers import CATALOG

GOLDEN = Path(__file__).parent / "golden"

ONBOARD = Command("onboard", "registry", Role.AUTHORITY, True, (("code", "FC001"), ("info.name", "Mario")))
WRITE = Command("write", "drb", Role.DOCTOR, True, (("patient", "1"), ("entry", "blood_test:v1")))


def make_net(n=5, **kw) -> Network:
    return Network(SimConfig(node_count=n, **kw), CATALOG)


def test_every_valid_command_commits_with_all_confirmations():
    net = make_net(5)
    proposal = net.propose("n1", ONBOARD)
    assert proposal.committed and proposal.confirmations == 5
    assert proposal.outcome == "ok" and proposal.result == "patient:1"


def test_quorum_examples_with_byzantine_refusers():
    # 2 refusers of 5: 3 yes > 51% commits; 3 refusers: 2 yes rejects
    net = make_net(5, byzantine=frozenset({"n4", "n5"}))
    assert net.propose("n1", ONBOARD).committed
    net = make_net(5, byzantine=frozenset({"n3", "n4", "n5"}))
    proposal = net.propose("n1", ONBOARD)
    assert not proposal.committed and proposal.confirmations == 2
    for node in net.nodes.values():
        assert len(node.replica.main_chain) == 1  # nothing applied anywhere


def test_unlisted_proposer_not_authorized_changes_nothing():
    net = make_net(3)
    with pytest.raises(NotAuthorized):
        net.propose("intruder", ONBOARD)
    assert net.seq == 0
    for node in net.nodes.values():
        assert len(node.replica.main_chain) == 1


def test_quorum_law_exhaustive_against_rational_oracle():
    """Oracle in exact rational arithmetic for N=2..9, every count."""
    for n in range(2, 10):
        for c in range(0, n + 1):
            expected_commit = Fraction(c, n) > Fraction(51, 100)
            assert quorum_commits(c, n) == expected_commit, (c, n)
            expected_repair = Fraction(c, n) >= Fraction(51, 100)
            assert repair_majority(c, n) == expected_repair, (c, n)


def test_quorum_via_propose_matches_oracle():
    for n in range(2, 10):
        for refusers in range(0, n):
            byz = frozenset(f"n{i}" for i in range(n - refusers + 1, n + 1))
            net = Network(SimConfig(node_count=n, byzantine=byz), CATALOG)
            proposal = net.propose("n1", ONBOARD)
            c = n - refusers
            assert proposal.confirmations == c
            assert proposal.committed == (Fraction(c, n) > Fraction(51, 100)), (c, n)


def test_domain_failures_commit_and_replicate_their_audit_logs():
    net = make_net(5)
    net.propose("n1", ONBOARD)
    net.propose("n2", WRITE)
    net.propose("n1", Command("close", "registry", Role.AUTHORITY, True, (("patient", "1"),)))
    late = net.propose("n2", WRITE)
    assert late.committed and late.outcome == "SubchainClosed"
    for node in net.nodes.values():
        assert len(node.replica.red[1]) == 3  # write log, close log, failed attempt
    digests = {node.replica.state_digest() for node in net.nodes.values()}
    assert len(digests) == 1


def test_tamper_is_local_to_one_node():
    net = make_net(5)
    net.propose("n1", ONBOARD)
    net.propose("n2", WRITE)
    before = {nid: net.nodes[nid].replica.snapshot_bytes() for nid in net.approved}
    net.tamper("n3", "yellow", 1, 1, "entry.0.payload", "forged")
    for nid in net.approved:
        snapshot = net.nodes[nid].replica.snapshot_bytes()
        if nid == "n3":
            assert snapshot != before[nid]
            assert verify_tree(net.nodes[nid].replica) != []
        else:
            assert snapshot == before[nid]
            assert verify_tree(net.nodes[nid].replica) == []


def test_mid_chain_tamper_breaks_the_whole_suffix():
    """The violation count covers at least the chain suffix after the edit."""
    net = make_net(3)
    net.propose("n1", ONBOARD)
    for n in range(4):
        net.propose("n2", Command("write", "drb", Role.DOCTOR, True,
                                  (("patient", "1"), ("entry", f"blood_test:v{n}"))))
    net.tamper("n1", "yellow", 1, 2, "entry.0.payload", "forged")
    violations = verify_tree(net.nodes["n1"].replica)
    suffix_length = 4 - 2 + 1  # blocks 2..4 of the tampered chain
    yellow_violations = [v for v in violations if v.chain == "YELLOW"]
    assert len(yellow_violations) >= suffix_length
    assert all(int(v.coord.split(".")[1]) >= 2 for v in yellow_violations)


def test_tamper_missing_block_raises():
    net = make_net(3)
    net.propose("n1", ONBOARD)
    from medledger.errors import NoSuchBlock

    with pytest.raises(NoSuchBlock):
        net.tamper("n1", "yellow", 1, 5, "is_final", "true")


def test_repair_one_tampered_node_of_five():
    net = make_net(5)
    net.propose("n1", ONBOARD)
    net.propose("n2", WRITE)
    net.tamper("n3", "yellow", 1, 1, "is_final", "true")
    report = net.audit_and_repair()
    assert [str(e) for e in report] == ["replaced node=n3 chain=yellow coord=1.1"]
    digests = {node.replica.state_digest() for node in net.nodes.values()}
    assert len(digests) == 1
    assert verify_tree(net.nodes["n3"].replica) == []


def test_repair_two_tampered_nodes_still_majority():
    net = make_net(5)
    net.propose("n1", ONBOARD)
    net.propose("n2", WRITE)
    net.tamper("n3", "yellow", 1, 1, "entry.0.payload", "forged-one-way")
    net.tamper("n5", "yellow", 1, 1, "entry.0.payload", "forged-another")
    report = net.audit_and_repair()
    assert sorted(e.node for e in report) == ["n3", "n5"]
    assert all(e.action == "replaced" for e in report)
    assert len({node.replica.state_digest() for node in net.nodes.values()}) == 1


def test_three_identical_tampers_of_five_are_unrepairable():
    """Documents the honest-majority bound: a stale-hash version held by 60%
    must not be adopted, and the honest 40% is below the threshold."""
    net = make_net(5)
    net.propose("n1", ONBOARD)
    net.propose("n2", WRITE)
    honest = net.nodes["n1"].replica.snapshot_bytes()
    for nid in ("n2", "n3", "n4"):
        net.tamper(nid, "yellow", 1, 1, "entry.0.payload", "same-forgery")
    report = net.audit_and_repair()
    assert [str(e) for e in report] == ["unrepairable node=* chain=yellow coord=1.1"]
    assert net.nodes["n1"].replica.snapshot_bytes() == honest  # honest replicas untouched
    assert net.nodes["n5"].replica.snapshot_bytes() == honest


def test_drop_rate_zero_commits_every_valid_command():
    script = (GOLDEN / "lifecycle.script").read_text()
    transcript = run_scenario(SimConfig(node_count=5, seed=3), script, CATALOG)
    assert transcript.count("COMMIT") == 7
    assert transcript.count("REJECT ") == 0


def test_same_seed_same_transcript_bytes():
    script = (GOLDEN / "lifecycle.script").read_text()
    config = SimConfig(node_count=5, seed=7, drop_rate=0.2)
    assert run_scenario(config, script, CATALOG) == run_scenario(config, script, CATALOG)


def test_different_seed_changes_drop_pattern():
    script = (GOLDEN / "lifecycle.script").read_text()
    a = run_scenario(SimConfig(node_count=5, seed=1, drop_rate=0.4), script, CATALOG)
    b = run_scenario(SimConfig(node_count=5, seed=2, drop_rate=0.4), script, CATALOG)
    assert a != b


def test_golden_lifecycle_transcript():
    script = (GOLDEN / "lifecycle.script").read_text()
    expected = (GOLDEN / "lifecycle_transcript.txt").read_text()
    got = run_scenario(
        SimConfig(node_count=5, seed=7), script, (("blood_test", "Blood test"), ("xray", "X-ray"))
    )
    assert got == expected


def test_lifecycle_end_state_satisfies_tree_invariants():
    script = (GOLDEN / "lifecycle.script").read_text()
    net = Network(SimConfig(node_count=5, seed=7), (("blood_test", "Blood test"), ("xray", "X-ray")))
    for step in parse_script(script):
        from medledger.network import _step_command

        net.propose(step.node, _step_command(step))
    for node in net.nodes.values():
        replica = node.replica
        assert verify_tree(replica) == []
        assert 1 in replica.closed
        assert len(replica.red[1]) > len(replica.yellow[1])


def test_scripted_tamper_and_repair_round_trip():
    script = """
1 n1 onboard actor=reg role=authority valid=1 code=FC001 info.name=Mario
2 n2 write actor=drb role=doctor valid=1 patient=1 entry=blood_test:v1
3 n3 tamper chain=yellow patient=1 index=1 field=entry.0.payload value=forged
4 n1 audit-repair
"""
    transcript = run_scenario(SimConfig(node_count=5, seed=5), script, CATALOG)
    assert "TAMPER tick=3 node=n3 chain=yellow patient=1 index=1 field=entry.0.payload status=ok" in transcript
    assert "REPAIR node=n3 chain=yellow coord=1.1 action=replaced" in transcript
    finals = {line.split("state=")[1] for line in transcript.splitlines() if line.startswith("FINAL")}
    assert len(finals) == 1


def test_heavy_drops_reject_some_commands_deterministically():
    script = (GOLDEN / "lifecycle.script").read_text()
    transcript = run_scenario(SimConfig(node_count=5, seed=13, drop_rate=0.6), script, CATALOG)
    assert "vote=drop" in transcript
    assert "REJECT " in transcript  # a quorum failed somewhere under 60% drops
    # committed-or-rejected accounting still covers every proposal
    assert transcript.count("PROPOSE") == transcript.count("COMMIT") + transcript.count("REJECT ")


def test_script_parsing_errors():
    with pytest.raises(ScriptError):
        parse_script("1 n1 onboard code=X\n1 n2 read patient=1 query=latest")  # tick repeats
    with pytest.raises(ScriptError):
        parse_script("1 n1 frobnicate x=1")
    with pytest.raises(ScriptError):
        parse_script("x n1 onboard code=X")
    with pytest.raises(ScriptError):
        parse_script("1 n1 onboard code")
    assert parse_script("# only a comment\n\n") == []


def test_byzantine_must_be_subset_of_approved():
    with pytest.raises(ValueError):
        Network(SimConfig(node_count=3, byzantine=frozenset({"n9"})), CATALOG)


def test_structurally_malformed_command_is_refused_and_rejected():
    net = make_net(5)
    bogus = Command("write", "drb", Role.DOCTOR, True, (("patient", "not-a-number"),))
    proposal = net.propose("n1", bogus)
    assert not proposal.committed
    assert proposal.confirmations == 1  # only the proposer's implicit vote
