# SPDX-License-Identifier: Apache-2.0
import math
import os
from pathlib import Path

import pytest

import ata

SOURCE = Path(os.environ.get("ATA_SOURCE_DIR", Path(__file__).resolve().parents[2]))
FIXTURES = SOURCE / "fixtures"


def test_difficulty_schedule():
    assert ata.step(5.5, 10) == pytest.approx(5.5 + 3 * math.tanh(4.5 / 4), abs=1e-12)
    assert ata.step(4.2, 5.5) == 4.2
    assert ata.weight(5.5) == 1.0
    d2 = ata.step(5.5, 10)
    assert ata.posterior([(5.5, 10), (d2, 2)]) == pytest.approx(6.697680, abs=1e-5)
    assert ata.converged([(5.5, 5.5), (5.5, 5.5)])
    assert ata.band(7.0) == "hard"
    assert ata.turn_limit(5.5) == 9


def test_judge_aggregate_and_errors():
    assert ata.aggregate([5, 3]) == 7.75
    with pytest.raises(ata.AtaError) as info:
        ata.aggregate([])
    assert info.value.code == "domain-error"


def test_graph_checks():
    graph = {
        "nodes": [{"id": "a", "kind": "dialogue_state", "location": ""},
                  {"id": "b", "kind": "tool_call", "location": ""},
                  {"id": "c", "kind": "dialogue_state", "location": ""}],
        "edges": [{"from": "a", "to": "b", "condition": "go"}],
        "entry_nodes": ["a"],
    }
    result = ata.analyze_graph(graph)
    assert result["unreachable_nodes"] == ["c"]
    assert result["missing_fallbacks"] == ["b"]


def test_homing_moves_towards_the_boundary():
    r = ata.simulate_homing(8.0, rounds=10, epsilon=0.0, seed=3)
    assert len(r["difficulties"]) == 10
    assert abs(r["final_difficulty"] - 8.0) < 1.0


def test_mock_run_end_to_end(tmp_path):
    answers = (FIXTURES / "run1" / "answers.json").read_text()
    import json
    run_id = ata.run({"aut_id": "travel-agent", "seed": 4, "k_max": 2, "max_weaknesses": 3}, tmp_path,
                     mock_llm=FIXTURES / "run1", auts=FIXTURES / "auts.json", answers=json.loads(answers),
                     search_corpus=FIXTURES / "run1" / "corpus.json", run_id="py")
    assert run_id == "py"
    state = ata.load_state(tmp_path, run_id)
    assert state["phase"] == "done"
    assert len(state["weaknesses"]) == 3
    assert sum(len(v) for v in state["scenarios"].values()) <= 6
    assert ata.verify_report(tmp_path, run_id) == []


def test_unknown_agent_is_a_registration_error(tmp_path):
    with pytest.raises(ata.AtaError) as info:
        ata.run({"aut_id": "nobody"}, tmp_path, mock_llm=FIXTURES / "run1")
    assert info.value.code == "registration"
