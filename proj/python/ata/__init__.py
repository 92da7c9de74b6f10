# SPDX-License-Identifier: Apache-2.0
"""Python access to the adversarial testing harness.

The numeric core (difficulty schedule, judge aggregation, graph checks) is
exposed directly. ``run`` drives a whole pipeline with scripted interview
answers and every weakness approved, which is what offline experiments need.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Any, Iterable, Optional

from ._core import (  # noqa: F401
    DEFAULT_EPSILON,
    INITIAL_DIFFICULTY,
    AtaError,
    aggregate,
    band,
    converged,
    posterior,
    step,
    turn_limit,
    verify_report,
    weight,
)
from . import _core

__all__ = [
    "AtaError",
    "DEFAULT_EPSILON",
    "INITIAL_DIFFICULTY",
    "aggregate",
    "analyze_graph",
    "band",
    "converged",
    "load_state",
    "posterior",
    "run",
    "simulate_homing",
    "step",
    "turn_limit",
    "verify_report",
    "weight",
]

PathLike = os.PathLike | str


def analyze_graph(graph: dict[str, Any]) -> dict[str, Any]:
    """Unreachable nodes, tool calls without a fallback, and finding lines."""
    return json.loads(_core._graph_checks(json.dumps(graph)))


def simulate_homing(boundary: float, *, noise: float = 0.5, rounds: int = 3,
                    epsilon: float = DEFAULT_EPSILON, seed: int = 0) -> dict[str, Any]:
    """One weakness thread against a boundary agent, all on mock backends."""
    return json.loads(_core._simulate_homing(boundary, noise, rounds, epsilon, seed))


def run(config: dict[str, Any], runs_dir: PathLike, *, mock_llm: Optional[PathLike] = None,
        backend_config: Optional[PathLike] = None, auts: Optional[PathLike] = None,
        answers: Iterable[str] = (), search_corpus: Optional[PathLike] = None,
        run_id: str = "") -> str:
    """Runs the pipeline to a report and returns the run id."""
    def opt(p: Optional[PathLike]) -> Optional[Path]:
        return None if p is None else Path(p)

    return _core._run(json.dumps(config), Path(runs_dir), opt(mock_llm), opt(backend_config), opt(auts),
                      list(answers), opt(search_corpus), run_id)


def load_state(runs_dir: PathLike, run_id: str) -> dict[str, Any]:
    """The persisted state document of a run."""
    return json.loads(_core._load_state(Path(runs_dir), run_id))

