"""Python front end for the self-labeling toolkit core."""

import json
import os

from . import _core
from ._core import (
    DomainError,
    GraphError,
    PlanError,
    QuotaError,
    categorize_effect,
    closed_form_example,
    cost_sweep,
    infer_interaction_time,
    solve_t_compute_threshold,
)

__all__ = [
    "DomainError",
    "GraphError",
    "PlanError",
    "QuotaError",
    "build_plan",
    "categorize_effect",
    "closed_form_example",
    "cost_sweep",
    "generate_dataset",
    "infer_interaction_time",
    "run_experiment",
    "sampling_bounds",
    "simulate_episode",
    "solve_t_compute_threshold",
    "y2_learned",
]


def _text(doc):
    if doc is None:
        return ""
    return doc if isinstance(doc, str) else json.dumps(doc)


def y2_learned(method, x, x2, y1, xi_t=1.0, xi_e=1.0, system=None):
    return _core.y2_learned(method, x, x2, y1, xi_t, xi_e, _text(system))


def sampling_bounds(x1, x2, y1, epsilon, system=None):
    return _core.sampling_bounds(x1, x2, y1, epsilon, _text(system))


def build_plan(graph, cause, effect):
    """Graph as a dict (or JSON text) -> plan dict."""
    return json.loads(_core.plan_json(_text(graph), cause, effect))


def simulate_episode(seed, config=None, threshold=None):
    return json.loads(_core.episode_json(_text(config), seed, threshold))


def generate_dataset(out_dir, counts, config=None, threshold=None, jobs=1):
    """Writes dataset.csv and dataset.json into out_dir; returns the manifest."""
    os.makedirs(out_dir, exist_ok=True)
    csv_path = os.path.join(out_dir, "dataset.csv")
    manifest_path = os.path.join(out_dir, "dataset.json")
    return json.loads(
        _core.generate_dataset(_text(config), list(counts), csv_path, manifest_path, threshold, jobs)
    )


def run_experiment(spec, base_dir="", jobs=1):
    return json.loads(_core.run_experiment(_text(spec), base_dir, jobs))
