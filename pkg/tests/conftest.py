"""Shared fixtures: small hierarchies and the synthetic experiment."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from relmap_ranker.cli import main
from relmap_ranker.kgraph import KnowledgeGraph, ObjectNode
from relmap_ranker.store import ArtifactLayout
from relmap_ranker.synthetic import generate_fixture


def build_graph(edges, nodes=()):
    ids = sorted({n for edge in edges for n in edge[:2]} | set(nodes))
    objects = {oid: ObjectNode(id=oid, label=f"label {oid}") for oid in ids}
    return KnowledgeGraph(objects=objects, edges=[(c, p, "IS-A") for c, p in edges])


def random_hierarchy(rng: np.random.Generator, n: int, attach: float = 0.85) -> KnowledgeGraph:
    """Random forest: node i hangs under a random earlier node with probability ``attach``."""
    ids = [f"n{i:02d}" for i in range(n)]
    edges = [(ids[i], ids[int(rng.integers(0, i))]) for i in range(1, n) if rng.random() < attach]
    return build_graph(edges, nodes=ids)


@pytest.fixture
def chain_graph():
    # a <- b <- c
    return build_graph([("b", "a"), ("c", "b")])


@pytest.fixture(scope="session")
def synthetic_fixture(tmp_path_factory):
    return generate_fixture(tmp_path_factory.mktemp("fixture"), seed=42)


@pytest.fixture(scope="session")
def synthetic_run(synthetic_fixture, tmp_path_factory) -> ArtifactLayout:
    """Full pipeline over the synthetic experiment, run once per session."""
    output = Path(tmp_path_factory.mktemp("run"))
    main(["run", "--config", str(synthetic_fixture.config), "--output-dir", str(output)])
    return ArtifactLayout(output)


@pytest.fixture(scope="session")
def seeded_run(synthetic_fixture, synthetic_run, tmp_path_factory):
    """``seeded_run(seed)`` -> (fixture paths, layout) of a full pipeline run; each seed runs once."""
    runs = {42: (synthetic_fixture, synthetic_run)}

    def get(seed: int):
        if seed not in runs:
            fixture = generate_fixture(tmp_path_factory.mktemp(f"fixture-{seed}"), seed=seed)
            output = Path(tmp_path_factory.mktemp(f"run-{seed}"))
            main(["run", "--config", str(fixture.config), "--output-dir", str(output)])
            runs[seed] = (fixture, ArtifactLayout(output))
        return runs[seed]

    return get
