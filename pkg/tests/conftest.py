import numpy as np
import pytest

from dsdock.molgraph import FeaturizedGraph

_CRITERIA: dict[int, list[tuple[str, str]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        _CRITERIA.setdefault(marker.args[0], []).append((item.name, report.outcome))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        results = _CRITERIA[n]
        verdict = "PASS" if all(o == "passed" for _, o in results) else "FAIL"
        detail = ", ".join(f"{name}={o}" for name, o in results)
        terminalreporter.write_line(f"criterion {n:2d}: {verdict}  ({detail})")


def tiny_graph(num_nodes: int, edges, relation: int = 0) -> FeaturizedGraph:
    """Hand-built graph with given directed (source, target) edges and zero features."""
    edges = np.asarray(edges, dtype=np.int64).reshape(-1, 2)
    return FeaturizedGraph(
        node_features=np.zeros((num_nodes, 1)),
        edge_index=edges,
        edge_relation=np.full(edges.shape[0], relation, dtype=np.int64),
        graph_segment=np.zeros(num_nodes, dtype=np.int64),
    )
