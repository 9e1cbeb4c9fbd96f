import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.metrics import silhouette_score

from dfgnn.data import read_features
from dfgnn.graph import from_edges
from dfgnn.metrics import Report, accuracy, homophily_rate, read_report, silhouette, write_report

from conftest import random_graph


def test_accuracy_examples():
    labels = np.array([0, 1, 1, 0])
    assert accuracy(labels, labels, np.arange(4)) == 1.0
    assert accuracy(1 - labels, labels, np.arange(4)) == 0.0
    assert accuracy([0, 1, 1, 1], labels, np.arange(4)) == 0.75
    assert accuracy([0, 1, 1, 1], labels, np.array([True, True, True, False])) == 1.0
    with pytest.raises(ValueError):
        accuracy(labels, labels, [])


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 1), min_size=1, max_size=30), st.integers(0, 2**31 - 1))
def test_accuracy_flip_complement(labels, seed):
    labels = np.array(labels)
    pred = np.random.default_rng(seed).integers(0, 2, size=len(labels))
    mask = np.arange(len(labels))
    assert accuracy(pred, labels, mask) + accuracy(1 - pred, labels, mask) == pytest.approx(1.0)


def test_homophily_examples():
    n = 5
    complete = from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])
    assert homophily_rate(complete, np.zeros(n, dtype=int)) == 1.0
    star = from_edges(5, [(0, j) for j in range(1, 5)])
    assert homophily_rate(star, [1, 0, 0, 0, 0]) == 0.0


def test_homophily_skips_isolated():
    # node 2 isolated; 0-1 same label
    assert homophily_rate(from_edges(3, [(0, 1)]), [0, 0, 1]) == 1.0
    with pytest.raises(ValueError):
        homophily_rate(from_edges(3, []), [0, 1, 2])


def test_homophily_hand_computed():
    # path 0-1-2 labels a a b: node0 1/1, node1 1/2, node2 0/1
    assert homophily_rate(from_edges(3, [(0, 1), (1, 2)]), [0, 0, 1]) == pytest.approx(0.5)


def test_homophily_permutation_invariant(rng):
    G = random_graph(30, 0.2, rng)
    labels = rng.integers(0, 3, size=30)
    perm = rng.permutation(30)
    inv = np.argsort(perm)
    Gp = from_edges(30, [(inv[i], inv[j]) for i, j in G.edge_list()])
    assert homophily_rate(Gp, labels[perm]) == pytest.approx(homophily_rate(G, labels), abs=1e-15)


def test_silhouette_separated_clusters():
    E = np.array([[0.0], [0.1], [10.0], [10.1]])
    labels = np.array([0, 0, 1, 1])
    # a = 0.1; b is 10 or 9.9 or 10.1 depending on the point
    assert silhouette(E, labels) == pytest.approx(0.99, abs=5e-3)


def test_silhouette_interleaved_is_near_zero(rng):
    # both labels drawn from the same cloud, so a and b agree up to sampling noise
    E = rng.normal(size=(400, 2))
    assert abs(silhouette(E, np.arange(400) % 2)) <= 0.02


def test_silhouette_singleton_scores_zero():
    E = np.array([[0.0], [0.2], [5.0]])
    # the pair has a=0.2, b=5.0 and 4.8; the singleton adds a zero to the mean
    assert silhouette(E, [0, 0, 1]) == pytest.approx(((5.0 - 0.2) / 5.0 + (4.8 - 0.2) / 4.8) / 3)
    with pytest.raises(ValueError):
        silhouette(E, [1, 1, 1])


def test_silhouette_matches_sklearn(rng):
    for _ in range(5):
        E = rng.normal(size=(60, 4))
        labels = rng.integers(0, 4, size=60)
        E[labels == 1] += 2.0
        assert silhouette(E, labels) == pytest.approx(silhouette_score(E, labels), abs=1e-12)


def test_silhouette_mask(rng):
    E = rng.normal(size=(40, 3))
    labels = rng.integers(0, 3, size=40)
    mask = np.arange(0, 40, 2)
    assert silhouette(E, labels, mask) == pytest.approx(silhouette_score(E[mask], labels[mask]))


def test_silhouette_rigid_motion_invariant(rng):
    E = rng.normal(size=(50, 5))
    labels = rng.integers(0, 3, size=50)
    Q, _ = np.linalg.qr(rng.normal(size=(5, 5)))
    moved = E @ Q + rng.normal(size=5) * 100
    assert abs(silhouette(moved, labels) - silhouette(E, labels)) <= 1e-9


def make_report(accs):
    return Report(config={"variant": "full", "lr": 0.01}, accuracies=accs, homophily_rate=0.8123456789,
                  silhouette=0.25, best_epochs=[3] * len(accs), silhouettes=[0.25] * len(accs))


def test_report_std_two_repeats():
    r = make_report([0.8, 0.9])
    assert r.mean == pytest.approx(0.85)
    assert r.std == pytest.approx(0.05)


def test_report_round_trip(tmp_path):
    r = make_report([0.81234567, 0.9])
    path = tmp_path / "report.json"
    write_report(r, path, embeddings=np.ones((3, 2)))
    d = read_report(path)
    assert d["accuracies"] == [0.812346, 0.9]
    assert d["homophily_rate"] == 0.812346
    assert d["config"]["variant"] == "full"
    text = path.read_text()
    assert list(json.loads(text)) == sorted(json.loads(text))
    assert read_features(tmp_path / "report.embeddings.bin").shape == (3, 2)


def test_report_rejects_empty(tmp_path):
    with pytest.raises(ValueError):
        write_report(make_report([]), tmp_path / "r.json")


def test_report_non_finite_to_null(tmp_path):
    r = make_report([0.5])
    r.silhouette = float("nan")
    write_report(r, tmp_path / "r.json")
    assert read_report(tmp_path / "r.json")["silhouette"] is None
