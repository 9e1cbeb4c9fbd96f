"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

The synthetic contrast, ablation and depth criteria train many models and take
several minutes. Criteria that need a converted Cora directory read it from
``DFGNN_CORA_DIR`` and are skipped when it is unset.
"""
import os
import time
from dataclasses import replace

import numpy as np
import pytest

from dfgnn.bench import BENCH, depth_sweep, variant_accuracy
from dfgnn.cli import main, run_gradcheck
from dfgnn.data import gen_sbm, load_dataset
from dfgnn.graph import build_operators
from dfgnn.metrics import homophily_rate
from dfgnn.model import ModelConfig, init_params, iterate
from dfgnn.prox import prox_nuclear, prox_objective, prox_oracle, soft_threshold
from dfgnn.trainer import TrainConfig, run_experiment

from conftest import random_graph, record

CORA_DIR = os.environ.get("DFGNN_CORA_DIR")
HET, HOM = BENCH.heterophilic, BENCH.homophilic


def test_criterion_1_prox_oracle():
    start = time.perf_counter()
    V = np.random.default_rng(11).normal(size=(50, 5, 3))
    worst = -np.inf
    for lam in (0.1, 0.4, 1.0):
        for norm, op in (("nuclear", prox_nuclear), ("l1", soft_threshold)):
            oracle = prox_oracle(V, lam, norm)
            for k in range(len(V)):
                gap = prox_objective(op(V[k], lam), V[k], lam, norm) - \
                    prox_objective(oracle[k], V[k], lam, norm)
                worst = max(worst, gap)
    seconds = time.perf_counter() - start
    ok = worst <= 1e-6 and seconds < 60
    record(1, ok, f"max objective excess over oracle {worst:.2e} (<= 1e-6), {seconds:.1f} s (< 60)")
    assert ok


def test_criterion_2_gradcheck():
    start = time.perf_counter()
    err = run_gradcheck(0)
    seconds = time.perf_counter() - start
    ok = err <= 1e-3 and seconds < 30
    record(2, ok, f"max relative error {err:.2e} (<= 1e-3), {seconds:.1f} s (< 30)")
    assert ok


def test_criterion_3_filter_response():
    rng = np.random.default_rng(21)
    worst = 0.0
    for _ in range(10):
        ops = build_operators(random_graph(30, 0.15, rng))
        A, L = ops.adj_norm.to_dense(), ops.lap_norm.to_dense()
        lam, U = np.linalg.eigh(L)
        worst = max(worst, np.linalg.norm(A @ U - U * (1 - lam), axis=0).max())
    ok = worst <= 1e-8
    record(3, ok, f"max ||A u - (1 - lambda) u|| {worst:.2e} (<= 1e-8)")
    assert ok


def _dense_linear_stationary(A, L, Xh, a1, a2):
    # block system for the three linear-mode stationarity conditions
    n = A.shape[0]
    I = np.eye(n)
    M = np.block([
        [I + a1 * A @ A + a2 * L @ L, -a1 * A, -a2 * L],
        [-A, 2 * I - A, np.zeros((n, n))],
        [-L, np.zeros((n, n)), I + A],
    ])
    sol = np.linalg.solve(M, np.vstack([Xh, np.zeros_like(Xh), np.zeros_like(Xh)]))
    return sol[:n], sol[n:2 * n], sol[2 * n:]


def test_criterion_4_linear_fixed_point():
    rng = np.random.default_rng(31)
    worst = 0.0
    h = 3
    for n in range(2, 11):
        ops = build_operators(random_graph(n, 0.5, rng))
        p = init_params(h, h, 2, seed=n)
        p.W_F = np.eye(h)
        a1, a2, _, _ = p.alphas()
        Xh = rng.normal(size=(n, h))
        fixed = _dense_linear_stationary(ops.adj_norm.to_dense(), ops.lap_norm.to_dense(), Xh, a1, a2)
        step = iterate(*fixed, Xh, p, ops, config=ModelConfig(hidden_dim=h, linear=True))
        worst = max(worst, max(np.abs(s - f).max() for s, f in zip(step, fixed)))
    ok = worst <= 1e-8
    record(4, ok, f"max update residual at the dense stationary point {worst:.2e} (<= 1e-8)")
    assert ok


def _acc(h, variant):
    return variant_accuracy(h, variant)[0]


def test_criterion_5_contrast():
    runs = {(h, v): variant_accuracy(h, v) for h in (HOM, HET) for v in ("mlp", "gcn", "full")}
    seconds = sum(r[2] for r in runs.values())
    m = {k: r[0] for k, r in runs.items()}
    checks = {
        f"h={HOM} full {m[HOM, 'full']:.3f} >= 0.85": m[HOM, "full"] >= 0.85,
        f"h={HOM} full >= gcn {m[HOM, 'gcn']:.3f} - 0.01": m[HOM, "full"] >= m[HOM, "gcn"] - 0.01,
        f"h={HET} full {m[HET, 'full']:.3f} >= gcn {m[HET, 'gcn']:.3f} + 0.05":
            m[HET, "full"] >= m[HET, "gcn"] + 0.05,
        f"{seconds:.0f} s < 600": seconds < 600,
    }
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record(5, ok, f"mlp at h={HET} {m[HET, 'mlp']:.3f}; " + "; ".join(checks)
           + (f" | failing: {failed}" if failed else ""))
    assert ok, failed


def test_criterion_6_ablation_ordering():
    checks = {
        f"h={HET} full {_acc(HET, 'full'):.3f} >= no-high {_acc(HET, 'no-high'):.3f}":
            _acc(HET, "full") >= _acc(HET, "no-high"),
        f"h={HOM} full {_acc(HOM, 'full'):.3f} >= no-low {_acc(HOM, 'no-low'):.3f}":
            _acc(HOM, "full") >= _acc(HOM, "no-low"),
    }
    for h in (HET, HOM):
        checks[f"h={h} full {_acc(h, 'full'):.3f} >= no-constraints {_acc(h, 'no-constraints'):.3f}"] = \
            _acc(h, "full") >= _acc(h, "no-constraints")
    ok = all(checks.values())
    failed = [k for k, v in checks.items() if not v]
    record(6, ok, "; ".join(checks) + (f" | failing: {failed}" if failed else ""))
    assert ok, failed


def test_criterion_7_depth_sweep():
    rows, seconds = depth_sweep((2, 4, 8, 16, 32), ("gcn", "full"))
    gcn = {d: m for d, v, m, _ in rows if v == "gcn"}
    full = {d: m for d, v, m, _ in rows if v == "full"}
    drop = max(gcn.values()) - gcn[32]
    spread = max(full.values()) - min(full.values())
    ok = drop >= 0.10 and spread <= 0.03 and seconds < 900
    fmt = lambda d: " ".join(f"{k}:{v:.3f}" for k, v in sorted(d.items()))  # noqa: E731
    record(7, ok, f"gcn [{fmt(gcn)}] drop at 32 {drop:.3f} (>= 0.10); dfgnn [{fmt(full)}] "
                  f"spread {spread:.3f} (<= 0.03); {seconds:.0f} s (< 900)")
    assert ok


@pytest.fixture(scope="module")
def cora():
    if not CORA_DIR:
        return None
    return load_dataset(CORA_DIR)


def test_criterion_8_cora(cora):
    if cora is None:
        record(8, None, "DFGNN_CORA_DIR not set")
        pytest.skip("DFGNN_CORA_DIR not set")
    ops = build_operators(cora.graph)
    base = TrainConfig(repeats=10, hidden_dim=64, dropout=0.5, weight_decay=5e-4)
    gcn = run_experiment(cora, replace(base, variant="gcn"), ops).mean
    full = run_experiment(cora, replace(base, variant="full"), ops).mean
    ok = abs(gcn - 0.8577) <= 0.02 and full >= 0.88
    record(8, ok, f"gcn {gcn:.4f} (0.8577 +- 0.02); dfgnn {full:.4f} (>= 0.88, stretch 0.9233)")
    assert ok


def _outputs(root):
    return {p.relative_to(root).as_posix(): p.read_bytes()
            for p in sorted(root.rglob("*")) if p.is_file() and p.name != "timing.json"}


def test_criterion_9_determinism(tmp_path, capsys):
    data = tmp_path / "data"
    common = ["--epochs", "10", "--patience", "4", "--hidden-dim", "8", "--K", "2", "--repeats", "2",
              "--dropout", "0.3"]
    commands = {
        "gen-synth": lambda o: ["gen-synth", "--nodes", "150", "--classes", "3", "--homophily", "0.3",
                                "--feat-dim", "6", "--out", str(o)],
        "stats": lambda o: ["stats", "--data", str(data)],
        "train": lambda o: ["train", "--data", str(data), "--out", str(o), "--embeddings"] + common,
        "sweep-depth": lambda o: ["sweep-depth", "--data", str(data), "--out", str(o), "--depths", "2,4",
                                  "--variants", "gcn,full"] + common,
        "gradcheck": lambda o: ["gradcheck"],
    }
    assert main(commands["gen-synth"](data)) == 0
    differing = []
    for name, argv in commands.items():
        runs = []
        for k in range(2):
            out = tmp_path / f"{name}{k}"
            capsys.readouterr()
            code = main(argv(out))
            files = _outputs(out) if out.exists() else {}
            runs.append((code, capsys.readouterr().out.replace(str(out), "OUT"), files))
        if runs[0] != runs[1] or runs[0][0] != 0:
            differing.append(name)
    ok = not differing
    record(9, ok, f"{len(commands)} commands rerun byte-identical"
           + (f" | differing: {differing}" if differing else ""))
    assert ok, differing


def test_criterion_10_homophily(cora):
    hs = [0.0, 0.25, 0.5, 0.75, 1.0]
    monotone = []
    for seed in range(3):
        measured = [homophily_rate(ds.graph, ds.labels)
                    for ds in (gen_sbm(2000, 5, h, 10, 2, 0.1, seed=seed) for h in hs)]
        monotone.append(bool(np.all(np.diff(measured) >= 0)))
    detail = f"gen_sbm HR monotone on {sum(monotone)}/3 seeds"
    ok = all(monotone)
    if cora is None:
        detail += "; Cora part skipped (DFGNN_CORA_DIR not set)"
    else:
        hr = homophily_rate(cora.graph, cora.labels)
        ok = ok and abs(hr - 0.81) <= 0.02
        detail += f"; Cora HR {hr:.4f} (0.81 +- 0.02)"
    record(10, ok, detail)
    assert ok
