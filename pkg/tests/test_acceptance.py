"""Acceptance criteria, one test per criterion.

Each test appends a PASS/FAIL line to ``ACCEPTANCE_LINES``; the lines are
printed in a summary section at the end of the pytest run.
"""

import json
import logging
import math
import time

import numpy as np
import pytest
from scipy import stats

from conftest import ACCEPTANCE_LINES
from spherepriv.cli import main
from spherepriv.evaluation import (
    attribute_preservation,
    averaging_attack_series,
    compute_eer,
    density_ratio_slack,
    privacy_utility_sweep,
    two_proportion_pvalue,
)
from spherepriv.formats import read_embeddings, write_database, write_embeddings
from spherepriv.geometry import rotate_rows, uniform_sample
from spherepriv.mechanisms import REVERSAL_WARNING, MechanismSpec, avatar_rotation, privatize_batch
from spherepriv.remap import ReferenceSet, fit, neighbor_weights, privatize_remapped
from spherepriv.streams import substream
from spherepriv.synthdata import generate
from spherepriv.vmf import VmfParams, sample_vmf

pytestmark = pytest.mark.slow


def record(number, title, ok, detail):
    ACCEPTANCE_LINES.append(f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}: {detail}")
    assert ok, detail


def test_c01_rotation_exactness():
    start = time.perf_counter()
    worst = 0.0
    rng = substream(101)
    for dim in (2, 16, 512):
        xs = uniform_sample(dim, rng, 10_000)
        zs = rng.standard_normal((10_000, dim))
        for deg in (30, 60, 90, 135, 150, 180):
            theta = math.radians(deg)
            out, bad = rotate_rows(xs, zs, theta)
            assert not bad.any()
            worst = max(worst, float(np.max(np.abs(np.sum(xs * out, axis=1) - math.cos(theta)))))
    elapsed = time.perf_counter() - start
    record(1, "rotation exactness", worst < 1e-9 and elapsed < 5.0,
           f"max |<x,out> - cos theta| = {worst:.2e}, {elapsed:.2f}s")


def test_c02_antipodal_reversibility(caplog):
    rng = substream(102)
    worst = 0.0
    with caplog.at_level(logging.WARNING, logger="spherepriv"):
        spec = MechanismSpec.rotation_degrees(180)
    for dim in (2, 16, 512):
        for x in uniform_sample(dim, rng, 200):
            once = avatar_rotation(x, spec.theta, rng).vector
            twice = avatar_rotation(once, spec.theta, rng).vector
            worst = max(worst, float(np.max(np.abs(twice - x))))
    warned = REVERSAL_WARNING in caplog.text
    record(2, "theta=180 reversibility", worst < 1e-9 and warned,
           f"max |R(R(x)) - x| = {worst:.2e}, warning emitted: {warned}")


def test_c03_vmf_moments():
    start = time.perf_counter()
    rng = substream(103)
    mu3 = uniform_sample(3, rng)
    m3 = float(np.mean(sample_vmf(VmfParams(mu3, 10.0), rng, 10**6) @ mu3))
    want3 = 1.0 / math.tanh(10.0) - 0.1
    mu2 = uniform_sample(2, rng)
    m2 = float(np.mean(sample_vmf(VmfParams(mu2, 2.0), rng, 10**6) @ mu2))
    want2 = 0.6978
    elapsed = time.perf_counter() - start
    ok = abs(m3 - want3) <= 1e-3 and abs(m2 - want2) <= 2e-3 and elapsed < 30.0
    record(3, "VMF moments", ok,
           f"dim3 k=10: {m3:.5f} vs {want3:.5f}; dim2 k=2: {m2:.5f} vs {want2}; {elapsed:.2f}s")


def test_c04_empirical_ldp_bound():
    start = time.perf_counter()
    rng = substream(104)
    violations, worst = 0, -math.inf
    for dim in (3, 512):
        x1, x2, y = (uniform_sample(dim, rng, 10**5) for _ in range(3))
        for eps in (1.0, 50.0):
            res = density_ratio_slack(x1, x2, y, eps)
            violations += res["violations"]
            worst = max(worst, res["max_slack_d2"], res["max_gap_d2_minus_angular"])
    elapsed = time.perf_counter() - start
    record(4, "empirical LDP bound", violations == 0 and elapsed < 10.0,
           f"{violations} violations, max slack {worst:.2e}, {elapsed:.2f}s")


def test_c05_identification_trends():
    start = time.perf_counter()
    db = generate(1000, 2, 512, 1e5, ["attr0"], substream(105))
    eps_grid = (200.0, 100.0, 50.0, 10.0, 1.0)
    specs = [MechanismSpec.ldp(e) for e in eps_grid]
    specs += [MechanismSpec.rotation_degrees(90), MechanismSpec.rotation_degrees(150), MechanismSpec.uniform()]
    rows = privacy_utility_sweep(db, specs, [1], seed=105, draws_per_query=10)
    n = rows[0].num_queries
    hits = [round(r.rank_k[1] * n) for r in rows]
    ldp, rot90, rot150, uni = hits[:5], hits[5], hits[6], hits[7]

    checks = {}
    checks["a"] = all(a > b for a, b in zip(ldp, ldp[1:]))
    p_b = two_proportion_pvalue(ldp[-1], n, uni, n)
    checks["b"] = p_b >= 0.01
    p_c = two_proportion_pvalue(rot90, n, uni, n)
    checks["c"] = p_c >= 0.01
    checks["d"] = rot150 < rot90
    ci = stats.binomtest(uni, n).proportion_ci(0.99)
    checks["e"] = ci.low <= 1e-3 <= ci.high
    elapsed = time.perf_counter() - start
    checks["time"] = elapsed < 120.0
    detail = (
        f"rank-1 hits/{n}: eps{list(map(int, eps_grid))}={ldp}, rot90={rot90}, rot150={rot150}, uniform={uni}; "
        f"p(b)={p_b:.3g}, p(c)={p_c:.3g}, uniform 99% CI=[{ci.low:.4f}, {ci.high:.4f}]; "
        f"failed: {[k for k, v in checks.items() if not v] or 'none'}; {elapsed:.1f}s"
    )
    record(5, "identification trends", all(checks.values()), detail)


def test_c06_eer_anchors():
    rng = substream(106)
    same = compute_eer(rng.normal(size=20_000), rng.normal(size=20_000))[0]
    disjoint = compute_eer(rng.uniform(0.0, 1.0, 500), rng.uniform(1.5, 3.0, 500))[0]
    hand = compute_eer([0.1, 0.3], [0.2, 0.4])[0]
    ok = abs(same - 0.5) <= 0.02 and disjoint == 0.0 and hand == 0.25
    record(6, "EER anchors", ok, f"identical={same:.4f}, disjoint={disjoint}, hand case={hand}")


def test_c07_remap_round_trip():
    r = substream(107)
    basis = np.linalg.qr(r.standard_normal((256, 40)))[0]
    x = (r.standard_normal((128, 40)) * np.linspace(3, 1, 40)) @ basis.T + 5.0 * r.standard_normal(256)
    refs = ReferenceSet(np.arange(128), x)
    remapper = fit(refs, 16, j=1)
    identity = MechanismSpec.identity()
    worst = max(float(np.max(np.abs(privatize_remapped(remapper, e, identity, r) - e))) for e in x)

    wide = fit(refs, 16, j=8)
    sum_err, monotone = 0.0, True
    for y in uniform_sample(16, r, 200):
        idx, w = neighbor_weights(wide, y)
        d = np.arccos(np.clip(wide.reference_projected[idx] @ y, -1.0, 1.0))
        sum_err = max(sum_err, abs(float(w.sum()) - 1.0))
        monotone &= bool(np.all(np.diff(d) >= 0) and np.all(np.diff(w) <= 0))
    ok = worst <= 1e-9 and sum_err <= 1e-12 and monotone
    record(7, "remap round trip", ok,
           f"max reconstruction error {worst:.2e}, max |sum w - 1| = {sum_err:.1e}, weights monotone: {monotone}")


def test_c08_averaging_attack():
    grid = [1, 10, 100, 1000]
    ldp = averaging_attack_series(MechanismSpec.ldp(10.0), 16, grid, 100, seed=108)
    uni = averaging_attack_series(MechanismSpec.uniform(), 16, grid, 100, seed=108)
    cos = [row["cosine_to_true"] for row in ldp]
    ucos = [row["cosine_to_true"] for row in uni]
    ok = all(b >= a for a, b in zip(cos, cos[1:])) and cos[-1] > 0.99 and all(abs(c) <= 0.05 for c in ucos)
    record(8, "averaging attack", ok,
           f"LDP eps=10 cosine {[round(c, 4) for c in cos]}, uniform {[round(c, 4) for c in ucos]}")


def test_c09_attribute_trend():
    db = generate(1000, 2, 512, 1e5, ["attr0", "attr1", "attr2"], substream(109))
    acc = {
        label: float(np.mean(list(attribute_preservation(db, spec, seed=109).values())))
        for label, spec in [
            ("eps200", MechanismSpec.ldp(200.0)),
            ("eps1", MechanismSpec.ldp(1.0)),
            ("uniform", MechanismSpec.uniform()),
        ]
    }
    ok = acc["eps200"] >= acc["eps1"] and abs(acc["uniform"] - 0.5) <= 0.03
    record(9, "attribute preservation", ok, ", ".join(f"{k}={v:.4f}" for k, v in acc.items()))


def test_c10_rotation_throughput():
    xs = uniform_sample(512, substream(110), 10_000)
    spec = MechanismSpec.rotation_degrees(90)
    privatize_batch(spec, xs[:100], seed=1)  # warm up
    start = time.perf_counter()
    single = privatize_batch(spec, xs, seed=110)
    elapsed = time.perf_counter() - start
    parallel = privatize_batch(spec, xs, seed=110, workers=4, chunk_size=700)
    same = single.tobytes() == parallel.tobytes()
    record(10, "rotation throughput", elapsed < 1.0 and same,
           f"10^4 x 512 in {elapsed:.3f}s single-threaded, identical across worker counts: {same}")


def test_c11_serialization_and_replay(tmp_path):
    db = generate(2500, 4, 64, 50.0, ["attr0"], substream(111))
    write_database(tmp_path / "db.jsonl", db)
    ids, vecs, _ = read_embeddings(tmp_path / "db.jsonl")
    write_embeddings(tmp_path / "db.bin", ids, vecs)
    ids2, vecs2, _ = read_embeddings(tmp_path / "db.bin")
    write_embeddings(tmp_path / "again.jsonl", ids2, vecs2)
    ids3, vecs3, _ = read_embeddings(tmp_path / "again.jsonl")
    exact = (
        len(ids) == 10_000
        and vecs3.tobytes() == db.embeddings.tobytes()
        and np.array_equal(ids3, db.ids)
        and vecs2.tobytes() == vecs.tobytes()
    )

    small = tmp_path / "small.jsonl"
    main(["gen", "--identities", "80", "--samples", "3", "--dim", "32", "--within-kappa", "100",
          "--seed", "9", "--out", str(small)])
    commands = {
        "eval": ["eval", "--in", str(small), "--kind", "ldp", "--epsilon", "20", "--k", "1,5"],
        "sweep": ["sweep", "--in", str(small), "--epsilons", "50,5", "--thetas", "90", "--k", "1"],
        "attack": ["attack", "--kind", "ldp", "--epsilon", "10", "--m-grid", "1,10", "--repetitions", "5"],
        "check-dp": ["check-dp", "--epsilon", "5", "--dim", "8", "--trials", "1000"],
    }
    replayed = {}
    for name, argv in commands.items():
        first, second = tmp_path / f"{name}.json", tmp_path / f"{name}.replay.json"
        assert main([*argv, "--out", str(first)]) == 0
        assert main(["replay", str(first), "--out", str(second)]) == 0
        a, b = json.loads(first.read_text()), json.loads(second.read_text())
        replayed[name] = a["results"] == b["results"] and a["seed"] == b["seed"] and a["config"] == b["config"]
    ok = exact and all(replayed.values())
    record(11, "serialization and replay", ok,
           f"10^4-record JSONL/binary round trip bit-exact: {exact}; replay identical: {replayed}")
