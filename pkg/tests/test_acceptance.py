"""Acceptance gate: one test per shipped guarantee, each with its stated
tolerance and a printed one-line verdict.

Criteria with a runtime budget assert it from a perf counter; everything
here runs on a plain CPU in well under the combined budgets.
"""

import time

import numpy as np
import pytest

from pcup import cli, metrics
from pcup.coarse import GdwaiConfig, GroundTruthGeometryUpsampler, gdwai
from pcup.core import ColoredPointCloud, build_index, knn_batch, random_downsample
from pcup.io import read_ply, write_ply
from pcup.neural.nets import NetworkConfig, aem_forward
from pcup.neural.training import gradient_check, init_params, train
from pcup.partition import Patch, PartitionConfig, extract_training_pair, patch_count
from pcup.pipeline import PipelineConfig, upsample_cloud

from synthdata import color_field, constant_cloud, grid_square, textured_cloud, textured_sphere
from test_metrics import jsd_oracle, p2f_oracle, psnr_oracle


def brute_knn(points: np.ndarray, queries: np.ndarray, k: int):
    """Reference k-NN: full float64 distance matrix, stable ascending sort.

    Equal distances tie-break to the first occurrence, i.e. the smaller
    source index, matching the shipped (distance, index) ordering.
    """
    pts = np.asarray(points, dtype=np.float32).astype(np.float64)
    qs = np.asarray(queries, dtype=np.float32).astype(np.float64)
    d = np.sqrt(((qs[:, None, :] - pts[None, :, :]) ** 2).sum(axis=-1))
    order = np.argsort(d, axis=1, kind="stable")[:, :k]
    return order, np.take_along_axis(d, order, axis=1)


def field_pairs(count: int, points: int, base_seed: int, pcfg: PartitionConfig):
    pairs = []
    for i in range(count):
        cloud = textured_cloud(points, base_seed + i, freq=2.5)
        pairs.append(extract_training_pair(cloud, 0, pcfg, rng=i))
    return pairs


def test_criterion_01_knn_matches_brute_force():
    t0 = time.perf_counter()
    checked = 0
    for i, child in enumerate(np.random.SeedSequence(77).spawn(50)):
        g = np.random.Generator(np.random.PCG64(child))
        n = int(g.integers(50, 5001))
        k = int(g.integers(1, 17))
        if i % 3 == 0:
            # integer lattice: duplicate points and massed distance ties
            pos = g.integers(0, 8, (n, 3)).astype(np.float32)
            queries = np.concatenate([
                pos[g.integers(0, n, 200)],
                g.integers(0, 8, (50, 3)).astype(np.float32) + 0.5,
            ])
        else:
            pos = g.random((n, 3), dtype=np.float32)
            queries = np.concatenate([
                pos[g.integers(0, n, 200)],
                (g.random((50, 3)) * 1.5 - 0.25).astype(np.float32),
            ])
        idx, dist = knn_batch(build_index(pos), queries, k)
        want_idx, want_dist = brute_knn(pos, queries, k)
        assert np.array_equal(idx, want_idx), f"cloud {i}: neighbor indices differ"
        assert np.array_equal(dist, want_dist), f"cloud {i}: distances differ"
        checked += 1
    took = time.perf_counter() - t0
    assert took < 30.0
    print(f"[criterion 1] PASS: {checked}/50 clouds exact, ties included ({took:.1f}s)")


def test_criterion_02_patch_count_worked_value():
    # ceil(3817422 * 3 / 256) = ceil(44735.41) = 44736
    got = patch_count(3_817_422, 3, 256)
    assert got == 44736
    print(f"[criterion 2] PASS: patch_count(3817422, 3, 256) = {got}")


def test_criterion_03_distance_weighted_interpolation():
    # Two sources at distances 1 and 2 from the query: weights 2/3 and 1/3.
    cloud = ColoredPointCloud([[0, 0, 1], [0, 0, 2]], [[0.9, 0, 0], [0, 0.9, 0]])
    patch = Patch(cloud, 0, np.arange(2))
    out = gdwai(np.array([[0, 0, 0]], dtype=np.float32), patch, GdwaiConfig(k1=2))
    assert np.allclose(out, [[0.6, 0.3, 0.0]], atol=1e-6)

    psnrs = {}
    for rate in (4, 8, 16):
        gt = constant_cloud(128 * rate, rate)
        sparse = random_downsample(gt, rate, 1)
        cfg = PipelineConfig(rate=rate, method="gdwai", enhance=False,
                             m=32, c=3.0, k1=2)
        pred = upsample_cloud(sparse, cfg,
                              geometry=GroundTruthGeometryUpsampler(gt.positions),
                              seed=0)
        psnr_y, _ = metrics.attribute_psnr(pred, gt)
        assert psnr_y >= 99.0, f"rate {rate}: constant field came back at {psnr_y} dB"
        psnrs[rate] = psnr_y
    detail = ", ".join(f"R={r} {v:.0f} dB" for r, v in psnrs.items())
    print(f"[criterion 3] PASS: worked example to 1e-6; constant field {detail}")


def test_criterion_04_gradients_match_finite_differences():
    t0 = time.perf_counter()
    errs = {}
    for network_id in ("linear", "mlp", "rdb", "dlai", "aem"):
        errs[network_id] = gradient_check(network_id, rng=0)
        assert errs[network_id] < 1e-3, f"{network_id}: {errs[network_id]:.3e}"
    took = time.perf_counter() - t0
    assert took < 120.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in errs.items())
    print(f"[criterion 4] PASS: worst relative errors {detail} ({took:.1f}s)")


def test_criterion_05_zero_head_enhancer_is_identity():
    cfg = NetworkConfig(k1=2, k2=4, width=8, m=8, rate=2)
    store = init_params(cfg, "gdwai", 123)
    g = np.random.Generator(np.random.PCG64(9))
    coarse = g.random((16, 3), dtype=np.float32)
    dense = g.random((16, 3), dtype=np.float32)
    out = aem_forward(store, coarse, dense, cfg)
    assert out.tobytes() == coarse.tobytes()
    print("[criterion 5] PASS: zero-initialized offset head returns input bit-exactly")


def test_criterion_06_training_halves_attribute_error():
    t0 = time.perf_counter()
    pcfg = PartitionConfig(m=16, c=3.0, rate=4)
    pairs = field_pairs(20, 200, 300, pcfg)
    net = NetworkConfig(k1=2, k2=16, width=16, dlai_channels=(16, 16, 16, 16),
                        rdb_layers=3, rdb_growth=16, m=16, rate=4)
    losses = []
    train(pairs, net, epochs=50, batch=4, lr=1e-3, rng=0, method="dlai",
          on_epoch=lambda _, rep: losses.append(rep.attribute_mae))
    took = time.perf_counter() - t0
    assert len(losses) == 50
    assert losses[-1] < 0.5 * losses[0], f"{losses[0]:.4f} -> {losses[-1]:.4f}"
    assert took < 600.0
    print(f"[criterion 6] PASS: attribute MAE {losses[0]:.4f} -> {losses[-1]:.4f} "
          f"({losses[-1] / losses[0]:.0%}) in {took:.1f}s")


def test_criterion_07_enhancer_helps_on_held_out_cloud():
    deltas = []
    for s in (1, 2, 3):
        pcfg = PartitionConfig(m=16, c=3.0, rate=4)
        pairs = field_pairs(12, 300, 1000 * s, pcfg)
        net = NetworkConfig(k1=2, k2=16, width=16, m=16, rate=4)
        store = train(pairs, net, epochs=60, batch=4, lr=1e-3, rng=s, method="gdwai")

        gt = textured_cloud(1024, 7777 + s, freq=2.5)
        sparse = random_downsample(gt, 4, s)
        geometry = GroundTruthGeometryUpsampler(gt.positions)
        base = dict(rate=4, method="gdwai", m=16, c=3.0, k1=2, k2=16)
        off = upsample_cloud(sparse, PipelineConfig(enhance=False, **base),
                             geometry=geometry, seed=s)
        on = upsample_cloud(sparse, PipelineConfig(enhance=True, **base),
                            geometry=geometry, store=store, net_cfg=net, seed=s)
        deltas.append(metrics.attribute_psnr(on, gt)[0]
                      - metrics.attribute_psnr(off, gt)[0])
    assert all(d >= -0.1 for d in deltas), deltas
    assert sum(d > 0 for d in deltas) >= 2, deltas
    detail = ", ".join(f"{d:+.3f}" for d in deltas)
    print(f"[criterion 7] PASS: enhancer PSNR deltas {detail} dB over 3 seeds")


def test_criterion_08_overlap_improves_attributes():
    gt = textured_cloud(4096, 55, freq=2.5)
    sparse = random_downsample(gt, 4, 0)
    geometry = GroundTruthGeometryUpsampler(gt.positions)
    scores = {}
    for c in (1.0, 3.0):
        cfg = PipelineConfig(rate=4, method="gdwai", enhance=False,
                             m=256, c=c, k1=2)
        pred = upsample_cloud(sparse, cfg, geometry=geometry, seed=0)
        scores[c], _ = metrics.attribute_psnr(pred, gt)
    margin = scores[3.0] - scores[1.0]
    assert margin >= 0.5, scores
    print(f"[criterion 8] PASS: overlap c=3 beats c=1 by {margin:+.2f} dB "
          f"({scores[1.0]:.2f} -> {scores[3.0]:.2f})")


def test_criterion_09_metrics_match_naive_oracles():
    worst = {"cd": 0.0, "hd": 0.0, "jsd": 0.0, "p2f": 0.0, "psnr": 0.0}
    for i in range(20):
        seed_a = np.random.SeedSequence([909, i, 0])
        seed_b = np.random.SeedSequence([909, i, 1])
        g = np.random.Generator(np.random.PCG64(seed_a))
        na, nb = int(g.integers(50, 2001)), int(g.integers(50, 2001))
        make = textured_sphere if i % 2 else textured_cloud
        a = make(na, seed_a, freq=2.0)
        b = make(nb, seed_b, freq=2.0)

        pa = a.positions.astype(np.float64)
        pb = b.positions.astype(np.float64)
        d = np.sqrt(((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=-1))
        nn_ab, nn_ba = d.min(axis=1), d.min(axis=0)
        cd = float((nn_ab ** 2).mean() + (nn_ba ** 2).mean())
        hd = float(max(nn_ab.max(), nn_ba.max()))

        def rel(x, y):
            return abs(x - y) / max(abs(x), abs(y), 1e-12)

        worst["cd"] = max(worst["cd"], rel(metrics.chamfer(pa, pb), cd))
        worst["hd"] = max(worst["hd"], rel(metrics.hausdorff(pa, pb), hd))
        worst["jsd"] = max(worst["jsd"],
                           abs(metrics.jsd(pa, pb) - jsd_oracle(pa, pb, 32)))
        worst["p2f"] = max(worst["p2f"],
                           abs(metrics.p2f(pa, pb) - p2f_oracle(pa, pb, 16)))
        got_y, got_rgb = metrics.attribute_psnr(a, b)
        want_y, want_rgb = psnr_oracle(a, b)
        worst["psnr"] = max(worst["psnr"], abs(got_y - want_y),
                            float(np.max(np.abs(np.array(got_rgb) - np.array(want_rgb)))))
    assert all(v < 1e-6 for v in worst.values()), worst

    # identical clouds: every distance metric exactly zero, PSNR capped
    flat = grid_square(24)
    same = ColoredPointCloud(flat.positions, color_field(flat.positions))
    assert metrics.chamfer(same.positions, same.positions) == 0.0
    assert metrics.hausdorff(same.positions, same.positions) == 0.0
    assert metrics.jsd(same.positions, same.positions) == 0.0
    assert metrics.p2f(same.positions, same.positions) == 0.0
    assert metrics.attribute_psnr(same, same)[0] == 100.0
    detail = ", ".join(f"{k} {v:.1e}" for k, v in worst.items())
    print(f"[criterion 9] PASS: 20-pair oracle gaps {detail}; identical pair exact")


def test_criterion_10_cli_upsample_counts_and_determinism(tmp_path):
    t0 = time.perf_counter()
    src = tmp_path / "gt.ply"
    write_ply(textured_cloud(4096, 42, freq=2.5), src)
    for rate in (4, 8, 12, 16):
        out_a = tmp_path / f"up{rate}a.ply"
        out_b = tmp_path / f"up{rate}b.ply"
        for out in (out_a, out_b):
            rc = cli.main(["upsample", "--input", str(src), "--output", str(out),
                           "--rate", str(rate), "--seed", "0", "--threads", "1"])
            assert rc == 0
        cloud = read_ply(out_a)
        assert cloud.n == 4096 * rate
        assert out_a.read_bytes() == out_b.read_bytes(), f"rate {rate} not deterministic"
    took = time.perf_counter() - t0
    assert took < 300.0
    print(f"[criterion 10] PASS: exact counts and byte-identical reruns "
          f"at R=4,8,12,16 ({took:.0f}s)")


def test_criterion_11_k_sensitivity_sweep_harness(tmp_path):
    src = tmp_path / "gt.ply"
    write_ply(textured_cloud(256, 11, freq=2.5), src)
    shapes = {}
    for param, values, extra in (
        ("k1", "1,2,3,4", []),
        ("k2", "4,8,16,24,32,40", ["--width", "8", "--epochs", "1", "--max-pairs", "2"]),
    ):
        table = tmp_path / f"{param}.tsv"
        rc = cli.main(["sweep", "--input", str(src), "--param", param,
                       "--values", values, "--patch", "16", "--rate", "4",
                       "--out", str(table), "--seed", "0", "--threads", "1"]
                      + extra)
        assert rc == 0
        lines = table.read_text().splitlines()
        assert lines[0] == "param\tvalue\tpsnr_y"
        rows = [line.split("\t") for line in lines[1:]]
        assert [int(r[1]) for r in rows] == [int(v) for v in values.split(",")]
        assert all(r[0] == param and np.isfinite(float(r[2])) for r in rows)
        assert (tmp_path / f"{param}.tsv.png").exists()
        shapes[param] = len(rows)
    print(f"[criterion 11] PASS: sweep tables k1 x{shapes['k1']}, k2 x{shapes['k2']} "
          f"rows with finite PSNR and figures")
