"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v``; the verdict lines are written
straight to the terminal even when output capture is on.
"""

import os
import time

import numpy as np
import pytest

from ole import data as D
from ole.gradcheck import check_network, check_nuclear, check_ole, check_orthogonal_optimum
from ole.metrics import fpr_at_known_accuracy
from ole.ole_loss import FeatureBatch, ole_forward
from ole.presets import SWEEP_LAMBDAS, preset
from ole.training import best_of_repeats, cmd_sweep_lambda, cmd_train, evaluate, load_splits, train_run


@pytest.fixture
def verdict(capsys):
    def emit(number, passed, detail):
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] criterion {number}: {detail}")
        assert passed, detail

    return emit


@pytest.fixture(scope="module")
def geometry_runs():
    """Best-of-5 OLE-only and softmax-only models on the 3-blob task."""
    t0 = time.perf_counter()
    out = {}
    for mode in ("ole", "softmax"):
        cfg = preset("geometry", mode=mode, repeats=5)
        splits = load_splits(cfg)
        best, runs = best_of_repeats(cfg, splits.train)
        acc, report, _ = evaluate(cfg, best.params, best.reference, splits)
        out[mode] = dict(best=best, runs=runs, report=report, acc=acc)
    out["seconds"] = time.perf_counter() - t0
    return out


def test_criterion_01_nuclear_gradient(verdict):
    r = check_nuclear(seed=0, trials=100)
    verdict(1, r.passed and r.seconds < 10, r.line())


def test_criterion_02_ole_gradient(verdict):
    r = check_ole(seed=0, trials=100)
    verdict(2, r.passed and r.seconds < 30, r.line())


def test_criterion_03_orthogonal_optimum(verdict):
    r = check_orthogonal_optimum(seed=0, trials=50)
    verdict(3, r.passed, r.line())


def test_criterion_04_non_negative(verdict):
    rng = np.random.default_rng(2024)
    worst = np.inf
    for _ in range(1000):
        D_, N, C = int(rng.integers(2, 65)), int(rng.integers(2, 129)), int(rng.integers(2, 11))
        X = rng.standard_normal((D_, N)) * 10 ** rng.uniform(-3, 2)
        worst = min(worst, ole_forward(FeatureBatch(X, rng.integers(0, C, N), C)))
    verdict(4, worst >= -1e-9, f"min loss over 1000 batches {worst:.3e}")


def test_criterion_05_network_gradient(verdict):
    r = check_network(seed=0, trials=20, lams=(0.0, 0.25))
    verdict(5, r.passed, r.line())


def test_criterion_06_embedding_geometry(verdict, geometry_runs):
    ole, soft = geometry_runs["ole"]["report"], geometry_runs["softmax"]["report"]
    gap = ole.mean_inter_angle - soft.mean_inter_angle
    ok = (
        ole.mean_inter_angle >= 80
        and ole.mean_intra_angle <= 10
        and ole.knn_accuracy >= 0.95
        and gap >= 15
        and geometry_runs["seconds"] < 300
    )
    detail = (
        f"OLE inter {ole.mean_inter_angle:.1f} deg, intra {ole.mean_intra_angle:.2f} deg, 1-NN {ole.knn_accuracy:.3f}; "
        f"softmax inter {soft.mean_inter_angle:.1f} deg (gap {gap:.1f}); {geometry_runs['seconds']:.0f}s"
    )
    verdict(6, ok, detail)


def test_criterion_07_spectrum(verdict, geometry_runs):
    ole, soft = geometry_runs["ole"]["report"], geometry_runs["softmax"]["report"]
    s4 = ole.spectrum[3]
    ok = ole.energy_top_C > soft.energy_top_C and s4 <= 0.1
    verdict(7, ok, f"energy_top_3 OLE {ole.energy_top_C:.4f} vs softmax {soft.energy_top_C:.4f}; OLE sigma_4/sigma_1 {s4:.4f}")


def test_criterion_08_loss_curve(verdict, geometry_runs):
    ratios = [r.lo_curve[-1] / r.lo_curve[0] for r in geometry_runs["ole"]["runs"]]
    good = sum(r < 0.2 for r in ratios)
    verdict(8, good >= 4, f"{good}/5 seeds with final/initial L_o < 0.2 (ratios {', '.join(f'{r:.3g}' for r in ratios)})")


def test_criterion_09_lambda_sweep(verdict, tmp_path):
    cfg = preset("geometry", mode="softmax+ole", repeats=5)
    rows_a, best_a = cmd_sweep_lambda(cfg, SWEEP_LAMBDAS, tmp_path / "a")
    rows_b, best_b = cmd_sweep_lambda(cfg, SWEEP_LAMBDAS, tmp_path / "b")
    same_bytes = (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()
    table = D.read_table(tmp_path / "a" / "sweep.csv")
    well_formed = list(table) == ["lambda", "mean_acc", "std_acc"] and np.allclose(table["lambda"], SWEEP_LAMBDAS)
    well_formed &= bool(np.all((table["mean_acc"] >= 0) & (table["mean_acc"] <= 1) & (table["std_acc"] >= 0)))

    soft = cfg.replace(mode="softmax")
    fit, val = D.train_val_split(load_splits(soft).train, soft.seed, soft.val_fraction)
    baseline = float(np.mean([train_run(soft, fit, val, soft.seed + r).val_acc for r in range(5)]))
    diff = abs(rows_a[0].mean_acc - baseline)
    ok = same_bytes and best_a == best_b and well_formed and diff <= 1e-12
    detail = (
        f"deterministic={same_bytes}, well-formed={well_formed}, best lambda {best_a:g}; "
        f"lambda=0 row {rows_a[0].mean_acc:.6f} vs softmax {baseline:.6f} (|diff| {diff:.1e})"
    )
    verdict(9, ok, detail)


def test_criterion_10_novelty(verdict):
    cfg = preset("novelty")
    splits = load_splits(cfg)
    fit, val = D.train_val_split(splits.train, cfg.seed, cfg.val_fraction)
    fprs = {}
    for mode in ("softmax+ole", "softmax"):
        run_cfg = cfg.replace(mode=mode)
        fprs[mode] = []
        for seed in range(5):
            rec = train_run(run_cfg, fit, val, seed)
            _, report, _ = evaluate(run_cfg, rec.params, fit, splits)
            fprs[mode].append(fpr_at_known_accuracy(report.novelty_curve, 0.95))
    pairs = list(zip(fprs["softmax+ole"], fprs["softmax"]))
    wins = sum(a is not None and b is not None and a < b for a, b in pairs)
    fmt = lambda v: "n/a" if v is None else f"{v:.2f}"
    detail = f"OLE lower FPR in {wins}/5 seeds (OLE vs softmax: {'; '.join(f'{fmt(a)} vs {fmt(b)}' for a, b in pairs)})"
    verdict(10, wins >= 4, detail)


IDX_IMAGES = bytes.fromhex("00000803" "00000002" "00000002" "00000002") + bytes([0, 255, 51, 102, 255, 0, 0, 204])
IDX_LABELS = bytes.fromhex("00000801" "00000002") + bytes([7, 3])


def _idx_fixtures_pass(tmp_path):
    img, lab = tmp_path / "img", tmp_path / "lab"
    img.write_bytes(IDX_IMAGES)
    lab.write_bytes(IDX_LABELS)
    ds = D.load_idx(img, lab)
    ok = np.array_equal(ds.samples.T, [[0.0, 1.0, 0.2, 0.4], [1.0, 0.0, 0.0, 0.8]]) and list(ds.labels) == [7, 3]
    D.save_idx(np.round(ds.samples.T * 255).astype(np.uint8).reshape(2, 2, 2), ds.labels, tmp_path / "i2", tmp_path / "l2")
    ok &= (tmp_path / "i2").read_bytes() == IDX_IMAGES and (tmp_path / "l2").read_bytes() == IDX_LABELS
    broken = {
        D.IdxMagicError: (img, IDX_IMAGES, IDX_LABELS.replace(b"\x08\x01", b"\x08\x03", 1)),
        D.IdxTruncatedError: (img, IDX_IMAGES[:-1], IDX_LABELS),
        D.IdxCountMismatchError: (img, IDX_IMAGES, bytes.fromhex("0000080100000003") + bytes([7, 3, 1])),
    }
    for err, (_, images, labels) in broken.items():
        img.write_bytes(images)
        lab.write_bytes(labels)
        try:
            D.load_idx(img, lab)
            ok = False
        except err:
            pass
    return bool(ok)


def _artifacts_round_trip(tmp_path):
    from conftest import TINY

    cfg = preset("novelty").replace(**{**TINY, "blob_classes": 5}, output_dir=str(tmp_path / "run"))
    rec = cmd_train(cfg)
    cmd_sweep_lambda(cfg.replace(repeats=2), [0.0, 0.25])
    out = tmp_path / "run"
    rep = rec.report
    checks = {
        "metrics.csv": np.allclose(D.read_table(out / "metrics.csv")["total"], [e.total for e in rec.history], rtol=1e-8),
        "angles.csv": np.allclose(D.read_matrix(out / "angles.csv"), rep.angle_matrix, rtol=1e-8, atol=1e-12),
        "spectrum.csv": np.allclose(D.read_table(out / "spectrum.csv")["normalized_sv"], rep.spectrum, rtol=1e-8),
        "features.csv": len(D.load_csv(out / "features.csv")) == 4 * cfg.blob_test_per_class,
        "novelty.csv": np.allclose(np.column_stack(list(D.read_table(out / "novelty.csv").values())), rep.novelty_curve, rtol=1e-8),
        "hist.csv": D.read_table(out / "hist.csv")["count"].sum() == cfg.blob_test_per_class,
        "sweep.csv": len(D.read_table(out / "sweep.csv")["lambda"]) == 2,
    }
    return checks


def test_criterion_11_file_formats(verdict, tmp_path):
    idx_ok = _idx_fixtures_pass(tmp_path)
    checks = _artifacts_round_trip(tmp_path)
    failed = [k for k, v in checks.items() if not v]
    detail = f"IDX fixtures {'ok' if idx_ok else 'broken'}; {len(checks) - len(failed)}/{len(checks)} CSV artifacts round-trip"
    verdict(11, idx_ok and not failed, detail + (f" (failed: {', '.join(failed)})" if failed else ""))
