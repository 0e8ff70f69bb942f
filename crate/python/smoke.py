#!/usr/bin/env python3
"""End-to-end smoke test for the prachdet_py extension module.

Build the module first:

    cargo build --release -p prachdet-py

then run this script with python3. It copies the cdylib to an importable
name, walks the whole pipeline at a small scale, and asserts on each step.
"""

import json
import shutil
import sys
import tempfile
from pathlib import Path

REPO = Path(__file__).resolve().parent.parent


def import_module():
    built = REPO / "target" / "release" / "libprachdet_py.so"
    if not built.exists():
        sys.exit("build the extension first: cargo build --release -p prachdet-py")
    stage = Path(tempfile.mkdtemp(prefix="prachdet_py."))
    shutil.copy2(built, stage / "prachdet_py.so")
    sys.path.insert(0, str(stage))
    import prachdet_py

    return prachdet_py


def main():
    pd = import_module()
    tmp = Path(tempfile.mkdtemp(prefix="prachdet_smoke."))

    # Generation honors the config and is deterministic.
    cfg = json.loads(pd.default_gen_config())
    cfg["n_records"] = 600
    cfg["seed"] = 11
    ds = pd.generate(json.dumps(cfg))
    ds2 = pd.generate(json.dumps(cfg))
    assert len(ds) == 600
    peaks, falses = ds.label_counts()
    assert peaks + falses == 600 and 0 < peaks < falses
    assert ds.labels() == ds2.labels()
    assert [ds.features(i) for i in range(5)] == [ds2.features(i) for i in range(5)]
    print(f"generate: 600 records, {peaks} peaks, deterministic")

    # CSV round-trip preserves records.
    csv_path = tmp / "ds.csv"
    ds.write_csv(str(csv_path))
    back = pd.Dataset.read_csv(str(csv_path))
    assert len(back) == len(ds) and back.labels() == ds.labels()
    assert back.features(17) == ds.features(17)
    print("dataset csv round-trip: exact")

    # Label-flip noise changes exactly the requested fraction.
    norm = ds.normalized()
    noisy = pd.inject_noise(norm, 0.15, mode="flip", seed=3)
    flipped = sum(a != b for a, b in zip(norm.labels(), noisy.labels()))
    assert flipped == round(0.15 * len(ds)), flipped
    print(f"inject_noise: {flipped} labels flipped")

    # Split, transforms, and shapes.
    train, test = pd.stratified_split(noisy, 0.7, seed=5)
    assert len(train) + len(test) == len(ds)
    x_train = pd.psr(train, embed_dim=7, time_lag=1)
    x_test = pd.psr(test, embed_dim=7, time_lag=1)
    assert x_train.cols == 28 and len(x_train) == len(train)
    pca = pd.fit_pca(train.matrix(), components=2)
    z_train = pca.apply(train.matrix())
    z_test = pca.apply(test.matrix())
    assert z_train.cols == 2 and len(z_test) == len(test)
    assert len(pca.eigenvalues) == 2 and pca.eigenvalues[0] >= pca.eigenvalues[1]
    print(f"transforms: psr {x_train.cols} cols, pca {z_train.cols} cols")

    # PCA model file round-trip projects identically.
    pca_path = tmp / "pca.json"
    pca.save(str(pca_path))
    pca2 = pd.PcaModel.load(str(pca_path))
    assert pca2.apply(test.matrix()).row(0) == z_test.row(0)
    print("pca save/load: projection identical")

    # Every classifier kind fits, predicts, and round-trips through a file.
    for kind in ["tree", "knn", "elm", "nb"]:
        model = pd.fit_classifier(kind, x_train, seed=7)
        pred = model.predict(x_test)
        score = pd.f1_score(x_test.labels(), pred)
        assert 0.0 <= score <= 1.0
        post = model.posterior(x_test)
        assert all(abs(a + b - 1.0) < 1e-9 for a, b in post)
        path = tmp / f"{kind}.json"
        model.save(str(path))
        again = pd.Model.load(str(path))
        assert again.predict(x_test) == pred
        print(f"classifier {kind}: f1 {score:.3f}, file round-trip exact")

    # Self-training absorbs the pool in ceil(pool/J) cycles.
    seed_rows = list(range(40))
    pool_rows = list(range(40, len(x_train)))
    seeded = x_train.subset(seed_rows)
    pool = x_train.subset(pool_rows)
    model, cycles = pd.self_train(seeded, pool, "nb", j=50)
    assert cycles == -(-len(pool_rows) // 50), cycles
    score = pd.f1_score(x_test.labels(), model.predict(x_test))
    assert 0.0 <= score <= 1.0
    print(f"self_train: {cycles} cycles, f1 {score:.3f}")

    # A tiny experiment grid is deterministic end to end.
    ecfg = json.loads(pd.default_experiment_config())
    ecfg["gen"]["n_records"] = 400
    ecfg["repeats"] = 1
    ecfg["noise_levels"] = [0.0, 0.15]
    ecfg["classifiers"] = ["nb"]
    report = json.loads(pd.run_grid(json.dumps(ecfg)))
    report2 = json.loads(pd.run_grid(json.dumps(ecfg)))
    assert report == report2
    cells = report["cells"]
    assert len(cells) == 4  # 2 spaces x 1 classifier x 2 levels
    assert all(
        0.0 <= c["sampled"]["mean_f1"] <= 1.0 and 0.0 <= c["baseline"]["mean_f1"] <= 1.0
        for c in cells
    )
    print(f"run_grid: {len(cells)} cells, deterministic")

    # J-sweep returns one point per J with sane values.
    points = pd.sweep_j([10, 40], config=json.dumps(ecfg), kind="nb", noise=0.15)
    assert [p[0] for p in points] == [10, 40]
    assert all(0.0 <= p[1] <= 1.0 for p in points)
    print(f"sweep_j: {points}")

    print("smoke: all checks passed")


if __name__ == "__main__":
    main()
