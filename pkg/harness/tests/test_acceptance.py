"""Cross-component acceptance: the full embed -> preprocess -> train ->
recommend -> execute -> report loop between the recommender CLI and this
harness, exchanging data only through files.
"""

import subprocess
import sys
import time
from contextlib import contextmanager

import numpy as np

from zsautoml.embedding import load_embeddings

from zsharness import HarnessConfig, embed_texts, write_embedding_file
from zsharness.cli import main as harness_main
from zsharness.cli import reference_tables
from zsharness.scoring import baseline_accuracies


@contextmanager
def criterion(num: int, title: str):
    try:
        yield
    except BaseException:
        print(f"\ncriterion {num:02d} [FAIL] {title}")
        raise
    print(f"\ncriterion {num:02d} [PASS] {title}")


def _zsautoml(*args: str) -> subprocess.CompletedProcess:
    proc = subprocess.run(
        [sys.executable, "-m", "zsautoml.cli", *args],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, f"zsautoml {args[0]} failed: {proc.stderr}"
    return proc


DESCRIPTIONS = {
    "separable2": "two well separated customer segments with numeric scores",
    "blobs3": "three gaussian clusters of sensor readings from machines",
    "mixed2": "purchase records with prices and a color attribute",
}

# Each training table is a perturbed sibling of one reference table, labeled
# with a pipeline that suits that family.
TRAIN_LABELS = {
    "separable2": ("standardscaler", "decision_tree"),
    "blobs3": ("minmaxscaler", "k_nearest_neighbors"),
    "mixed2": ("standardscaler", "logisticregression"),
}


def _write_train_tables(root, rng):
    """Six training CSVs: two noisy variants per reference family."""
    made = []
    for variant in range(2):
        # separable two-class family
        y = np.repeat([0, 1], 40)
        x = rng.normal(size=(80, 4))
        x[:, 0] += np.where(y == 0, -4.0, 4.0)
        made.append((f"sep_t{variant}", "separable2",
                     ["f1", "f2", "f3", "f4"],
                     x, [f"class{v}" for v in y]))
        # three-blob family
        centers = np.array([[0, 0, 0, 0, 0], [6, 6, 0, 0, 0], [0, 6, 6, 6, 0]], float)
        y = np.repeat([0, 1, 2], 30)
        x = centers[y] + rng.normal(size=(90, 5))
        made.append((f"blob_t{variant}", "blobs3",
                     [f"f{i}" for i in range(1, 6)],
                     x, [f"blob{v}" for v in y]))
        # mixed numeric family (numeric-only variant keeps features comparable)
        y = rng.integers(0, 2, size=80)
        x = np.column_stack([
            rng.normal(size=80) + 3.0 * y,
            rng.uniform(0, 10, size=80) + 2.0 * y,
            rng.integers(0, 3, size=80).astype(float),
        ])
        made.append((f"mix_t{variant}", "mixed2",
                     ["num1", "num2", "color"],
                     x, ["yes" if v else "no" for v in y]))
    paths = {}
    for did, family, cols, x, labels in made:
        csv_path = root / f"{did}.csv"
        lines = [",".join(cols + ["target"])]
        for row, lab in zip(x, labels):
            lines.append(",".join(f"{v:.4f}" for v in row) + f",{lab}")
        csv_path.write_text("\n".join(lines) + "\n")
        paths[did] = (family, csv_path)
    return paths


def test_criterion_11_exchange_compatibility_full_loop(tmp_path):
    with criterion(11, "harness embeddings load bit-exactly; recommended "
                       "pipelines beat the majority baseline end to end"):
        start = time.perf_counter()
        refs = reference_tables()
        train_tables = _write_train_tables(tmp_path, np.random.default_rng(23))

        # Descriptions for every dataset, embedded by the harness.
        texts, manifest, labels = [], [], []
        for did, (family, csv_path) in train_tables.items():
            txt = tmp_path / f"{did}.txt"
            txt.write_text(DESCRIPTIONS[family] + f" variant {did}")
            texts.append((did, txt.read_text()))
            manifest.append(f"{did}\ttrain\t{csv_path}\t-\t{txt}")
            fp, est = TRAIN_LABELS[family]
            labels.append(f"{did}\tO\t{fp}\t{est}\t0.9")
        for did, csv_path in refs.items():
            txt = tmp_path / f"{did}.txt"
            txt.write_text(DESCRIPTIONS[did])
            texts.append((did, txt.read_text()))
            manifest.append(f"{did}\ttest\t{csv_path}\t-\t{txt}")
        (tmp_path / "manifest.tsv").write_text("\n".join(manifest) + "\n")
        (tmp_path / "labels.tsv").write_text("\n".join(labels) + "\n")

        cfg = HarnessConfig()
        vectors = embed_texts(texts, cfg)
        emb = tmp_path / "desc.zsemb"
        write_embedding_file(vectors, str(emb), cfg)

        # Bit-exact load on the recommender side.
        store = load_embeddings(str(emb), expected_width=1024)
        for did, vec in vectors.items():
            assert np.array_equal(store.vectors[did], vec)

        # Recommender CLI: preprocess, train, recommend each reference table.
        catalog = tmp_path / "corpus.zscat"
        _zsautoml("preprocess", "--manifest", str(tmp_path / "manifest.tsv"),
                  "--labels", str(tmp_path / "labels.tsv"),
                  "--embeddings", str(emb), "--desc-width", "1024",
                  "--out", str(catalog))
        ckpt = tmp_path / "model.zsckpt"
        _zsautoml("train", "--catalog", str(catalog), "--out", str(ckpt),
                  "--iterations", "600", "--eval-every", "100", "--k", "3",
                  "--d-fused", "16", "--d-node", "16", "--gat-hidden", "16")
        recs = tmp_path / "recs.tsv"
        for did, csv_path in sorted(refs.items()):
            _zsautoml("recommend", "--checkpoint", str(ckpt),
                      "--table", str(csv_path),
                      "--description", str(tmp_path / f"{did}.txt"),
                      "--embeddings", str(emb),
                      "--id", did, "--out", str(recs))

        # Harness executes the recommendations on the shipped tables.
        results = tmp_path / "results.tsv"
        rc = harness_main(["run", "--recommendations", str(recs),
                           "--out", str(results),
                           "--runs", "3", "--trials", "5"])
        assert rc == 0

        baselines = baseline_accuracies(refs)
        scored = {}
        for ln in results.read_text().splitlines():
            if ln.startswith(("#", "dataset\t")) or not ln.strip():
                continue
            did, acc, _ = ln.split("\t")
            scored[did] = float(acc)
        assert set(scored) == set(refs)
        for did, acc in scored.items():
            assert acc >= baselines[did], (
                f"{did}: recommended pipeline scored {acc:.3f}, "
                f"majority baseline {baselines[did]:.3f}"
            )

        # The recommender's report command merges the harness output.
        _zsautoml("report", "--results", str(results),
                  "--out", str(tmp_path / "report.tsv"), "--method", "zero-shot")

        elapsed = time.perf_counter() - start
        assert elapsed < 300.0, f"full loop took {elapsed:.1f}s"
