import json
import xml.etree.ElementTree as ET

import numpy as np
import pytest

from principal_objects import __version__
from principal_objects.cli import BUILTIN_IRIS, main
from principal_objects.dataset import load_iris, read_table
from principal_objects.pca import fit_components


def run_ok(*argv):
    assert main([str(a) for a in argv]) == 0


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir())}


@pytest.fixture
def iris_csv(tmp_path):
    t = load_iris()
    lines = [",".join(t.columns + ("species",))]
    lines += [",".join(map(repr, row)) + "," + lab for row, lab in zip(t.data.values.tolist(),
                                                                       t.labels)]
    p = tmp_path / "iris.csv"
    p.write_text("\n".join(lines) + "\n")
    return p


def iris_args(path):
    return ["--input", path, "--header", "--label-column", "species"]


class TestFits:
    def test_pca(self, tmp_path, iris_csv):
        out = tmp_path / "pca"
        run_ok("fit", "pca", *iris_args(iris_csv), "--k", 2, "--seed", 7, "--out", out)
        assert {"basis.txt", "projections.csv", "metrics.json", "manifest.json"} <= set(files(out))
        man = json.loads((out / "manifest.json").read_text())
        assert man["command"] == "fit pca" and man["seed"] == 7 and man["version"] == __version__
        import hashlib
        assert man["inputs"][str(iris_csv)] == hashlib.sha256(iris_csv.read_bytes()).hexdigest()
        assert man["config"]["k"] == 2
        proj = read_table((out / "projections.csv").read_bytes(), header=True,
                          label_column="label").data.values
        basis = fit_components(load_iris().data, 2, rng=0)
        ref = (load_iris().data.values - basis.origin) @ basis.components.T
        np.testing.assert_allclose(np.abs(proj), np.abs(ref), atol=1e-8)

    def test_tree_is_byte_identical(self, tmp_path):
        a, b = tmp_path / "a", tmp_path / "b"
        for out in (a, b):
            run_ok("fit", "tree", "--input", BUILTIN_IRIS, "--nodes", 8, "--seed", 7, "--out", out)
        fa, fb = files(a), files(b)
        fa["manifest.json"] = fa["manifest.json"].replace(b'"' + bytes(a) + b'"', b"")
        assert fa.keys() == fb.keys()
        for name in fa:
            if name != "manifest.json":
                assert fa[name] == fb[name], name
        assert json.loads(files(a)["manifest.json"]) == json.loads(fb["manifest.json"])

    @pytest.mark.parametrize("kind,extra", [
        ("kmeans", ["--k", 3]),
        ("elastic-map", ["--shape", "5,5"]),
        ("polyline", ["--max-segments", 6]),
        ("complex", ["--nodes", 3]),
    ])
    def test_fit_and_project(self, tmp_path, kind, extra):
        fit_dir, proj_dir = tmp_path / "fit", tmp_path / "proj"
        run_ok("fit", kind, "--input", BUILTIN_IRIS, "--seed", 3, "--out", fit_dir, *extra)
        run_ok("project", "--model", fit_dir, "--input", BUILTIN_IRIS, "--out", proj_dir)
        rows = (proj_dir / "projection.csv").read_text().strip().splitlines()
        assert len(rows) == 151
        run_ok("report", "--model", fit_dir)

    def test_layout_from_tree(self, tmp_path):
        fit_dir, lay = tmp_path / "tree", tmp_path / "lay"
        run_ok("fit", "tree", "--input", BUILTIN_IRIS, "--nodes", 10, "--seed", 1, "--out", fit_dir)
        run_ok("layout", "--model", fit_dir, "--input", BUILTIN_IRIS, "--out", lay)
        ET.fromstring((lay / "metro.svg").read_bytes())
        doc = json.loads((lay / "layout.json").read_text())
        assert sum(map(sum, doc["pies"])) == 150


class TestIngest:
    def test_triplets(self, tmp_path):
        rng = np.random.default_rng(0)
        seq = "".join(rng.choice(list("ACGT"), 20_000))
        fa = tmp_path / "genome.fa"
        fa.write_text(">chr\n" + "\n".join(seq[i:i + 60] for i in range(0, len(seq), 60)) + "\n")
        out = tmp_path / "trip"
        run_ok("ingest", "triplets", "--fasta", fa, "--width", 300, "--fragments", 5000,
               "--seed", 7, "--out", out)
        t = read_table((out / "table.csv").read_bytes(), header=True)
        assert t.data.values.shape == (5000, 64)
        np.testing.assert_allclose(t.data.values.sum(axis=1), 1, atol=1e-12)

    def test_table_with_gaps(self, tmp_path):
        src = tmp_path / "in.tsv"
        src.write_text("a\tb\n1\t?\n3\t4\n")
        out = tmp_path / "t"
        run_ok("ingest", "table", "--input", src, "--delimiter", "\t", "--gap-token", "?",
               "--header", "--out", out)
        assert json.loads((out / "metrics.json").read_text())["gaps"] == 1


class TestErrors:
    def test_missing_seed(self, tmp_path, capsys):
        assert main(["fit", "pca", "--input", BUILTIN_IRIS, "--out", str(tmp_path)]) == 1
        err = capsys.readouterr().err.strip().splitlines()
        assert len(err) == 1 and err[0].startswith("error: invariant-violation:")

    def test_usage(self, capsys):
        assert main(["fit"]) == 2
        assert main(["fit", "pca", "--bogus"]) == 2
        assert capsys.readouterr().err.startswith("error: usage:")

    def test_missing_file(self, tmp_path, capsys):
        code = main(["fit", "pca", "--input", str(tmp_path / "none.csv"), "--seed", "1",
                     "--out", str(tmp_path / "o")])
        assert code == 1
        assert capsys.readouterr().err.startswith("error: io-error:")

    def test_parse_error(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("1,2\n3,x\n")
        assert main(["fit", "pca", "--input", str(bad), "--seed", "1", "--out",
                     str(tmp_path / "o")]) == 1
        assert capsys.readouterr().err.startswith("error: parse-error:")

    def test_layout_needs_tree(self, tmp_path):
        run_ok("fit", "pca", "--input", BUILTIN_IRIS, "--seed", 1, "--out", tmp_path / "p")
        assert main(["layout", "--model", str(tmp_path / "p"), "--out", str(tmp_path / "l")]) == 2


class TestConfig:
    def test_file_sets_defaults_and_flags_win(self, tmp_path):
        cfg = tmp_path / "run.ini"
        cfg.write_text("[prinobj]\nk = 3\nseed = 11\n")
        a = tmp_path / "a"
        run_ok("--config", cfg, "fit", "kmeans", "--input", BUILTIN_IRIS, "--out", a)
        man = json.loads((a / "manifest.json").read_text())
        assert man["config"]["k"] == 3 and man["seed"] == 11
        b = tmp_path / "b"
        run_ok("--config", cfg, "fit", "kmeans", "--input", BUILTIN_IRIS, "--k", 2, "--out", b)
        assert json.loads((b / "manifest.json").read_text())["config"]["k"] == 2
