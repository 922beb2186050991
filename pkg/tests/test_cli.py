import random

import pytest

from multihit.cli import main


def make_maf(path, records):
    lines = ["#version 2.4", "Hugo_Symbol\tVariant_Classification\tTumor_Sample_Barcode"]
    lines += [f"{g}\t{c}\t{s}" for g, c, s in records]
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def cohort_dir(tmp_path):
    rng = random.Random(17)
    maf_dir = tmp_path / "maf"
    maf_dir.mkdir()
    genes = [f"GENE{i}" for i in range(14)]
    tumors = [f"TCGA-AA-{i:04d}-01A" for i in range(10)]
    normals = [f"TCGA-AA-{i:04d}-10A" for i in range(4)]
    records = []
    for sample in tumors:
        for gene in rng.sample(genes, 5):
            records.append((gene, "Missense_Mutation", sample))
    for sample in normals:
        for gene in rng.sample(genes, 1):
            records.append((gene, "Missense_Mutation", sample))
    records.append(("GENE0", "Silent", tumors[0]))
    make_maf(maf_dir / "cohort.maf", records)
    return maf_dir


def run_cli(args):
    return main([str(a) for a in args])


def test_full_pipeline(tmp_path, cohort_dir, capsys):
    out = tmp_path / "work"
    assert run_cli(["preprocess", cohort_dir, "--out-dir", out]) == 0
    assert (out / "tumor_matrix.txt").exists()
    assert (out / "normal_list.txt").exists()

    packed = out / "packed.bin"
    gene_map = out / "packed.gene_map"
    assert run_cli(["pack", out / "tumor_matrix.txt", out / "normal_list.txt",
                    "--out", packed, "--gene-map", gene_map]) == 0

    solution = out / "output.txt"
    metrics_csv = out / "metrics.csv"
    assert run_cli(["search", packed, "--hits", "2", "--output", solution,
                    "--metrics", metrics_csv, "--chunk", "8"]) == 0
    text = solution.read_text()
    assert text.startswith("(")
    assert metrics_csv.read_text().startswith("worker_id,")

    capsys.readouterr()
    assert run_cli(["verify", solution, out / "tumor_matrix.txt", out / "normal_list.txt",
                    "--gene-map", gene_map]) == 0
    verify_out = capsys.readouterr().out
    assert "100.00%" in verify_out

    named = out / "named.txt"
    assert run_cli(["convert", solution, gene_map, "--out", named]) == 0
    assert "GENE" in named.read_text()


def test_prune_modes_agree_end_to_end(tmp_path):
    out_a = tmp_path / "a.txt"
    out_b = tmp_path / "b.txt"
    common = ["--synthetic", "30,20,8,0.9,5", "--hits", "3", "--chunk", "32"]
    assert run_cli(["search", *common, "--output", out_a, "--metrics", tmp_path / "a.csv"]) == 0
    assert run_cli(["search", *common, "--no-prune", "--output", out_b,
                    "--metrics", tmp_path / "b.csv"]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_topologies_agree_byte_for_byte(tmp_path):
    out_a = tmp_path / "a.txt"
    out_b = tmp_path / "b.txt"
    common = ["--synthetic", "26,16,6,0.88,9", "--hits", "3", "--chunk", "16"]
    assert run_cli(["search", *common, "--output", out_a, "--metrics", tmp_path / "a.csv"]) == 0
    assert run_cli(["search", *common, "--leaders", "2", "--workers", "4", "--seed", "77",
                    "--output", out_b, "--metrics", tmp_path / "b.csv"]) == 0
    assert out_a.read_bytes() == out_b.read_bytes()


def test_search_is_rerunnable_byte_identical(tmp_path):
    args = ["--synthetic", "22,14,6,0.9,3", "--hits", "2"]
    for name in ("x", "y"):
        assert run_cli(["search", *args, "--output", tmp_path / f"{name}.txt",
                        "--metrics", tmp_path / f"{name}.csv"]) == 0
    assert (tmp_path / "x.txt").read_bytes() == (tmp_path / "y.txt").read_bytes()


def test_socket_transport_cli(tmp_path):
    out = tmp_path / "sock.txt"
    assert run_cli(["search", "--synthetic", "18,12,4,0.85,2", "--hits", "2",
                    "--transport", "socket", "--leaders", "2", "--workers", "2",
                    "--output", out, "--metrics", tmp_path / "sock.csv"]) == 0
    ref = tmp_path / "ref.txt"
    assert run_cli(["search", "--synthetic", "18,12,4,0.85,2", "--hits", "2",
                    "--output", ref, "--metrics", tmp_path / "ref.csv"]) == 0
    assert out.read_bytes() == ref.read_bytes()


def test_search_figures_flag(tmp_path):
    metrics_csv = tmp_path / "m.csv"
    assert run_cli(["search", "--synthetic", "16,10,4,0.85,1", "--hits", "2",
                    "--output", tmp_path / "o.txt", "--metrics", metrics_csv,
                    "--figures"]) == 0
    assert metrics_csv.with_suffix(".busy.png").exists()


def test_bench_writes_csv_and_figures(tmp_path):
    out_dir = tmp_path / "bench"
    assert run_cli(["bench", "--synthetic", "20,12,4,0.9,4", "--hits-list", "2,3",
                    "--topologies", "1x1,1x2", "--out-dir", out_dir]) == 0
    assert (out_dir / "bench.csv").read_text().count("\n") == 5  # header + 4 rows
    assert (out_dir / "bench_wall_time.png").exists()
    assert (out_dir / "bench_visited_fraction.png").exists()


def test_error_exit_is_machine_parseable(tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        run_cli(["search", tmp_path / "missing.bin", "--output", tmp_path / "o.txt",
                 "--metrics", tmp_path / "m.csv"])
    assert exc.value.code == 1
    err = capsys.readouterr().err
    assert err.startswith("multihit: error:")
    assert err.count("\n") == 1


def test_bad_flags_rejected(tmp_path, capsys):
    with pytest.raises(SystemExit):
        run_cli(["search", "--synthetic", "10,5,2,0.9,1", "--hits", "1",
                 "--output", tmp_path / "o.txt", "--metrics", tmp_path / "m.csv"])
    with pytest.raises(SystemExit):
        run_cli(["search", "--synthetic", "10,5,2,0.9,1", "--alpha", "0",
                 "--output", tmp_path / "o.txt", "--metrics", tmp_path / "m.csv"])
    with pytest.raises(SystemExit):
        run_cli(["search", "--synthetic", "bad-spec",
                 "--output", tmp_path / "o.txt", "--metrics", tmp_path / "m.csv"])


def test_preprocess_two_file_mode(tmp_path):
    maf = tmp_path / "data.maf"
    make_maf(maf, [
        ("A", "Missense", "S1"),
        ("A", "Missense", "S2"),
        ("B", "Missense", "S3"),
    ])
    (tmp_path / "tumors.txt").write_text("S1\nS2\n")
    (tmp_path / "normals.txt").write_text("S3\n")
    out = tmp_path / "out"
    assert run_cli(["preprocess", maf, "--out-dir", out,
                    "--tumor-samples", tmp_path / "tumors.txt",
                    "--normal-samples", tmp_path / "normals.txt"]) == 0
    header = (out / "tumor_matrix.txt").read_text().splitlines()[0]
    assert header.split("\t") == ["S1", "S2"]
    assert (out / "normal_list.txt").read_text() == "B\tS3\n"
