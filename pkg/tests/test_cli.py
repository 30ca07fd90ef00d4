import numpy as np
import pytest

from lpca import load_csv
from lpca.cli import main, read_config


def write_rank_one_csv(path, p=10, n=10, seed=0):
    rng = np.random.default_rng(seed)
    x = np.outer(rng.uniform(0.5, 1.5, p), rng.uniform(size=n))
    with open(path, "w") as fh:
        for row in x:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")
    return x


def read_dir_bytes(directory):
    return {f.name: f.read_bytes() for f in sorted(directory.iterdir())}


class TestEstimateCommand:
    def test_rank_one_end_to_end(self, tmp_path):
        src = tmp_path / "x.csv"
        x = write_rank_one_csv(src)
        out = tmp_path / "out"
        code = main(["estimate", "--input", str(src), "--out", str(out),
                     "--k", "5", "--factors", "1", "--distance", "euclidean"])
        assert code == 0
        fitted = np.loadtxt(out / "hhat.csv", delimiter=",")
        assert np.abs(fitted - x[5:]).max() < 1e-8
        rows = [int(t) for t in (out / "hhat_rows.txt").read_text().split()]
        assert rows == list(range(6, 11))
        for name in ("neighbors.csv", "nfactors.csv", "spectra.csv",
                     "split.txt", "manifest.txt"):
            assert (out / name).exists()

    def test_missing_input_exits_2(self, tmp_path, capsys):
        code = main(["estimate", "--input", str(tmp_path / "absent.csv"),
                     "--out", str(tmp_path / "o")])
        assert code == 2
        err = capsys.readouterr().err
        assert "absent.csv" in err
        assert "error-record kind=data exit=2" in err

    def test_bad_split_exits_1(self, tmp_path, capsys):
        src = tmp_path / "x.csv"
        write_rank_one_csv(src)
        code = main(["estimate", "--input", str(src), "--out", str(tmp_path / "o"),
                     "--split", "0.7,0.7", "--factors", "1", "--k", "4"])
        assert code == 1
        assert "error-record kind=config exit=1" in capsys.readouterr().err

    def test_byte_identical_reruns(self, tmp_path):
        src = tmp_path / "x.csv"
        write_rank_one_csv(src, seed=3)
        out = tmp_path / "out"
        args = ["estimate", "--input", str(src), "--out", str(out),
                "--k", "4", "--factors", "1", "--distance", "pseudo-max"]
        assert main(args) == 0
        first = read_dir_bytes(out)
        assert main(args) == 0
        assert read_dir_bytes(out) == first

    def test_manifest_roundtrip(self, tmp_path):
        src = tmp_path / "x.csv"
        write_rank_one_csv(src, seed=4)
        out = tmp_path / "out"
        assert main(["estimate", "--input", str(src), "--out", str(out),
                     "--k", "4", "--factors", "2", "--distance", "average"]) == 0
        first = read_dir_bytes(out)
        assert main(["estimate", "--config", str(out / "manifest.txt")]) == 0
        assert read_dir_bytes(out) == first

    def test_flags_override_config(self, tmp_path):
        src = tmp_path / "x.csv"
        write_rank_one_csv(src, seed=5)
        cfg = tmp_path / "run.cfg"
        cfg.write_text(f"input={src}\nout={tmp_path / 'a'}\nk=4\nfactors=1\n"
                       "distance=euclidean\n")
        assert main(["estimate", "--config", str(cfg),
                     "--out", str(tmp_path / "b")]) == 0
        assert (tmp_path / "b" / "hhat.csv").exists()
        assert not (tmp_path / "a").exists()

    def test_wrong_command_in_config(self, tmp_path, capsys):
        src = tmp_path / "x.csv"
        write_rank_one_csv(src)
        cfg = tmp_path / "run.cfg"
        cfg.write_text("command=synth\n")
        code = main(["estimate", "--config", str(cfg), "--input", str(src),
                     "--out", str(tmp_path / "o")])
        assert code == 1

    def test_missing_token_and_header(self, tmp_path):
        src = tmp_path / "x.csv"
        src.write_text("u1,u2,u3,u4\n" + "\n".join(
            ",".join("?" if (i == 5 and j == 0) else str(1.0 * (i + 1) * (j + 1))
                     for j in range(4))
            for i in range(6)) + "\n")
        out = tmp_path / "out"
        assert main(["estimate", "--input", str(src), "--out", str(out),
                     "--header", "--missing-token", "?", "--k", "2",
                     "--factors", "1", "--distance", "euclidean"]) == 0


class TestSynthCommand:
    def test_effects_table(self, tmp_path):
        src = tmp_path / "y.csv"
        y = write_rank_one_csv(src, p=20, n=12, seed=6)
        out = tmp_path / "out"
        code = main(["synth", "--input", str(src), "--out", str(out),
                     "--treated", "3", "--p0", "17", "--k", "5",
                     "--factors", "1", "--distance", "euclidean",
                     "--initial-level", "100"])
        assert code == 0
        rows = (out / "effects.csv").read_text().strip().splitlines()
        assert rows[0] == "period,observed,counterfactual,effect"
        assert len(rows) == 4  # 3 post periods
        periods = [int(r.split(",")[0]) for r in rows[1:]]
        assert periods == [18, 19, 20]
        obs = [float(r.split(",")[1]) for r in rows[1:]]
        assert np.allclose(obs, y[17:, 2])
        summary = (out / "summary.txt").read_text()
        assert "avg_effect=" in summary
        assert (out / "levels.csv").exists()

    def test_post_in_matching_split_exits_1(self, tmp_path, capsys):
        src = tmp_path / "y.csv"
        write_rank_one_csv(src, p=20, n=12, seed=7)
        code = main(["synth", "--input", str(src), "--out", str(tmp_path / "o"),
                     "--treated", "1", "--p0", "5", "--k", "4",
                     "--factors", "1", "--distance", "euclidean"])
        assert code == 1


class TestSimulateCommand:
    def test_summary_and_reps(self, tmp_path):
        out = tmp_path / "out"
        code = main(["simulate", "--model", "2", "--n", "64", "--p", "48",
                     "--reps", "2", "--seed", "5", "--out", str(out),
                     "--per-rep"])
        assert code == 0
        lines = (out / "summary.csv").read_text().strip().splitlines()
        assert lines[0] == "method,metric,value"
        assert len(lines) == 9  # 2 methods x 4 metrics
        reps = (out / "reps.csv").read_text().strip().splitlines()
        assert len(reps) == 5  # header + 2 reps x 2 methods

    def test_deterministic_summary(self, tmp_path):
        args = lambda out: ["simulate", "--model", "1", "--n", "64", "--p", "40",
                            "--reps", "1", "--seed", "9", "--out", str(out)]
        assert main(args(tmp_path / "a")) == 0
        assert main(args(tmp_path / "b")) == 0
        assert ((tmp_path / "a" / "summary.csv").read_bytes()
                == (tmp_path / "b" / "summary.csv").read_bytes())

    def test_bad_model_exits_1(self, tmp_path):
        assert main(["simulate", "--model", "9", "--n", "30", "--p", "30",
                     "--reps", "1", "--out", str(tmp_path / "o")]) == 1


class TestCovadjustCommand:
    def test_theta_emitted(self, tmp_path):
        rng = np.random.default_rng(8)
        p = n = 45
        rho = rng.uniform(size=n)
        psi = rng.uniform(size=p)
        w = np.exp(-3 * np.abs(rho[None, :] - psi[:, None]))
        w = w + 0.5 * rng.standard_normal((p, n))
        x = 0.7 * w
        wpath, xpath = tmp_path / "w.csv", tmp_path / "x.csv"
        for path, mat in ((wpath, w), (xpath, x)):
            with open(path, "w") as fh:
                for row in mat:
                    fh.write(",".join(repr(float(v)) for v in row) + "\n")
        out = tmp_path / "out"
        code = main(["covadjust", "--input", str(xpath), "--covariate", str(wpath),
                     "--out", str(out), "--k", "8", "--factors", "1",
                     "--distance", "euclidean"])
        assert code == 0
        lines = (out / "theta.csv").read_text().strip().splitlines()
        assert lines[0] == "regressor,theta"
        assert float(lines[1].split(",")[1]) == pytest.approx(0.7, abs=1e-6)

    def test_requires_covariate(self, tmp_path):
        src = tmp_path / "x.csv"
        write_rank_one_csv(src, p=9, n=8)
        assert main(["covadjust", "--input", str(src),
                     "--out", str(tmp_path / "o")]) == 1


class TestConfigParsing:
    def test_read_config(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("# comment\nk=5\ncovariate=a.csv\ncovariate=b.csv\n")
        values = read_config(str(cfg))
        assert values == {"k": "5", "covariate": ["a.csv", "b.csv"]}

    def test_malformed_line(self, tmp_path):
        cfg = tmp_path / "c.cfg"
        cfg.write_text("not a pair\n")
        with pytest.raises(Exception):
            read_config(str(cfg))
