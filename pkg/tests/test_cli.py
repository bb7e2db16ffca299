import json
import os
import subprocess
import sys

import numpy as np
import pytest

from sfuda.core import LabeledDomain
from sfuda.harness import ShiftSpec, gen_domain_pair
from sfuda.io import write_manifest, write_sfdk, ExperimentSpec

HEADER = (
    "pair_id,source,target,method,seed,acc_source_test,"
    "acc_target_baseline,acc_target_adapted,delta,failed"
)


def run_cli(*args, env_extra=None):
    env = dict(os.environ)
    if env_extra:
        env.update(env_extra)
    return subprocess.run(
        [sys.executable, "-m", "sfuda.cli", *args],
        capture_output=True,
        text=True,
        env=env,
    )


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    spec = ShiftSpec(3, 6, 20, 4.0, 0.5, rotation_angle=0.4, seed=100)
    source, target = gen_domain_pair(spec)
    write_sfdk(source, root / "source.sfdk")
    write_sfdk(target, root / "target.sfdk")
    scale = np.ones(8)
    scale[:2] = 10.0
    sspec = ShiftSpec(4, 8, 25, 4.0, 0.5, per_dim_scale=tuple(scale), seed=101)
    s2, t2 = gen_domain_pair(sspec)
    write_sfdk(s2, root / "scale_source.sfdk")
    write_sfdk(t2, root / "scale_target.sfdk")
    return root


class TestProbe:
    def test_self_pair_zero_delta(self, demo):
        r = run_cli(
            "probe", "--source", str(demo / "source.sfdk"), "--target", str(demo / "source.sfdk")
        )
        assert r.returncode == 0
        lines = r.stdout.strip().splitlines()
        assert lines[0] == HEADER
        fields = lines[1].split(",")
        assert fields[3] == "lp"
        assert float(fields[8]) == 0.0
        assert fields[9] == "false"

    def test_two_runs_identical(self, demo):
        args = (
            "probe",
            "--source",
            str(demo / "source.sfdk"),
            "--target",
            str(demo / "target.sfdk"),
            "--method",
            "cp",
        )
        assert run_cli(*args).stdout == run_cli(*args).stdout

    def test_missing_file_exit_3(self, demo):
        r = run_cli(
            "probe", "--source", str(demo / "nope.sfdk"), "--target", str(demo / "target.sfdk")
        )
        assert r.returncode == 3

    def test_negative_lambda_exit_2(self, demo):
        r = run_cli(
            "probe",
            "--source",
            str(demo / "source.sfdk"),
            "--target",
            str(demo / "target.sfdk"),
            "--lambda",
            "-1",
        )
        assert r.returncode == 2


class TestAdapt:
    def test_sca_deterministic(self, demo):
        args = (
            "adapt",
            "--source",
            str(demo / "source.sfdk"),
            "--target",
            str(demo / "target.sfdk"),
            "--method",
            "sca",
            "--init",
            "mr_weights",
        )
        a, b = run_cli(*args), run_cli(*args)
        assert a.returncode == 0
        assert a.stdout == b.stdout

    def test_shot_lite_zero_epochs_exit_2(self, demo):
        r = run_cli(
            "adapt",
            "--source",
            str(demo / "source.sfdk"),
            "--target",
            str(demo / "target.sfdk"),
            "--method",
            "shot_lite",
            "--epochs",
            "0",
        )
        assert r.returncode == 2

    def test_zero_feature_row_exit_5(self, demo, tmp_path):
        bad = LabeledDomain(
            np.vstack([np.zeros(6), np.ones((3, 6))]), [0, 0, 1, 2], 3
        )
        path = tmp_path / "zero_row.sfdk"
        write_sfdk(bad, path)
        r = run_cli(
            "adapt", "--source", str(demo / "source.sfdk"), "--target", str(path),
            "--method", "sca",
        )
        assert r.returncode == 5

    def test_ft_stats_on_scale_shift_improves(self, demo):
        r = run_cli(
            "adapt",
            "--source",
            str(demo / "scale_source.sfdk"),
            "--target",
            str(demo / "scale_target.sfdk"),
            "--method",
            "ft_stats",
        )
        assert r.returncode == 0
        delta = float(r.stdout.strip().splitlines()[1].split(",")[8])
        assert delta > 0


class TestRun:
    def manifest(self, demo, tmp_path, n=4):
        specs = [
            ExperimentSpec(
                id=f"e{i}",
                source_path=str(demo / "source.sfdk"),
                target_path=str(demo / "target.sfdk"),
                method=["lp", "cp", "sca", "ft_stats"][i % 4],
                seed=i,
            )
            for i in range(n)
        ]
        path = tmp_path / "manifest.jsonl"
        write_manifest(specs, path)
        return path

    def test_jobs_do_not_change_output(self, demo, tmp_path):
        manifest = self.manifest(demo, tmp_path)
        out1, out4 = tmp_path / "r1.csv", tmp_path / "r4.csv"
        assert run_cli("run", "--manifest", str(manifest), "--out", str(out1), "--jobs", "1").returncode == 0
        assert run_cli("run", "--manifest", str(manifest), "--out", str(out4), "--jobs", "4").returncode == 0
        assert out1.read_bytes() == out4.read_bytes()

    def test_output_structure(self, demo, tmp_path):
        manifest = self.manifest(demo, tmp_path)
        out = tmp_path / "out.csv"
        run_cli("run", "--manifest", str(manifest), "--out", str(out))
        lines = out.read_text().splitlines()
        assert lines[0] == HEADER
        ids = [line.split(",")[0] for line in lines[1:5]]
        assert ids == ["e0", "e1", "e2", "e3"]
        assert "# summary" in lines
        assert any(line.startswith("# method=cp") for line in lines)

    def test_env_var_sets_default_jobs(self, demo, tmp_path):
        manifest = self.manifest(demo, tmp_path)
        out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
        run_cli("run", "--manifest", str(manifest), "--out", str(out1))
        run_cli(
            "run", "--manifest", str(manifest), "--out", str(out2),
            env_extra={"SFUDA_THREADS": "3"},
        )
        assert out1.read_bytes() == out2.read_bytes()

    def test_empty_manifest_exit_4(self, tmp_path):
        path = tmp_path / "empty.jsonl"
        path.write_text("# sfuda-manifest v1\n")
        r = run_cli("run", "--manifest", str(path), "--out", str(tmp_path / "o.csv"))
        assert r.returncode == 4
        assert not (tmp_path / "o.csv").exists()

    def test_duplicate_ids_exit_4(self, demo, tmp_path):
        path = tmp_path / "dup.jsonl"
        rec = json.dumps(
            {
                "id": "same",
                "source_path": str(demo / "source.sfdk"),
                "target_path": str(demo / "target.sfdk"),
                "method": "lp",
            }
        )
        path.write_text("# sfuda-manifest v1\n" + rec + "\n" + rec + "\n")
        r = run_cli("run", "--manifest", str(path), "--out", str(tmp_path / "o.csv"))
        assert r.returncode == 4

    def test_missing_manifest_exit_3(self, tmp_path):
        r = run_cli("run", "--manifest", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "o.csv"))
        assert r.returncode == 3


def stats_csv(tmp_path, rows, with_pretrain=True):
    path = tmp_path / "records.csv"
    header = "top1,pretrain,accuracy" if with_pretrain else "top1,accuracy"
    path.write_text("\n".join([header] + rows) + "\n")
    return path


class TestStats:
    def test_exact_fit(self, tmp_path):
        rows = []
        for g in (0, 1):
            for x in (0.0, 0.5, 1.0):
                y = (0.3 + 0.25 * g) * x + 0.1 + 0.2 * g
                rows.append(f"{x},{g},{y}")
        path = stats_csv(tmp_path, rows)
        r = run_cli("stats", "--input", str(path), "--model", "interaction")
        assert r.returncode == 0
        lines = r.stdout.strip().splitlines()
        assert lines[0] == "term,estimate,std_error,t_stat,p_value"
        terms = {line.split(",")[0]: line.split(",") for line in lines[1:5]}
        assert float(terms["m"][1]) == pytest.approx(0.3, abs=1e-6)
        assert all(float(t[4]) == 0.0 for t in terms.values())
        assert "# r2=1" in lines

    def test_prune_removes_dm(self, tmp_path):
        rng = np.random.default_rng(0)
        rows = []
        for g in (0, 1):
            for x in rng.uniform(0.1, 0.9, 50):
                y = 0.5 * x + 0.1 + 0.2 * g + 0.02 * rng.standard_normal()
                rows.append(f"{x},{g},{y}")
        path = stats_csv(tmp_path, rows)
        r = run_cli("stats", "--input", str(path), "--model", "interaction", "--prune")
        assert r.returncode == 0
        terms = [line.split(",")[0] for line in r.stdout.splitlines()[1:] if "," in line]
        assert "dm" not in terms
        assert "dq" in terms
        assert "# removed=dm" in r.stdout

    def test_interaction_without_pretrain_exit_4(self, tmp_path):
        path = stats_csv(tmp_path, ["0.1,0.2", "0.5,0.4", "0.9,0.6"], with_pretrain=False)
        r = run_cli("stats", "--input", str(path), "--model", "interaction")
        assert r.returncode == 4

    def test_linear_model(self, tmp_path):
        path = stats_csv(tmp_path, ["0.1,0.2", "0.5,0.4", "0.9,0.6"], with_pretrain=False)
        r = run_cli("stats", "--input", str(path), "--model", "linear")
        assert r.returncode == 0
        assert r.stdout.splitlines()[1].startswith("q,")

    def test_prune_with_linear_exit_2(self, tmp_path):
        path = stats_csv(tmp_path, ["0.1,0.2", "0.5,0.4", "0.9,0.6"], with_pretrain=False)
        r = run_cli("stats", "--input", str(path), "--model", "linear", "--prune")
        assert r.returncode == 2


class TestGen:
    def spec_file(self, tmp_path, **overrides):
        spec = {
            "num_classes": 3,
            "dim": 5,
            "samples_per_class": 10,
            "class_separation": 4.0,
            "noise_sigma": 0.5,
            "seed": 7,
        }
        spec.update(overrides)
        path = tmp_path / "spec.json"
        path.write_text(json.dumps(spec))
        return path

    def test_deterministic(self, tmp_path):
        spec = self.spec_file(tmp_path)
        for name in ("a", "b"):
            r = run_cli(
                "gen", "--spec", str(spec),
                "--out-source", str(tmp_path / f"{name}_s.sfdk"),
                "--out-target", str(tmp_path / f"{name}_t.sfdk"),
            )
            assert r.returncode == 0
        assert (tmp_path / "a_s.sfdk").read_bytes() == (tmp_path / "b_s.sfdk").read_bytes()
        assert (tmp_path / "a_t.sfdk").read_bytes() == (tmp_path / "b_t.sfdk").read_bytes()

    def test_seed_changes_payload_not_shape(self, tmp_path):
        a = self.spec_file(tmp_path)
        run_cli("gen", "--spec", str(a), "--out-source", str(tmp_path / "s1.sfdk"),
                "--out-target", str(tmp_path / "t1.sfdk"))
        b = self.spec_file(tmp_path, seed=8)
        run_cli("gen", "--spec", str(b), "--out-source", str(tmp_path / "s2.sfdk"),
                "--out-target", str(tmp_path / "t2.sfdk"))
        b1, b2 = (tmp_path / "s1.sfdk").read_bytes(), (tmp_path / "s2.sfdk").read_bytes()
        assert len(b1) == len(b2)
        assert b1[:28] == b2[:28]
        assert b1 != b2

    def test_negative_noise_exit_2(self, tmp_path):
        spec = self.spec_file(tmp_path, noise_sigma=-0.5)
        r = run_cli("gen", "--spec", str(spec), "--out-source", str(tmp_path / "s.sfdk"),
                    "--out-target", str(tmp_path / "t.sfdk"))
        assert r.returncode == 2

    def test_bad_json_exit_2(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text("{nope")
        r = run_cli("gen", "--spec", str(path), "--out-source", str(tmp_path / "s.sfdk"),
                    "--out-target", str(tmp_path / "t.sfdk"))
        assert r.returncode == 2
