import json
from pathlib import Path

import numpy as np
import pytest

from spheroidsim import (
    SimConfig, effective_diffusion, grid_from_csv, porosity, sphere_volume,
)
from spheroidsim.cli import main, run


def write_config(tmp_path: Path, **overrides) -> Path:
    cfg = {
        "scenario": "one",
        "n_particles": 3000,
        "time_step_s": 0.5,
        "t_end_s": 10,
        "snapshot_times_s": [5, 10],
        "diffusion_m2_s": 1e-9,
        "porosity": 0.1349,
        "master_seed": 3,
        "output_dir": str(tmp_path / "out"),
    }
    cfg.update(overrides)
    path = tmp_path / "config.json"
    path.write_text(json.dumps(cfg))
    return path


class TestSimulateCommand:
    def test_run_writes_expected_files(self, tmp_path):
        rc = main(["simulate", "--config", str(write_config(tmp_path))])
        assert rc == 0
        outdir = tmp_path / "out" / "one"
        names = sorted(p.name for p in outdir.iterdir())
        assert names == [
            "A_t10.csv", "A_t10.ppm", "A_t10.scale.txt",
            "A_t5.csv", "A_t5.ppm", "A_t5.scale.txt",
            "manifest.json",
        ]
        grid = grid_from_csv((outdir / "A_t10.csv").read_text(encoding="utf-8"))
        assert grid.total == 3000  # in-grid plus out-of-extent

    def test_conversion_run_emits_both_species(self, tmp_path):
        cfg = write_config(tmp_path, scenario="four", conversion_rate_per_s=0.01,
                           t_end_s=4, snapshot_times_s=[2, 4])
        assert main(["simulate", "--config", str(cfg), "--no-images"]) == 0
        outdir = tmp_path / "out" / "four"
        names = sorted(p.name for p in outdir.iterdir())
        assert names == ["A_t2.csv", "A_t4.csv", "E_t2.csv", "E_t4.csv", "manifest.json"]
        a = grid_from_csv((outdir / "A_t4.csv").read_text(encoding="utf-8"))
        e = grid_from_csv((outdir / "E_t4.csv").read_text(encoding="utf-8"))
        assert a.total + e.total == 3000

    def test_manifest_echo_fidelity(self, tmp_path):
        cfg_path = write_config(tmp_path, porosity=None,
                                n_cells=24000, cell_volume_m3=3.14e-15)
        raw = json.loads(cfg_path.read_text())
        del raw["porosity"]
        cfg_path.write_text(json.dumps(raw))
        assert main(["simulate", "--config", str(cfg_path), "--no-images"]) == 0
        manifest = json.loads((tmp_path / "out" / "one" / "manifest.json").read_text())
        echoed = manifest["config"]
        eps = porosity(sphere_volume(echoed["spheroid_radius_um"] * 1e-6),
                       echoed["n_cells"], echoed["cell_volume_m3"])
        assert manifest["derived"]["porosity"] == eps
        assert manifest["derived"]["d_eff_m2_s"] == effective_diffusion(
            echoed["diffusion_m2_s"], eps)
        assert echoed["n_particles"] == 3000
        assert manifest["diagnostics"]["n_steps"] == 20

    def test_reproducible_csv_bytes(self, tmp_path):
        for sub in ("a", "b"):
            cfg = write_config(tmp_path, output_dir=str(tmp_path / sub))
            assert main(["simulate", "--config", str(cfg), "--no-images"]) == 0
        a = (tmp_path / "a" / "one" / "A_t10.csv").read_bytes()
        b = (tmp_path / "b" / "one" / "A_t10.csv").read_bytes()
        assert a == b

    def test_worker_count_does_not_change_output(self, tmp_path):
        outputs = {}
        for workers in (1, 4):
            cfg = write_config(tmp_path, output_dir=str(tmp_path / f"w{workers}"),
                               n_particles=40000)
            rc = main(["simulate", "--config", str(cfg), "--no-images",
                       "--workers", str(workers)])
            assert rc == 0
            outputs[workers] = (tmp_path / f"w{workers}" / "one" / "A_t10.csv").read_bytes()
        assert outputs[1] == outputs[4]

    def test_preset_only_invocation(self, tmp_path):
        rc = main(["simulate", "--preset", "transparent", "--seed", "11",
                   "--out", str(tmp_path / "p"), "--no-images"])
        assert rc == 0
        files = list((tmp_path / "p" / "transparent").glob("A_t*.csv"))
        assert len(files) == 4  # default snapshot schedule

    def test_overrides_beat_config(self, tmp_path):
        cfg = write_config(tmp_path)
        rc = main(["simulate", "--config", str(cfg), "--preset", "two",
                   "--out", str(tmp_path / "o"), "--no-images"])
        assert rc == 0
        assert (tmp_path / "o" / "two" / "A_t10.csv").exists()

    def test_needs_config_or_preset(self, capsys):
        assert main(["simulate"]) == 2
        assert "need --config" in capsys.readouterr().err

    def test_bad_config_exits_nonzero(self, tmp_path, capsys):
        path = tmp_path / "bad.json"
        path.write_text(json.dumps({"porosity": 0.1, "n_particles": 0}))
        assert main(["simulate", "--config", str(path)]) == 2
        assert "n_particles" in capsys.readouterr().err

    def test_unwritable_output_dir(self, tmp_path, capsys):
        blocker = tmp_path / "blocked"
        blocker.write_text("a file, not a directory")
        cfg = write_config(tmp_path, output_dir=str(blocker))
        assert main(["simulate", "--config", str(cfg)]) == 1
        assert "error" in capsys.readouterr().err


class TestRenderCommand:
    def test_rerender_matches_run_output(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["simulate", "--config", str(cfg)]) == 0
        outdir = tmp_path / "out" / "one"
        target = tmp_path / "again.ppm"
        rc = main(["render", "--grid", str(outdir / "A_t10.csv"), "--out", str(target)])
        assert rc == 0
        assert target.read_bytes() == (outdir / "A_t10.ppm").read_bytes()
        assert target.with_suffix(".scale.txt").exists()

    def test_log_scale_option(self, tmp_path):
        cfg = write_config(tmp_path)
        assert main(["simulate", "--config", str(cfg), "--no-images"]) == 0
        src = tmp_path / "out" / "one" / "A_t10.csv"
        lin, log = tmp_path / "lin.ppm", tmp_path / "log.ppm"
        assert main(["render", "--grid", str(src), "--out", str(lin)]) == 0
        assert main(["render", "--grid", str(src), "--out", str(log), "--scale", "log"]) == 0
        assert lin.read_bytes() != log.read_bytes()


class TestValidateCommand:
    def test_quick_properties_suite(self, capsys):
        rc = main(["validate", "--suite", "properties", "--quick"])
        out = capsys.readouterr().out
        assert rc == 0
        for name in ("mass-conservation", "symmetry", "ring-entrapment",
                     "uptake-gradient", "determinism-workers"):
            assert f"[PASS] {name}" in out

    def test_exit_code_reflects_failures(self, capsys):
        # The analytic suite contains the known-red table-value check, so a
        # failing check must surface as a nonzero exit.
        rc = main(["validate", "--suite", "analytic", "--quick"])
        out = capsys.readouterr().out
        assert rc == 1
        assert "[FAIL] effective-diffusion-reproduction" in out
        assert "[PASS] porosity-reproduction" in out


class TestRunFunction:
    def test_run_accepts_config_object(self, tmp_path):
        cfg = SimConfig(scenario="transparent", n_particles=500, t_end_s=5.0,
                        snapshot_times_s=(5.0,), output_dir=str(tmp_path),
                        emit_ppm=False)
        assert run(cfg) == 0
        grid = grid_from_csv((tmp_path / "transparent" / "A_t5.csv").read_text(encoding="utf-8"))
        assert grid.total == 500
        assert np.all(grid.counts >= 0)
