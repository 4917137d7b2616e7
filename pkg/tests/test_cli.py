import json
import os

import numpy as np
import pytest

from roughvolterra.cli import (
    OUT_DIR_ENV,
    RunManifest,
    emit_csv,
    rk4_augmented,
    run,
    seed_expand,
)
from roughvolterra.laplace import KernelMeasure
from roughvolterra.lift import deterministic_driver
from roughvolterra.algebra import TimeGrid
from roughvolterra.sigma import sigma_catalog


class TestSeedExpand:
    def test_single(self):
        assert seed_expand(42) == [42]

    def test_range_half_open(self):
        assert seed_expand("1..4") == [1, 2, 3]

    def test_deterministic(self):
        assert seed_expand("7..12") == seed_expand("7..12")

    def test_list_passthrough(self):
        assert seed_expand([3, 1, 5]) == [3, 1, 5]

    def test_rejects_bad_specs(self):
        for bad in ("4..4", "5..2", "x..y", [1, 1], [], 1.5, True):
            with pytest.raises(ValueError):
                seed_expand(bad)


class TestEmitCsv:
    def test_empty_table_header_only(self, tmp_path):
        p = tmp_path / "empty.csv"
        emit_csv(p, [("t", []), ("y_1", [])])
        assert p.read_bytes() == b"t,y_1\n"

    def test_round_trip_doubles(self, tmp_path):
        p = tmp_path / "vals.csv"
        vals = np.array([0.1, 1.0 / 3.0, np.pi, 1e-17, 12345.678901234567])
        emit_csv(p, [("t", np.arange(5.0)), ("y_1", vals)])
        rows = p.read_text().splitlines()[1:]
        parsed = np.array([float(r.split(",")[1]) for r in rows])
        assert np.array_equal(parsed, vals)

    def test_lf_line_endings(self, tmp_path):
        p = tmp_path / "lf.csv"
        emit_csv(p, [("a", [1.0, 2.0])])
        assert b"\r" not in p.read_bytes()

    def test_length_mismatch(self, tmp_path):
        with pytest.raises(ValueError):
            emit_csv(tmp_path / "bad.csv", [("a", [1.0]), ("b", [1.0, 2.0])])


class TestManifest:
    def test_duplicate_check_rejected(self):
        m = RunManifest({"kind": "verify"})
        m.add_check("c", True, 0.0, 1.0)
        with pytest.raises(ValueError):
            m.add_check("c", True, 0.0, 1.0)

    def test_hash_depends_on_config(self):
        a = RunManifest({"kind": "verify"})
        b = RunManifest({"kind": "verify", "x": 1})
        assert a.config_hash != b.config_hash


class TestRk4Oracle:
    def test_linear_sigma_exact_solution(self):
        grid = TimeGrid.uniform(64, 1.0)
        driver = deterministic_driver(grid, lambda t: t)
        mea = KernelMeasure.from_atoms([(1.0, 1.0)])
        fld = sigma_catalog("linear", n=1, d=1)
        y, yt = rk4_augmented(driver, mea, fld, np.array([1.0]), dt_max=1e-3)
        assert np.max(np.abs(y[:, 0] - (1.0 + grid.points))) < 1e-10
        assert np.max(np.abs(yt[:, 0, 0] - grid.points)) < 1e-10


def write_config(tmp_path, doc, name="config.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def solve_config(cells=128, tol=1e-4, sigma="sin"):
    return {
        "kind": "solve-young",
        "kernel": {"atoms": [[1.0, 1.0]]},
        "driver": {"kind": "deterministic", "function": "identity", "cells": cells},
        "sigma": {"name": sigma},
        "solver": {"gamma": 1.0, "kappa": 0.45, "sewing_level": 4,
                   "picard_tol": 1e-11, "interval_scheme": "constant", "n_start": 2},
        "initial": [1.0],
        "checks": {"A5_solver_vs_ode": {"tol": tol, "dt": 1e-4}},
    }


class TestRunFlows:
    def test_parse_error_exit_2(self, tmp_path):
        p = tmp_path / "broken.json"
        p.write_text("{not json")
        assert run(str(p), out_dir=str(tmp_path)) == 2

    def test_validation_error_exit_2(self, tmp_path):
        cfg = write_config(tmp_path, {"kind": "nope"})
        assert run(cfg, out_dir=str(tmp_path)) == 2

    def test_missing_seed_rejected(self, tmp_path):
        doc = solve_config()
        doc["driver"] = {"kind": "fbm", "hurst": 0.4, "cells": 16}
        doc["checks"] = {}
        cfg = write_config(tmp_path, doc)
        assert run(cfg, out_dir=str(tmp_path)) == 2

    def test_successful_solve_writes_artifacts(self, tmp_path):
        cfg = write_config(tmp_path, solve_config())
        out = tmp_path / "out"
        assert run(cfg, out_dir=str(out)) == 0
        assert (out / "solution.csv").exists()
        assert (out / "diagnostics.csv").exists()
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert manifest["checks"][0]["name"] == "A5_solver_vs_ode"
        assert manifest["checks"][0]["passed"]

    def test_check_failure_exit_1(self, tmp_path):
        cfg = write_config(tmp_path, solve_config(tol=1e-12))
        assert run(cfg, out_dir=str(tmp_path / "o")) == 1

    def test_solver_failure_exit_3(self, tmp_path):
        doc = solve_config()
        doc["kind"] = "solve-rough"
        doc["sigma"] = {"name": "linear", "params": {"scale": 40.0}}
        doc["solver"].update(
            {"interval_scheme": "harmonic", "n_start": 1, "max_picard": 3,
             "picard_tol": 1e-14, "n_cap": 2}
        )
        doc["checks"] = {}
        cfg = write_config(tmp_path, doc)
        assert run(cfg, out_dir=str(tmp_path / "o")) == 3

    def test_diagnostics_rows_match_intervals(self, tmp_path):
        cfg = write_config(tmp_path, solve_config())
        out = tmp_path / "out"
        run(cfg, out_dir=str(out))
        rows = (out / "diagnostics.csv").read_text().splitlines()
        import roughvolterra as rv

        lift = rv.RoughLift(
            rv.deterministic_driver(rv.TimeGrid.uniform(128, 1.0), lambda t: t),
            rv.KernelMeasure.from_atoms([(1.0, 1.0)]),
            gamma=1.0,
        )
        sol = rv.solve_young(
            lift, sigma_catalog("sin", n=1, d=1), np.array([1.0]),
            rv.SolverConfig(gamma=1.0, kappa=0.45, sewing_level=4, picard_tol=1e-11,
                            interval_scheme="constant", n_start=2),
        )
        assert len(rows) - 1 == len(sol.diagnostics)

    def test_byte_identical_reruns(self, tmp_path):
        doc = {
            "kind": "verify",
            "checks": {
                "A1_algebraic_exactness": {"tol": 1e-12, "trials": 5,
                                            "grid_points": 8, "atoms": 2, "seed": 0}
            },
        }
        cfg = write_config(tmp_path, doc)
        out1, out2 = tmp_path / "r1", tmp_path / "r2"
        assert run(cfg, out_dir=str(out1)) == 0
        assert run(cfg, out_dir=str(out2)) == 0
        assert (out1 / "verify_checks.csv").read_bytes() == (
            out2 / "verify_checks.csv"
        ).read_bytes()
        m1 = json.loads((out1 / "run_manifest.json").read_text())
        m2 = json.loads((out2 / "run_manifest.json").read_text())
        m1.pop("wall_clock_seconds")
        m2.pop("wall_clock_seconds")
        assert m1 == m2

    def test_env_var_output_dir(self, tmp_path, monkeypatch):
        out = tmp_path / "from_env"
        monkeypatch.setenv(OUT_DIR_ENV, str(out))
        cfg = write_config(tmp_path, solve_config())
        assert run(cfg) == 0
        assert (out / "solution.csv").exists()

    def test_check_filter(self, tmp_path):
        doc = {
            "kind": "verify",
            "checks": {
                "A1_algebraic_exactness": {"tol": 1e-12, "trials": 3,
                                            "grid_points": 8, "atoms": 2, "seed": 0},
                "A8_diffusion_degeneration": {"cells": 32, "seed": 1},
            },
        }
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "only_a1"
        assert run(cfg, out_dir=str(out), checks_filter=["A1_algebraic_exactness"]) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        assert [c["name"] for c in manifest["checks"]] == ["A1_algebraic_exactness"]
        assert run(cfg, out_dir=str(out), checks_filter=["missing"]) == 2

    def test_manifest_names_cover_enabled_criteria(self, tmp_path):
        doc = {
            "kind": "verify",
            "checks": {
                "A1_algebraic_exactness": {"tol": 1e-12, "trials": 3,
                                            "grid_points": 8, "atoms": 2, "seed": 0},
                "A8_diffusion_degeneration": {"cells": 32, "seed": 1},
            },
        }
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "cov"
        assert run(cfg, out_dir=str(out)) == 0
        manifest = json.loads((out / "run_manifest.json").read_text())
        names = {c["name"] for c in manifest["checks"]}
        assert set(doc["checks"]) <= names

    def test_convergence_kind(self, tmp_path):
        doc = {
            "kind": "convergence",
            "kernel": {"atoms": [[1.0, 1.0]]},
            "driver": {"kind": "fbm", "hurst": 0.4, "cells": 128, "seeds": "0..3"},
            "sigma": {"name": "tanh"},
            "solver": {"gamma": 0.38, "kappa": 0.35, "sewing_level": 2,
                       "picard_tol": 1e-10, "interval_scheme": "harmonic", "n_start": 4},
            "initial": [0.3],
            "levels": [5, 6, 7, 8],
            "checks": {"A7_rough_self_convergence":
                       {"rate_threshold": -2.0, "min_passing": 3}},
        }
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "conv"
        assert run(cfg, out_dir=str(out)) == 0
        rates = (out / "rates.csv").read_text().splitlines()
        assert len(rates) - 1 == 3

    def test_ensemble_and_covariance_kinds(self, tmp_path):
        doc = {
            "kind": "covariance-check",
            "stat": {"name": "x1_tilde_value", "hurst": 0.7, "cells": 64,
                     "xi": 1.0, "seeds": "0..400"},
            "checks": {"A6_fbm_young_covariance": {"se_factor": 3.0}},
        }
        cfg = write_config(tmp_path, doc)
        out = tmp_path / "cov6"
        code = run(cfg, out_dir=str(out))
        manifest = json.loads((out / "run_manifest.json").read_text())
        detail = manifest["checks"][0]["details"]
        assert detail["quadrature"] > 0
        # 400 seeds is a smoke run; the full-size band is acceptance work
        assert code in (0, 1)
        ens = (out / "ensemble.csv").read_text().splitlines()
        assert len(ens) - 1 == 400
