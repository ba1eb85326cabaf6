"""CLI: validation, exit codes, artifact content, byte-level determinism."""

import json

from percospec.cli import main


def write_config(tmp_path, name, cfg):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return str(path)


def base_config(out, **extra):
    cfg = {
        "seed": 424242,
        "workers": 1,
        "output_dir": str(out),
    }
    cfg.update(extra)
    return cfg


# ---------------------------------------------------------------------------
# validation and exit codes
# ---------------------------------------------------------------------------

def test_missing_seed_is_validation_error(tmp_path):
    cfg = {"group": {"kind": "free_abelian", "rank": 1},
           "window": {"radius": 4}, "output_dir": str(tmp_path / "o")}
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["growth", "--config", path]) == 1


def test_seed_flag_satisfies_requirement(tmp_path):
    cfg = {"group": {"kind": "free_abelian", "rank": 1},
           "window": {"radius": 10}, "output_dir": str(tmp_path / "o")}
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["growth", "--config", path, "--seed", "7"]) == 0


def test_unknown_key_rejected(tmp_path):
    cfg = base_config(tmp_path / "o", group={"kind": "free_abelian", "rank": 1},
                      window={"radius": 4}, typo_key=1)
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["growth", "--config", path]) == 1


def test_unknown_nested_key_rejected(tmp_path):
    cfg = base_config(tmp_path / "o",
                      group={"kind": "free_abelian", "rank": 1, "oops": 2},
                      window={"radius": 4})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["growth", "--config", path]) == 1


def test_budget_exceeded_exit_code(tmp_path, monkeypatch):
    monkeypatch.setenv("PERCOSPEC_BUDGET_VERTICES", "10")
    cfg = base_config(tmp_path / "o", group={"kind": "free_abelian", "rank": 2},
                      window={"radius": 12})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["growth", "--config", path]) == 2


def test_bad_config_file(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    assert main(["growth", "--config", str(path)]) == 1


def test_ids_requires_exactly_one_window_kind(tmp_path):
    cfg = base_config(tmp_path / "o",
                      group={"kind": "lamplighter", "modulus": 2},
                      percolation={"kind": "site", "p": 0.5},
                      window={"radius": 4, "depth": 2},
                      spectra={"n_samples": 10,
                               "energy_grid": {"values": [1.0]}})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["ids", "--config", path]) == 1


def test_chain_requires_radius(tmp_path):
    cfg = base_config(tmp_path / "o",
                      group={"kind": "free_abelian", "rank": 2},
                      percolation={"kind": "site", "p": 0.5},
                      window={"depth": 2},
                      spectra={"n_samples": 10,
                               "energy_grid": {"values": [1.0]}})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["chain", "--config", path]) == 1


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def test_growth_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(out, group={"kind": "free_abelian", "rank": 2},
                      window={"radius": 20}, fits={"growth_n_min": 8})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["growth", "--config", path]) == 0
    fit = json.loads((out / "growth_fit.json").read_text())
    assert fit["classification"] == "polynomial"
    assert abs(fit["loglog"]["slope"] - 2.0) < 0.1
    lines = (out / "growth.csv").read_text().strip().splitlines()
    assert lines[0] == "n,volume"
    assert lines[1] == "0,1"
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "growth"
    assert "growth.csv" in manifest["outputs"]


def test_percolate_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(out, group={"kind": "free_abelian", "rank": 1},
                      percolation={"kind": "site", "p": 0.5,
                                   "n_samples": 200, "tail_max": 6},
                      window={"radius": 60})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["percolate", "--config", path]) == 0
    rep = json.loads((out / "percolate_report.json").read_text())
    assert abs(rep["deleted_density"]["value"] - 0.5) < 0.05
    assert rep["deleted_density_expected"] == 0.5


def test_ids_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(
        out, group={"kind": "free_abelian", "rank": 1},
        percolation={"kind": "site", "p": 0.5},
        window={"radius": 40},
        spectra={"boundary_conditions": ["neumann"], "n_samples": 20,
                 "energy_grid": {"min": 0.0, "max": 4.0, "points": 5}})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["ids", "--config", path]) == 0
    lines = (out / "ids_neumann.csv").read_text().strip().splitlines()
    assert lines[0] == "E,mean,stderr,n_samples,bc,model,p,radius,seed"
    assert len(lines) == 6
    rep = json.loads((out / "ids_report.json").read_text())
    assert abs(rep["neumann"]["n_at_zero"] - 0.25) < 0.05


def test_free_ids_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(
        out, group={"kind": "free_abelian", "rank": 1},
        spectra={"energy_grid": {"values": [0.5, 2.0]}},
        window={"radius": 30})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["free-ids", "--config", path]) == 0
    lines = (out / "free_ids.csv").read_text().strip().splitlines()
    assert lines[2].startswith("2,0.5")
    assert (out / "free_ids_ball.csv").exists()


def test_bounds_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(out, group={"kind": "free_abelian", "rank": 2},
                      fits={"dirichlet_n_max": 5, "line_max": 16})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["bounds", "--config", path]) == 0
    rep = json.loads((out / "bounds_report.json").read_text())
    assert rep["dirichlet_upper"]["constants"]["gamma_D"] > 0
    assert rep["adjacency_lower_balls"]["violations"] == 0


def test_exponents_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(out, group={"kind": "free_abelian", "rank": 1},
                      percolation={"kind": "site", "p": 0.5},
                      window={"radius": 30},
                      fits={"growth_n_min": 8, "line_max": 48})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["exponents", "--config", path]) == 0
    reports = json.loads((out / "exponents.json").read_text())
    kinds = {r["kind"] for r in reports}
    assert {"growth", "van-hove", "lifshitz-neumann",
            "sandwich-neumann", "lifshitz-adjacency"} <= kinds
    by_kind = {r["kind"]: r for r in reports}
    assert abs(by_kind["van-hove"]["slope"] - 0.5) < 0.02
    assert by_kind["sandwich-neumann"]["a"] > 0


def test_chain_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(
        out, group={"kind": "free_abelian", "rank": 2},
        percolation={"kind": "site", "p": 0.5},
        window={"radius": 4},
        spectra={"n_samples": 10, "couplings": [1, 10],
                 "energy_grid": {"min": 0.0, "max": 9.0, "points": 10}})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["chain", "--config", path]) == 0
    rep = json.loads((out / "chain_report.json").read_text())
    assert rep["per_sample_ordering_holds"]
    assert rep["ordering_violations"] == 0


def test_lamplighter_artifacts(tmp_path):
    out = tmp_path / "o"
    cfg = base_config(out, group={"kind": "lamplighter", "modulus": 2},
                      window={"depths": [2, 3], "return_max": 4})
    path = write_config(tmp_path, "c.json", cfg)
    assert main(["lamplighter", "--config", path]) == 0
    rep = json.loads((out / "lamplighter_report.json").read_text())
    assert rep["return_probability"]["first_value"] == 0.25
    assert rep["return_probability"]["neg_log_increasing"]
    assert rep["tetrahedron"]["2"]["eigenvalue_gap"] <= 1e-8


# ---------------------------------------------------------------------------
# determinism
# ---------------------------------------------------------------------------

def _run_twice(tmp_path, subcommand, cfg_body, files):
    outs = []
    for tag, workers in (("a", 1), ("b", 8)):
        out = tmp_path / tag
        cfg = base_config(out, **cfg_body)
        cfg["workers"] = workers
        path = write_config(tmp_path, f"{tag}.json", cfg)
        assert main([subcommand, "--config", path]) == 0
        outs.append(out)
    for name in files:
        a = (outs[0] / name).read_bytes()
        b = (outs[1] / name).read_bytes()
        assert a == b, f"{name} differs between workers 1 and 8"


def test_ids_byte_determinism_across_workers(tmp_path):
    _run_twice(tmp_path, "ids",
               dict(group={"kind": "free_abelian", "rank": 1},
                    percolation={"kind": "site", "p": 0.5},
                    window={"radius": 30},
                    spectra={"boundary_conditions": ["neumann", "adjacency"],
                             "n_samples": 16,
                             "energy_grid": {"min": 0.0, "max": 4.0,
                                             "points": 5}}),
               ["ids_neumann.csv", "ids_adjacency.csv",
                "ids_neumann_bracket.csv", "ids_report.json"])


def test_percolate_byte_determinism_across_workers(tmp_path):
    _run_twice(tmp_path, "percolate",
               dict(group={"kind": "free_abelian", "rank": 2},
                    percolation={"kind": "bond", "p": 0.3, "n_samples": 120,
                                 "tail_max": 5},
                    window={"radius": 8}),
               ["tail.csv", "percolate_report.json"])


def test_manifest_digest_excludes_workers(tmp_path):
    digests = []
    for tag, workers in (("a", 1), ("b", 3)):
        out = tmp_path / tag
        cfg = base_config(out, group={"kind": "free_abelian", "rank": 1},
                          window={"radius": 10})
        cfg["workers"] = workers
        path = write_config(tmp_path, f"{tag}.json", cfg)
        assert main(["growth", "--config", path]) == 0
        digests.append(json.loads((out / "manifest.json").read_text())
                       ["config_digest"])
    assert digests[0] == digests[1]
