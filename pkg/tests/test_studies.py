"""Study configs, sweep execution, report emission, and the CLI."""

import numpy as np
import pytest

from resonalens import (NumericalError, ValidationError, hankel_resonances,
                        load_config, run_study, validate_config)
from resonalens.cli import main
from resonalens.studies import ROWS_HEADER, SUMMARY_HEADER, emit_report


def _base(study, profile=None, problem=None, **extra):
    cfg = {
        "profile": profile or {"kind": "affine", "strength": 3.0, "r_start": 1.0},
        "problem": problem or {"n": 2, "degree": 2},
        "study": {"type": study, **extra},
    }
    return cfg


def _annulus_cfg(elements=(8, 16, 32)):
    return {
        "profile": {"kind": "unscaled", "verification_only": True},
        "problem": {"n": 0, "degree": 2},
        "study": {"type": "verify-annulus", "radius": 2.0,
                  "elements": list(elements), "count": 1},
    }


def _commutator_cfg():
    # the affine symbol is constant, so the commutator is identically zero
    return _base("commutator", epsilon=0.05, r_hat1=1.5, r_hat2=3.0,
                 radius=3.0, elements=[4, 8, 12])


def test_validate_config_accepts_a_minimal_commutator_study():
    plan = validate_config(_commutator_cfg())
    assert plan.study == "commutator"
    assert plan.profile.kind == "affine"
    assert plan.params["omega"] == 1.0 + 0.0j
    # radius defaults to the outer joint when omitted
    cfg = _base("commutator", epsilon=0.05, r_hat1=1.5, r_hat2=3.0, elements=[4])
    assert validate_config(cfg).params["radius"] == 3.0


def test_validate_config_rejects_structural_mistakes():
    with pytest.raises(ValidationError):
        validate_config({"study": {"type": "mesh"}})  # no profile
    with pytest.raises(ValidationError):
        validate_config({"profile": {"kind": "affine"}})  # no study
    cfg = _base("mesh", radius=4.0, elements=[8, 16, 32])
    cfg["typo_section"] = {}
    with pytest.raises(ValidationError, match="unknown"):
        validate_config(cfg)
    cfg = _base("mesh", radius=4.0, elements=[8, 16, 32], spacing=0.1)
    with pytest.raises(ValidationError, match="unknown keys"):
        validate_config(cfg)
    with pytest.raises(ValidationError):
        validate_config(_base("spiral", radius=4.0, elements=[8]))


def test_validate_config_rejects_inconsistent_parameters():
    with pytest.raises(ValidationError, match="equal length"):
        validate_config(_base("diagonal", radii=[2.0, 3.0, 4.0], elements=[8, 16]))
    with pytest.raises(ValidationError, match="strictly increasing"):
        validate_config(_base("mesh", radius=4.0, elements=[16, 8, 32]))
    with pytest.raises(ValidationError, match="r_hat1"):
        validate_config(_base("commutator", epsilon=0.05, r_hat1=1.5, r_hat2=3.0,
                              radius=1.2, elements=[4]))
    with pytest.raises(ValidationError):
        validate_config(_base("coercivity", radius=3.0, elements=8, omegas=[]))
    with pytest.raises(ValidationError):
        validate_config(_base("coercivity", radius=3.0, elements=8, omegas=[[0.0, 0.0]]))
    cfg = _base("mesh", radius=4.0, elements=[8, 16, 32])
    cfg["problem"]["window"] = [1.0, 0.0, -1.0, 1.0]
    with pytest.raises(ValidationError, match="window"):
        validate_config(cfg)
    cfg = _base("mesh", radius=4.0, elements=[8, 16, 32])
    cfg["problem"]["line_margin"] = -0.1
    with pytest.raises(ValidationError, match="line_margin"):
        validate_config(cfg)


def test_validate_config_rejects_profile_and_study_mismatches():
    # resonance sweeps need a scaled profile and a nonzero mode
    cfg = _base("mesh", profile={"kind": "unscaled", "verification_only": True},
                radius=4.0, elements=[8, 16, 32])
    with pytest.raises(ValidationError, match="scaled"):
        validate_config(cfg)
    cfg = _base("mesh", problem={"n": 0, "degree": 2}, radius=4.0, elements=[8, 16])
    with pytest.raises(ValidationError, match="n >= 1"):
        validate_config(cfg)
    cfg = _base("verify-annulus", radius=2.0, elements=[8, 16, 32])
    with pytest.raises(ValidationError, match="unscaled"):
        validate_config(cfg)
    # the stretch must not start inside the computational boundary
    cfg = _base("mesh", profile={"kind": "affine", "r_start": 0.5},
                radius=4.0, elements=[8, 16])
    cfg["problem"]["r_b"] = 1.0
    with pytest.raises(ValidationError, match="r_start"):
        validate_config(cfg)


def test_validate_config_couples_exact_studies_to_a_map():
    cfg = _base("exact", elements=[8, 16])
    with pytest.raises(ValidationError, match="exact_map"):
        validate_config(cfg)
    cfg["exact_map"] = {"kind": "log", "r_inf": 2.0}
    assert validate_config(cfg).exact_map.kind == "log"
    cfg["profile"] = {"kind": "power", "exponent": 2}
    with pytest.raises(ValidationError, match="power"):
        validate_config(cfg)
    cfg = _base("mesh", radius=4.0, elements=[8, 16])
    cfg["exact_map"] = {"kind": "log", "r_inf": 2.0}
    with pytest.raises(ValidationError, match="exact"):
        validate_config(cfg)


def test_load_config_wraps_file_and_syntax_errors(tmp_path):
    with pytest.raises(ValidationError, match="cannot read"):
        load_config(tmp_path / "missing.toml")
    bad = tmp_path / "bad.toml"
    bad.write_text("[profile\nkind = affine")
    with pytest.raises(ValidationError, match="invalid TOML"):
        load_config(bad)


def test_annulus_study_passes_all_checks():
    report = run_study(validate_config(_annulus_cfg()))
    assert report.passed, [(c.name, c.detail) for c in report.checks]
    assert {c.name for c in report.checks} == {
        "tracked-captured", "fit-rate", "fit-quality", "final-error"}
    assert len(report.rows) == 3
    assert 3.5 <= report.fit.slope <= 4.5
    assert report.summary["model"] == "algebraic"


def test_thread_pool_matches_the_serial_sweep():
    serial = run_study(validate_config(_annulus_cfg()))
    threaded = run_study(validate_config(_annulus_cfg()), jobs=3)
    assert [r.param_value for r in serial.rows] == [r.param_value for r in threaded.rows]
    assert [r.omega for r in serial.rows] == [r.omega for r in threaded.rows]
    with pytest.raises(ValidationError):
        run_study(validate_config(_annulus_cfg()), jobs=0)


def test_dense_solver_budget_is_enforced():
    plan = validate_config(_annulus_cfg(elements=(8, 16, 1200)))
    with pytest.raises(ValidationError, match="budget"):
        run_study(plan)


def test_coercivity_study_certifies_base_and_refined_meshes():
    cfg = _base("coercivity", profile={"kind": "affine", "strength": 1.0},
                problem={"n": 0, "degree": 2}, radius=3.0, elements=12,
                omegas=[[1.0, 0.0], [1.0, 2.0]])
    report = run_study(validate_config(cfg))
    assert report.passed
    assert len(report.rows) == 4  # two frequencies, base and refined mesh each


def test_commutator_study_reports_the_constant_case():
    report = run_study(validate_config(_commutator_cfg()))
    assert [c.name for c in report.checks] == ["constant-commutator"]
    assert report.passed
    assert report.summary["final_error"] <= 1e-14


def test_reports_are_emitted_byte_identically(tmp_path):
    plan = validate_config(_annulus_cfg())
    out1, out2 = tmp_path / "a", tmp_path / "b"
    emit_report(run_study(plan), out1)
    emit_report(run_study(plan), out2)
    for name in ("rows.csv", "summary.csv", "tracked_0.dat"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()
    rows = (out1 / "rows.csv").read_text().splitlines()
    assert rows[0] == ROWS_HEADER
    assert len(rows) == 4
    summary = (out1 / "summary.csv").read_text().splitlines()
    assert summary[0] == SUMMARY_HEADER
    # wall time is measured in memory but pinned in the serialized rows
    assert all(line.endswith(",0") for line in rows[1:])


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


ANNULUS_TOML = """
[profile]
kind = "unscaled"
verification_only = true

[problem]
n = 0
degree = 2

[study]
type = "verify-annulus"
radius = 2.0
elements = [8, 16, 32]
count = 1
"""


def test_cli_validate_and_run(tmp_path, capsys):
    cfg = _write(tmp_path, "annulus.toml", ANNULUS_TOML)
    assert main(["validate", cfg]) == 0
    assert "config ok" in capsys.readouterr().out
    assert main(["run", cfg, "--out", str(tmp_path / "out"), "--check"]) == 0
    out = capsys.readouterr().out
    assert "fit: algebraic" in out
    assert (tmp_path / "out" / "rows.csv").exists()


def test_cli_reports_invalid_configs(tmp_path, capsys):
    cfg = _write(tmp_path, "bad.toml", "[profile]\nkind = 'spiral'\n")
    assert main(["validate", cfg]) == 1
    assert "error:" in capsys.readouterr().err
    assert main(["validate", str(tmp_path / "missing.toml")]) == 1
    capsys.readouterr()
    assert main(["no-such-command"]) == 1


def test_cli_run_check_fails_on_a_saturating_sweep(tmp_path, capsys):
    # refining the mesh cannot push the frequency error below the
    # truncation floor of the finite radius, so the rate check fails
    toml = """
[profile]
kind = "affine"
strength = 3.0
r_start = 1.0

[problem]
n = 2
degree = 2

[study]
type = "mesh"
radius = 4.0
elements = [8, 12, 16, 24]
"""
    cfg = _write(tmp_path, "floor.toml", toml)
    assert main(["run", cfg, "--out", str(tmp_path / "out")]) == 0
    capsys.readouterr()
    assert main(["run", cfg, "--out", str(tmp_path / "out"), "--check"]) == 3
    assert "FAIL" in capsys.readouterr().out


def test_cli_maps_numerical_failures_to_exit_code_2(tmp_path, capsys, monkeypatch):
    import resonalens.cli as cli_mod

    def boom(plan, jobs=1):
        raise NumericalError("synthetic breakdown")

    monkeypatch.setattr(cli_mod, "run_study", boom)
    cfg = _write(tmp_path, "annulus.toml", ANNULUS_TOML)
    assert main(["run", cfg]) == 2
    assert "synthetic breakdown" in capsys.readouterr().err


def test_cli_oracle_prints_the_closed_form_resonances(capsys):
    assert main(["oracle", "--n", "2", "--rb", "1.0"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 2
    printed = [complex(float(a), float(b)) for a, b in (ln.split() for ln in lines)]
    np.testing.assert_allclose(printed, hankel_resonances(2, 1.0), atol=1e-15)
