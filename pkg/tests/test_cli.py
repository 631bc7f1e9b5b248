"""Configuration parsing, output files and exit codes of the command line."""

import csv
import json

import numpy as np
import pytest

from spinstat import linalg
from spinstat.cli import output
from spinstat.cli.config import (
    DEFAULTS,
    EXPERIMENTS,
    ParseError,
    ValidationError,
    matrix_value,
    parse_config,
    serialize,
)
from spinstat.cli.main import EXIT_ERROR, EXIT_FAILED, EXIT_OK, main
from spinstat.quasilocal import Lattice, Region
from spinstat.states import DensityState

KMS = {"n": 2, "J": 1, "h": 0.5, "run": {"experiment": "kms-check", "pairs": 5}}


def write(tmp_path, cfg, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg) if not isinstance(cfg, str) else cfg)
    return str(path)


# --- parsing -----------------------------------------------------------------


def test_minimal_flat_config_gets_defaults():
    cfg = parse_config(json.dumps({"n": 4, "J": 1, "h": 0.5, "run": "kms-check"}))
    assert cfg.experiment == "kms-check"
    assert cfg.model == {"builder": "ising", "n": 4, "J": 1, "h": 0.5}
    assert cfg.params == DEFAULTS["kms-check"]
    assert cfg.partition is None


@pytest.mark.parametrize(
    "text",
    [
        json.dumps({"n": 4, "J": 1, "h": 0.5, "run": "kms-check"}),
        json.dumps({"n": 3, "J": 0.5, "h": 1, "seed": 7, "run": {"experiment": "evolve-compare", "t_grid": [0.01, 0.02]}}),
        json.dumps({"run": "klein-sweep"}),
        json.dumps({"run": {"experiment": "positivity-trend", "ks": [1, 2]}}),
        json.dumps(
            {
                "n": 3, "J": 0.5, "h": 1,
                "partition": {"system": [2], "reservoirs": [[1], [3]], "betas": [2, 1]},
                "run": "ness-balance",
            }
        ),
        json.dumps(
            {
                "model": {
                    "builder": "explicit", "sites": 2,
                    "terms": [{"region": [1, 2], "matrix": "XX"}, {"region": [1], "matrix": "Z", "coeff": 0.3}],
                },
                "run": "gibbs-factorization",
            }
        ),
    ],
)
def test_serialize_parse_round_trip(text):
    cfg = parse_config(text)
    again = parse_config(serialize(cfg))
    assert again == cfg
    assert serialize(again) == serialize(cfg)


def test_experiment_argument_fills_missing_run():
    cfg = parse_config(json.dumps({"n": 2, "J": 1, "h": 0.5}), "kms-check")
    assert cfg.experiment == "kms-check"


def test_mismatched_experiment_rejected():
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(KMS), "modular-verify")
    assert exc.value.field == "run.experiment"


def test_parse_error_has_position():
    text = '{\n  "n": 4,\n  "J": ,\n}'
    with pytest.raises(ParseError) as exc:
        parse_config(text)
    assert exc.value.line == 3
    assert exc.value.column == 8


def test_overlapping_partition_rejected():
    raw = {
        "n": 3, "J": 1, "h": 1,
        "partition": {"system": [2], "reservoirs": [[1, 2], [3]], "betas": [1, 1]},
        "run": "ness-balance",
    }
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(raw))
    assert exc.value.field == "partition"


@pytest.mark.parametrize(
    "raw, field",
    [
        ({"n": 2, "J": 1, "h": 0.5, "colour": 1, "run": "kms-check"}, "colour"),
        ({"n": 2, "J": 1, "h": 0.5, "run": {"experiment": "kms-check", "bogus": 1}}, "run.bogus"),
        ({"n": 2, "J": 1, "h": 0.5, "run": {"experiment": "kms-check", "betas": []}}, "run.betas"),
        ({"n": 2, "J": 1, "run": "kms-check"}, "h"),
        ({"n": 2, "J": 1, "h": 0.5, "run": "no-such"}, "run.experiment"),
        ({"n": 2, "J": 1, "h": 0.5, "run": {"experiment": "kms-check", "kms_tol": 0}}, "run.kms_tol"),
        ({"n": 2, "J": 1, "h": 0.5, "seed": -1, "run": "kms-check"}, "seed"),
        ({"run": "kms-check"}, "model"),
        ({"n": 2, "J": 1, "h": 0.5, "run": "ness-balance"}, "partition"),
        ({"n": 3, "J": 1, "h": 0.5, "run": "modular-verify"}, "model"),
        ({"model": {"builder": "potts"}, "run": "kms-check"}, "model.builder"),
        (
            {"model": {"builder": "explicit", "sites": 1, "terms": [{"region": [2], "matrix": "Z"}]}, "run": "kms-check"},
            "model.terms[0].region",
        ),
        (
            {
                "n": 3, "J": 1, "h": 1,
                "partition": {"system": [2], "reservoirs": [[1], [3]], "betas": [1]},
                "run": "ness-balance",
            },
            "partition.betas",
        ),
    ],
)
def test_validation_errors_name_the_field(raw, field):
    with pytest.raises(ValidationError) as exc:
        parse_config(json.dumps(raw))
    assert exc.value.field == field


def test_every_experiment_has_defaults():
    assert set(EXPERIMENTS) == set(DEFAULTS)


def test_matrix_value_pauli_and_pairs():
    lat = Lattice.chain(2)
    np.testing.assert_array_equal(
        matrix_value("XZ", lat, Region([1, 2]), "m"), np.kron(linalg.PAULI["X"], linalg.PAULI["Z"])
    )
    m = matrix_value([[1, [0, -1]], [[0, 1], 2]], lat, Region([1]), "m")
    np.testing.assert_array_equal(m, np.array([[1, -1j], [1j, 2]]))
    with pytest.raises(ValidationError):
        matrix_value("X", lat, Region([1, 2]), "m")
    with pytest.raises(ValidationError):
        matrix_value("Q", lat, Region([1]), "m")
    with pytest.raises(ValidationError):
        matrix_value([[1, 0]], lat, Region([1]), "m")


# --- output helpers ----------------------------------------------------------


def test_fmt_is_round_trippable():
    for x in (0.1, 1 / 3, -2.5e-17, 1e300):
        assert float(output.fmt(x)) == x
    assert output.fmt(True) == "true"
    assert output.fmt(None) == ""
    assert output.fmt(float("inf")) == "inf"


def test_matrix_round_trip(rng, tmp_path):
    m = rng.normal(size=(3, 5)) + 1j * rng.normal(size=(3, 5))
    np.testing.assert_array_equal(output.loads_matrix(output.dumps_matrix(m)), m)
    path = str(tmp_path / "m.txt")
    output.dump_matrix(path, m)
    np.testing.assert_array_equal(output.load_matrix(path), m)
    with pytest.raises(ValueError):
        output.loads_matrix("matrix 2 2\n1 0 0 0\n")


def test_state_round_trip(rng, tmp_path):
    lat = Lattice.chain(3)
    g = rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4))
    rho = g @ g.conj().T
    state = DensityState(lat, Region([2, 3]), rho / np.trace(rho).real)
    path = str(tmp_path / "s.txt")
    output.dump_state(path, state)
    back = output.load_state(path, lat)
    assert back.region == state.region
    np.testing.assert_array_equal(back.matrix, state.matrix)
    free = output.loads_state(output.dumps_state(state))
    assert list(free.region) == [2, 3]


# --- main and exit codes -----------------------------------------------------


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def test_kms_check_exit_ok_and_files(tmp_path, capsys):
    out = tmp_path / "out"
    code = main(["kms-check", "--config", write(tmp_path, KMS), "--out", str(out)])
    assert code == EXIT_OK
    rows = read_csv(out / "results.csv")
    assert rows and list(rows[0]) == list(output.COLUMNS)
    assert all(r["passed"] in ("true", "n/a") for r in rows)
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) == {"experiment", "pass_count", "fail_count", "max_residual", "elapsed_seconds"}
    assert summary["fail_count"] == 0 and summary["pass_count"] > 0
    assert "kms-check" in capsys.readouterr().out


def test_same_seed_gives_identical_csv(tmp_path):
    path = write(tmp_path, KMS)
    main(["kms-check", "--config", path, "--out", str(tmp_path / "a")])
    main(["kms-check", "--config", path, "--out", str(tmp_path / "b")])
    main(["kms-check", "--config", path, "--out", str(tmp_path / "c"), "--seed", "99"])
    a = (tmp_path / "a" / "results.csv").read_bytes()
    assert a == (tmp_path / "b" / "results.csv").read_bytes()
    assert a != (tmp_path / "c" / "results.csv").read_bytes()


def test_impossible_tolerance_exits_failed(tmp_path, capsys):
    cfg = json.loads(json.dumps(KMS))
    cfg["run"]["kms_tol"] = 1e-300
    code = main(["kms-check", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_FAILED
    assert "FAILED" in capsys.readouterr().err
    summary = json.loads((tmp_path / "o" / "summary.json").read_text())
    assert summary["fail_count"] > 0


def test_series_outside_radius_is_an_error(tmp_path, capsys):
    cfg = {"n": 6, "J": 1, "h": 0.5, "run": {"experiment": "evolve-compare", "t_grid": [0.5]}}
    code = main(["evolve-compare", "--config", write(tmp_path, cfg), "--out", str(tmp_path / "o")])
    assert code == EXIT_ERROR
    assert "error" in capsys.readouterr().err


def test_bad_config_and_missing_file_are_errors(tmp_path):
    bad = write(tmp_path, '{"n": 2,', "bad.json")
    assert main(["kms-check", "--config", bad, "--out", str(tmp_path / "o")]) == EXIT_ERROR
    missing = str(tmp_path / "nope.json")
    assert main(["kms-check", "--config", missing, "--out", str(tmp_path / "o")]) == EXIT_ERROR


def test_ness_balance_small_chain(tmp_path):
    cfg = {
        "n": 3, "J": 0.5, "h": 1,
        "partition": {"system": [2], "reservoirs": [[1], [3]], "betas": [2, 1]},
        "run": {"experiment": "ness-balance", "T_grid": [0.5], "transient_points": 3},
    }
    out = tmp_path / "o"
    assert main(["ness-balance", "--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
    rows = read_csv(out / "results.csv")
    assert {r["experiment"] for r in rows} == {"ness-balance"}
    assert any(r["passed"] == "true" for r in rows)


@pytest.mark.parametrize(
    "name, cfg",
    [
        ("klein-sweep", {"run": {"experiment": "klein-sweep", "instances": 20}}),
        ("gibbs-factorization", {"n": 3, "J": 0.8, "h": 0.4, "run": "gibbs-factorization"}),
        ("modular-verify", {"n": 2, "J": 0.7, "h": 0.3, "run": {"experiment": "modular-verify", "pairs": 3}}),
    ],
)
def test_other_experiments_run(tmp_path, name, cfg):
    out = tmp_path / "o"
    assert main([name, "--config", write(tmp_path, cfg), "--out", str(out)]) == EXIT_OK
    assert (out / "summary.json").exists()
