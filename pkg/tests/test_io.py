import numpy as np
import pytest

from pdeid import io
from pdeid.dictionary import FeatureMatrix, normalize_columns
from pdeid.diagnostics import DiagnosticsReport, Verdict
from pdeid.lasso import LassoProblem, solve_lasso
from pdeid.dictionary import TargetVector
from pdeid.types import Field, SpaceTimeGrid, canonical_term_order


def field():
    g = SpaceTimeGrid(5, 3, 2.0, 0.3)
    return Field.from_function(g, lambda X, T: np.sin(X) + 3 * T)


def test_field_binary_roundtrip(tmp_path):
    f = field()
    io.write_field(tmp_path / "f.bin", f)
    g = io.read_field(tmp_path / "f.bin")
    assert g.grid == f.grid
    np.testing.assert_array_equal(g.values, f.values)
    raw = (tmp_path / "f.bin").read_bytes()
    assert raw[:8] == io.FIELD_MAGIC and len(raw) == 8 + 16 + 16 + 8 * 15
    # row-major payload: value (i=1, n=0) is the fourth double after the header
    assert np.frombuffer(raw[40:], "<f8")[3] == f.values[1, 0]


def test_field_binary_errors(tmp_path):
    p = tmp_path / "bad.bin"
    p.write_bytes(b"NOTMAGIC" + bytes(32))
    with pytest.raises(io.FormatError):
        io.read_field(p)
    io.write_field(p, field())
    p.write_bytes(p.read_bytes()[:-8])
    with pytest.raises(io.FormatError):
        io.read_field(p)
    p.write_bytes(b"x")
    with pytest.raises(io.FormatError):
        io.read_field(p)


def test_field_csv_roundtrip(tmp_path):
    f = field()
    io.save_field(tmp_path / "f.csv", f)
    lines = (tmp_path / "f.csv").read_text().splitlines()
    assert lines[0] == "i,n,x,t,value"
    assert len(lines) == 16
    g = io.load_field(tmp_path / "f.csv")
    assert g.grid == f.grid
    np.testing.assert_array_equal(g.values, f.values)


def test_features_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    F = normalize_columns(FeatureMatrix(rng.standard_normal((8, 10)), canonical_term_order(2), np.ones(10), True))
    io.write_features(tmp_path / "F.bin", F)
    G = io.read_features(tmp_path / "F.bin")
    np.testing.assert_array_equal(G.values, F.values)
    np.testing.assert_array_equal(G.scales, F.scales)
    assert G.labels == F.labels and G.is_ground_truth
    io.write_features_csv(tmp_path / "F.csv", F)
    head = (tmp_path / "F.csv").read_text().splitlines()[0]
    assert head.split(",") == F.labels


def test_fit_csv(tmp_path):
    rng = np.random.default_rng(1)
    X = rng.standard_normal((30, 3))
    F = normalize_columns(FeatureMatrix(X * [1, 5, 0.1], canonical_term_order(0), np.ones(3)))
    fit = solve_lasso(LassoProblem(F, TargetVector(X[:, 0] - X[:, 1])), 0.05)
    io.write_fit_csv(tmp_path / "fit.csv", fit)
    rows = (tmp_path / "fit.csv").read_text().splitlines()
    assert rows[0] == "term,normalized,unscaled,sign"
    assert [r.split(",")[0] for r in rows[1:]] == ["1", "u", "u^2"]
    signs = [int(r.split(",")[3]) for r in rows[1:]]
    assert signs == [int(np.sign(b)) if abs(bn) > 1e-8 else 0 for b, bn in zip(fit.beta, fit.beta_normalized)]


def test_report_row():
    rep = DiagnosticsReport(0.5, 0.9, (5, 6), dual_inf_norm=0.8, verdict=Verdict.EXACT)
    row = io.report_row(100, 372, 7, 0.25, rep)
    assert len(row) == len(io.REPORT_COLUMNS)
    assert row[-1] == "ExactSignedRecovery" and row[7] == ""
