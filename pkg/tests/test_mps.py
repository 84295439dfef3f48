import numpy as np
import pytest

from critvis.lp_builder import build_lp
from critvis.mps import MpsError, read_mps, write_mps
from critvis.quantum import (
    AngleVector,
    ExperimentConfig,
    make_ghz,
    probability_table,
    uniform_table,
)
from critvis.reference import materialize_dense, simplex_solve


def ghz_lp(n, seed=0):
    cfg = ExperimentConfig.uniform(n)
    angles = AngleVector.random(cfg, np.random.default_rng(seed))
    return build_lp(cfg, probability_table(make_ghz(n), cfg, angles))


def test_two_observer_export_counts(tmp_path):
    lp = ghz_lp(2)
    path = tmp_path / "n2.mps"
    write_mps(lp, path)
    text = path.read_text()
    rows = [ln for ln in text.splitlines() if ln.startswith(" E ")]
    assert len(rows) == 9
    back = read_mps(path)
    assert back.A.shape == (9, 17)
    # 9 rows x 4 ones in the structural block
    assert np.count_nonzero(back.A[:, :-1]) == 36
    assert np.count_nonzero(back.A[:, -1]) == np.count_nonzero(lp.last_column)


@pytest.mark.parametrize("n", [2, 3, 4])
def test_round_trip_is_bit_identical(tmp_path, n):
    lp = ghz_lp(n, seed=n)
    path = tmp_path / "lp.mps"
    write_mps(lp, path)
    back = read_mps(path)
    dense = materialize_dense(lp)
    np.testing.assert_array_equal(back.A, dense.A)
    np.testing.assert_array_equal(back.b, dense.b)
    np.testing.assert_array_equal(back.c, dense.c)
    np.testing.assert_array_equal(back.u, dense.u)


def test_round_trip_preserves_optimum(tmp_path):
    lp = ghz_lp(3, seed=1)
    path = tmp_path / "lp.mps"
    write_mps(lp, path)
    a = simplex_solve(materialize_dense(lp))
    b = simplex_solve(read_mps(path))
    assert a.objective == b.objective


def test_dense_lp_round_trip_keeps_names(tmp_path):
    lp = read_mps(_written(tmp_path, ghz_lp(2)))
    path = tmp_path / "again.mps"
    write_mps(lp, path)
    again = read_mps(path)
    assert again.row_names == lp.row_names and again.col_names == lp.col_names
    np.testing.assert_array_equal(again.A, lp.A)


def _written(tmp_path, lp):
    path = tmp_path / "src.mps"
    write_mps(lp, path)
    return path


def test_export_cap(monkeypatch, tmp_path):
    import critvis.mps as mps
    monkeypatch.setattr(mps, "MAX_EXPORT_NNZ", 100)
    with pytest.raises(MpsError):
        write_mps(ghz_lp(3), tmp_path / "big.mps")


def test_large_problem_rejected_before_materializing(tmp_path):
    cfg = ExperimentConfig.uniform(8)
    with pytest.raises(MpsError):
        write_mps(build_lp(cfg, uniform_table(cfg)), tmp_path / "n8.mps")
    assert not (tmp_path / "n8.mps").exists()


def test_reader_rejects_unsupported_rows(tmp_path):
    path = tmp_path / "bad.mps"
    path.write_text("NAME X\nROWS\n N  OBJ\n L  R0\nCOLUMNS\nENDATA\n")
    with pytest.raises(MpsError):
        read_mps(path)
