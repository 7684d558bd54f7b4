import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from streamtucker.data import (
    CHECKPOINT_VERSION,
    DataError,
    Dataset,
    checkpoint_load,
    checkpoint_save,
    load_labels,
    load_side_info,
    load_tensor,
    make_split,
    movielens_genres,
    movielens_ingest,
    parse_side_spec,
    save_side_info,
    save_tensor,
)
from streamtucker.model import DenseSide, Hyperparams, IdentitySide, SideInfoSet, SparseSide, init_model
from streamtucker.tensor import SparseTensor


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


def test_load_tensor_single_entry(tmp_path):
    t = load_tensor(write(tmp_path, "t.txt", "0 0 0 5.0\n"), (1, 1, 1))
    assert t.nnz == 1 and t.values[0] == 5.0


def test_load_tensor_comments_and_blank_lines(tmp_path):
    t = load_tensor(write(tmp_path, "t.txt", "# header\n\n1 0 2.5  # trailing\n0 1 -1\n"), (2, 2))
    assert t.indices.tolist() == [[0, 1], [1, 0]]
    assert t.values.tolist() == [-1.0, 2.5]


def test_load_tensor_out_of_bounds(tmp_path):
    with pytest.raises(DataError, match="out of bounds") as exc:
        load_tensor(write(tmp_path, "t.txt", "1 0 0 5.0\n"), (1, 1, 1))
    assert exc.value.line == 1


def test_load_tensor_duplicate(tmp_path):
    with pytest.raises(DataError, match="duplicate") as exc:
        load_tensor(write(tmp_path, "t.txt", "0 0 1\n0 1 2\n0 0 3\n"), (1, 2))
    assert exc.value.line == 3


@pytest.mark.parametrize("line", ["0 0\n", "0 x 1.0\n", "0 0 1.0 2.0\n"])
def test_load_tensor_malformed_lines_are_located(tmp_path, line):
    with pytest.raises(DataError) as exc:
        load_tensor(write(tmp_path, "t.txt", "0 1 1.0\n" + line), (2, 2))
    assert exc.value.line == 2
    assert ":2:" in str(exc.value)


def test_tensor_save_load_round_trip(tmp_path, rng):
    t = SparseTensor.from_dense(rng.standard_normal((3, 4, 2)), rng.random((3, 4, 2)) < 0.5)
    save_tensor(t, tmp_path / "t.txt")
    back = load_tensor(tmp_path / "t.txt", t.shape)
    assert np.array_equal(back.indices, t.indices) and np.array_equal(back.values, t.values)


def test_matrix_market_side_info(tmp_path):
    p = write(tmp_path, "a.mtx", "%%MatrixMarket matrix coordinate real general\n% c\n2 2 1\n1 1 1\n")
    s = load_side_info(p)
    assert isinstance(s, SparseSide) and s.shape == (2, 2)
    np.testing.assert_array_equal(s.to_dense(), [[1.0, 0.0], [0.0, 0.0]])


def test_matrix_market_pattern_and_integer(tmp_path):
    p = write(tmp_path, "a.mtx", "%%MatrixMarket matrix coordinate pattern general\n2 3 2\n1 3\n2 1\n")
    np.testing.assert_array_equal(load_side_info(p).to_dense(), [[0, 0, 1], [1, 0, 0]])
    p = write(tmp_path, "b.mtx", "%%MatrixMarket matrix coordinate integer general\n1 1 1\n1 1 7\n")
    assert load_side_info(p).to_dense()[0, 0] == 7.0


@pytest.mark.parametrize("text", [
    "%%MatrixMarket matrix array real general\n1 1\n1\n",
    "%%MatrixMarket matrix coordinate real symmetric\n2 2 1\n1 1 1\n",
    "%%MatrixMarket matrix coordinate real general\n2 2\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 2\n1 1 1\n",
    "%%MatrixMarket matrix coordinate real general\n2 2 1\n3 1 1\n",
])
def test_matrix_market_malformed(tmp_path, text):
    with pytest.raises(DataError):
        load_side_info(write(tmp_path, "a.mtx", text))


def test_csv_side_info(tmp_path):
    s = load_side_info(write(tmp_path, "a.csv", "1,0\n0,1\n"))
    assert isinstance(s, DenseSide)
    np.testing.assert_array_equal(s.to_dense(), np.eye(2))
    with pytest.raises(DataError):
        load_side_info(write(tmp_path, "b.csv", "1,0\n0\n"))
    with pytest.raises(DataError):
        load_side_info(tmp_path / "missing.csv")


def test_identity_spec():
    s = parse_side_spec("identity:1682")
    assert isinstance(s, IdentitySide) and s.shape == (1682, 1682)
    for bad in ("identity:0", "identity:x"):
        with pytest.raises(DataError):
            parse_side_spec(bad)


def test_side_info_save_round_trip(tmp_path, rng):
    a = rng.standard_normal((3, 2))
    save_side_info(DenseSide(a), tmp_path / "a.csv")
    np.testing.assert_array_equal(load_side_info(tmp_path / "a.csv").to_dense(), a)
    import scipy.sparse as sp
    b = sp.random(5, 4, density=0.3, random_state=1, format="csr")
    save_side_info(SparseSide(b), tmp_path / "b.mtx")
    np.testing.assert_array_equal(load_side_info(tmp_path / "b.mtx").to_dense(), b.toarray())


def test_dataset_checks_coupling(rng):
    t = SparseTensor.from_dense(rng.standard_normal((2, 3)))
    Dataset(t, SideInfoSet.identity((2, 3)))
    with pytest.raises(DataError):
        Dataset(t, SideInfoSet.identity((2, 2)))


def _ratings(tmp_path, rows):
    return write(tmp_path, "u.data", "".join(f"{u}\t{i}\t{r}\t{ts}\n" for u, i, r, ts in rows))


def test_movielens_week_arithmetic(tmp_path):
    t, info = movielens_ingest(_ratings(tmp_path, [(10, 5, 3, 1000), (20, 7, 4, 1000 + 604800)]))
    assert t.shape == (2, 2, 2)
    assert t.indices.tolist() == [[0, 0, 0], [1, 1, 1]]
    assert info["users"].tolist() == [10, 20] and info["min_timestamp"] == 1000


def test_movielens_single_rating(tmp_path):
    t, _ = movielens_ingest(_ratings(tmp_path, [(3, 9, 5, 123456)]))
    assert t.shape == (1, 1, 1) and t.indices.tolist() == [[0, 0, 0]] and t.values[0] == 5.0


def test_movielens_id_order_preserved(tmp_path):
    t, info = movielens_ingest(_ratings(tmp_path, [(9, 100, 1, 0), (2, 50, 2, 10), (9, 50, 3, 20)]))
    assert info["users"].tolist() == [2, 9] and info["items"].tolist() == [50, 100]
    assert dict(zip(map(tuple, t.indices.tolist()), t.values)) == {(0, 0, 0): 2.0, (1, 0, 0): 3.0, (1, 1, 0): 1.0}


def test_movielens_week_offset(tmp_path):
    p = _ratings(tmp_path, [(1, 1, 1, 0), (1, 2, 1, 604799)])
    assert movielens_ingest(p)[0].shape[2] == 1
    assert movielens_ingest(p, week_offset=1)[0].shape[2] == 2


@pytest.mark.parametrize("text", ["", "1\t2\t3\n", "a\t1\t1\t1\n"])
def test_movielens_errors(tmp_path, text):
    with pytest.raises(DataError):
        movielens_ingest(write(tmp_path, "u.data", text))


def test_movielens_genres(tmp_path):
    flags = ["0"] * 19
    a, b = list(flags), list(flags)
    a[1], a[5] = "1", "1"  # Action, Comedy
    b[0] = "1"  # unknown
    text = f"1|Film A (1995)|01-Jan-1995||url|{'|'.join(a)}\n2|Film B|||url|{'|'.join(b)}\n"
    side, labels = movielens_genres(write(tmp_path, "u.item", text), [1, 2])
    assert side.shape == (2, 19)
    assert side.to_dense()[0].nonzero()[0].tolist() == [1, 5]
    assert sorted(labels) == [(0, "Action"), (0, "Comedy"), (1, "unknown")]


def test_load_labels(tmp_path):
    labels = load_labels(write(tmp_path, "l.csv", "0,A\n0,B\n3,C\n"))
    assert labels == {0: ["A", "B"], 3: ["C"]}
    with pytest.raises(DataError):
        load_labels(write(tmp_path, "m.csv", "0\n"))


def test_split_counts():
    t = SparseTensor.from_dense(np.arange(10.0).reshape(10, 1))
    s = make_split(t, 0.2, 0)
    assert s.test.nnz == 2 and s.train.nnz == 8


def test_split_is_deterministic_and_validated(rng):
    t = SparseTensor.from_dense(rng.standard_normal((5, 6)))
    a, b = make_split(t, 0.3, 7), make_split(t, 0.3, 7)
    assert np.array_equal(a.test.indices, b.test.indices)
    assert not np.array_equal(a.test.indices, make_split(t, 0.3, 8).test.indices)
    for bad in (0.0, 1.0, -0.1):
        with pytest.raises(ValueError):
            make_split(t, bad, 0)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), pct=st.floats(0.01, 0.99))
def test_split_is_disjoint_cover(seed, pct):
    rng = np.random.default_rng(seed)
    t = SparseTensor.from_dense(rng.standard_normal((4, 5, 3)), rng.random((4, 5, 3)) < 0.6)
    s = make_split(t, pct, seed)
    tr = set(map(tuple, s.train.indices.tolist()))
    te = set(map(tuple, s.test.indices.tolist()))
    assert not tr & te
    assert tr | te == set(map(tuple, t.indices.tolist()))
    assert abs(len(te) - pct * t.nnz) <= 1


def _model(seed=3):
    side = SideInfoSet([IdentitySide(4), DenseSide(np.ones((3, 2))), IdentitySide(5)])
    return init_model((2, 2, 3), side, Hyperparams(seed=seed))


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    m = _model()
    m.core = m.core * np.pi * 1e-7
    hp = Hyperparams(lambda_g=0.1, lambda_i=(0.2, 0.3, 1 / 3), gamma=1e-4, inner_steps=7,
                     nonnegative=True, seed=99, stale_core_residual=True)
    checkpoint_save(m, hp, 12, tmp_path / "ck.json")
    back, hp2, step = checkpoint_load(tmp_path / "ck.json")
    assert step == 12 and hp2 == hp
    assert back.core.tobytes() == m.core.tobytes()
    assert all(a.tobytes() == b.tobytes() for a, b in zip(back.factors, m.factors))


def test_checkpoint_version_mismatch(tmp_path):
    checkpoint_save(_model(), Hyperparams(), 0, tmp_path / "ck.json")
    doc = json.loads((tmp_path / "ck.json").read_text())
    doc["version"] = CHECKPOINT_VERSION + 1
    (tmp_path / "ck.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="version"):
        checkpoint_load(tmp_path / "ck.json")


def test_checkpoint_truncated(tmp_path):
    checkpoint_save(_model(), Hyperparams(), 0, tmp_path / "ck.json")
    text = (tmp_path / "ck.json").read_text()
    (tmp_path / "ck.json").write_text(text[: len(text) // 2])
    with pytest.raises(DataError, match="corrupt"):
        checkpoint_load(tmp_path / "ck.json")


def test_checkpoint_missing_field(tmp_path):
    checkpoint_save(_model(), Hyperparams(), 0, tmp_path / "ck.json")
    doc = json.loads((tmp_path / "ck.json").read_text())
    doc["factors"] = doc["factors"][:2]
    (tmp_path / "ck.json").write_text(json.dumps(doc))
    with pytest.raises(DataError, match="corrupt"):
        checkpoint_load(tmp_path / "ck.json")
