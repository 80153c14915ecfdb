import numpy as np
import pytest

from nexus.data import (
    SeriesDataset,
    Standardizer,
    chronological_split,
    load_adjacency,
    load_csv,
    make_windows,
    window_set,
    write_csv,
)
from nexus.errors import DataError


def _ds(steps=100, n=3, seed=0, start=0):
    rng = np.random.default_rng(seed)
    return SeriesDataset(rng.standard_normal((steps, n)), np.arange(start, start + steps), period=24)


def test_wide_csv_blank_cell_is_masked(tmp_path):
    p = tmp_path / "s.csv"
    p.write_text("step,a,b\n0,1.5,\n1,2.0,3.0\n")
    ds = load_csv(p, period=4)
    assert ds.values.shape == (2, 2, 1)
    assert not ds.mask[0, 1] and ds.values[0, 1, 0] == 0.0
    assert ds.mask[1].all()
    assert ds.node_ids == ["a", "b"]


def test_long_csv_matches_wide(tmp_path):
    wide = tmp_path / "w.csv"
    wide.write_text("step,a,b\n5,1.0,2.0\n6,,4.0\n")
    long = tmp_path / "l.csv"
    long.write_text("step,node,value\n5,a,1.0\n5,b,2.0\n6,b,4.0\n")
    dw, dl = load_csv(wide), load_csv(long, layout="long")
    np.testing.assert_array_equal(dw.values, dl.values)
    np.testing.assert_array_equal(dw.mask, dl.mask)
    np.testing.assert_array_equal(dw.steps, [5, 6])


@pytest.mark.parametrize("layout", ["wide", "long"])
def test_csv_roundtrip(tmp_path, layout):
    ds = _ds(20, 3)
    ds.mask[3, 1] = False
    ds.values[3, 1] = 0.0
    p = write_csv(ds, tmp_path / f"{layout}.csv", layout)
    back = load_csv(p, layout=layout, period=24)
    np.testing.assert_array_equal(back.values, ds.values)
    np.testing.assert_array_equal(back.mask, ds.mask)


def test_mask_zeros_convention(tmp_path):
    p = tmp_path / "z.csv"
    p.write_text("step,a\n0,0.0\n1,2.0\n")
    assert load_csv(p).mask[:, 0].tolist() == [True, True]
    assert load_csv(p, mask_zeros=True).mask[:, 0].tolist() == [False, True]


def test_gap_in_steps_becomes_masked_row(tmp_path):
    p = tmp_path / "g.csv"
    p.write_text("step,a\n0,1.0\n2,3.0\n")
    ds = load_csv(p)
    np.testing.assert_array_equal(ds.steps, [0, 1, 2])
    assert ds.mask[:, 0].tolist() == [True, False, True]


def test_non_monotone_steps_rejected(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("step,a\n1,1.0\n0,2.0\n")
    with pytest.raises(DataError):
        load_csv(p)
    q = tmp_path / "bad_long.csv"
    q.write_text("step,node,value\n1,a,1.0\n0,a,2.0\n")
    with pytest.raises(DataError):
        load_csv(q, layout="long")


def test_unknown_node_rejected(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text("step,node,value\n0,a,1.0\n0,zz,2.0\n")
    with pytest.raises(DataError):
        load_csv(p, layout="long", nodes=["a", "b"])
    w = tmp_path / "w.csv"
    w.write_text("step,a,zz\n0,1.0,2.0\n")
    with pytest.raises(DataError):
        load_csv(w, nodes=["a"])


def test_adjacency_edge_list(tmp_path):
    p = tmp_path / "adj.csv"
    p.write_text("src,dst,weight\na,b,0.5\nb,c,\n")
    A = load_adjacency(p, ["a", "b", "c"])
    assert A[0, 1] == 0.5 and A[1, 2] == 1.0 and A.sum() == 1.5
    p.write_text("src,dst\na,q\n")
    with pytest.raises(DataError):
        load_adjacency(p, ["a"])


def test_split_sizes_and_union():
    ds = _ds(100)
    tr, va, te = chronological_split(ds, (0.7, 0.1, 0.2))
    assert (tr.n_steps, va.n_steps, te.n_steps) == (70, 10, 20)
    np.testing.assert_array_equal(np.concatenate([tr.steps, va.steps, te.steps]), ds.steps)
    assert tr.steps[-1] < va.steps[0] and va.steps[-1] < te.steps[0]


@pytest.mark.parametrize("fr", [(1.0, 0.0, 0.0), (0.5, 0.5), (0.8, 0.3, -0.1), (0.5, 0.2, 0.2)])
def test_split_rejects_bad_fractions(fr):
    with pytest.raises(DataError):
        chronological_split(_ds(100), fr)


def test_split_min_length():
    with pytest.raises(DataError):
        chronological_split(_ds(100), (0.7, 0.1, 0.2), min_length=15)


@pytest.mark.parametrize("steps,T,H,stride,count", [(10, 3, 2, 1, 6), (5, 3, 2, 1, 1), (10, 3, 2, 2, 3)])
def test_window_counts(steps, T, H, stride, count):
    assert len(make_windows(_ds(steps), T, H, stride)) == count


def test_window_too_short():
    with pytest.raises(DataError):
        make_windows(_ds(4), 3, 2)


def test_targets_follow_inputs():
    ds = _ds(30, 2)
    for w in make_windows(ds, 4, 3, stride=2):
        assert w.target_steps[0] == w.input_steps[-1] + 1
        np.testing.assert_array_equal(w.x, np.transpose(ds.values[w.input_steps], (1, 0, 2)))
        np.testing.assert_array_equal(w.y, np.transpose(ds.values[w.target_steps], (1, 0, 2)))


def test_aligned_windows_start_on_cycle():
    ds = _ds(60, 2, start=7)
    ws = window_set(ds, 4, 4, stride=8, align=0)
    assert np.all(ws.input_steps[:, 0] % 8 == 0)


@pytest.mark.parametrize("mode", ["node", "global", "none"])
def test_standardizer_inverse(mode):
    ds = _ds(50, 3)
    ds.values *= np.array([1.0, 10.0, 100.0])[None, :, None]
    sc = Standardizer.fit(ds, mode)
    x = np.random.default_rng(2).standard_normal((5, 3, 4, 1))
    np.testing.assert_allclose(sc.inverse_transform(sc.transform(x, node_axis=-3), node_axis=-3), x,
                               atol=1e-12, rtol=0)
    np.testing.assert_allclose(Standardizer.from_dict(sc.to_dict()).mean, sc.mean)


def test_standardizer_ignores_test_values():
    ds = _ds(100)
    tr, _, _ = chronological_split(ds, (0.7, 0.1, 0.2))
    a = Standardizer.fit(tr)
    ds.values[80:] += 1e6
    b = Standardizer.fit(chronological_split(ds, (0.7, 0.1, 0.2))[0])
    np.testing.assert_array_equal(a.mean, b.mean)
    np.testing.assert_array_equal(a.std, b.std)


def test_standardizer_uses_observed_cells_only():
    ds = _ds(40, 2)
    ds.mask[::2, 0] = False
    ds.values[::2, 0] = 1e9
    sc = Standardizer.fit(ds)
    assert sc.mean[0, 0] == pytest.approx(ds.values[1::2, 0, 0].mean())


def test_mask_propagates_to_windows():
    ds = _ds(20, 2)
    ds.mask[10, 1] = False
    ws = window_set(ds, 3, 2, scaler=Standardizer.fit(ds))
    hit = ws.target_steps == 10
    assert not ws.mask[:, 1][hit].any()
    assert ws.mask[:, 0].all()
    assert np.all(ws.y[:, 1][hit] == 0.0) and np.all(ws.y_raw[:, 1][hit] == 0.0)


def test_to_raw_inverts_scaled_labels():
    ds = _ds(30, 3)
    ws = window_set(ds, 4, 2, scaler=Standardizer.fit(ds))
    np.testing.assert_allclose(ws.to_raw(ws.y), ws.y_raw, atol=1e-12)


def test_dataset_validation():
    with pytest.raises(DataError):
        SeriesDataset(np.zeros((3, 2)), np.array([0, 2, 3]))
    with pytest.raises(DataError):
        SeriesDataset(np.zeros((3, 2)), np.arange(3), mask=np.ones((2, 2), bool))
    with pytest.raises(DataError):
        SeriesDataset(np.zeros((3, 2)), np.arange(3), period=0)
