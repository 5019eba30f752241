import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dcrnn.data import Dataset, FieldSchema
from dcrnn.errors import UndefinedMetricError
from dcrnn.layers import Dense, EmbeddingTable, RnnCell, load_checkpoint, save_checkpoint
from dcrnn.metrics import ParamReport, auc, compare_report, count_params
from dcrnn.models import DCRNN, MMoE, DcrnnConfig, MmoeConfig
from dcrnn.sequencing import SharingPlan


def pair_auc(scores, labels):
    """Count every positive/negative pair, ties worth one half."""
    pos = [s for s, y in zip(scores, labels) if y]
    neg = [s for s, y in zip(scores, labels) if not y]
    wins = sum(1.0 if p > n else 0.5 if p == n else 0.0 for p in pos for n in neg)
    return wins / (len(pos) * len(neg))


def test_auc_examples():
    assert auc([0.9, 0.1], [1, 0]) == 1.0
    assert auc([0.1, 0.9], [1, 0]) == 0.0
    assert auc([0.5] * 6, [1, 0, 1, 0, 0, 1]) == 0.5
    assert auc([0.8, 0.6, 0.4], [1, 0, 1]) == 0.5


def test_auc_undefined_for_one_class():
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [1, 1])
    with pytest.raises(UndefinedMetricError):
        auc([0.1, 0.2], [0, 0])
    with pytest.raises(ValueError):
        auc([0.1, 0.2, 0.3], [0, 1])


@st.composite
def scored_sets(draw):
    n = draw(st.integers(2, 60))
    labels = draw(st.lists(st.integers(0, 1), min_size=n, max_size=n).filter(lambda y: 0 < sum(y) < len(y)))
    # small integer grid so ties are common
    scores = draw(st.lists(st.integers(-5, 5), min_size=n, max_size=n))
    return np.array(scores, dtype=float), np.array(labels)


@settings(max_examples=200, deadline=None)
@given(data=scored_sets())
def test_auc_matches_pair_count(data):
    scores, labels = data
    assert abs(auc(scores, labels) - pair_auc(scores, labels)) < 1e-12


@settings(max_examples=100, deadline=None)
@given(data=scored_sets(), scale=st.floats(0.01, 100), shift=st.floats(-50, 50))
def test_auc_invariant_under_monotone_maps(data, scale, shift):
    scores, labels = data
    base = auc(scores, labels)
    assert auc(scale * scores + shift, labels) == pytest.approx(base, abs=1e-12)
    assert auc(np.exp(scores / 5), labels) == pytest.approx(base, abs=1e-12)
    assert auc(1 / (1 + np.exp(-scores)), labels) == pytest.approx(base, abs=1e-12)
    assert auc(-scores, labels) == pytest.approx(1 - base, abs=1e-12)


# -- parameter counting -------------------------------------------------------

def test_count_examples():
    g = np.random.default_rng(0)
    assert sum(v.size for v in Dense(3, 2, "d").init(g).values()) == 8
    lstm = RnnCell("lstm", 2, 3, "c")
    assert lstm.param_count == 72 == sum(v.size for v in lstm.init(g).values())
    table = EmbeddingTable((10, 20), 4)
    assert sum(v.size for v in table.init(g).values()) == 120


def test_param_report():
    r = ParamReport({"a": 3, "bb": 10})
    assert r.total == 13
    assert str(r).splitlines()[-1].split() == ["total", "13"]


VOCAB = (9, 6, 5, 7)


@pytest.mark.parametrize("model", [
    DCRNN(DcrnnConfig(VOCAB, SharingPlan(2, 3, 1), embedding_dim=4, hidden_dim=3, tower_widths=(5,)), seed=0),
    MMoE(MmoeConfig(VOCAB, embedding_dim=4, expert_count=3, expert_widths=(6,), tower_widths=(5,)), seed=0),
])
def test_count_equals_checkpoint_total(model, tmp_path):
    report = count_params(model)
    save_checkpoint(tmp_path / "ck.bin", model.params)
    records = load_checkpoint(tmp_path / "ck.bin")
    assert report.total == sum(v.size for v in records.values())
    for group, n in report.groups.items():
        assert n == sum(v.size for k, v in records.items() if k.split("/", 1)[0] == group)


def _data(n=80, seed=0):
    g = np.random.default_rng(seed)
    ids = np.stack([g.integers(0, v, n) for v in VOCAB], axis=1)
    click = (ids[:, 0] > 4).astype(np.int8)
    conv = click & (ids[:, 1] > 2)
    conv[:2] = 1
    click[:2] = 1
    conv[2] = 0
    return Dataset(ids, np.stack([click, conv], 1).astype(np.int8), FieldSchema((1, 2, 3, 4), VOCAB))


def test_compare_report_reflexive_and_outputs(tmp_path):
    m = DCRNN(DcrnnConfig(VOCAB, SharingPlan(2, 3, 1), embedding_dim=4, hidden_dim=3), seed=0)
    rep = compare_report(m, m, _data())
    assert rep.ratio == 1.0
    assert len(rep.rows) == 4
    lines = rep.csv().splitlines()
    assert lines[0] == "model,task,auc,params" and len(lines) == 5
    rep.write(tmp_path / "cmp")
    assert (tmp_path / "cmp.csv").read_text() == rep.csv()
    assert "param ratio" in (tmp_path / "cmp.txt").read_text()


def test_compare_report_desk_ratio_below_one():
    d = DCRNN(DcrnnConfig(VOCAB, SharingPlan(2, 3, 1)), seed=0)
    m = MMoE(MmoeConfig(VOCAB), seed=0)
    assert compare_report(d, m, _data()).ratio < 1.0
