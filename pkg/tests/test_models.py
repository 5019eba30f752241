import numpy as np
import pytest
from numpy.testing import assert_array_equal

from dcrnn.autodiff import Tape
from dcrnn.gradcheck import check_gradients
from dcrnn.layers import bind, group_of
from dcrnn.models import DCRNN, MMoE, DcrnnConfig, MmoeConfig, build_model, dcrnn_forward, mmoe_forward
from dcrnn.sequencing import SharingPlan
from dcrnn.training import LossConfig, batch_loss

VOCAB = (5, 7, 4)


def ids(n=6, seed=0):
    g = np.random.default_rng(seed)
    return np.stack([g.integers(0, v, n) for v in VOCAB], axis=1)


def small_dcrnn(**kw):
    base = dict(vocab_sizes=VOCAB, plan=SharingPlan(2, 3, 1), embedding_dim=4, hidden_dim=3, tower_widths=(5,))
    base.update(kw)
    return DCRNN(DcrnnConfig(**base), seed=1)


def small_mmoe(**kw):
    base = dict(vocab_sizes=VOCAB, embedding_dim=4, expert_count=3, expert_widths=(6, 4), tower_widths=(5,))
    base.update(kw)
    return MMoE(MmoeConfig(**base), seed=2)


# -- DCRNN --------------------------------------------------------------------

@pytest.mark.parametrize("cell", ["lstm", "gru"])
@pytest.mark.parametrize("bi", [False, True])
def test_dcrnn_logit_shape(cell, bi):
    m = small_dcrnn(cell=cell, bidirectional=bi)
    t = Tape()
    assert dcrnn_forward(m, t, ids(6)).shape == (6, 2)


def test_dcrnn_three_tasks():
    m = small_dcrnn(plan=SharingPlan(3, 2, 1))
    assert m.forward(Tape(), ids(4)).shape == (4, 3)


def test_tied_tasks_under_hard_sharing_agree():
    m = small_dcrnn(plan=SharingPlan(2, 3, 0), ada=False)
    for name in list(m.params):
        if name.startswith("task1."):
            m.params[name] = m.params[name.replace("task1.", "task0.", 1)].copy()
    out = m.forward(Tape(), ids(8)).value
    assert_array_equal(out[:, 0], out[:, 1])


def test_zero_towers_give_zero_logits():
    m = small_dcrnn()
    for name in m.params:
        if ".tower" in name:
            m.params[name] = np.zeros_like(m.params[name])
    out = m.forward(Tape(), ids(5)).value
    assert_array_equal(out, np.zeros((5, 2)))


def test_group_names():
    m = small_dcrnn()
    assert set(m.groups()) == {"embedding", "ada", "task0.rnn", "task0.tower", "task1.rnn", "task1.tower"}
    assert "ada" not in small_dcrnn(ada=False).groups()
    assert set(small_mmoe().groups()) == {"embedding", "experts", "gates", "task0.tower", "task1.tower"}


def test_every_parameter_in_exactly_one_group():
    for m in (small_dcrnn(), small_mmoe()):
        names = [n for g in m.groups().values() for n in g]
        assert sorted(names) == sorted(m.params) and len(set(names)) == len(names)


def test_ada_zero_bank_matches_plain_model_bitwise():
    plain = small_dcrnn(ada=False)
    adapted = small_dcrnn(ada=True)
    for name, v in plain.params.items():
        adapted.params[name] = v.copy()
    batch = ids(16)
    t = Tape()
    trace = adapted.trace(t, batch)
    for window in trace.windows:
        for item in window:
            assert item.value.tobytes() == trace.x0.value.tobytes()
    assert adapted.forward(Tape(), batch).value.tobytes() == plain.forward(Tape(), batch).value.tobytes()


def test_batch_permutation_permutes_logits():
    for m in (small_dcrnn(), small_mmoe()):
        batch = ids(9, seed=3)
        perm = np.random.default_rng(4).permutation(9)
        out = m.forward(Tape(), batch).value
        assert np.allclose(m.forward(Tape(), batch[perm]).value, out[perm], rtol=0, atol=1e-14)


def test_predict_matches_forward():
    m = small_dcrnn()
    batch = ids(11)
    assert m.predict(batch, batch_size=4).tobytes() == m.forward(Tape(), batch).value.tobytes()


def test_sharing_report():
    r = small_dcrnn(plan=SharingPlan(2, 5, 2)).sharing_report()
    assert (r.kind, r.overlap, r.required_len) == ("partial", 3, 7)


# -- MMoE ---------------------------------------------------------------------

def test_mmoe_logit_shape():
    assert mmoe_forward(small_mmoe(), Tape(), ids(6)).shape == (6, 2)


def test_single_expert_gate_is_one():
    m = small_mmoe(expert_count=1)
    t = Tape()
    p = bind(t, m.params)
    x0 = m.table(p, ids(5))
    for w in m.gate_weights(p, x0):
        assert_array_equal(w.value, np.ones((5, 1)))
    expected = np.concatenate([tower(p, m.experts[0](p, x0)).value for tower in m.towers], axis=1)
    assert np.allclose(m.forward(Tape(), ids(5)).value, expected, rtol=0, atol=1e-14)


def test_identical_experts_make_gates_irrelevant():
    m = small_mmoe()
    for name in list(m.params):
        if name.startswith("experts/e") and not name.startswith("experts/e0"):
            m.params[name] = m.params["experts/e0" + name[len("experts/eX"):]].copy()
    base = m.forward(Tape(), ids(7)).value
    for name in m.params:
        if name.startswith("gates/"):
            m.params[name] = np.random.default_rng(9).normal(size=m.params[name].shape) * 5
    assert np.allclose(m.forward(Tape(), ids(7)).value, base, rtol=0, atol=1e-12)


def test_equal_gate_logits_give_uniform_weights():
    m = small_mmoe(expert_count=4)
    for name in m.params:
        if name.startswith("gates/"):
            m.params[name] = np.zeros_like(m.params[name])
    t = Tape()
    p = bind(t, m.params)
    for w in m.gate_weights(p, m.table(p, ids(3))):
        assert_array_equal(w.value, np.full((3, 4), 0.25))


def test_build_model_dispatch():
    assert isinstance(build_model(DcrnnConfig(VOCAB)), DCRNN)
    assert isinstance(build_model(MmoeConfig(VOCAB)), MMoE)
    with pytest.raises(TypeError):
        build_model(object())


# -- end-to-end gradient checks -----------------------------------------------

def _e2e_errors(model, batch, labels, loss_cfg):
    def build(tape, p):
        return batch_loss(model._forward(tape, p, batch), labels, loss_cfg)
    return check_gradients(build, model.params)


@pytest.mark.parametrize("cell", ["lstm", "gru"])
@pytest.mark.parametrize("bi", [False, True])
def test_dcrnn_end_to_end_gradcheck(cell, bi):
    m = small_dcrnn(cell=cell, bidirectional=bi, embedding_dim=2, hidden_dim=2, tower_widths=(3,))
    # non-zero bank so the adaptive offsets are exercised away from their start point
    g = np.random.default_rng(5)
    for name in m.params:
        if name.startswith("ada/"):
            m.params[name] = g.normal(size=m.params[name].shape) * 0.3
    errs = _e2e_errors(m, ids(2, seed=7), np.array([[1, 0], [1, 1]]), LossConfig((2.0, 5.0), (1.0, 0.5)))
    worst = {}
    for name, e in errs.items():
        worst[group_of(name)] = max(worst.get(group_of(name), 0.0), e)
    assert max(worst.values()) < 1e-5, worst


def test_mmoe_end_to_end_gradcheck():
    m = small_mmoe(embedding_dim=2, expert_count=2, expert_widths=(3, 3), tower_widths=(3,))
    errs = _e2e_errors(m, ids(2, seed=8), np.array([[0, 0], [1, 1]]), LossConfig((3.0, 1.0), (1.0, 1.0)))
    assert max(errs.values()) < 1e-5, errs
