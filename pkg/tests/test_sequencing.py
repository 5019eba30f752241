import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_array_equal

from dcrnn import autodiff as ad
from dcrnn.autodiff import Tape
from dcrnn.errors import DimensionError, PlanError
from dcrnn.gradcheck import check_gradients
from dcrnn.layers import bind
from dcrnn.models import DcrnnConfig
from dcrnn.sequencing import (AdaptiveBank, SharingPlan, build_sequence, degenerate_check, required_len,
                              slice_windows)


@st.composite
def plans(draw):
    L = draw(st.integers(1, 12))
    return SharingPlan(draw(st.integers(1, 6)), L, draw(st.integers(0, L)))


# -- build_sequence -----------------------------------------------------------

def test_zero_bank_reproduces_x0():
    bank = AdaptiveBank(4, 3)
    t = Tape()
    x0 = t.leaf(np.array([[1.0, -2.0, 0.5]]))
    seq = build_sequence(x0, bank, bind(t, bank.init()))
    assert len(seq) == 4
    for item in seq:
        assert_array_equal(item.value, x0.value)


def test_additive_adaptation():
    bank = AdaptiveBank(2, 2)
    t = Tape()
    p = bind(t, {"ada/A0": np.zeros(2), "ada/A1": np.array([0.5, -0.5])})
    seq = build_sequence(t.leaf(np.array([1.0, 2.0])), bank, p)
    assert_array_equal(seq[1].value, [1.5, 1.5])


def test_disabled_bank_yields_copies_of_x0():
    bank = AdaptiveBank(4, 3, enabled=False)
    t = Tape()
    x0 = t.leaf(np.ones((2, 3)))
    seq = build_sequence(x0, bank)
    assert len(seq) == 4 and all(item is x0 for item in seq)
    assert bank.init() == {} and bank.param_count == 0


def test_bank_width_mismatch():
    t = Tape()
    with pytest.raises(DimensionError):
        build_sequence(t.leaf(np.ones(3)), AdaptiveBank(2, 4), {})


def test_bank_gradcheck():
    bank = AdaptiveBank(3, 4)
    g = np.random.default_rng(0)
    arrays = {"x0": g.normal(size=(2, 4)), **{k: g.normal(size=4) for k in bank.init()}}

    def build(t, n):
        seq = build_sequence(n["x0"], bank, n)
        out = ad.concat(seq, axis=-1)
        return ad.reduce_sum(ad.mul(ad.tanh(out), t.constant(np.sin(np.arange(24.0)).reshape(2, 12))))

    errs = check_gradients(build, arrays)
    assert max(errs.values()) < 1e-6, errs


# -- slice_windows / required_len ---------------------------------------------

def test_radio_preset_windows():
    plan = SharingPlan(2, 5, 2)
    assert required_len(plan) == 7
    k = slice_windows(plan, list(range(7)))
    assert k == [[0, 1, 2, 3, 4], [2, 3, 4, 5, 6]]


def test_aliccp_preset_length():
    assert required_len(SharingPlan(2, 3, 1)) == 4


def test_hard_sharing_windows_identical():
    k = slice_windows(SharingPlan(3, 4, 0), list(range(4)))
    assert k[0] == k[1] == k[2] == [0, 1, 2, 3]


def test_soft_sharing_windows_disjoint():
    k = slice_windows(SharingPlan(2, 3, 3), list(range(6)))
    assert k == [[0, 1, 2], [3, 4, 5]]


@pytest.mark.parametrize("L,I", [(1, 0), (5, 5), (9, 4)])
def test_single_task_needs_window_only(L, I):
    assert required_len(SharingPlan(1, L, I)) == L


def test_plan_errors():
    with pytest.raises(PlanError, match="0 <= I <= L"):
        SharingPlan(2, 3, 4)
    with pytest.raises(PlanError):
        SharingPlan(2, 3, -1)
    with pytest.raises(PlanError, match="required 7, got 6"):
        slice_windows(SharingPlan(2, 5, 2), list(range(6)))


def test_windows_share_node_objects():
    t = Tape()
    seq = [t.leaf(np.full(2, float(i))) for i in range(4)]
    k = slice_windows(SharingPlan(2, 3, 1), seq)
    assert k[0][1] is k[1][0] and k[0][2] is k[1][1]


@settings(max_examples=200, deadline=None)
@given(plan=plans())
def test_window_geometry(plan):
    n, L, I = plan.n_tasks, plan.window_len, plan.interval
    total = required_len(plan)
    assert total == L + (n - 1) * I
    k = slice_windows(plan, list(range(total)))
    assert len(k) == n
    assert all(len(w) == L and w == sorted(w) for w in k)
    for a, b in zip(k, k[1:]):
        assert len(set(a) & set(b)) == L - I
    assert set().union(*map(set, k)) == set(range(total))


@settings(max_examples=100, deadline=None)
@given(plan=plans(), task=st.integers(0, 5))
def test_gradient_reaches_exactly_the_task_window(plan, task):
    task %= plan.n_tasks
    bank = AdaptiveBank(required_len(plan), 2)
    t = Tape()
    p = bind(t, {k: np.full(2, 0.1) for k in bank.init()})
    x0 = t.leaf(np.array([[0.3, -0.7]]))
    windows = slice_windows(plan, build_sequence(x0, bank, p))
    t.backward(ad.reduce_sum(ad.tanh(ad.concat(windows[task], axis=-1))))
    window = set(plan.window(task))
    for i in range(bank.seq_len):
        g = p[bank.key(i)].grad
        if i in window:
            assert g is not None and np.all(g != 0)
        else:
            assert g is None


def test_degenerate_check():
    assert degenerate_check(SharingPlan(2, 4, 0)).kind == "hard"
    assert degenerate_check(SharingPlan(2, 4, 4)).kind == "soft"
    r = degenerate_check(SharingPlan(2, 5, 2))
    assert (r.kind, r.overlap, r.required_len, r.verified) == ("partial", 3, 7, True)
    assert degenerate_check(DcrnnConfig((4, 4), SharingPlan(2, 5, 2))) == r
