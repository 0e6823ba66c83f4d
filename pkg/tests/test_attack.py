import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from daguard.attack import ScoreSet, advantage, attack, extract_scores, fit_threshold, read_scores_csv, write_scores_csv
from daguard.data import Dataset
from daguard.numcore import MlpModel

from oracles import brute_force_threshold

scores = st.lists(st.floats(0.0, 1.0), min_size=1, max_size=40)


def test_separable_fixture():
    rep = fit_threshold(ScoreSet([0.9, 0.8, 0.7], [0.6, 0.4]))
    assert rep.p_thresh == 0.7
    assert rep.p_inference == 1.0
    assert rep.adv_mi == 1.0
    assert (rep.n_members, rep.n_nonmembers) == (3, 2)


def test_identical_distributions_give_no_advantage():
    rep = fit_threshold(ScoreSet([0.5] * 4, [0.5] * 6))
    assert rep.p_inference == 0.5
    assert rep.adv_mi == 0.0


def test_balanced_accuracy_not_plain_accuracy():
    # 1 member above 9 non-members: balanced accuracy rewards flagging it
    rep = fit_threshold(ScoreSet([0.9], [0.1] * 9))
    assert rep.p_inference == 1.0
    assert rep.plain_accuracy == 1.0
    rep = fit_threshold(ScoreSet([0.9, 0.2], [0.5] * 8))
    assert rep.p_thresh == 0.9
    assert rep.p_inference == pytest.approx(0.75)
    assert rep.plain_accuracy == pytest.approx(0.9)


@pytest.mark.parametrize(
    "acc, adv",
    [
        (0.77324, 0.54648),
        (0.514514926, 0.029029852),
        (0.68003, 0.36006),
        (0.534591195, 0.06918239),
        (0.503727767, 0.007455534),
        (0.503108333, 0.006216666),
    ],
)
def test_reported_advantages(acc, adv):
    assert abs(advantage(acc) - adv) <= 1e-9


def test_advantage_edges():
    assert advantage(0.5) == 0.0
    assert advantage(1.0) == 1.0
    assert advantage(0.0) == 1.0
    with pytest.raises(ValueError):
        advantage(1.2)


@settings(max_examples=200, deadline=None)
@given(st.floats(0.0, 1.0))
def test_advantage_is_symmetric(p):
    assert advantage(p) == pytest.approx(advantage(1.0 - p), abs=1e-15)
    assert 0.0 <= advantage(p) <= 1.0


@settings(max_examples=300, deadline=None)
@given(scores, scores)
def test_matches_brute_force(members, nonmembers):
    rep = fit_threshold(ScoreSet(members, nonmembers))
    acc, t = brute_force_threshold(members, nonmembers)
    assert rep.p_inference == acc
    assert rep.p_thresh == t


@settings(max_examples=200, deadline=None)
@given(scores, scores)
def test_attack_never_worse_than_guessing(members, nonmembers):
    assert fit_threshold(ScoreSet(members, nonmembers)).p_inference >= 0.5


@settings(max_examples=100, deadline=None)
@given(scores, scores)
def test_monotone_relabeling_keeps_accuracy(members, nonmembers):
    # cube root is strictly increasing on [0, 1]; rounding can still merge distinct scores
    base = fit_threshold(ScoreSet(members, nonmembers)).p_inference
    warped = fit_threshold(ScoreSet(np.cbrt(members), np.cbrt(nonmembers))).p_inference
    if len(set(np.cbrt(members + nonmembers))) == len(set(members + nonmembers)):
        assert warped == base


def test_scoreset_validation():
    with pytest.raises(ValueError):
        ScoreSet([], [0.1])
    with pytest.raises(ValueError):
        ScoreSet([1.5], [0.1])


def test_csv_round_trip(tmp_path):
    s = ScoreSet([0.9, 1 / 3], [0.25])
    path = tmp_path / "scores.csv"
    write_scores_csv(path, s)
    back = read_scores_csv(path)
    assert np.array_equal(back.member_scores, s.member_scores)
    assert np.array_equal(back.nonmember_scores, s.nonmember_scores)
    assert path.read_text().splitlines()[0] == "score,is_member"


def test_uniform_model_scores_one_over_n():
    model = MlpModel([np.zeros((3, 5))], [np.zeros(5)])
    ds = Dataset("d", np.random.default_rng(0).uniform(size=(4, 3)), np.zeros(4, dtype=int), 5)
    s = extract_scores(model, ds, ds)
    np.testing.assert_allclose(s.member_scores, 0.2, rtol=1e-15)
    assert attack(model, ds, ds).adv_mi == 0.0


def test_scores_lie_between_one_over_n_and_one(small_net):
    x = np.random.default_rng(1).normal(size=(30, 4))
    ds = Dataset("d", x, np.zeros(30, dtype=int), 3)
    s = extract_scores(small_net, ds, ds).member_scores
    assert s.min() >= 1 / 3 - 1e-12 and s.max() <= 1.0
