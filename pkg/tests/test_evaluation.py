import math

import pytest

from kpgan import evaluation as ev
from kpgan.corpus import ConfigError

from _oracles import bf_alpha_ndcg, bf_f1, random_metric_instances


def test_agrees_with_brute_force_on_random_instances():
    for preds, gold, alpha in random_metric_instances(1000):
        at5, atm = ev.f1_at_k(preds, gold, 5), ev.f1_at_m(preds, gold)
        ref5, refm = bf_f1(preds, gold, 5), bf_f1(preds, gold)
        if ref5 is None:
            assert at5 is None and atm is None
        else:
            assert abs(at5[2] - ref5) <= 1e-12 and abs(atm[2] - refm) <= 1e-12
        if gold:
            assert abs(ev.alpha_ndcg_at_k(preds, gold, alpha, 5) - bf_alpha_ndcg(preds, gold, alpha, 5)) <= 1e-12


# ----------------------------------------------------------------- fixtures

def test_f1_at_5_hand_case():
    p, r, f = ev.f1_at_k(["a", "b", "x", "y", "z"], ["a", "b", "c"], 5)
    assert (p, r) == (0.4, pytest.approx(2 / 3)) and f == pytest.approx(0.5, abs=1e-15)


def test_f1_at_m_hand_case():
    p, r, f = ev.f1_at_m(["a", "x", "b", "y"], ["a", "b", "c"])
    assert p == 0.5 and f == pytest.approx(4 / 7, abs=1e-15)


def test_f1_fixed_denominator_with_short_list():
    assert ev.f1_at_k(["a"], ["a"], 5)[0] == 0.2


def test_f1_trivial_cases():
    gold = ["a", "b", "c", "d", "e"]
    assert ev.f1_at_k(gold, gold, 5)[2] == 1.0
    assert ev.f1_at_m(list(reversed(gold)), gold)[2] == 1.0
    assert ev.f1_at_k(["x"], gold)[2] == 0.0
    assert ev.f1_at_m(["a", "a"], ["a"])[2] == 1.0
    assert ev.f1_at_m([], ["a"])[2] == 0.0
    assert ev.f1_at_k(["a"], []) is None


def test_alpha_ndcg_hand_case():
    value = ev.alpha_ndcg_at_k(["a", "a", "b"], ["a", "b"], alpha=0.5, k=5)
    dcg = 1 + 0.5 / math.log2(3) + 1 / 2
    idcg = 1 + 1 / math.log2(3) + 0.5 / 2
    assert value == pytest.approx(dcg / idcg, abs=1e-15)
    assert value == pytest.approx(0.9652, abs=5e-5)


def test_alpha_ndcg_trivial_cases():
    assert ev.alpha_ndcg_at_k(["a", "b", "c"], ["a", "b", "c"]) == 1.0
    assert ev.alpha_ndcg_at_k(["x", "y"], ["a"]) == 0.0
    for alpha in (-0.1, 1.0):
        with pytest.raises(ConfigError):
            ev.alpha_ndcg_at_k(["a"], ["a"], alpha=alpha)


def test_normalize_phrase():
    assert ev.normalize_phrase("Neural Networks") == "neural network"
    assert ev.normalize_phrase("GANs") == "gan"
    assert ev.normalize_phrase("") == ""


def test_report_splits_present_and_absent():
    report = ev.evaluate_documents(
        predictions=[["neural networks", "gan", "topic model"]],
        golds=[["neural network", "topic models", "adversarial"]],
        doc_tokens=[["deep", "neural", "network", "for", "topic", "modeling"]],
    )
    # "modeling" stems to "model", so two gold phrases are present; "adversarial" is absent
    assert report.extractive["F1@5"] == pytest.approx(2 * 0.4 * 1.0 / 1.4, abs=1e-15)
    assert report.extractive["F1@M"] == 1.0
    assert report.abstractive == {"F1@5": 0.0, "F1@M": 0.0, "evaluated": 1, "skipped": 0}
    assert 0.0 <= report.alpha_ndcg <= 1.0


def test_empty_gold_split_is_skipped():
    report = ev.evaluate_documents([["x"]], [["only present"]], [["only", "present"]])
    assert report.abstractive == {"F1@5": 0.0, "F1@M": 0.0, "evaluated": 0, "skipped": 1}


def test_misaligned_inputs():
    with pytest.raises(ev.AlignmentError):
        ev.evaluate_documents([[]], [[], []], [[], []])
