"""Keyphrase metrics: F1@k, F1@M over present/absent splits, and alpha-nDCG@k."""

import json
import math
from dataclasses import dataclass, field

from .corpus import ConfigError, parse_prediction_line, source_tokens, split_present_absent, stem, tokenize


class AlignmentError(ValueError):
    pass


def normalize_phrase(phrase):
    """Tokenise, Porter-stem and rejoin with single spaces."""
    return " ".join(stem(t) for t in tokenize(phrase))


def dedupe(phrases):
    seen, out = set(), []
    for p in phrases:
        if p and p not in seen:
            seen.add(p)
            out.append(p)
    return out


def _prf(matches, n_pred, n_gold):
    precision = matches / n_pred if n_pred else 0.0
    recall = matches / n_gold if n_gold else 0.0
    if precision + recall == 0:
        return precision, recall, 0.0
    return precision, recall, 2 * precision * recall / (precision + recall)


def f1_at_k(preds, gold, k=5):
    """Precision uses the fixed denominator ``k`` even with fewer predictions.

    ``preds`` and ``gold`` are normalised strings; both are deduplicated here.
    Returns ``None`` when ``gold`` is empty (the document is skipped).
    """
    gold = set(dedupe(gold))
    if not gold:
        return None
    top = dedupe(preds)[:k]
    matches = sum(1 for p in top if p in gold)
    return _prf(matches, k, len(gold))


def f1_at_m(preds, gold):
    gold = set(dedupe(gold))
    if not gold:
        return None
    preds = dedupe(preds)
    matches = sum(1 for p in preds if p in gold)
    return _prf(matches, len(preds), len(gold))


def _gains(preds, nuggets, alpha):
    seen = dict.fromkeys(nuggets, 0)
    gains = []
    for p in preds:
        if p in seen:
            gains.append((1.0 - alpha) ** seen[p])
            seen[p] += 1
        else:
            gains.append(0.0)
    return gains


def _dcg(gains, k):
    return sum(g / math.log2(r + 2) for r, g in enumerate(gains[:k]))


def ideal_order(preds, nuggets, alpha):
    """Greedy reordering that takes the largest marginal gain at every rank."""
    remaining = list(preds)
    seen = dict.fromkeys(nuggets, 0)
    order = []
    while remaining:
        best, best_gain = 0, -1.0
        for i, p in enumerate(remaining):
            g = (1.0 - alpha) ** seen[p] if p in seen else 0.0
            if g > best_gain:
                best, best_gain = i, g
        p = remaining.pop(best)
        if p in seen:
            seen[p] += 1
        order.append(p)
    return order


def alpha_ndcg_at_k(preds, gold, alpha=0.5, k=5):
    """alpha-nDCG@k with one nugget per gold phrase; predictions are not deduplicated."""
    if not 0.0 <= alpha < 1.0:
        raise ConfigError(f"alpha must lie in [0, 1), got {alpha}")
    nuggets = dedupe(gold)
    dcg = _dcg(_gains(preds, nuggets, alpha), k)
    idcg = _dcg(_gains(ideal_order(preds, nuggets, alpha), nuggets, alpha), k)
    return dcg / idcg if idcg > 0 else 0.0


@dataclass
class SplitScores:
    f1_at_k: list = field(default_factory=list)
    f1_at_m: list = field(default_factory=list)
    skipped: int = 0

    def summary(self, k):
        n = len(self.f1_at_k)
        return {
            f"F1@{k}": sum(self.f1_at_k) / n if n else 0.0,
            "F1@M": sum(self.f1_at_m) / n if n else 0.0,
            "evaluated": n,
            "skipped": self.skipped,
        }


@dataclass
class EvaluationReport:
    dataset: str
    documents: int
    extractive: dict
    abstractive: dict
    alpha_ndcg: float
    alpha_evaluated: int
    k: int
    alpha: float

    def to_dict(self):
        return {
            "dataset": self.dataset,
            "documents": self.documents,
            "extractive": self.extractive,
            "abstractive": self.abstractive,
            f"alpha_ndcg@{self.k}": {"value": self.alpha_ndcg, "evaluated": self.alpha_evaluated},
            "params": {"k": self.k, "alpha": self.alpha},
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def table(self):
        rows = [f"dataset: {self.dataset}  documents: {self.documents}",
                f"{'split':<12}{'F1@' + str(self.k):>10}{'F1@M':>10}{'docs':>8}"]
        for name, split in (("extractive", self.extractive), ("abstractive", self.abstractive)):
            rows.append(f"{name:<12}{split[f'F1@{self.k}']:>10.4f}{split['F1@M']:>10.4f}{split['evaluated']:>8d}")
        rows.append(f"alpha-nDCG@{self.k} (alpha={self.alpha}): {self.alpha_ndcg:.4f}")
        return "\n".join(rows)


def evaluate_documents(predictions, golds, doc_tokens, k=5, alpha=0.5, dataset=""):
    """Macro-averaged report.

    ``predictions`` and ``golds`` are per-document lists of raw phrase
    strings; ``doc_tokens`` the tokenised source of each document.
    """
    if not (len(predictions) == len(golds) == len(doc_tokens)):
        raise AlignmentError(f"{len(predictions)} prediction lines for {len(golds)} documents")
    splits = {"extractive": SplitScores(), "abstractive": SplitScores()}
    ndcg = []
    for preds, gold, tokens in zip(predictions, golds, doc_tokens):
        pred_tok = [tokenize(p) for p in preds]
        gold_tok = [tokenize(g) for g in gold]
        pred_present, pred_absent = split_present_absent(pred_tok, tokens)
        gold_present, gold_absent = split_present_absent(gold_tok, tokens)
        for name, p, g in (("extractive", pred_present, gold_present),
                           ("abstractive", pred_absent, gold_absent)):
            p_norm = [_norm_tokens(x) for x in p]
            g_norm = [_norm_tokens(x) for x in g]
            at_k = f1_at_k(p_norm, g_norm, k)
            if at_k is None:
                splits[name].skipped += 1
                continue
            splits[name].f1_at_k.append(at_k[2])
            splits[name].f1_at_m.append(f1_at_m(p_norm, g_norm)[2])
        gold_all = dedupe([_norm_tokens(g) for g in gold_tok])
        if gold_all:
            ndcg.append(alpha_ndcg_at_k([_norm_tokens(p) for p in pred_tok if p], gold_all, alpha, k))
    return EvaluationReport(
        dataset=dataset,
        documents=len(golds),
        extractive=splits["extractive"].summary(k),
        abstractive=splits["abstractive"].summary(k),
        alpha_ndcg=sum(ndcg) / len(ndcg) if ndcg else 0.0,
        alpha_evaluated=len(ndcg),
        k=k,
        alpha=alpha,
    )


def _norm_tokens(tokens):
    return " ".join(stem(t) for t in tokens)


def evaluate_dataset(pred_path, gold_samples, k=5, alpha=0.5, dataset=""):
    with open(pred_path, encoding="utf-8") as fh:
        lines = fh.read().split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    if len(lines) != len(gold_samples):
        raise AlignmentError(f"{pred_path}: {len(lines)} prediction lines for {len(gold_samples)} documents")
    predictions = [parse_prediction_line(line) for line in lines]
    golds = [list(s.keyphrases) for s in gold_samples]
    tokens = [source_tokens(s) for s in gold_samples]
    return evaluate_documents(predictions, golds, tokens, k, alpha, dataset)
