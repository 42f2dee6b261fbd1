"""Synthetic corpora for overfit, separability and end-to-end toy runs."""

import numpy as np

from .corpus import Sample

_ONSETS = "bdfgklmnprstvz"
_VOWELS = "aeiou"


def make_words(n, rng, syllables=3):
    """``n`` distinct alphabetic pseudo-words."""
    words, seen = [], set()
    while len(words) < n:
        w = "".join(rng.choice(list(_ONSETS)) + rng.choice(list(_VOWELS)) for _ in range(syllables))
        if w not in seen:
            seen.add(w)
            words.append(w)
    return words


def copy_task(n_docs, rng, n_common=12, abstract_len=6):
    """Title = [common word, rare word]; the gold keyphrases are the two title words.

    Rare words occur in exactly one document, so with ``vocab_size = 5 + n_common``
    they are out of vocabulary and can only be produced by copying.
    """
    pool = make_words(n_common + n_docs, rng)
    common, rare = pool[:n_common], pool[n_common:]
    samples = []
    for i in range(n_docs):
        first = common[rng.integers(n_common)]
        title = [first, rare[i]]
        abstract = [common[j] for j in rng.integers(n_common, size=abstract_len)]
        samples.append(Sample(" ".join(title), " ".join(abstract), tuple(title)))
    return samples


def separable_task(n_docs, rng, n_words=40, doc_len=10, n_phrases=3):
    """Documents with curated phrases copied from the source and fakes drawn from
    words absent from it.  Returns ``(samples, fakes)`` with token-string phrases."""
    words = make_words(n_words, rng)
    samples, fakes = [], []
    for _ in range(n_docs):
        idx = rng.choice(n_words, size=doc_len, replace=False)
        doc = [words[j] for j in idx]
        outside = [w for j, w in enumerate(words) if j not in set(idx)]
        real = [doc[j] for j in rng.choice(doc_len, size=n_phrases, replace=False)]
        fake = [outside[j] for j in rng.choice(len(outside), size=n_phrases, replace=False)]
        samples.append(Sample(doc[0], " ".join(doc[1:]), tuple(real)))
        fakes.append(fake)
    return samples, fakes


def zipf_separable_task(n_docs, rng, n_words=1000, zipf_s=1.2, doc_len=12, n_phrases=6):
    """Zipf-distributed documents whose curated phrases are 1-2 token spans of the
    source; each fake replaces a curated phrase by uniformly random corpus words of
    the same length.  Returns ``(samples, fakes)``."""
    words = make_words(n_words, rng)
    weights = 1.0 / np.arange(1, n_words + 1) ** zipf_s
    weights /= weights.sum()
    samples = []
    for _ in range(n_docs):
        doc = [words[j] for j in rng.choice(n_words, size=doc_len, p=weights)]
        real = []
        for _ in range(n_phrases):
            length = int(rng.integers(1, 3))
            start = int(rng.integers(0, doc_len - length + 1))
            real.append(" ".join(doc[start:start + length]))
        samples.append(Sample(doc[0], " ".join(doc[1:]), tuple(real)))
    seen = sorted({w for s in samples for w in (s.title + " " + s.abstract).split()})
    fakes = [[" ".join(seen[j] for j in rng.integers(len(seen), size=len(p.split()))) for p in s.keyphrases]
             for s in samples]
    return samples, fakes
