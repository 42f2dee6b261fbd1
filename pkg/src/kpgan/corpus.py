"""Dataset ingestion, tokenisation, vocabulary and catSeq encoding."""

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from functools import lru_cache

from nltk.stem.porter import PorterStemmer

logger = logging.getLogger(__name__)

PAD, UNK, BOS, EOS, SEP = 0, 1, 2, 3, 4
SPECIALS = ("<pad>", "<unk>", "<bos>", "<eos>", "<sep>")
DIGIT = "<digit>"

_TOKEN_RE = re.compile(r"[^\W\d_]+|\d+")


class DatasetError(ValueError):
    pass


class DatasetParseError(DatasetError):
    def __init__(self, lineno, detail):
        super().__init__(f"line {lineno}: {detail}")
        self.lineno = lineno


class SchemaError(DatasetError):
    def __init__(self, lineno, field_name, detail="missing field"):
        super().__init__(f"line {lineno}: {detail} {field_name!r}")
        self.lineno = lineno
        self.field = field_name


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Sample:
    title: str
    abstract: str
    keyphrases: tuple


@dataclass
class Vocabulary:
    tokens: list

    def __post_init__(self):
        self.index = {tok: i for i, tok in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise ConfigError("vocabulary tokens must be unique")
        if tuple(self.tokens[:len(SPECIALS)]) != SPECIALS:
            raise ConfigError("vocabulary must start with the reserved tokens")

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def id(self, token):
        return self.index.get(token, UNK)

    def token(self, idx, oov_list=()):
        if idx < len(self.tokens):
            return self.tokens[idx]
        return oov_list[idx - len(self.tokens)]


@dataclass(frozen=True)
class Document:
    tokens: tuple
    ids: tuple
    extended_ids: tuple
    oov_list: tuple

    def __len__(self):
        return len(self.tokens)


@dataclass
class KeyphraseSequence:
    """Ordered keyphrases; ``flatten`` gives the SEP-delimited, EOS-terminated form."""

    phrases: list = field(default_factory=list)

    def __len__(self):
        return len(self.phrases)

    def flatten(self, sep=SEP, eos=EOS):
        flat = []
        for i, phrase in enumerate(self.phrases):
            if i:
                flat.append(sep)
            flat.extend(phrase)
        flat.append(eos)
        return flat

    @classmethod
    def split(cls, flat, sep=SEP, eos=EOS, max_phrase_len=None):
        """Inverse of :meth:`flatten`; stops at EOS and drops empty phrases."""
        phrases, current = [], []
        for tok in flat:
            if tok == eos:
                break
            if tok == sep:
                if current:
                    phrases.append(current)
                current = []
            else:
                current.append(tok)
        if current:
            phrases.append(current)
        if max_phrase_len is not None:
            phrases = [p[:max_phrase_len] for p in phrases]
        return cls(phrases)


# ------------------------------------------------------------------ loading

def load_dataset(path, mode="train", stats=None):
    """Parse a JSON-lines dataset.

    In ``train`` mode records with no usable keyphrase (or an empty title or
    abstract) are dropped and counted in ``stats["dropped"]``; ``test`` mode
    keeps every record so predictions stay line-aligned.
    """
    if mode not in ("train", "test"):
        raise ConfigError(f"unknown dataset mode {mode!r}")
    if stats is None:
        stats = {}
    stats.setdefault("dropped", 0)
    stats.setdefault("kept", 0)
    samples = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                raise DatasetParseError(lineno, "empty line")
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetParseError(lineno, f"malformed JSON ({exc.msg})") from None
            if not isinstance(record, dict):
                raise DatasetParseError(lineno, "record is not a JSON object")
            for name in ("title", "abstract", "keyword"):
                if name not in record:
                    raise SchemaError(lineno, name)
                if not isinstance(record[name], str):
                    raise SchemaError(lineno, name, "non-string field")
            phrases = tuple(p.strip() for p in record["keyword"].split(";") if p.strip())
            title, abstract = record["title"].strip(), record["abstract"].strip()
            if mode == "train" and (not phrases or not title or not abstract):
                stats["dropped"] += 1
                logger.warning("line %d: dropped (empty title, abstract or keyword)", lineno)
                continue
            if mode == "test":
                for name, value in (("title", title), ("abstract", abstract)):
                    if not value:
                        raise SchemaError(lineno, name, "empty field")
            samples.append(Sample(title, abstract, phrases))
            stats["kept"] += 1
    return samples


def dump_dataset(samples, path):
    """Write ``samples`` in the JSON-lines layout read by :func:`load_dataset`."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in samples:
            record = {"title": s.title, "abstract": s.abstract, "keyword": ";".join(s.keyphrases)}
            fh.write(json.dumps(record, ensure_ascii=False, sort_keys=True) + "\n")


def tokenize(text):
    tokens = []
    for tok in _TOKEN_RE.findall(text.lower()):
        tokens.append(DIGIT if tok[0].isdigit() else tok)
    return tokens


_STEMMER = PorterStemmer()


@lru_cache(maxsize=200_000)
def stem(token):
    return _STEMMER.stem(token)


def source_tokens(sample):
    return tokenize(sample.title) + [SPECIALS[SEP]] + tokenize(sample.abstract)


def build_vocab(samples, size):
    if size <= len(SPECIALS):
        raise ConfigError(f"vocabulary size must exceed {len(SPECIALS)}, got {size}")
    counts = Counter()
    for sample in samples:
        counts.update(tokenize(sample.title))
        counts.update(tokenize(sample.abstract))
        for phrase in sample.keyphrases:
            counts.update(tokenize(phrase))
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [tok for tok, _ in ranked if tok not in SPECIALS][: size - len(SPECIALS)]
    return Vocabulary(list(SPECIALS) + keep)


def encode_source(sample, vocab, max_src_len=200):
    tokens = source_tokens(sample)[:max_src_len] if isinstance(sample, Sample) else list(sample)[:max_src_len]
    vsize = len(vocab)
    ids, extended, oov = [], [], []
    oov_pos = {}
    for tok in tokens:
        idx = vocab.id(tok)
        ids.append(idx)
        if idx == UNK and tok != SPECIALS[UNK]:
            if tok not in oov_pos:
                oov_pos[tok] = len(oov)
                oov.append(tok)
            extended.append(vsize + oov_pos[tok])
        else:
            extended.append(idx)
    return Document(tuple(tokens), tuple(ids), tuple(extended), tuple(oov))


def _find(seq, sub):
    n, k = len(seq), len(sub)
    for i in range(n - k + 1):
        if seq[i:i + k] == sub:
            return i
    return -1


def split_present_absent(keyphrases, doc_tokens):
    """Partition tokenised phrases by stemmed contiguous occurrence in the document.

    Duplicates (same stemmed form) keep their first occurrence.
    """
    stemmed_doc = [stem(t) for t in doc_tokens]
    present, absent, seen = [], [], set()
    for phrase in keyphrases:
        key = tuple(stem(t) for t in phrase)
        if not key or key in seen:
            continue
        seen.add(key)
        (present if _find(stemmed_doc, list(key)) >= 0 else absent).append(list(phrase))
    return present, absent


def order_keyphrases(keyphrases, doc_tokens):
    """Present phrases by first occurrence in the document, then absent ones."""
    stemmed_doc = [stem(t) for t in doc_tokens]
    present, absent = split_present_absent(keyphrases, doc_tokens)
    present.sort(key=lambda p: _find(stemmed_doc, [stem(t) for t in p]))
    return present + absent


def encode_target(keyphrases, vocab, oov_list, doc_tokens=None, max_phrases=20, max_phrase_len=6):
    """catSeq target ids over the extended vocabulary.

    ``keyphrases`` are token lists.  When ``doc_tokens`` is given the phrases
    are reordered present-first (see :func:`order_keyphrases`).
    """
    phrases = [list(p) for p in keyphrases if p]
    if doc_tokens is not None:
        phrases = order_keyphrases(phrases, doc_tokens)
    phrases = [p[:max_phrase_len] for p in phrases[:max_phrases]]
    vsize = len(vocab)
    oov_index = {tok: i for i, tok in enumerate(oov_list)}
    encoded = []
    for phrase in phrases:
        ids = []
        for tok in phrase:
            idx = vocab.id(tok)
            if idx == UNK and tok in oov_index:
                idx = vsize + oov_index[tok]
            ids.append(idx)
        encoded.append(ids)
    return KeyphraseSequence(encoded).flatten()


@dataclass(frozen=True)
class Example:
    """An encoded training/evaluation pair."""

    document: Document
    target: tuple
    phrases: tuple = ()


def encode_corpus(samples, vocab, max_src_len=200, max_phrases=20, max_phrase_len=6):
    examples = []
    for sample in samples:
        doc = encode_source(sample, vocab, max_src_len)
        phrases = [tokenize(p) for p in sample.keyphrases]
        target = encode_target(phrases, vocab, doc.oov_list, doc_tokens=source_tokens(sample),
                               max_phrases=max_phrases, max_phrase_len=max_phrase_len)
        examples.append(Example(doc, tuple(target), tuple(tuple(p) for p in phrases if p)))
    return examples


def phrases_to_text(phrases, vocab, oov_list):
    return [" ".join(vocab.token(i, oov_list) for i in phrase) for phrase in phrases]


def format_prediction_line(phrase_strings):
    return ";".join(phrase_strings)


def parse_prediction_line(line):
    return [p.strip() for p in line.rstrip("\n").split(";") if p.strip()]
