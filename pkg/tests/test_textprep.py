import unicodedata

import numpy as np
import pytest
from collections import Counter
from hypothesis import given, strategies as st

from disorient.errors import EmptyInput
from disorient.textprep import SEP, Vocabulary, build_vocabulary, featurize, ngrams, tokenize


@pytest.mark.parametrize("text, expected", [
    ("@user Vaccini sicuri! #Vaccino http://t.co/x", ["vaccini", "sicuri", "#vaccino"]),
    ("", []),
    ("#NoVax #novax", ["#novax", "#novax"]),
    ("see www.example.com/a?b=1 now", ["see", "now"]),
    ("caffè_latte 3dosi", ["caffè", "latte", "3dosi"]),
    ("@only @mentions", []),
])
def test_tokenize_examples(text, expected):
    assert tokenize(text) == expected


def test_nfc_normalisation():
    decomposed = "perché"
    assert tokenize(decomposed) == tokenize("perché") == ["perché"]


@given(st.text(max_size=80))
def test_tokenize_idempotent(text):
    toks = tokenize(text)
    assert tokenize(" ".join(toks)) == toks
    assert all(t and not t.startswith("@") for t in toks)
    assert all(SEP not in t for t in toks)


def test_vocabulary_examples():
    v = build_vocabulary([["a", "b"]], min_count=1)
    assert set(v.terms()) == {"a", "b", "a" + SEP + "b"} and len(v) == 3
    assert build_vocabulary([["a"], ["a"]], min_count=2).terms() == ["a"]
    with pytest.raises(EmptyInput):
        build_vocabulary([[], []])


docs_st = st.lists(st.lists(st.sampled_from(["a", "b", "c", "#d", "e"]), max_size=8),
                   min_size=1, max_size=10).filter(lambda d: any(d))


@given(docs_st, st.integers(1, 3))
def test_vocabulary_matches_bruteforce_counts(docs, min_count):
    table = Counter()
    for d in docs:
        for t in d:
            table[t] += 1
        for i in range(len(d) - 1):
            table[d[i] + SEP + d[i + 1]] += 1
    v = build_vocabulary(docs, min_count)
    assert set(v.terms()) == {t for t, c in table.items() if c >= min_count}
    assert sorted(v.index.values()) == list(range(len(v)))


@given(docs_st, st.randoms())
def test_vocabulary_order_independent(docs, rnd):
    shuffled = list(docs)
    rnd.shuffle(shuffled)
    assert build_vocabulary(docs, 1).index == build_vocabulary(shuffled, 1).index


def test_featurize_examples():
    v = build_vocabulary([["a", "b"]], min_count=1)
    fv = featurize(["a", "b"], v)
    assert list(fv.counts) == [1, 1, 1]
    assert featurize(["z"], v).nnz == 0


@given(docs_st, st.lists(st.sampled_from(["a", "b", "c", "#d", "e", "zz"]), max_size=12))
def test_featurize_matches_dense_oracle(docs, query):
    v = build_vocabulary(docs, 1)
    fv = featurize(query, v)
    dense = np.zeros(len(v))
    for i, t in enumerate(query):
        if t in v.index:
            dense[v.index[t]] += 1
        if i + 1 < len(query) and t + SEP + query[i + 1] in v.index:
            dense[v.index[t + SEP + query[i + 1]]] += 1
    np.testing.assert_array_equal(fv.dense(), dense)
    assert np.all(np.diff(fv.indices) > 0) and np.all(fv.counts >= 1)
    assert fv.total() == sum(1 for t in ngrams(query) if t in v.index)


def test_vocabulary_json_roundtrip():
    v = build_vocabulary([["ciao", "#vaccino", "ciao"]], 1)
    assert Vocabulary.from_json(v.to_json()) == v
