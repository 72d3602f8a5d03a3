import pytest
from hypothesis import given, settings, strategies as st

from labloop.chunking import (DEFAULT_SEPARATORS, chunk_recursive, chunk_semantic,
                              filter_references, separator_density, split_densities,
                              split_sentences)
from labloop.gateway import MockEmbeddingProvider


def texts_of(text, spans):
    return [text[s:e] for s, e in spans]


def test_short_text_single_chunk():
    text = "0123456789"
    assert chunk_recursive(text, max_size=100) == [(0, len(text))]


def test_hand_traced_sentence_split():
    # "A. B. C." splits at the two ". " occurrences; separators stay attached
    # to the piece they close, so the spans partition the 8 chars exactly.
    text = "A. B. C."
    spans = chunk_recursive(text, max_size=4, overlap=0, separators=[". "])
    assert texts_of(text, spans) == ["A. ", "B. ", "C."]
    assert spans == [(0, 3), (3, 6), (6, 8)]


def test_priority_falls_through_separators():
    text = "para one line a\nline b\n\npara two is rather longer\nwith more"
    spans = chunk_recursive(text, max_size=30, overlap=0,
                            separators=["\n\n", "\n", " "])
    assert "".join(texts_of(text, spans)) == text
    assert all(e - s <= 30 for s, e in spans)


def test_hard_split_without_separators():
    text = "x" * 25
    spans = chunk_recursive(text, max_size=10, overlap=0, separators=["\n"])
    assert spans == [(0, 10), (10, 20), (20, 25)]


def test_empty_text():
    assert chunk_recursive("", 10) == []


def test_overlap_reaches_back():
    text = "aaaa bbbb cccc dddd"
    spans = chunk_recursive(text, max_size=8, overlap=3, separators=[" "])
    assert spans[0][0] == 0
    for (s0, e0), (s1, e1) in zip(spans, spans[1:]):
        assert s1 <= e0                        # contiguous or overlapping
        assert e0 - s1 <= 3                    # overlap bounded
        assert e1 - s1 <= 8                    # size bound holds after widening
    # removing each chunk's overlap reconstructs the text
    rebuilt = text[spans[0][0]:spans[0][1]]
    prev_end = spans[0][1]
    for s, e in spans[1:]:
        rebuilt += text[prev_end:e]
        prev_end = e
    assert rebuilt == text


@settings(max_examples=200, deadline=None)
@given(st.text(alphabet="ab .\n", max_size=300),
       st.integers(min_value=2, max_value=40))
def test_reassembly_property(text, max_size):
    spans = chunk_recursive(text, max_size=max_size, overlap=0,
                            separators=list(DEFAULT_SEPARATORS))
    assert "".join(texts_of(text, spans)) == text
    if text:
        assert spans[0][0] == 0 and spans[-1][1] == len(text)
        assert all(e - s <= max_size for s, e in spans)
        for (_, e0), (s1, _) in zip(spans, spans[1:]):
            assert s1 == e0


# --------------------------------------------------------------------------
# semantic chunking

def embed(texts):
    return MockEmbeddingProvider().embed(list(texts))


def test_semantic_identical_sentences_merge():
    groups = chunk_semantic(["same sentence"] * 4, 0.9, embed)
    assert groups == [(0, 4)]


def test_semantic_threshold_one_distinct_no_merge():
    sentences = ["completely different alpha", "unrelated beta text", "gamma variant"]
    groups = chunk_semantic(sentences, 1.0, embed)
    assert groups == [(0, 1), (1, 2), (2, 3)]


def test_semantic_selective_merge():
    # Under the mock embedder, pick a threshold strictly between the
    # adjacent-pair cosines so only the most similar pair merges.
    from labloop.gateway import cosine
    sentences = ["the cat sat on the mat", "the cat sat on the hat",
                 "quantum chromodynamics", "market equilibria"]
    vecs = embed(sentences)
    cos01 = cosine(vecs[0], vecs[1])
    cos12 = cosine(vecs[1], vecs[2])
    cos23 = cosine(vecs[2], vecs[3])
    assert cos01 > max(cos12, cos23)
    threshold = (cos01 + max(cos12, cos23)) / 2
    groups = chunk_semantic(sentences, threshold, embed)
    assert groups == [(0, 2), (2, 3), (3, 4)]


def test_semantic_threshold_validation():
    with pytest.raises(ValueError):
        chunk_semantic(["a"], 0.0, embed)
    with pytest.raises(ValueError):
        chunk_semantic(["a"], 1.5, embed)


def test_split_sentences_covers_terminators():
    spans = split_sentences("First point. Second point! Third?\nFourth line")
    pieces = ["First point. Second point! Third?\nFourth line"[s:e] for s, e in spans]
    assert len(pieces) == 4
    assert pieces[0].startswith("First")


# --------------------------------------------------------------------------
# reference filtering

class FakeChunk:
    def __init__(self, density):
        self.separator_density = density


def test_uniform_density_drops_nothing():
    chunks = [FakeChunk(0.05) for _ in range(10)]
    kept, dropped = filter_references(chunks)
    assert len(kept) == 10 and dropped == []


def test_bimodal_densities_drop_high_mode():
    # 2-means on {0.01 x10, 0.2 x5}: the only sensible 1-D split is between
    # the two plateaus (means 0.01 and 0.2, threshold 0.105), so exactly the
    # five dense chunks drop.
    prose = [FakeChunk(0.01) for _ in range(10)]
    refs = [FakeChunk(0.2) for _ in range(5)]
    kept, dropped = filter_references(prose + refs)
    assert kept == prose
    assert dropped == refs


def test_empty_list():
    assert filter_references([]) == ([], [])


def test_near_equal_modes_guarded_as_unimodal():
    # means 0.10 and 0.11: relative gap ~9% < 20%, nothing dropped
    chunks = [FakeChunk(0.10)] * 5 + [FakeChunk(0.11)] * 5
    kept, dropped = filter_references(chunks)
    assert dropped == []


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(min_value=0.04, max_value=0.05), min_size=1, max_size=30))
def test_uniform_band_never_drops(densities):
    # all densities within a 25% band -> no 2-means split clears the 20% gap
    chunks = [FakeChunk(d) for d in densities]
    kept, dropped = filter_references(chunks)
    assert dropped == []
    assert len(kept) == len(densities)


def test_split_densities_two_value_set():
    result = split_densities([0.01] * 10 + [0.2] * 5)
    assert result is not None
    m_lo, m_hi, threshold = result
    assert m_lo == pytest.approx(0.01)
    assert m_hi == pytest.approx(0.2)
    assert 0.01 < threshold < 0.2


def test_separator_density_counts_per_char():
    text = "a, b, c."
    # separators: two commas + one period over 8 chars
    assert separator_density(text) == pytest.approx(3 / 8)
    assert separator_density("") == 0.0
