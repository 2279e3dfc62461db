import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from negcon.constraints import ConstraintSet, build_trie, advance_cursor
from negcon.decoder import (
    ConstrainedBeamDecoder,
    DecodeConfig,
    EmptySource,
    Expansion,
    Method,
    apply_filter_multisubword,
    apply_filter_subword,
    apply_penalty_subword,
    apply_penalty_wholetoken,
    decode,
)
from negcon.scoring import TabularScorer
from negcon.text import Vocabulary, detokenize, segment
from oracles import RandomScorer, contains_run, exhaustive_decode

METHODS = [m.value for m in Method]


def tiny_vocab(n_pieces):
    return Vocabulary([f"▁{chr(97 + i)}" for i in range(n_pieces)], unk_policy="error")


def piece_ids(vocab):
    return sorted(i for i in range(len(vocab)) if i not in vocab.special_ids)


def test_method_parse_aliases():
    assert Method.parse("penalty_wholetoken") is Method.PENALTY_WHOLETOKEN
    with pytest.raises(ValueError):
        Method.parse("nope")


@pytest.mark.parametrize("kwargs", [{"beam_size": 0}, {"max_len": 0}, {"penalty": -1.0}, {"threshold": 0.5}])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        DecodeConfig(**kwargs)


def test_forced_sequence(example_vocab):
    v = example_vocab.id_of
    path = [v["▁be"], v["am"], v["▁search"], example_vocab.eos]
    table = {((), tuple(path[:i])): {path[i]: 0.99} for i in range(len(path))}
    scorer = TabularScorer(example_vocab, table)
    best = decode([], scorer, DecodeConfig(beam_size=2, max_len=6))[0]
    assert best.tokens == tuple(path)
    assert detokenize(best.tokens, example_vocab) == "beam search"


@settings(max_examples=60, deadline=None)
@given(
    st.integers(2, 5),
    st.integers(0, 10_000),
    st.sampled_from(METHODS),
    st.lists(st.lists(st.integers(0, 4), min_size=1, max_size=3), max_size=3),
    st.sampled_from([0.0, 0.5, 2.0]),
    st.sampled_from([-math.inf, -2.0, -0.7, 0.0]),
)
def test_wide_beam_equals_exhaustive(n_pieces, seed, method, raw, penalty, threshold):
    vocab = tiny_vocab(n_pieces)
    pieces = piece_ids(vocab)
    constraints = [[pieces[t % n_pieces] for t in c] for c in raw]
    cs = ConstraintSet.from_id_lists(constraints, vocab)
    scorer = RandomScorer(vocab, seed)
    max_len = 3
    cfg = DecodeConfig(beam_size=10_000, max_len=max_len, method=method, penalty=penalty, threshold=threshold)
    got = [(h.tokens, h.cum_score) for h in decode([1], scorer, cfg, cs)]
    want = exhaustive_decode([1], scorer, vocab, max_len, method, [c.subword_ids for c in cs], penalty, threshold)
    assert [t for t, _ in got] == [t for t, _ in want]
    assert np.allclose([s for _, s in got], [s for _, s in want])


@pytest.mark.parametrize("method, value", [("penalty_subword", 0.0), ("penalty_wholetoken", 0.0), ("filter_subword", -math.inf), ("filter_multisubword", -math.inf)])
def test_neutral_parameters(small_suite, method, value):
    vocab = small_suite.vocab
    base = DecodeConfig(beam_size=4, max_len=25)
    key = "penalty" if method.startswith("penalty") else "threshold"
    cfg = DecodeConfig(beam_size=4, max_len=25, method=method, **{key: value})
    for rec in small_suite.records[:10]:
        src = segment(rec.source, vocab)
        cs = ConstraintSet.from_surfaces(rec.references[0].split(), vocab)
        plain = decode(src, small_suite.scorer, base)
        constrained = decode(src, small_suite.scorer, cfg, cs)
        assert [h.tokens for h in plain] == [h.tokens for h in constrained]


def test_penalty_subword_pointwise():
    logits = np.log(np.full(10, 0.1))
    cs = ConstraintSet.from_id_lists([(7,)])
    out = apply_penalty_subword(logits, cs, 2.0)
    assert out[7] == pytest.approx(logits[7] - 2.0)
    assert np.array_equal(np.delete(out, 7), np.delete(logits, 7))
    assert np.array_equal(apply_penalty_subword(logits, cs, 0.0), logits)
    assert np.array_equal(apply_penalty_subword(logits, ConstraintSet(), 3.0), logits)


def test_penalty_wholetoken_waits_for_prefix(example_vocab):
    v = example_vocab.id_of
    cs = ConstraintSet.from_id_lists([(v["▁be"], v["am"], v["▁search"])])
    trie = build_trie(cs)
    logits = np.zeros(len(example_vocab))
    cur = trie.start_cursor()
    assert np.array_equal(apply_penalty_wholetoken(logits, cur, 1.0), logits)
    for tok in (v["▁be"], v["am"]):
        cur, _ = advance_cursor(cur, tok, -1.0)
    out = apply_penalty_wholetoken(logits, cur, 1.0)
    assert np.flatnonzero(out).tolist() == [v["▁search"]]


@settings(max_examples=100)
@given(st.lists(st.integers(0, 11), min_size=1, max_size=6, unique=True), st.lists(st.integers(0, 11), max_size=6), st.integers(0, 2**31))
def test_wholetoken_equals_subword_for_single_subword_sets(cons, prefix, seed):
    logits = np.random.default_rng(seed).normal(size=12)
    cs = ConstraintSet.from_id_lists([(c,) for c in cons])
    cur = build_trie(cs).start_cursor()
    for tok in prefix:
        cur, _ = advance_cursor(cur, tok, -1.0)
    assert np.array_equal(apply_penalty_wholetoken(logits, cur, 1.5), apply_penalty_subword(logits, cs, 1.5))


def test_filter_subword_thresholds():
    cs = ConstraintSet.from_id_lists([(3,)])
    exps = [Expansion(3, -0.5), Expansion(4, -9.0)]
    assert apply_filter_subword(exps, cs, 0.0) == [Expansion(4, -9.0)]
    assert apply_filter_subword(exps, cs, -math.inf) == exps
    assert apply_filter_subword(exps, cs, -1.0) == exps


def test_filter_multisubword_only_on_completion(example_vocab):
    v = example_vocab.id_of
    cs = ConstraintSet.from_id_lists([(v["▁be"], v["am"], v["▁search"])])
    cur = build_trie(cs).start_cursor()
    for tok in (v["▁be"], v["am"]):
        cur, done = advance_cursor(cur, tok, -0.1)
        assert apply_filter_multisubword([Expansion(tok, -0.1, tuple(done))], 0.0)
    _, done = advance_cursor(cur, example_vocab.eos, -0.1)
    assert apply_filter_multisubword([Expansion(example_vocab.eos, -0.1, tuple(done))], 0.0)
    _, done = advance_cursor(cur, v["▁search"], -0.1)
    assert apply_filter_multisubword([Expansion(v["▁search"], -0.1, tuple(done))], 0.0) == []


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000), st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=2), min_size=1, max_size=3))
def test_threshold_zero_filter_output_never_contains_constraint(seed, raw):
    vocab = tiny_vocab(4)
    pieces = piece_ids(vocab)
    cs = ConstraintSet.from_id_lists([[pieces[t] for t in c] for c in raw])
    hyps = decode([1], RandomScorer(vocab, seed), DecodeConfig(beam_size=3, max_len=5, method="filter_multisubword", threshold=0.0), cs)
    best = hyps[0]
    if not best.constraint_violated:
        assert not any(contains_run(best.tokens, c.subword_ids) for c in cs)


def test_fallback_when_everything_filtered():
    vocab = tiny_vocab(1)
    a = vocab.id_of["▁a"]
    # only ▁a or EOS are ever likely; forbid both, so every expansion is filtered
    table = {("*", ()): {a: 0.5, vocab.eos: 0.5}}
    scorer = TabularScorer(vocab, table, context_len=0)
    cs = ConstraintSet.from_id_lists([(t,) for t in range(len(vocab)) if t not in (vocab.bos, vocab.sep, vocab.csep)])
    hyps = decode([], scorer, DecodeConfig(beam_size=2, max_len=3, method="filter_subword", threshold=0.0), cs)
    assert hyps and hyps[0].constraint_violated


def test_empty_source_policy(example_vocab):
    scorer = TabularScorer(example_vocab, {})
    assert decode([], scorer, DecodeConfig(beam_size=1, max_len=2))
    with pytest.raises(EmptySource):
        decode([], scorer, DecodeConfig(), require_source=True)


def test_decoder_estimator(small_suite):
    est = ConstrainedBeamDecoder(small_suite.scorer, beam_size=3, max_len=20)
    params = est.get_params()
    assert params["beam_size"] == 3 and params["method"] == "none"
    twin = clone(est).set_params(method="filter_multisubword", threshold=0.0).fit()
    est.fit()
    rec = small_suite.records[0]
    plain = est.predict([rec.source])[0]
    content = [w for w in plain.split() if w not in small_suite.stopwords]
    constrained = twin.predict([rec.source], constraints=[[content[0]]])[0]
    assert content[0] not in constrained.split()
    assert len(est.decode_nbest(rec.source)) >= 1


def test_decoder_estimator_requires_fit(small_suite):
    from sklearn.exceptions import NotFittedError

    with pytest.raises(NotFittedError):
        ConstrainedBeamDecoder(small_suite.scorer).predict(["x"])
