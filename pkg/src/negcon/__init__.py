"""Negative lexical constraints for beam-search sequence decoding."""

from .constraints import (
    SINGLE,
    Constraint,
    ConstraintSet,
    ConstraintTrie,
    SelectionPolicy,
    TrieCursor,
    advance_cursor,
    build_trie,
    extract_paraphrase_constraints,
    extract_refinement_constraints,
    penalized_ids,
    select_constraints,
    stem_constraints,
)
from .decoder import ConstrainedBeamDecoder, DecodeConfig, Hypothesis, Method, decode
from .metrics import BleuConfig, CoverageLevel, EvalReport, corpus_bleu, coverage, sample_references, similarity_bleu
from .records import SentenceRecord
from .synthetic import SyntheticSuite, make_suite
from .scoring import (
    EmulatedLearnedScorer,
    LearnedInputFormatter,
    LexiconScorer,
    NgramScorer,
    TabularScorer,
    format_learned_input,
    parse_learned_input,
)
from .text import StemmerConfig, Vocabulary, detokenize, segment, stem, word_tokenize

__version__ = "0.1.0"
