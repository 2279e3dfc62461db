"""Vocabulary handling, greedy subword segmentation, tokenization and stemming."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

WORD_BOUNDARY = "▁"  # "▁"

BOS = "<s>"
EOS = "</s>"
UNK = "<unk>"
SEP = "<sep>"
CSEP = "<c>"
SPECIAL_NAMES = ("BOS", "EOS", "UNK", "SEP", "CSEP")
_DEFAULT_SPECIALS = {"BOS": BOS, "EOS": EOS, "UNK": UNK, "SEP": SEP, "CSEP": CSEP}


class TextError(ValueError):
    pass


class UnsegmentableInput(TextError):
    pass


class InvalidId(TextError):
    pass


class Vocabulary:
    """Bidirectional map between subword strings and integer ids.

    Special markers live in the same id space as ordinary pieces. With the
    default ``unk_policy="char-fallback"`` every character occurring in the
    pieces is seeded both as a word-initial (``"▁x"``) and as a continuation
    (``"x"``) piece, so any text over that alphabet can be segmented without
    loss.
    """

    def __init__(
        self,
        pieces: Iterable[str],
        specials: dict[str, str] | None = None,
        unk_policy: str = "char-fallback",
        extra_chars: Iterable[str] = (),
    ) -> None:
        if unk_policy not in ("error", "char-fallback"):
            raise ValueError(f"unknown unk_policy {unk_policy!r}")
        self.unk_policy = unk_policy
        self.word_boundary_marker = WORD_BOUNDARY
        specials = dict(_DEFAULT_SPECIALS, **(specials or {}))
        missing = set(SPECIAL_NAMES) - set(specials)
        if missing:
            raise TextError(f"missing special markers: {sorted(missing)}")

        entries: list[str] = []
        id_of: dict[str, int] = {}

        def add(piece: str) -> None:
            if piece and piece != WORD_BOUNDARY and piece not in id_of:
                id_of[piece] = len(entries)
                entries.append(piece)

        pieces = list(pieces)
        if len(set(specials[n] for n in SPECIAL_NAMES)) != len(SPECIAL_NAMES):
            raise TextError("special markers must be distinct")
        for piece in pieces:
            add(piece)
        for name in SPECIAL_NAMES:
            add(specials[name])
        if unk_policy == "char-fallback":
            special_set = set(specials.values())
            chars = {c for p in pieces if p not in special_set for c in p}
            chars.update(extra_chars)
            chars.discard(WORD_BOUNDARY)
            for c in sorted(c for c in chars if not c.isspace()):
                add(c)
                add(WORD_BOUNDARY + c)

        self.entries: tuple[str, ...] = tuple(entries)
        self.id_of: dict[str, int] = id_of
        self.bos, self.eos, self.unk, self.sep, self.csep = (id_of[specials[n]] for n in SPECIAL_NAMES)
        self.special_ids = frozenset((self.bos, self.eos, self.unk, self.sep, self.csep))
        self._max_piece_len = max((len(e) for e in entries), default=1)

    @classmethod
    def from_file(cls, path: str | Path, unk_policy: str = "char-fallback") -> "Vocabulary":
        """Read a vocabulary file.

        Header lines ``#special NAME <line>`` declare which (0-based) line holds
        each special marker; the remaining lines are pieces in id order.
        Undeclared specials get the default marker strings.
        """
        specials: dict[str, int] = {}
        pieces: list[str] = []
        for raw in Path(path).read_text(encoding="utf-8").splitlines():
            if raw.startswith("#special "):
                _, name, line = raw.split()
                if name not in SPECIAL_NAMES:
                    raise TextError(f"unknown special {name!r}")
                specials[name] = int(line)
            else:
                pieces.append(raw)
        if len(set(pieces)) != len(pieces) or any(p in ("", WORD_BOUNDARY) for p in pieces):
            raise TextError("vocabulary file has duplicate or empty pieces; ids would not match line numbers")
        special_strings = {}
        for name, line in specials.items():
            if not 0 <= line < len(pieces):
                raise TextError(f"special {name} points past the end of the file")
            special_strings[name] = pieces[line]
        return cls(pieces, specials=special_strings, unk_policy=unk_policy)

    def to_file(self, path: str | Path) -> None:
        header = [f"#special {name} {getattr(self, name.lower())}" for name in SPECIAL_NAMES]
        Path(path).write_text("\n".join(header + list(self.entries)) + "\n", encoding="utf-8")

    def __len__(self) -> int:
        return len(self.entries)

    def __contains__(self, piece: str) -> bool:
        return piece in self.id_of

    def __getitem__(self, idx: int) -> str:
        if not 0 <= idx < len(self.entries):
            raise InvalidId(idx)
        return self.entries[idx]

    def is_word_initial(self, idx: int) -> bool:
        return self[idx].startswith(WORD_BOUNDARY) or idx in self.special_ids

    def word_initial_ids(self) -> frozenset[int]:
        return frozenset(i for i in range(len(self)) if self.is_word_initial(i))


@dataclass(frozen=True)
class Token:
    surface: str
    subwords: tuple[int, ...]
    is_word_initial: bool = True


def _segment_word(word: str, vocab: Vocabulary) -> list[int]:
    s = WORD_BOUNDARY + word
    out: list[int] = []
    i = 0
    while i < len(s):
        for j in range(min(len(s), i + vocab._max_piece_len), i, -1):
            piece_id = vocab.id_of.get(s[i:j])
            if piece_id is not None and piece_id not in vocab.special_ids:
                out.append(piece_id)
                i = j
                break
        else:
            if vocab.unk_policy == "error":
                raise UnsegmentableInput(f"cannot segment {s[i]!r} in {word!r}")
            out.append(vocab.unk)
            i += 1
    return out


def segment(text: str, vocab: Vocabulary) -> list[int]:
    """Greedy longest-match segmentation, word by word.

    A whitespace-delimited word spelled exactly like the ``<sep>``/``<c>``/unk
    marker maps to that marker's id.
    """
    markers = {vocab[i]: i for i in (vocab.unk, vocab.sep, vocab.csep)}
    ids: list[int] = []
    for word in text.split():
        if word in markers:
            ids.append(markers[word])
        else:
            ids.extend(_segment_word(word, vocab))
    return ids


def detokenize(subword_ids: Sequence[int], vocab: Vocabulary) -> str:
    parts = []
    for idx in subword_ids:
        piece = vocab[idx]
        if idx in (vocab.bos, vocab.eos):
            continue
        if idx in vocab.special_ids:
            piece = WORD_BOUNDARY + piece
        parts.append(piece)
    return "".join(parts).replace(WORD_BOUNDARY, " ").strip(" ")


def to_tokens(text: str, vocab: Vocabulary) -> list[Token]:
    return [Token(word, tuple(_segment_word(word, vocab))) for word in text.split()]


def is_punctuation(token: str) -> bool:
    return bool(token) and all(unicodedata.category(c)[0] in "PS" for c in token)


def word_tokenize(text: str) -> list[str]:
    """Whitespace split, then every punctuation/symbol character becomes its own token."""
    tokens: list[str] = []
    for chunk in text.split():
        buf = []
        for c in chunk:
            if unicodedata.category(c)[0] in "PS":
                if buf:
                    tokens.append("".join(buf))
                    buf = []
                tokens.append(c)
            else:
                buf.append(c)
        if buf:
            tokens.append("".join(buf))
    return tokens


def content_tokens(text: str, stopwords: Iterable[str] = ()) -> list[str]:
    stop = {w.casefold() for w in stopwords}
    return [t for t in word_tokenize(text) if not is_punctuation(t) and t.casefold() not in stop]


@dataclass(frozen=True)
class StemmerConfig:
    suffix_rules: tuple[tuple[str, int], ...] = ()
    casefold: bool = True
    _ordered: tuple[tuple[str, int], ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        rules = tuple((str(s), int(m)) for s, m in self.suffix_rules)
        object.__setattr__(self, "suffix_rules", rules)
        # stable sort keeps file order among equal-length suffixes
        object.__setattr__(self, "_ordered", tuple(sorted(rules, key=lambda r: -len(r[0]))))

    @classmethod
    def from_file(cls, path: str | Path, casefold: bool = True) -> "StemmerConfig":
        rules = []
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            suffix, min_len = line.split("\t")
            rules.append((suffix, int(min_len)))
        return cls(tuple(rules), casefold)


def stem(word: str, cfg: StemmerConfig) -> str:
    w = word.casefold() if cfg.casefold else word
    for suffix, min_len in cfg._ordered:
        if w.endswith(suffix) and len(w) - len(suffix) >= max(min_len, 1):
            return w[: -len(suffix)]
    return w


def load_word_list(path: str | Path) -> frozenset[str]:
    words = set()
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            words.add(line.casefold())
    return frozenset(words)


_DATA = Path(__file__).parent / "data"
DEFAULT_STEMMER_RULES = _DATA / "stemmer_rules.tsv"
DEFAULT_STOPWORDS = _DATA / "stopwords.txt"


def default_stemmer() -> StemmerConfig:
    return StemmerConfig.from_file(DEFAULT_STEMMER_RULES)


def default_stopwords() -> frozenset[str]:
    return load_word_list(DEFAULT_STOPWORDS)
