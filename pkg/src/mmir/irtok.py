"""Subword tokenizer for IR text: WordPiece trained from scratch.

Statements are pre-tokenized by whitespace plus a fixed set of IR punctuation
characters, then segmented with greedy longest-match WordPiece ("##" marks a
continuation). Encoded statements are framed [CLS] body [SEP] and padded to a
fixed length (64 by default). See docs/grammar.md for the punctuation set and
the spacing conventions that make detokenization an exact inverse.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SEQ_LEN = 64
SPECIAL_TOKENS = ("[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]")
PAD_ID, UNK_ID, CLS_ID, SEP_ID, MASK_ID = range(5)
CONTINUATION = "##"

# IR punctuation split into standalone pre-tokens.
PUNCT = set('%@,=()[]{}*!<>:;"')

# Spacing rules used to invert the punctuation split (see docs/grammar.md):
# no space is emitted after an opener / before a closer-or-suffix.
_NO_SPACE_AFTER = {"(", "[", "<", '"'}
_NO_SPACE_BEFORE = {",", ")", "]", ">", ":", ";", "*", '"'}
_SIGILS = {"%", "@", "!"}


def pre_tokenize(statement: str) -> list[str]:
    """Split a normalized statement on whitespace and punctuation characters."""
    words = []
    for chunk in statement.split():
        buf = ""
        for ch in chunk:
            if ch in PUNCT:
                if buf:
                    words.append(buf)
                    buf = ""
                words.append(ch)
            else:
                buf += ch
        if buf:
            words.append(buf)
    return words


@dataclass
class Vocab:
    tokens: list[str]
    _index: dict[str, int] = field(init=False, repr=False)
    _max_token_len: int = field(init=False, repr=False)

    def __post_init__(self):
        if tuple(self.tokens[:5]) != SPECIAL_TOKENS:
            raise ValueError(f"first five tokens must be {SPECIAL_TOKENS}")
        self._index = {}
        for i, tok in enumerate(self.tokens):
            if not tok:
                raise ValueError(f"empty token at id {i}")
            if tok in self._index:
                raise ValueError(f"duplicate token {tok!r}")
            self._index[tok] = i
        self._max_token_len = max(len(t) for t in self.tokens)

    def __len__(self) -> int:
        return len(self.tokens)

    def __contains__(self, token: str) -> bool:
        return token in self._index

    def id_of(self, token: str) -> int:
        return self._index[token]

    def token_of(self, token_id: int) -> str:
        if not 0 <= token_id < len(self.tokens):
            raise IndexError(f"token id {token_id} out of range for vocab of {len(self.tokens)}")
        return self.tokens[token_id]

    def save(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.tokens) + "\n", encoding="utf-8")

    @classmethod
    def load(cls, path: Path | str) -> "Vocab":
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        return cls(tokens=lines)


@dataclass
class TokenSeq:
    ids: np.ndarray
    attention_mask: np.ndarray

    def __post_init__(self):
        self.ids = np.asarray(self.ids, dtype=np.int64)
        self.attention_mask = np.asarray(self.attention_mask, dtype=np.int64)

    @property
    def body_length(self) -> int:
        """Number of body tokens (excludes CLS and SEP)."""
        return int(self.attention_mask.sum()) - 2

    def body_positions(self) -> np.ndarray:
        """Sequence positions holding body tokens, i.e. 1..body_length."""
        return np.arange(1, 1 + self.body_length)


def _word_units(word: str) -> list[str]:
    return [word[0]] + [CONTINUATION + ch for ch in word[1:]]


def _merge_step(word_freqs: dict[tuple[str, ...], int]):
    """One WordPiece merge: pick the pair maximizing freq(ab)/(freq(a)*freq(b))."""
    unit_freq: dict[str, int] = {}
    pair_freq: dict[tuple[str, str], int] = {}
    for units, freq in word_freqs.items():
        for u in units:
            unit_freq[u] = unit_freq.get(u, 0) + freq
        for a, b in zip(units, units[1:]):
            pair_freq[(a, b)] = pair_freq.get((a, b), 0) + freq
    if not pair_freq:
        return None
    # highest score wins; ties fall to higher pair count, then the
    # lexicographically smallest merged token, so induction is deterministic
    best = min(
        pair_freq.items(),
        key=lambda kv: (
            -kv[1] / (unit_freq[kv[0][0]] * unit_freq[kv[0][1]]),
            -kv[1],
            kv[0][0] + kv[0][1][len(CONTINUATION):],
        ),
    )[0]
    merged = best[0] + best[1][len(CONTINUATION):]
    new_freqs: dict[tuple[str, ...], int] = {}
    for units, freq in word_freqs.items():
        out = []
        i = 0
        while i < len(units):
            if i + 1 < len(units) and (units[i], units[i + 1]) == best:
                out.append(merged)
                i += 2
            else:
                out.append(units[i])
                i += 1
        key = tuple(out)
        new_freqs[key] = new_freqs.get(key, 0) + freq
    return merged, new_freqs


def train_tokenizer(corpus, vocab_size: int = 8192, seed: int = 0) -> Vocab:
    """WordPiece induction over the pre-tokenized corpus.

    The induction is fully deterministic (ties broken by pair count, then
    lexicographically); ``seed`` is accepted for interface stability only.
    Raises ValueError if the corpus is empty or vocab_size cannot hold the
    specials plus every single-character unit seen in the corpus.
    """
    word_counts: dict[str, int] = {}
    for doc in corpus:
        for stmt in doc.statements:
            for w in pre_tokenize(stmt):
                word_counts[w] = word_counts.get(w, 0) + 1
    if not word_counts:
        raise ValueError("empty corpus: no words to train on")

    word_freqs = {tuple(_word_units(w)): c for w, c in sorted(word_counts.items())}
    alphabet = sorted({u for units in word_freqs for u in units})
    if vocab_size < len(SPECIAL_TOKENS) + len(alphabet):
        raise ValueError(
            f"vocab_size {vocab_size} cannot hold {len(SPECIAL_TOKENS)} specials "
            f"plus {len(alphabet)} single-character units"
        )

    tokens = list(SPECIAL_TOKENS) + alphabet
    seen = set(tokens)
    while len(tokens) < vocab_size:
        step = _merge_step(word_freqs)
        if step is None:
            break
        merged, word_freqs = step
        if merged not in seen:
            tokens.append(merged)
            seen.add(merged)
    return Vocab(tokens=tokens)


def _segment_word(vocab: Vocab, word: str) -> list[int] | None:
    """Greedy longest-match segmentation; None if the word cannot be covered."""
    ids = []
    i = 0
    while i < len(word):
        end = min(len(word), i + vocab._max_token_len)
        j = end
        while j > i:
            cand = word[i:j] if i == 0 else CONTINUATION + word[i:j]
            if cand in vocab:
                ids.append(vocab.id_of(cand))
                break
            j -= 1
        else:
            return None
        i = j
    return ids


def encode_statement(vocab: Vocab, statement: str, seq_len: int = SEQ_LEN) -> TokenSeq:
    """Encode one normalized statement as [CLS] body [SEP] padded to seq_len.

    A pre-token that cannot be fully segmented becomes a single [UNK]. The
    body is truncated from the right so the framed length never exceeds
    seq_len.
    """
    body: list[int] = []
    for word in pre_tokenize(statement):
        seg = _segment_word(vocab, word)
        body.extend(seg if seg is not None else [UNK_ID])
    body = body[: seq_len - 2]
    ids = np.full(seq_len, PAD_ID, dtype=np.int64)
    ids[0] = CLS_ID
    ids[1 : 1 + len(body)] = body
    ids[1 + len(body)] = SEP_ID
    mask = (np.arange(seq_len) < 2 + len(body)).astype(np.int64)
    return TokenSeq(ids=ids, attention_mask=mask)


def decode_ids(vocab: Vocab, ids) -> list[str]:
    """Per-id token lookup in array form: PAD dropped, no subword merging."""
    out = []
    for i in np.asarray(ids).ravel().tolist():
        tok = vocab.token_of(int(i))
        if tok != SPECIAL_TOKENS[PAD_ID]:
            out.append(tok)
    return out


def _join_words(words: list[str]) -> str:
    out = ""
    prev = ""
    for w in words:
        if not out:
            out = w
        elif prev in _SIGILS:
            out += w  # sigil glues to the name that follows
        elif w in _NO_SPACE_BEFORE or prev in _NO_SPACE_AFTER:
            out += w
        elif w == "(" and prev[0] in ("%", "@"):
            out += w  # call target: "@f(" / "%fp("
        else:
            out += " " + w
        prev = prev + w if prev in _SIGILS else w
    return out


def detokenize(tokens: list[str]) -> str:
    """Merge "##" continuations and re-attach punctuation.

    Inverse of pre_tokenize under the corpus spacing conventions; [CLS] and
    [SEP] are stripped. Raises ValueError on a PAD token or a continuation
    with nothing to attach to.
    """
    words: list[str] = []
    for tok in tokens:
        if tok == SPECIAL_TOKENS[PAD_ID]:
            raise ValueError("PAD token in detokenize input")
        if tok in (SPECIAL_TOKENS[CLS_ID], SPECIAL_TOKENS[SEP_ID]):
            continue
        if tok.startswith(CONTINUATION):
            if not words:
                raise ValueError(f"leading continuation token {tok!r}")
            words[-1] += tok[len(CONTINUATION):]
        else:
            words.append(tok)
    return _join_words(words)


def vocab_stats(vocab: Vocab, corpus) -> dict:
    """Coverage stats: statement/token counts and the [UNK] emission rate."""
    n_statements = 0
    n_tokens = 0
    n_unk = 0
    for doc in corpus:
        for stmt in doc.statements:
            n_statements += 1
            for word in pre_tokenize(stmt):
                seg = _segment_word(vocab, word)
                if seg is None:
                    n_unk += 1
                    n_tokens += 1
                else:
                    n_tokens += len(seg)
    return {
        "vocab_size": len(vocab),
        "statements": n_statements,
        "tokens": n_tokens,
        "unk_rate": (n_unk / n_tokens) if n_tokens else 0.0,
    }
