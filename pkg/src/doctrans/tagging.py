"""Token documents and sentence group tags.

A document is a flat token sequence in which sentences are delimited by
explicit begin/end marker tokens.  Every token carries a group tag: the
1-based index of the sentence it belongs to, with tag 0 reserved for
padding.  Tags drive the locality masks in the attention layer and are
propagated dynamically while decoding.
"""

from __future__ import annotations

from dataclasses import dataclass


PAD_ID = 0
UNK_ID = 1
BOS_ID = 2
EOS_ID = 3

PAD_MARK = "<pad>"
UNK_MARK = "<unk>"
BOS_MARK = "<s>"
EOS_MARK = "</s>"

_MARK_TO_ID = {PAD_MARK: PAD_ID, UNK_MARK: UNK_ID, BOS_MARK: BOS_ID, EOS_MARK: EOS_ID}
_ID_TO_MARK = {v: k for k, v in _MARK_TO_ID.items()}


class DocumentStructureError(ValueError):
    """Malformed sentence-marker structure; carries the offending token index."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} (position {position})")
        self.position = position


@dataclass(frozen=True)
class TokenDocument:
    """A tokenized document: flat token ids plus the marker/padding ids in use.

    Invariants (checked by :meth:`validate`): begin/end markers are balanced,
    and every non-padding token lies inside some begin..end span.
    """

    tokens: tuple[int, ...]
    bos_id: int = BOS_ID
    eos_id: int = EOS_ID
    pad_id: int = PAD_ID

    def __len__(self) -> int:
        return len(self.tokens)

    def validate(self) -> None:
        in_sentence = False
        for i, tok in enumerate(self.tokens):
            if tok == self.bos_id:
                if in_sentence:
                    raise DocumentStructureError("sentence begin inside an open sentence", i)
                in_sentence = True
            elif tok == self.eos_id:
                if not in_sentence:
                    raise DocumentStructureError("sentence end without a matching begin", i)
                in_sentence = False
            elif tok == self.pad_id:
                if in_sentence:
                    raise DocumentStructureError("padding inside a sentence", i)
            else:
                if not in_sentence:
                    raise DocumentStructureError("token outside any sentence", i)
        if in_sentence:
            raise DocumentStructureError("unterminated sentence at end of document", len(self.tokens) - 1)

    def sentence_spans(self) -> list[tuple[int, int]]:
        """Half-open (start, end) index pairs of each sentence, markers included."""
        spans = []
        start = None
        for i, tok in enumerate(self.tokens):
            if tok == self.bos_id:
                start = i
            elif tok == self.eos_id and start is not None:
                spans.append((start, i + 1))
                start = None
        return spans

    @property
    def n_sentences(self) -> int:
        return sum(1 for t in self.tokens if t == self.bos_id)

    def sentences(self) -> list[tuple[int, ...]]:
        """Token tuples per sentence, markers included."""
        return [self.tokens[a:b] for a, b in self.sentence_spans()]


@dataclass(frozen=True)
class GroupTagSeq:
    """Sentence-index tags aligned one-to-one with a token sequence."""

    tags: tuple[int, ...]

    def __len__(self) -> int:
        return len(self.tags)

    @property
    def max_tag(self) -> int:
        return max(self.tags, default=0)


def build_group_tags(doc: TokenDocument) -> GroupTagSeq:
    """Tag every token with its sentence index; padding gets 0.

    Markers carry the tag of their own sentence (spans are inclusive).
    Raises :class:`DocumentStructureError` on unbalanced markers.
    """
    doc.validate()
    tags = []
    current = 0
    in_sentence = False
    for tok in doc.tokens:
        if tok == doc.bos_id:
            current += 1
            in_sentence = True
            tags.append(current)
        elif tok == doc.eos_id:
            tags.append(current)
            in_sentence = False
        elif tok == doc.pad_id and not in_sentence:
            tags.append(0)
        else:
            tags.append(current)
    return GroupTagSeq(tuple(tags))


def next_tag(prev_token: int, prev_tag: int, eos_id: int = EOS_ID, bos_id: int = BOS_ID) -> int:
    """Tag for the position following ``prev_token``.

    The tag starts at 1, is copied from the predecessor, and increments by
    one right after each sentence-end marker.  ``bos_id`` is accepted for
    signature symmetry; the begin marker itself never changes the tag.
    """
    if prev_tag < 0:
        raise ValueError(f"tags are non-negative, got {prev_tag}")
    if prev_tag == 0:
        return 1
    if prev_token == eos_id:
        return prev_tag + 1
    return prev_tag


def incremental_tags(
    tokens,
    eos_id: int = EOS_ID,
    bos_id: int = BOS_ID,
    pad_id: int = PAD_ID,
) -> GroupTagSeq:
    """Fold :func:`next_tag` over a (possibly incomplete) token prefix.

    Agrees with :func:`build_group_tags` on every complete well-formed
    document; a trailing unterminated sentence keeps the current tag.
    Padding positions get tag 0 and are skipped by the fold, so agreement
    holds for padded documents too.
    """
    tags: list[int] = []
    last_token = None
    last_tag = 0
    for tok in tokens:
        if tok == pad_id:
            tags.append(0)
            continue
        tag = 1 if last_token is None else next_tag(last_token, last_tag, eos_id, bos_id)
        tags.append(tag)
        last_token = tok
        last_tag = tag
    return GroupTagSeq(tuple(tags))


def token_to_str(token_id: int) -> str:
    if token_id in _ID_TO_MARK:
        return _ID_TO_MARK[token_id]
    if token_id < 0:
        raise ValueError(f"negative token id {token_id}")
    return f"w{token_id}"


def str_to_token(text: str) -> int:
    if text in _MARK_TO_ID:
        return _MARK_TO_ID[text]
    if text.startswith("w") and text[1:].isdigit():
        return int(text[1:])
    if text.isdigit():
        return int(text)
    raise ValueError(f"unrecognized token string {text!r}")


def doc_to_str(doc: TokenDocument) -> str:
    """One-line text form: whitespace-separated token strings."""
    return " ".join(token_to_str(t) for t in doc.tokens)


def doc_from_str(line: str) -> TokenDocument:
    tokens = tuple(str_to_token(part) for part in line.split())
    return TokenDocument(tokens)
