"""Word-level vocabulary with reserved control tokens."""

from __future__ import annotations

import re
from pathlib import Path

PAD, BOS, EOS, UNK, DOCSEP = 0, 1, 2, 3, 4
RESERVED = ("<pad>", "<bos>", "<eos>", "<unk>", "<docsep>")

_WORD_RE = re.compile(r"\w+|[^\w\s]")


def split_words(text: str) -> list[str]:
    """Lowercased whitespace/punctuation split; punctuation marks are tokens."""
    return _WORD_RE.findall(text.lower())


class Vocabulary:
    """Dense token ids; ids 0..4 are reserved and never reassigned."""

    def __init__(self, tokens: list[str] | None = None):
        self._id_to_token: list[str] = list(RESERVED)
        self._token_to_id: dict[str, int] = {t: i for i, t in enumerate(RESERVED)}
        for tok in tokens or []:
            self.add(tok)

    def add(self, token: str) -> int:
        tid = self._token_to_id.get(token)
        if tid is None:
            tid = len(self._id_to_token)
            self._token_to_id[token] = tid
            self._id_to_token.append(token)
        return tid

    def __len__(self) -> int:
        return len(self._id_to_token)

    def __contains__(self, token: str) -> bool:
        return token in self._token_to_id

    def id_of(self, token: str) -> int:
        return self._token_to_id.get(token, UNK)

    def token_of(self, tid: int) -> str:
        return self._id_to_token[tid]

    def encode(self, text: str) -> list[int]:
        return [self._token_to_id.get(w, UNK) for w in split_words(text)]

    def decode(self, ids, skip_special: bool = True) -> str:
        toks = [self._id_to_token[int(i)] for i in ids]
        if skip_special:
            toks = [t for t in toks if t not in RESERVED]
        return " ".join(toks)

    def save(self, path: str | Path) -> None:
        """One non-reserved token per line; line number = id - len(RESERVED)."""
        Path(path).write_text(
            "".join(f"{t}\n" for t in self._id_to_token[len(RESERVED):]), encoding="utf-8"
        )

    @classmethod
    def load(cls, path: str | Path) -> "Vocabulary":
        vocab = cls()
        for line in Path(path).read_text(encoding="utf-8").splitlines():
            vocab.add(line)
        return vocab


def tokenize(text: str, vocab: Vocabulary) -> list[int]:
    """Total function: any string maps to ids, unknown words to UNK."""
    return vocab.encode(text)
