"""Parser for real-coefficient Pauli-word Hamiltonian expressions.

Grammar (whitespace-insensitive)::

    expr := term ('+' term)*
    term := float '*' word | word
    word := (letter site)+ | 'I'        letter in {I, X, Y, Z}, site an integer

Examples: "0.5*X0 + 0.25*Z0Z1", "Z0 + -1*Z1", "I".  Expressions are kept in
a canonical form: identity letters dropped, sites sorted within each word, a
repeated site within one word rejected (that product would need a complex
coefficient), duplicate words merged, zero terms removed, terms sorted.
Parsing the printed form reproduces the expression exactly.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import reduce

import numpy as np

from .tensor import Operator, SpaceLabel

PAULI_MATRICES = {
    "I": np.eye(2, dtype=complex),
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}

# one Pauli word: bare I, or one or more letter+site pairs
_WORD_RE = re.compile(r"(?:[IXYZ]\d+)+|I(?!\d)")
_NUMBER_RE = re.compile(r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?")
_LETTER_SITE_RE = re.compile(r"([IXYZ])(\d+)")

Word = tuple[tuple[int, str], ...]  # sorted ((site, letter), ...), identities dropped


class PauliParseError(ValueError):
    """Syntax or range error, reporting the character offset."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"at offset {offset}: {message}")


@dataclass(frozen=True)
class PauliExpression:
    """Canonical sum of real-weighted Pauli words."""

    terms: tuple[tuple[float, Word], ...]

    @property
    def n_sites(self) -> int:
        sites = [site for _, word in self.terms for site, _ in word]
        return max(sites) + 1 if sites else 0

    def to_string(self) -> str:
        if not self.terms:
            return "0*I"
        parts = []
        for coeff, word in self.terms:
            text = "".join(f"{letter}{site}" for site, letter in word) or "I"
            parts.append(text if coeff == 1.0 else f"{coeff:.17g}*{text}")
        return " + ".join(parts)

    def to_matrix(self, n_qubits: int) -> np.ndarray:
        if n_qubits < 1:
            raise ValueError("need at least one qubit")
        if self.n_sites > n_qubits:
            raise ValueError(
                f"expression uses site {self.n_sites - 1}, but only "
                f"{n_qubits} qubit(s) declared"
            )
        dim = 2**n_qubits
        out = np.zeros((dim, dim), dtype=complex)
        for coeff, word in self.terms:
            letters = dict(word)
            mats = [PAULI_MATRICES[letters.get(q, "I")] for q in range(n_qubits)]
            out += coeff * reduce(np.kron, mats)
        return out

    def to_operator(self, n_qubits: int) -> Operator:
        return Operator((SpaceLabel("Q", 2**n_qubits),), self.to_matrix(n_qubits))


def _canonicalize(raw_terms: list[tuple[float, Word]]) -> PauliExpression:
    merged: dict[Word, float] = {}
    for coeff, word in raw_terms:
        merged[word] = merged.get(word, 0.0) + coeff
    terms = tuple(
        (coeff, word)
        for word, coeff in sorted(merged.items())
        if coeff != 0.0
    )
    return PauliExpression(terms)


def parse_pauli(text: str, n_qubits: int | None = None) -> PauliExpression:
    """Parse an expression; optionally validate site indices against a qubit count."""
    if not text or not text.strip():
        raise PauliParseError(0, "empty expression")
    stripped = re.sub(r"\s+", "", text)
    pos = 0
    raw_terms: list[tuple[float, Word]] = []
    while True:
        coeff, word, pos = _parse_term(stripped, pos)
        raw_terms.append((coeff, word))
        if pos == len(stripped):
            break
        if stripped[pos] != "+":
            raise PauliParseError(pos, f"expected '+' or end, found {stripped[pos]!r}")
        pos += 1
    expr = _canonicalize(raw_terms)
    if n_qubits is not None and expr.n_sites > n_qubits:
        raise PauliParseError(0, f"site {expr.n_sites - 1} exceeds qubit count {n_qubits}")
    return expr


def _parse_term(s: str, pos: int) -> tuple[float, Word, int]:
    word_match = _WORD_RE.match(s, pos)
    if word_match:
        return 1.0, _parse_word(word_match.group(), pos), word_match.end()
    num_match = _NUMBER_RE.match(s, pos)
    if not num_match:
        raise PauliParseError(pos, "expected a coefficient or a Pauli word")
    coeff = float(num_match.group())
    pos = num_match.end()
    if pos == len(s) or s[pos] != "*":
        raise PauliParseError(pos, "expected '*' between coefficient and word")
    pos += 1
    word_match = _WORD_RE.match(s, pos)
    if not word_match:
        raise PauliParseError(pos, "expected a Pauli word")
    return coeff, _parse_word(word_match.group(), pos), word_match.end()


def _parse_word(text: str, offset: int) -> Word:
    if text == "I":
        return ()
    letters: dict[int, str] = {}
    for m in _LETTER_SITE_RE.finditer(text):
        letter, site = m.group(1), int(m.group(2))
        if site in letters:
            raise PauliParseError(
                offset + m.start(), f"site {site} repeated within one Pauli word"
            )
        letters[site] = letter
    return tuple(sorted((s, l) for s, l in letters.items() if l != "I"))
