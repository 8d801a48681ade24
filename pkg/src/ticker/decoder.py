"""Word posterior maintenance and selection across letter windows."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .likelihood import ClickDensity, log_ensemble_likelihood
from .model import Alphabet, ClickEnsemble, Params, TERMINATORS


class DictionaryError(ValueError):
    pass


@dataclass(frozen=True)
class Dictionary:
    """Words with normalized prior masses."""

    words: tuple[str, ...]
    priors: tuple[float, ...]

    def __post_init__(self):
        if not self.words:
            raise DictionaryError("dictionary is empty")
        if len(set(self.words)) != len(self.words):
            raise DictionaryError("duplicate words in dictionary")
        if len(self.words) != len(self.priors):
            raise DictionaryError("words and priors must align")
        if any(p <= 0 for p in self.priors):
            raise DictionaryError("all priors must be positive")
        if abs(sum(self.priors) - 1.0) > 1e-12:
            raise DictionaryError(f"priors must sum to 1, got {sum(self.priors)}")

    @classmethod
    def from_counts(
        cls, pairs: list[tuple[str, float]], alphabet: Alphabet | None = None
    ) -> "Dictionary":
        if not pairs:
            raise DictionaryError("dictionary is empty")
        alphabet = alphabet or Alphabet()
        for word, count in pairs:
            if count <= 0:
                raise DictionaryError(f"word {word!r} has non-positive count {count}")
            if not word:
                raise DictionaryError("empty word")
            for ch in word:
                if ch not in alphabet:
                    raise DictionaryError(f"word {word!r} uses unknown letter {ch!r}")
            if word[-1] not in TERMINATORS:
                raise DictionaryError(
                    f"word {word!r} must end with a terminator ({TERMINATORS})"
                )
        total = float(sum(c for _, c in pairs))
        return cls(
            words=tuple(w for w, _ in pairs),
            priors=tuple(c / total for _, c in pairs),
        )

    def index(self, word: str) -> int:
        return self.words.index(word)


def parse_dictionary(text: str, alphabet: Alphabet | None = None) -> Dictionary:
    """One `word<TAB>count` per line; blank lines and # comments skipped."""
    pairs = []
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        try:
            word, count = line.split("\t")
        except ValueError as exc:
            raise DictionaryError(f"bad dictionary line {raw!r}") from exc
        pairs.append((word, float(count)))
    return Dictionary.from_counts(pairs, alphabet)


def load_dictionary(path, alphabet: Alphabet | None = None) -> Dictionary:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_dictionary(fh.read(), alphabet)


def letter_index(k: int, word_len: int) -> int:
    """Cyclic 1-based letter position targeted at update k (k >= 1).

    Wraps so that a word shorter than the update count keeps receiving
    evidence: s = k - floor((k - 1) / L) * L.
    """
    if k < 1 or word_len < 1:
        raise ValueError("k and word_len must be >= 1")
    return k - ((k - 1) // word_len) * word_len


@dataclass(frozen=True)
class PosteriorState:
    """Letter counter and log posterior over dictionary words."""

    k: int
    log_pi: tuple[float, ...]

    def probabilities(self) -> np.ndarray:
        arr = np.asarray(self.log_pi)
        return np.exp(arr - _logsumexp(arr))

    def top(self, n: int, dictionary: Dictionary) -> list[tuple[str, float]]:
        probs = self.probabilities()
        order = np.argsort(probs)[::-1][:n]
        return [(dictionary.words[i], float(probs[i])) for i in order]


def _logsumexp(arr: np.ndarray) -> float:
    hi = float(np.max(arr))
    if hi == -math.inf:
        return -math.inf
    return hi + math.log(float(np.exp(arr - hi).sum()))


def initial_state(dictionary: Dictionary) -> PosteriorState:
    return PosteriorState(k=0, log_pi=tuple(math.log(p) for p in dictionary.priors))


def posterior_update(
    state: PosteriorState,
    ensemble: ClickEnsemble,
    params: Params,
    density: ClickDensity,
    dictionary: Dictionary,
    R: int,
) -> PosteriorState:
    """Bayes update of the word posterior with one window's clicks.

    Each word contributes the likelihood of its cyclically indexed letter at
    update k+1. A window with no clicks leaves the state unchanged, counter
    included. Log-domain accumulation, renormalized every step.
    """
    if ensemble.M == 0:
        return state
    k_new = state.k + 1
    letters = {}
    for word in dictionary.words:
        letters.setdefault(word[letter_index(k_new, len(word)) - 1], None)
    for letter in letters:
        letters[letter] = log_ensemble_likelihood(ensemble, params, density, letter, R)
    log_pi = np.array(
        [
            lp + letters[word[letter_index(k_new, len(word)) - 1]]
            for word, lp in zip(dictionary.words, state.log_pi)
        ]
    )
    norm = _logsumexp(log_pi)
    if norm == -math.inf:
        raise ValueError("all word likelihoods vanished for this window")
    return PosteriorState(k=k_new, log_pi=tuple(log_pi - norm))


def maybe_select(
    state: PosteriorState,
    dictionary: Dictionary,
    threshold: float = 0.9,
    top3_sum: bool = False,
) -> tuple[str | None, PosteriorState]:
    """Select the argmax word when confidence strictly exceeds the threshold.

    Confidence is the maximum posterior, or with top3_sum the mass of the top
    three words. On selection the state resets to the dictionary priors.
    Ties at the threshold do not select.
    """
    probs = state.probabilities()
    confidence = float(np.sort(probs)[::-1][:3].sum()) if top3_sum else float(probs.max())
    if confidence > threshold:
        word = dictionary.words[int(np.argmax(probs))]
        return word, initial_state(dictionary)
    return None, state
