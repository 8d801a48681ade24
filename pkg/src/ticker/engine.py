"""Session brain: wires the decoder, trainer and density snapshot together.

One engine owns one user's decoding session. Window processing is serialized
by the caller; readers may take state snapshots at any time because every
piece of state is an immutable value swapped in atomically.
"""
from __future__ import annotations

from dataclasses import dataclass, field

from .adaptation import (
    KdeClickDensity,
    KdeModel,
    TrainingHistory,
    blend,
    build_kde,
    prior_mode_params,
    run_em,
)
from .decoder import (
    Dictionary,
    PosteriorState,
    initial_state,
    letter_index,
    maybe_select,
    posterior_update,
)
from .likelihood import ClickDensity, GaussianClickDensity
from .model import ClickEnsemble, EngineConfig, Hypers, Params, validate_config
from .schedule import Schedule


@dataclass(frozen=True)
class WindowOutcome:
    """What one closed window did: noop, update, selection or timeout reset."""

    kind: str
    k: int
    top: tuple[tuple[str, float], ...]
    selected: str | None = None
    params: Params | None = None


class TickerEngine:
    def __init__(
        self,
        config: EngineConfig,
        hypers: Hypers,
        schedule: Schedule,
        dictionary: Dictionary,
        params: Params | None = None,
        adapt: bool = True,
    ):
        validate_config(config, hypers)
        if schedule.R != config.repetitions:
            raise ValueError(
                f"schedule has {schedule.R} repetitions, config wants {config.repetitions}"
            )
        self.config = config
        self.hypers = hypers
        self.schedule = schedule
        self.dictionary = dictionary
        self.adapt = adapt
        self.params: Params = params or prior_mode_params(hypers)
        self.kde: KdeModel | None = None
        self.history = TrainingHistory(cap=config.history_cap)
        self.state: PosteriorState = initial_state(dictionary)
        self.windows_since_selection = 0
        self._pending: list[ClickEnsemble] = []
        self._last_selection_size = 0
        self.text: list[str] = []

    @property
    def window_T(self) -> float:
        return self.schedule.total_T + self.config.window_grace

    def density(self) -> ClickDensity:
        """Current click density snapshot: KDE once trained, Gaussian before."""
        if self.kde is not None:
            return KdeClickDensity(self.schedule, self.kde)
        return GaussianClickDensity(self.schedule, self.params.delta, self.params.sigma)

    def top_words(self, n: int = 3) -> tuple[tuple[str, float], ...]:
        return tuple(self.state.top(n, self.dictionary))

    def process_window(self, ensemble: ClickEnsemble) -> WindowOutcome:
        """Apply one closed listening window and return what happened."""
        if ensemble.M == 0:
            return WindowOutcome(kind="noop", k=self.state.k, top=self.top_words())
        self.state = posterior_update(
            self.state, ensemble, self.params, self.density(),
            self.dictionary, self.config.repetitions,
        )
        self._pending.append(ensemble)
        self.windows_since_selection += 1
        selected, next_state = maybe_select(
            self.state, self.dictionary,
            self.config.selection_threshold, self.config.top3_sum_selection,
        )
        if selected is not None:
            top = self.top_words()
            self._commit_selection(selected)
            self.state = next_state
            return WindowOutcome(
                kind="selection", k=0, top=top, selected=selected, params=self.params
            )
        if self.windows_since_selection >= self.config.max_windows_per_word:
            # give up on this word: reset the posterior, discard the evidence
            self.state = initial_state(self.dictionary)
            self._pending.clear()
            self.windows_since_selection = 0
            return WindowOutcome(kind="timeout", k=0, top=self.top_words())
        return WindowOutcome(kind="update", k=self.state.k, top=self.top_words())

    def _commit_selection(self, word: str) -> None:
        self.text.append(word)
        for j, ensemble in enumerate(self._pending, start=1):
            self.history.append(word[letter_index(j, len(word)) - 1], ensemble)
        self._last_selection_size = len(self._pending)
        self._pending.clear()
        self.windows_since_selection = 0
        if self.adapt and len(self.history) > 0:
            self.train()

    def train(self) -> None:
        """One training pass over the current history; swaps in new snapshot."""
        fitted = run_em(
            self.history, self.params, self.hypers,
            self.schedule, self.config.repetitions,
        )
        new_params = blend(self.params, fitted, self.config.learn_rate)
        try:
            new_kde = build_kde(
                self.history, new_params, self.schedule, self.config.repetitions
            )
        except ValueError:
            new_kde = None
        self.params = new_params
        if new_kde is not None:
            self.kde = new_kde

    def retract_last_selection(self) -> None:
        """Remove the most recent word's evidence from the training history."""
        if self.text:
            self.text.pop()
        self.history.retract_last(self._last_selection_size)
        self._last_selection_size = 0
