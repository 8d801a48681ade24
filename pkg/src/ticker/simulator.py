"""Synthetic clicker and closed-loop session measurement.

The simulated user clicks relative to the true schedule onsets with the
generative noise model the decoder assumes: per repetition a click survives
with probability 1 - f and lands at onset + delta + Gaussian jitter, and
false positives arrive as a Poisson stream over the listening window. The
user is patient: it keeps aiming at the current word until the engine either
selects something or times the word out, then moves on.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .decoder import Dictionary, letter_index
from .engine import TickerEngine
from .model import ClickEnsemble, EngineConfig, Hypers, Params
from .schedule import Schedule, build_default_schedule, empirical_information_rate

INTER_WINDOW_GAP = 0.5  # seconds of pause between composite presentations
NO_SELECTION = "<none>"


def noisy_switch_preset() -> Params:
    """Illustrative profile of a twitchy switch: heavy false positives and
    sluggish, variable delays. Not a measured device."""
    return Params(delta=0.25, sigma=0.12, lam=0.08, f=0.15)


@dataclass(frozen=True)
class UserModel:
    """Generative click behavior plus the seed that makes a run reproducible."""

    params: Params
    rng_seed: int = 0


@dataclass(frozen=True)
class SessionReport:
    words_attempted: int
    words_correct: int
    windows_used: int
    clicks_emitted: int
    wall_time_simulated: float
    wpm: float
    char_error_rate: float
    confusion_counts: tuple[tuple[str, str, int], ...]
    timeouts: int = 0

    def confusion_matrix(self) -> tuple[list[str], list[str], np.ndarray]:
        intended = sorted({a for a, _, _ in self.confusion_counts})
        selected = sorted({b for _, b, _ in self.confusion_counts})
        counts = np.zeros((len(intended), len(selected)))
        for a, b, n in self.confusion_counts:
            counts[intended.index(a), selected.index(b)] += n
        return intended, selected, counts


def sample_window(
    target: str,
    schedule: Schedule,
    params: Params,
    rng: np.random.Generator,
    window_T: float,
) -> ClickEnsemble:
    """Draw one window of clicks from a user aiming at `target`.

    True clicks falling outside [0, window_T] are unobservable and dropped.
    Coincident times are nudged apart by a nanosecond to keep strict order.
    """
    if target not in schedule.alphabet:
        raise KeyError(f"unknown letter {target!r}")
    times: list[float] = []
    for r in range(schedule.R):
        if rng.random() >= params.f:
            t = schedule.onset(target, r) + params.delta + params.sigma * rng.standard_normal()
            if 0.0 <= t <= window_T:
                times.append(float(t))
    n_false = rng.poisson(params.lam * window_T)
    times.extend(float(t) for t in rng.uniform(0.0, window_T, size=n_false))
    times.sort()
    ordered: list[float] = []
    for t in times:
        if ordered and t <= ordered[-1]:
            t = ordered[-1] + 1e-9
        if t <= window_T:
            ordered.append(t)
    return ClickEnsemble(times=tuple(ordered), window_T=window_T)


def run_session(
    text: list[str],
    user: UserModel,
    config: EngineConfig,
    dictionary: Dictionary,
    schedule: Schedule,
    hypers: Hypers | None = None,
    engine_params: Params | None = None,
    adapt: bool = True,
) -> SessionReport:
    """Closed loop: the user writes `text` word by word through the engine."""
    for word in text:
        if word not in dictionary.words:
            raise ValueError(f"text word {word!r} not in dictionary")
    hypers = hypers or Hypers()
    rng = np.random.default_rng(user.rng_seed)
    engine = TickerEngine(
        config, hypers, schedule, dictionary, params=engine_params, adapt=adapt
    )
    windows = 0
    clicks = 0
    correct = 0
    timeouts = 0
    confusion: dict[tuple[str, str], int] = {}
    for intended in text:
        while True:
            s = letter_index(engine.state.k + 1, len(intended))
            ensemble = sample_window(
                intended[s - 1], schedule, user.params, rng, engine.window_T
            )
            outcome = engine.process_window(ensemble)
            windows += 1
            clicks += ensemble.M
            if outcome.kind == "selection":
                key = (intended, outcome.selected)
                confusion[key] = confusion.get(key, 0) + 1
                if outcome.selected == intended:
                    correct += 1
                break
            if outcome.kind == "timeout":
                key = (intended, NO_SELECTION)
                confusion[key] = confusion.get(key, 0) + 1
                timeouts += 1
                break
    wall = windows * (engine.window_T + INTER_WINDOW_GAP)
    produced = "".join(w for w in engine.text)
    wanted = "".join(text)
    return SessionReport(
        words_attempted=len(text),
        words_correct=correct,
        windows_used=windows,
        clicks_emitted=clicks,
        wall_time_simulated=wall,
        wpm=correct / (wall / 60.0) if wall > 0 else 0.0,
        char_error_rate=_edit_distance(wanted, produced) / max(len(wanted), 1),
        confusion_counts=tuple(
            (a, b, n) for (a, b), n in sorted(confusion.items())
        ),
        timeouts=timeouts,
    )


def _edit_distance(a: str, b: str) -> int:
    if not a:
        return len(b)
    prev = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        cur = [i]
        for j, cb in enumerate(b, 1):
            cur.append(min(prev[j] + 1, cur[-1] + 1, prev[j - 1] + (ca != cb)))
        prev = cur
    return prev[-1]


SWEEP_COLUMNS = [
    "channels", "sigma", "f", "lam", "seed",
    "words_attempted", "words_correct", "accuracy",
    "windows_used", "clicks_emitted", "wall_time_s", "wpm",
    "char_error_rate", "timeouts", "bits_per_second",
]


def sweep(
    text: list[str],
    dictionary: Dictionary,
    base_config: EngineConfig,
    hypers: Hypers,
    user_delta: float,
    sigmas: list[float],
    fs: list[float],
    lams: list[float],
    channels_list: list[int],
    seeds: list[int],
    adapt: bool = False,
) -> list[dict]:
    """Grid of closed-loop sessions; one row per (cell, seed).

    The engine is given the cell's true parameters, isolating channel noise
    from adaptation unless adapt is set. Rows include the empirical
    information rate of the cell's confusion counts.
    """
    rows = []
    for channels in channels_list:
        schedule = build_default_schedule(
            channels, base_config.repetitions, base_config.slot_interval
        )
        for sigma in sigmas:
            for f in fs:
                for lam in lams:
                    params = Params(delta=user_delta, sigma=sigma, lam=lam, f=f)
                    for seed in seeds:
                        report = run_session(
                            text,
                            UserModel(params=params, rng_seed=seed),
                            replace(base_config, channels=channels),
                            dictionary,
                            schedule,
                            hypers=hypers,
                            engine_params=params,
                            adapt=adapt,
                        )
                        _, _, counts = report.confusion_matrix()
                        t_per_word = report.wall_time_simulated / max(
                            report.words_attempted, 1
                        )
                        rows.append({
                            "channels": channels,
                            "sigma": sigma,
                            "f": f,
                            "lam": lam,
                            "seed": seed,
                            "words_attempted": report.words_attempted,
                            "words_correct": report.words_correct,
                            "accuracy": report.words_correct / max(report.words_attempted, 1),
                            "windows_used": report.windows_used,
                            "clicks_emitted": report.clicks_emitted,
                            "wall_time_s": report.wall_time_simulated,
                            "wpm": report.wpm,
                            "char_error_rate": report.char_error_rate,
                            "timeouts": report.timeouts,
                            "bits_per_second": empirical_information_rate(
                                counts, t_per_word
                            ),
                        })
    return rows


def sweep_csv(rows: list[dict]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float) else str(row[c])
                              for c in SWEEP_COLUMNS))
    return "\n".join(lines) + "\n"
