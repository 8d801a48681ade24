"""Core value types: alphabet, noise parameters, priors, click windows, engine config.

Everything in this module is an immutable value type, safe to share across
threads. Times are seconds as 64-bit floats throughout.
"""
from __future__ import annotations

import configparser
import io
import math
from dataclasses import dataclass, field, fields, replace

DEFAULT_ALPHABET = "abcdefghijklmnopqrstuvwxyz_."
TERMINATORS = "_."


class ConfigError(ValueError):
    """Raised with the full list of violated invariants, not just the first."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration: " + "; ".join(self.violations))


@dataclass(frozen=True)
class Alphabet:
    """Ordered symbol set presented by the schedule."""

    symbols: str = DEFAULT_ALPHABET

    def __post_init__(self):
        if len(self.symbols) < 2:
            raise ValueError("alphabet needs at least 2 symbols")
        if len(set(self.symbols)) != len(self.symbols):
            raise ValueError("alphabet symbols must be unique")

    def __len__(self) -> int:
        return len(self.symbols)

    def __contains__(self, letter: str) -> bool:
        return letter in self.symbols

    def __iter__(self):
        return iter(self.symbols)

    def index(self, letter: str) -> int:
        i = self.symbols.find(letter)
        if i < 0:
            raise KeyError(f"unknown letter {letter!r}")
        return i


@dataclass(frozen=True)
class Params:
    """Trainable click model: delay mean/std, false-positive rate, miss probability.

    delta   mean click delay after a sound onset, seconds
    sigma   click delay standard deviation, seconds (precision beta = 1/sigma^2)
    lam     false-positive rate, events per second of listening window
    f       probability of missing any single repetition
    """

    delta: float
    sigma: float
    lam: float
    f: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if not 0.0 <= self.f <= 1.0:
            raise ValueError(f"f must be in [0, 1], got {self.f}")
        if self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")

    @property
    def beta(self) -> float:
        return 1.0 / (self.sigma * self.sigma)

    def as_dict(self) -> dict[str, float]:
        return {"delta": self.delta, "sigma": self.sigma, "lam": self.lam, "f": self.f}


@dataclass(frozen=True)
class Hypers:
    """Fixed conjugate-prior hyperparameters for the trainable parameters.

    Gaussian prior on delta (mean delta0, precision kappa*beta), Gamma priors
    on beta and lam, Beta prior on f.
    """

    delta0: float = 0.1
    kappa: float = 0.01
    a_beta: float = 2.0
    b_beta: float = 0.001
    a_lambda: float = 1.5
    b_lambda: float = 60.0
    a_f: float = 2.0
    b_f: float = 10.0

    def violations(self) -> list[str]:
        out = []
        for name in ("kappa", "a_beta", "b_beta", "a_lambda", "b_lambda", "a_f", "b_f"):
            if not getattr(self, name) > 0:
                out.append(f"hypers.{name} must be positive, got {getattr(self, name)}")
        return out


@dataclass(frozen=True)
class ClickEnsemble:
    """Strictly increasing click times inside one listening window [0, window_T]."""

    times: tuple[float, ...]
    window_T: float

    def __post_init__(self):
        object.__setattr__(self, "times", tuple(float(t) for t in self.times))
        if not self.window_T > 0:
            raise ValueError(f"window_T must be positive, got {self.window_T}")
        for a, b in zip(self.times, self.times[1:]):
            if not a < b:
                raise ValueError(f"click times must strictly increase, got {a} then {b}")
        if self.times and (self.times[0] < 0 or self.times[-1] > self.window_T):
            raise ValueError(
                f"click times must lie in [0, {self.window_T}], got {self.times}"
            )

    @property
    def M(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class LabelHypothesis:
    """One labelling of a window: which clicks are spurious, which repetitions fired.

    n[m] = 1 marks click m as a false positive (sum(n) = N), n[m] = 0 marks a
    true click. c[r] = 1 marks repetition r as having produced a true click
    (sum(c) = C), c[r] = 0 marks a miss. The k-th true click in time order is
    paired with the k-th fired repetition, so a hypothesis fixes the matching.
    """

    n: tuple[int, ...]
    c: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "n", tuple(int(v) for v in self.n))
        object.__setattr__(self, "c", tuple(int(v) for v in self.c))
        if any(v not in (0, 1) for v in self.n + self.c):
            raise ValueError("labels must be binary")
        if len(self.n) - sum(self.n) != sum(self.c):
            raise ValueError("true-click count must equal fired-repetition count")

    @property
    def M(self) -> int:
        return len(self.n)

    @property
    def N(self) -> int:
        return sum(self.n)

    @property
    def C(self) -> int:
        return sum(self.c)


@dataclass(frozen=True)
class EngineConfig:
    """Engine-level knobs shared by the decoder, trainer, simulator and service."""

    repetitions: int = 2
    channels: int = 5
    slot_interval: float = 0.1
    selection_threshold: float = 0.9
    learn_rate: float = 0.3
    history_cap: int = 1000
    window_grace: float = 0.5
    max_windows_per_word: int = 40
    top3_sum_selection: bool = False
    word_history_cap: int = 1000

    def violations(self) -> list[str]:
        out = []
        if self.repetitions < 1:
            out.append(f"repetitions must be >= 1, got {self.repetitions}")
        if not 1 <= self.channels <= 5:
            out.append(f"channels must be in 1..5, got {self.channels}")
        if not self.slot_interval > 0:
            out.append(f"slot_interval must be positive, got {self.slot_interval}")
        if not 0.0 < self.selection_threshold < 1.0:
            out.append(
                "selection_threshold must be strictly inside (0, 1), "
                f"got {self.selection_threshold}"
            )
        if not 0.0 < self.learn_rate <= 1.0:
            out.append(f"learn_rate must be in (0, 1], got {self.learn_rate}")
        if self.history_cap < 1:
            out.append(f"history_cap must be >= 1, got {self.history_cap}")
        if self.window_grace < 0:
            out.append(f"window_grace must be >= 0, got {self.window_grace}")
        if self.max_windows_per_word < 1:
            out.append(f"max_windows_per_word must be >= 1, got {self.max_windows_per_word}")
        if self.word_history_cap < 1:
            out.append(f"word_history_cap must be >= 1, got {self.word_history_cap}")
        return out


def validate_config(cfg: EngineConfig, hypers: Hypers) -> tuple[EngineConfig, Hypers]:
    """Return (cfg, hypers) unchanged, or raise ConfigError listing every violation."""
    problems = cfg.violations() + hypers.violations()
    if problems:
        raise ConfigError(problems)
    return cfg, hypers


# --- config file round trip (INI: one [engine] and one [hypers] section) ---

_BOOL_FIELDS = {"top3_sum_selection"}
_INT_FIELDS = {
    "repetitions", "channels", "history_cap", "max_windows_per_word", "word_history_cap",
}


def config_to_text(cfg: EngineConfig, hypers: Hypers) -> str:
    parser = configparser.ConfigParser()
    parser["engine"] = {f.name: repr(getattr(cfg, f.name)) for f in fields(cfg)}
    parser["hypers"] = {f.name: repr(getattr(hypers, f.name)) for f in fields(hypers)}
    buf = io.StringIO()
    parser.write(buf)
    return buf.getvalue()


def config_from_text(text: str) -> tuple[EngineConfig, Hypers]:
    parser = configparser.ConfigParser()
    parser.read_string(text)
    eng: dict = {}
    for key, raw in parser["engine"].items():
        if key in _BOOL_FIELDS:
            eng[key] = raw.strip() in ("True", "true", "1", "yes")
        elif key in _INT_FIELDS:
            eng[key] = int(raw)
        else:
            eng[key] = float(raw)
    hyp = {key: float(raw) for key, raw in parser["hypers"].items()}
    return validate_config(EngineConfig(**eng), Hypers(**hyp))


def load_config(path) -> tuple[EngineConfig, Hypers]:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_text(fh.read())


def save_config(path, cfg: EngineConfig, hypers: Hypers) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(config_to_text(cfg, hypers))
