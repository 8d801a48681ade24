"""MAP training of the click model from selected-letter history.

EM alternates posterior match probabilities (E) with closed-form conjugate
updates (M). After convergence the true-click posterior weights feed a kernel
density estimate of the normalized click-time distribution, bandwidth set by
the normal-scale rule.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .likelihood import GaussianClickDensity, log_ensemble_likelihood, match_marginals
from .model import ClickEnsemble, Hypers, Params
from .schedule import Schedule

SIGMA2_FLOOR = 1e-6  # seconds^2; degenerate posterior guard


class TrainingHistory:
    """Rolling (letter, window) pairs, oldest first, capped at `cap` letters."""

    def __init__(self, cap: int = 1000):
        if cap < 1:
            raise ValueError("history cap must be >= 1")
        self.cap = cap
        self._entries: list[tuple[str, ClickEnsemble]] = []

    def append(self, letter: str, ensemble: ClickEnsemble) -> None:
        self._entries.append((letter, ensemble))
        if len(self._entries) > self.cap:
            del self._entries[: len(self._entries) - self.cap]

    def extend(self, items) -> None:
        for letter, ensemble in items:
            self.append(letter, ensemble)

    def retract_last(self, count: int) -> None:
        """Drop the newest `count` letters (explicit word deletion)."""
        if count > 0:
            del self._entries[-count:]

    @property
    def entries(self) -> tuple[tuple[str, ClickEnsemble], ...]:
        return tuple(self._entries)

    def __len__(self) -> int:
        return len(self._entries)


@dataclass(frozen=True)
class EStepResult:
    """Sufficient statistics of one E step.

    gammas[h][m, r] is the posterior probability that click m of history item
    h is a true click produced by repetition r. c_star is the expected total
    number of true clicks; delta_star and delta_star2 are the gamma-weighted
    first and second moments of (click time - onset); M_star counts clicks.
    """

    gammas: tuple[np.ndarray, ...]
    c_star: float
    delta_star: float
    delta_star2: float
    M_star: int

    def per_item_true_clicks(self) -> np.ndarray:
        return np.array([float(g.sum()) for g in self.gammas])


def e_step(
    history: TrainingHistory, params: Params, schedule: Schedule, R: int
) -> EStepResult:
    if len(history) == 0:
        raise ValueError("empty training history")
    density = GaussianClickDensity(schedule, params.delta, params.sigma)
    gammas = []
    c_star = 0.0
    d1 = 0.0
    d2 = 0.0
    m_star = 0
    for letter, ensemble in history.entries:
        gamma = match_marginals(ensemble, params, density, letter, R)
        gammas.append(gamma)
        m_star += ensemble.M
        if ensemble.M == 0:
            continue
        c_star += float(gamma.sum())
        offsets = np.array(
            [
                [t - schedule.onset(letter, r) for r in range(R)]
                for t in ensemble.times
            ]
        )
        d1 += float((gamma * offsets).sum())
        d2 += float((gamma * offsets**2).sum())
    return EStepResult(
        gammas=tuple(gammas), c_star=c_star, delta_star=d1, delta_star2=d2, M_star=m_star
    )


def m_step(e: EStepResult, hypers: Hypers, H: int, T: float, R: int) -> Params:
    """Closed-form MAP maximizers given E-step statistics.

    H is the number of history letters, T the (mean) listening-window length,
    R the repetitions per letter. Raises no error on a degenerate variance
    numerator; the variance is floored and a warning emitted instead.
    """
    kappa, d0 = hypers.kappa, hypers.delta0
    delta = (kappa * d0 + e.delta_star) / (kappa + e.c_star)
    sigma2 = (
        2.0 * hypers.b_beta
        + e.delta_star2
        + kappa * d0 * d0
        - delta * delta * (kappa + e.c_star)
    ) / (2.0 * hypers.a_beta - 1.0 + e.c_star)
    if sigma2 <= 0.0:
        warnings.warn(
            f"degenerate click-delay variance {sigma2}; flooring at {SIGMA2_FLOOR}",
            RuntimeWarning,
        )
        sigma2 = SIGMA2_FLOOR
    lam = (hypers.a_lambda - 1.0 + e.M_star - e.c_star) / (hypers.b_lambda + T * H)
    f = (R * H + hypers.a_f - 1.0 - e.c_star) / (R * H + hypers.a_f + hypers.b_f - 2.0)
    return Params(delta=delta, sigma=math.sqrt(sigma2), lam=max(lam, 0.0), f=min(max(f, 0.0), 1.0))


def log_prior(params: Params, hypers: Hypers) -> float:
    """Log density of the conjugate priors at the given parameters."""
    beta = params.beta
    out = 0.5 * math.log(hypers.kappa * beta / (2.0 * math.pi))
    out -= 0.5 * hypers.kappa * beta * (params.delta - hypers.delta0) ** 2
    out += (
        hypers.a_beta * math.log(hypers.b_beta)
        - math.lgamma(hypers.a_beta)
        + (hypers.a_beta - 1.0) * math.log(beta)
        - hypers.b_beta * beta
    )
    if params.lam > 0:
        out += (
            hypers.a_lambda * math.log(hypers.b_lambda)
            - math.lgamma(hypers.a_lambda)
            + (hypers.a_lambda - 1.0) * math.log(params.lam)
            - hypers.b_lambda * params.lam
        )
    elif hypers.a_lambda != 1.0:
        return -math.inf
    if 0.0 < params.f < 1.0:
        out += (
            math.lgamma(hypers.a_f + hypers.b_f)
            - math.lgamma(hypers.a_f)
            - math.lgamma(hypers.b_f)
            + (hypers.a_f - 1.0) * math.log(params.f)
            + (hypers.b_f - 1.0) * math.log(1.0 - params.f)
        )
    else:
        return -math.inf
    return out


def log_posterior(
    history: TrainingHistory,
    params: Params,
    hypers: Hypers,
    schedule: Schedule,
    R: int,
) -> float:
    """Incomplete-data log posterior of the parameters given the history."""
    density = GaussianClickDensity(schedule, params.delta, params.sigma)
    total = log_prior(params, hypers)
    for letter, ensemble in history.entries:
        total += log_ensemble_likelihood(ensemble, params, density, letter, R)
    return total


def _mean_window(history: TrainingHistory) -> float:
    return float(np.mean([ens.window_T for _, ens in history.entries]))


def run_em(
    history: TrainingHistory,
    params_init: Params,
    hypers: Hypers,
    schedule: Schedule,
    R: int,
    tol: float = 1e-6,
    max_iter: int = 100,
    fixed: frozenset[str] = frozenset(),
) -> Params:
    """MAP estimate by EM, stopping on log-posterior change below tol.

    `fixed` names parameters held at their params_init values through every
    M step (calibration clamps {"lam", "f"}).
    """
    if len(history) == 0:
        raise ValueError("empty training history")
    H = len(history)
    T = _mean_window(history)
    params = params_init
    previous = log_posterior(history, params, hypers, schedule, R)
    if not math.isfinite(previous):
        raise ValueError(f"non-finite log posterior at initialization: {previous}")
    for _ in range(max_iter):
        stats = e_step(history, params, schedule, R)
        new = m_step(stats, hypers, H, T, R)
        if fixed:
            new = Params(**{
                name: getattr(params_init if name in fixed else new, name)
                for name in ("delta", "sigma", "lam", "f")
            })
        params = new
        current = log_posterior(history, params, hypers, schedule, R)
        if not math.isfinite(current):
            raise ValueError(f"non-finite log posterior during EM: {current}")
        if abs(current - previous) < tol:
            break
        previous = current
    return params


def prior_mode_params(hypers: Hypers) -> Params:
    """Fixed point of the M step with no data; the natural EM initializer."""
    stats = EStepResult(gammas=(), c_star=0.0, delta_star=0.0, delta_star2=0.0, M_star=0)
    return m_step(stats, hypers, H=0, T=0.0, R=1)


def blend(old: Params, new: Params, learn_rate: float) -> Params:
    """Convex combination of parameter vectors; learn_rate 1 returns new."""
    if not 0.0 < learn_rate <= 1.0:
        raise ValueError(f"learn_rate must be in (0, 1], got {learn_rate}")
    if learn_rate == 1.0:
        return new
    mix = lambda a, b: a + learn_rate * (b - a)
    return Params(
        delta=mix(old.delta, new.delta),
        sigma=mix(old.sigma, new.sigma),
        lam=mix(old.lam, new.lam),
        f=mix(old.f, new.f),
    )


def kernel_bandwidth(e: EStepResult, sigma: float) -> float:
    """Normal-scale rule: 1.06 * sigma / c*^(1/5)."""
    if e.c_star <= 0.0:
        raise ValueError("bandwidth undefined with zero expected true clicks")
    return 1.06 * sigma / e.c_star**0.2


@dataclass(frozen=True)
class KdeModel:
    """Weighted Gaussian mixture over normalized click times (time - onset)."""

    points: tuple[float, ...]
    weights: tuple[float, ...]
    bandwidth: float

    def __post_init__(self):
        if len(self.points) != len(self.weights) or not self.points:
            raise ValueError("points and weights must be nonempty and aligned")
        if not self.bandwidth > 0:
            raise ValueError("bandwidth must be positive")
        total = sum(self.weights)
        if not math.isclose(total, 1.0, rel_tol=0, abs_tol=1e-9):
            raise ValueError(f"weights must sum to 1, got {total}")
        if any(not 0.0 < w < 1.0 for w in self.weights) and len(self.weights) > 1:
            raise ValueError("weights must lie in (0, 1)")

    def evaluate(self, x) -> np.ndarray | float:
        x = np.asarray(x, dtype=float)
        pts = np.asarray(self.points)
        wts = np.asarray(self.weights)
        z = (x[..., None] - pts) / self.bandwidth
        dens = (wts * np.exp(-0.5 * z * z)).sum(axis=-1) / (
            self.bandwidth * math.sqrt(2.0 * math.pi)
        )
        return float(dens) if dens.ndim == 0 else dens


@dataclass(frozen=True)
class KdeClickDensity:
    """Adapter exposing a KdeModel as a per-(letter, repetition) click density."""

    schedule: Schedule
    model: KdeModel

    def density(self, t: float, letter: str, r: int) -> float:
        return float(self.model.evaluate(t - self.schedule.onset(letter, r)))


def build_kde(
    history: TrainingHistory, params_star: Params, schedule: Schedule, R: int
) -> KdeModel:
    """KDE support from match posteriors recomputed at the trained parameters.

    Support points are normalized click times of hypothesized true clicks,
    weighted by gamma / c*; bandwidth from the normal-scale rule.
    """
    stats = e_step(history, params_star, schedule, R)
    if stats.c_star <= 0.0:
        raise ValueError("no true-click mass in history; cannot build KDE")
    bw = kernel_bandwidth(stats, params_star.sigma)
    points: list[float] = []
    weights: list[float] = []
    for (letter, ensemble), gamma in zip(history.entries, stats.gammas):
        for m, t in enumerate(ensemble.times):
            for r in range(R):
                w = float(gamma[m, r]) / stats.c_star
                if w > 0.0:
                    points.append(t - schedule.onset(letter, r))
                    weights.append(w)
    total = sum(weights)
    weights = [w / total for w in weights]
    return KdeModel(points=tuple(points), weights=tuple(weights), bandwidth=bw)


def calibrate(
    history: TrainingHistory,
    measured: tuple[float, float],
    hypers: Hypers,
    schedule: Schedule,
    R: int,
    tol: float = 1e-6,
    max_iter: int = 100,
) -> Params:
    """Initial training pass: fit delta/sigma with (lam, f) clamped to measured.

    Run once on the calibration word's click data, with full learning rate,
    so the result does not depend on any previous parameter snapshot.
    """
    lam, f = measured
    start = prior_mode_params(hypers)
    init = Params(delta=start.delta, sigma=start.sigma, lam=lam, f=f)
    fitted = run_em(
        history, init, hypers, schedule, R,
        tol=tol, max_iter=max_iter, fixed=frozenset({"lam", "f"}),
    )
    stats = e_step(history, fitted, schedule, R)
    if stats.c_star <= 0.0:
        raise ValueError("calibration clicks carry no true-click mass")
    return fitted


# --- plain-text parameter and history files -------------------------------

def params_to_text(params: Params, kde: KdeModel | None = None) -> str:
    lines = [
        f"delta {params.delta!r}",
        f"sigma {params.sigma!r}",
        f"lambda {params.lam!r}",
        f"f {params.f!r}",
    ]
    if kde is not None:
        lines.append(f"kde_bandwidth {kde.bandwidth!r}")
        for p, w in zip(kde.points, kde.weights):
            lines.append(f"kde_point {p!r} {w!r}")
    return "\n".join(lines) + "\n"


def params_from_text(text: str) -> tuple[Params, KdeModel | None]:
    values: dict[str, float] = {}
    points: list[float] = []
    weights: list[float] = []
    bandwidth = None
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, _, rest = line.partition(" ")
        if key == "kde_point":
            p, w = rest.split()
            points.append(float(p))
            weights.append(float(w))
        elif key == "kde_bandwidth":
            bandwidth = float(rest)
        else:
            values[key] = float(rest)
    params = Params(
        delta=values["delta"], sigma=values["sigma"], lam=values["lambda"], f=values["f"]
    )
    kde = None
    if points and bandwidth is not None:
        total = sum(weights)
        kde = KdeModel(
            points=tuple(points),
            weights=tuple(w / total for w in weights),
            bandwidth=bandwidth,
        )
    return params, kde


def load_params(path) -> tuple[Params, KdeModel | None]:
    with open(path, "r", encoding="utf-8") as fh:
        return params_from_text(fh.read())


def save_params(path, params: Params, kde: KdeModel | None = None) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(params_to_text(params, kde))


def history_to_text(history: TrainingHistory) -> str:
    lines = []
    for letter, ensemble in history.entries:
        ts = ",".join(repr(t) for t in ensemble.times) if ensemble.times else "-"
        lines.append(f"{letter} {ensemble.window_T!r} {ts}")
    return "\n".join(lines) + "\n"


def history_from_text(text: str, cap: int = 1000) -> TrainingHistory:
    history = TrainingHistory(cap=cap)
    for raw in text.splitlines():
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        letter, window, ts = line.split()
        times = () if ts == "-" else tuple(float(v) for v in ts.split(","))
        history.append(letter, ClickEnsemble(times=times, window_T=float(window)))
    return history


def load_history(path, cap: int = 1000) -> TrainingHistory:
    with open(path, "r", encoding="utf-8") as fh:
        return history_from_text(fh.read(), cap=cap)


def save_history(path, history: TrainingHistory) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(history_to_text(history))
