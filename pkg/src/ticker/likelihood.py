"""Exact window likelihoods P(clicks | params, letter) via the labelling recursion.

A window of M ordered clicks against R scheduled repetitions of a letter is
explained by hypotheses that label each click true/false-positive and each
repetition hit/miss, pairing the k-th true click with the k-th fired
repetition. The likelihood sums over all hypotheses; the sum is computed
exactly by a dynamic program over order-preserving matchings, with a small
brute-force enumerator kept as an oracle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Protocol

import numpy as np

from .model import ClickEnsemble, LabelHypothesis, Params
from .schedule import Schedule

_SQRT2PI = math.sqrt(2.0 * math.pi)


class ClickDensity(Protocol):
    """Density of a true click time given the targeted letter and repetition."""

    def density(self, t: float, letter: str, r: int) -> float: ...


@dataclass(frozen=True)
class GaussianClickDensity:
    """Gaussian click timing: mean onset(letter, r) + delta, std sigma."""

    schedule: Schedule
    delta: float
    sigma: float

    @classmethod
    def from_params(cls, schedule: Schedule, params: Params) -> "GaussianClickDensity":
        return cls(schedule, params.delta, params.sigma)

    def density(self, t: float, letter: str, r: int) -> float:
        z = (t - self.schedule.onset(letter, r) - self.delta) / self.sigma
        return math.exp(-0.5 * z * z) / (self.sigma * _SQRT2PI)


@dataclass(frozen=True)
class LikelihoodTable:
    """p[C] for C = 0..min(R, M): total weight of all C-click matchings."""

    p: tuple[float, ...]

    def __post_init__(self):
        if not self.p or self.p[0] != 1.0:
            raise ValueError("p[0] must be 1 (empty matching)")
        if any(v < 0 for v in self.p):
            raise ValueError("likelihood table entries must be nonnegative")

    @property
    def C_max(self) -> int:
        return len(self.p) - 1


def gz_indicator(hyp: LabelHypothesis, m: int, r: int) -> int:
    """1 iff click m is a true click matched to fired repetition r (0-based).

    Requires click m labelled true, repetition r labelled fired, and the
    running counts to align: the number of true clicks among the first m+1
    clicks equals the number of fired repetitions among the first r+1.
    """
    if hyp.n[m] == 1 or hyp.c[r] == 0:
        return 0
    true_rank = sum(1 - v for v in hyp.n[: m + 1])
    fired_rank = sum(hyp.c[: r + 1])
    return int(true_rank == fired_rank)


def p_z_t_ell(
    hyp: LabelHypothesis, ensemble: ClickEnsemble, density: ClickDensity, letter: str
) -> float:
    """Product of click densities over the pairs matched by a hypothesis."""
    if hyp.M != ensemble.M:
        raise ValueError("hypothesis and ensemble disagree on click count")
    out = 1.0
    for m in range(hyp.M):
        for r in range(len(hyp.c)):
            if gz_indicator(hyp, m, r):
                out *= density.density(ensemble.times[m], letter, r)
    return out


def g_matrix(
    ensemble: ClickEnsemble, density: ClickDensity, letter: str, R: int
) -> np.ndarray:
    """G[m, r] = density of click m under repetition r of the letter."""
    G = np.empty((ensemble.M, R))
    for m, t in enumerate(ensemble.times):
        for r in range(R):
            G[m, r] = density.density(t, letter, r)
    return G


def match_sum_table(G: np.ndarray) -> np.ndarray:
    """Sum of density products over order-preserving C-matchings, per C.

    Backward recursion over (click, repetition) suffixes. The three-way split
    "match (m, r) / skip click m / skip repetition r" double counts matchings
    that use neither, hence the inclusion-exclusion term. G is rescaled by its
    maximum so long products stay in range; the scale is restored per C.
    """
    M, R = G.shape
    c_max = min(M, R)
    p = np.zeros(c_max + 1)
    p[0] = 1.0
    if c_max == 0:
        return p
    scale = float(G.max())
    if scale <= 0.0:
        return p
    Gs = G / scale
    prev = np.ones((M + 2, R + 2))
    for C in range(1, c_max + 1):
        cur = np.zeros((M + 2, R + 2))
        for m in range(M, 0, -1):
            for r in range(R, 0, -1):
                cur[m, r] = (
                    Gs[m - 1, r - 1] * prev[m + 1, r + 1]
                    + cur[m, r + 1]
                    + cur[m + 1, r]
                    - cur[m + 1, r + 1]
                )
        p[C] = cur[1, 1] * scale**C
        prev = cur
    return p


def p_C_recursive(
    ensemble: ClickEnsemble, density: ClickDensity, letter: str, R: int
) -> LikelihoodTable:
    """Exact matching-sum table via the dynamic program."""
    if ensemble.M == 0:
        return LikelihoodTable(p=(1.0,))
    G = g_matrix(ensemble, density, letter, R)
    return LikelihoodTable(p=tuple(float(v) for v in match_sum_table(G)))


def _hypotheses(M: int, R: int, C: int):
    """All label vectors with C true clicks among M and C fired reps among R."""
    from itertools import combinations

    for true_clicks in combinations(range(M), C):
        n = [1] * M
        for m in true_clicks:
            n[m] = 0
        for fired in combinations(range(R), C):
            c = [0] * R
            for r in fired:
                c[r] = 1
            yield LabelHypothesis(n=tuple(n), c=tuple(c))


def p_C_bruteforce(
    ensemble: ClickEnsemble, density: ClickDensity, letter: str, R: int
) -> LikelihoodTable:
    """Oracle: explicit enumeration of every labelling hypothesis."""
    M = ensemble.M
    if M > 8 or R > 6:
        raise ValueError(f"instance too large for enumeration (M={M}, R={R})")
    p = [1.0]
    for C in range(1, min(M, R) + 1):
        p.append(
            sum(
                p_z_t_ell(hyp, ensemble, density, letter)
                for hyp in _hypotheses(M, R, C)
            )
        )
    return LikelihoodTable(p=tuple(p))


def log_summand_coefficient(M: int, C: int, R: int, params: Params) -> float:
    """log of lam^(M-C) * f^(R-C) * (1-f)^C, with 0^0 = 1 conventions."""
    out = 0.0
    for base, exponent in ((params.lam, M - C), (params.f, R - C), (1.0 - params.f, C)):
        if exponent > 0:
            if base == 0.0:
                return -math.inf
            out += exponent * math.log(base)
    return out


def log_ensemble_likelihood(
    ensemble: ClickEnsemble,
    params: Params,
    density: ClickDensity,
    letter: str,
    R: int,
) -> float:
    """log P(t, M | params, letter): the exponential-window factor times the
    coefficient-weighted sum of the matching table."""
    table = p_C_recursive(ensemble, density, letter, R)
    M = ensemble.M
    terms = []
    for C, pC in enumerate(table.p):
        if pC > 0.0:
            lc = log_summand_coefficient(M, C, R, params)
            if lc > -math.inf:
                terms.append(lc + math.log(pC))
    if not terms:
        return -math.inf
    top = max(terms)
    return -params.lam * ensemble.window_T + top + math.log(
        sum(math.exp(v - top) for v in terms)
    )


def ensemble_likelihood(
    ensemble: ClickEnsemble,
    params: Params,
    density: ClickDensity,
    letter: str,
    R: int,
) -> float:
    return math.exp(log_ensemble_likelihood(ensemble, params, density, letter, R))


def match_marginals(
    ensemble: ClickEnsemble,
    params: Params,
    density: ClickDensity,
    letter: str,
    R: int,
) -> np.ndarray:
    """Posterior probability that click m is a true click paired with rep r.

    gamma[m, r] = P(match (m, r) | t, M, letter, params), marginalizing over
    all labelling hypotheses weighted by the model. Row sums over (m, r) give
    the expected number of true clicks in the window. Forward and backward
    matching sums are combined per hypothesis size.
    """
    M = ensemble.M
    if M == 0:
        return np.zeros((0, R))
    G = g_matrix(ensemble, density, letter, R)
    c_max = min(M, R)
    scale = float(G.max())
    if scale <= 0.0:
        return np.zeros((M, R))
    Gs = G / scale

    back = [np.ones((M + 2, R + 2))]
    for C in range(1, c_max + 1):
        cur = np.zeros((M + 2, R + 2))
        for m in range(M, 0, -1):
            for r in range(R, 0, -1):
                cur[m, r] = (
                    Gs[m - 1, r - 1] * back[C - 1][m + 1, r + 1]
                    + cur[m, r + 1]
                    + cur[m + 1, r]
                    - cur[m + 1, r + 1]
                )
        back.append(cur)
    fwd = [np.ones((M + 2, R + 2))]
    for C in range(1, c_max + 1):
        cur = np.zeros((M + 2, R + 2))
        for m in range(1, M + 1):
            for r in range(1, R + 1):
                cur[m, r] = (
                    Gs[m - 1, r - 1] * fwd[C - 1][m - 1, r - 1]
                    + cur[m - 1, r]
                    + cur[m, r - 1]
                    - cur[m - 1, r - 1]
                )
        fwd.append(cur)

    # weight of hypothesis size C, on the common rescaled basis
    logw = np.full(c_max + 1, -math.inf)
    for C in range(c_max + 1):
        lc = log_summand_coefficient(M, C, R, params)
        if lc > -math.inf:
            logw[C] = lc + C * math.log(scale)
    shift = float(logw.max())
    if shift == -math.inf:
        raise ValueError("window impossible under these parameters")
    w = np.exp(logw - shift)

    Z = sum(w[C] * back[C][1, 1] for C in range(c_max + 1))
    if Z <= 0.0:
        raise ValueError("window impossible under these parameters")
    gamma = np.zeros((M, R))
    for m in range(1, M + 1):
        for r in range(1, R + 1):
            acc = 0.0
            for C in range(1, c_max + 1):
                inner = 0.0
                for a in range(C):
                    inner += fwd[a][m - 1, r - 1] * back[C - 1 - a][m + 1, r + 1]
                acc += w[C] * inner
            gamma[m - 1, r - 1] = Gs[m - 1, r - 1] * acc / Z
    return gamma
