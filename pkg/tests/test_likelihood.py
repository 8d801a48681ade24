import math
from dataclasses import dataclass

import numpy as np
import pytest

from ticker.likelihood import (
    GaussianClickDensity,
    LikelihoodTable,
    _hypotheses,
    ensemble_likelihood,
    g_matrix,
    gz_indicator,
    log_ensemble_likelihood,
    match_marginals,
    match_sum_table,
    p_C_bruteforce,
    p_C_recursive,
    p_z_t_ell,
)
from ticker.model import Alphabet, ClickEnsemble, LabelHypothesis, Params
from ticker.schedule import Schedule


@dataclass(frozen=True)
class TableDensity:
    """Density stub: looks click times and repetitions up in a fixed table."""

    table: tuple[tuple[float, ...], ...]  # [click index][repetition]
    times: tuple[float, ...]

    def density(self, t, letter, r):
        return self.table[self.times.index(t)][r]


def _stub(ensemble, values):
    return TableDensity(table=tuple(tuple(row) for row in values), times=ensemble.times)


@pytest.fixture
def tiny_schedule():
    # two letters, two repetitions, interior onsets inside a 6 s window
    return Schedule(Alphabet("ab"), ("ab", "ba"), 1.5, 1)


class TestGzIndicator:
    def test_worked_example_row(self):
        # n = {0,1,1,0}: clicks 1 and 4 are true; c = {0,1,1,0}: reps 2 and 3
        # fired; matches are t1<->rep2 and t4<->rep3 (1-based)
        hyp = LabelHypothesis(n=(0, 1, 1, 0), c=(0, 1, 1, 0))
        hits = {(m, r) for m in range(4) for r in range(4) if gz_indicator(hyp, m, r)}
        assert hits == {(0, 1), (3, 2)}

    def test_all_false_positive(self):
        hyp = LabelHypothesis(n=(1, 1), c=(0, 0, 0))
        assert not any(gz_indicator(hyp, m, r) for m in range(2) for r in range(3))

    def test_single_pairing(self):
        hyp = LabelHypothesis(n=(0,), c=(1,))
        assert gz_indicator(hyp, 0, 0) == 1


class TestPztl:
    def test_empty_product_is_one(self):
        ens = ClickEnsemble(times=(0.1, 0.2), window_T=1.0)
        hyp = LabelHypothesis(n=(1, 1), c=(0, 0))
        density = _stub(ens, [[9.0, 9.0], [9.0, 9.0]])
        assert p_z_t_ell(hyp, ens, density, "a") == 1.0

    def test_worked_example_product(self):
        ens = ClickEnsemble(times=(0.1, 0.2, 0.3, 0.4), window_T=1.0)
        vals = [[2.0, 3.0, 5.0, 7.0],
                [11.0, 13.0, 17.0, 19.0],
                [23.0, 29.0, 31.0, 37.0],
                [41.0, 43.0, 47.0, 53.0]]
        density = _stub(ens, vals)
        hyp = LabelHypothesis(n=(0, 1, 1, 0), c=(0, 1, 1, 0))
        # density(t1 | rep2) * density(t4 | rep3)
        assert p_z_t_ell(hyp, ens, density, "a") == pytest.approx(3.0 * 47.0)

    def test_single_true_click(self):
        ens = ClickEnsemble(times=(0.5,), window_T=1.0)
        density = _stub(ens, [[4.2]])
        hyp = LabelHypothesis(n=(0,), c=(1,))
        assert p_z_t_ell(hyp, ens, density, "a") == pytest.approx(4.2)

    def test_mismatched_click_count(self):
        ens = ClickEnsemble(times=(0.5,), window_T=1.0)
        hyp = LabelHypothesis(n=(0, 1), c=(1,))
        with pytest.raises(ValueError):
            p_z_t_ell(hyp, ens, _stub(ens, [[1.0]]), "a")


class TestRecursion:
    def test_m0_table(self, tiny_schedule):
        ens = ClickEnsemble(times=(), window_T=1.0)
        density = GaussianClickDensity(tiny_schedule, 0.2, 0.1)
        assert p_C_recursive(ens, density, "a", 2).p == (1.0,)

    def test_constant_density_counts_pairings(self):
        # M=2, R=2, unit densities: four single-click pairings
        ens = ClickEnsemble(times=(0.1, 0.2), window_T=1.0)
        density = _stub(ens, [[1.0, 1.0], [1.0, 1.0]])
        table = p_C_recursive(ens, density, "a", 2)
        assert table.p[1] == pytest.approx(4.0)

    def test_worked_example_dimensions(self):
        # M=4, N=2, C=2, R=4: 6 click labelings x 6 repetition labelings
        assert sum(1 for _ in _hypotheses(4, 4, 2)) == 36

    @pytest.mark.parametrize("M,R", [(4, 4), (3, 2), (5, 3), (2, 2)])
    def test_matches_bruteforce_random(self, M, R, rng):
        for _ in range(20):
            times = tuple(sorted(rng.uniform(0, 1, size=M)))
            ens = ClickEnsemble(times=times, window_T=1.0)
            density = _stub(ens, rng.lognormal(0.0, 2.0, size=(M, R)))
            a = p_C_recursive(ens, density, "a", R)
            b = p_C_bruteforce(ens, density, "a", R)
            assert a.p == pytest.approx(b.p, rel=1e-9)

    def test_all_zero_densities(self):
        ens = ClickEnsemble(times=(0.1, 0.2), window_T=1.0)
        density = _stub(ens, [[0.0, 0.0], [0.0, 0.0]])
        table = p_C_recursive(ens, density, "a", 2)
        assert table.p[1] == 0.0 and table.p[2] == 0.0

    def test_suffixes_too_short_for_C_vanish(self, rng):
        # the C-matching table is effectively M' x R': entries beyond have no
        # room for C matches, so dropping the last click must zero p at C=M
        G = rng.random((3, 3))
        full = match_sum_table(G)
        assert full[3] > 0
        assert len(match_sum_table(G[:2, :])) == 3

    def test_bruteforce_guard(self):
        ens = ClickEnsemble(times=tuple(np.linspace(0.01, 0.9, 9)), window_T=1.0)
        density = _stub(ens, np.ones((9, 2)))
        with pytest.raises(ValueError):
            p_C_bruteforce(ens, density, "a", 2)

    def test_table_validation(self):
        with pytest.raises(ValueError):
            LikelihoodTable(p=(0.5, 1.0))


class TestEnsembleLikelihood:
    def test_m0_closed_form(self, tiny_schedule):
        params = Params(delta=0.2, sigma=0.1, lam=0.3, f=0.25)
        ens = ClickEnsemble(times=(), window_T=2.0)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        expected = math.exp(-params.lam * 2.0) * params.f**2
        assert ensemble_likelihood(ens, params, density, "a", 2) == pytest.approx(expected)

    def test_lambda_zero_more_clicks_than_reps(self, tiny_schedule):
        params = Params(delta=0.2, sigma=0.1, lam=0.0, f=0.25)
        ens = ClickEnsemble(times=(0.1, 0.5, 0.9), window_T=2.0)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        assert ensemble_likelihood(ens, params, density, "a", 2) == 0.0

    def test_matches_bruteforce_joint(self, tiny_schedule, rng):
        # weighted labeling sum assembled from the brute-force table
        params = Params(delta=0.2, sigma=0.15, lam=0.1, f=0.1)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        for _ in range(10):
            M = int(rng.integers(1, 5))
            times = tuple(sorted(rng.uniform(0, 6.0, size=M)))
            ens = ClickEnsemble(times=times, window_T=6.0)
            table = p_C_bruteforce(ens, density, "a", 2)
            expected = math.exp(-params.lam * 6.0) * sum(
                params.lam ** (M - C) * params.f ** (2 - C) * (1 - params.f) ** C * pC
                for C, pC in enumerate(table.p)
            )
            got = ensemble_likelihood(ens, params, density, "a", 2)
            assert got == pytest.approx(expected, rel=1e-12)

    def test_relabeling_invariance(self):
        # letters sharing onset sets are interchangeable
        sched_a = Schedule(Alphabet("ab"), ("ab", "ab"), 1.0, 1)
        params = Params(delta=0.2, sigma=0.1, lam=0.05, f=0.1)
        density = GaussianClickDensity.from_params(sched_a, params)
        ens = ClickEnsemble(times=(0.15, 2.3), window_T=2.5)
        sched_b = Schedule(Alphabet("ab"), ("ba", "ba"), 1.0, 1)
        density_b = GaussianClickDensity.from_params(sched_b, params)
        assert ensemble_likelihood(ens, params, density, "a", 2) == pytest.approx(
            ensemble_likelihood(ens, params, density_b, "b", 2), rel=1e-12
        )

    def test_log_version_consistent(self, tiny_schedule):
        params = Params(delta=0.2, sigma=0.1, lam=0.2, f=0.2)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        ens = ClickEnsemble(times=(0.21, 4.67), window_T=6.0)
        log_p = log_ensemble_likelihood(ens, params, density, "a", 2)
        assert math.exp(log_p) == pytest.approx(
            ensemble_likelihood(ens, params, density, "a", 2)
        )


def _marginals_bruteforce(ensemble, params, density, letter, R):
    M = ensemble.M
    num = np.zeros((M, R))
    Z = 0.0
    for C in range(0, min(M, R) + 1):
        coeff = (
            params.lam ** (M - C)
            * params.f ** (R - C)
            * (1.0 - params.f) ** C
        )
        for hyp in _hypotheses(M, R, C):
            w = coeff * p_z_t_ell(hyp, ensemble, density, letter)
            Z += w
            for m in range(M):
                for r in range(R):
                    if gz_indicator(hyp, m, r):
                        num[m, r] += w
    return num / Z


class TestMatchMarginals:
    @pytest.mark.parametrize("M,R", [(1, 1), (2, 2), (3, 2), (4, 3), (5, 4)])
    def test_matches_enumeration(self, M, R, rng):
        params = Params(delta=0.0, sigma=0.1, lam=0.2, f=0.2)
        for _ in range(10):
            times = tuple(sorted(rng.uniform(0, 1, size=M)))
            ens = ClickEnsemble(times=times, window_T=1.0)
            density = _stub(ens, rng.lognormal(0.0, 1.5, size=(M, R)))
            got = match_marginals(ens, params, density, "a", R)
            want = _marginals_bruteforce(ens, params, density, "a", R)
            assert got == pytest.approx(want, rel=1e-9)

    def test_expected_true_clicks_bounded(self, rng):
        params = Params(delta=0.0, sigma=0.1, lam=0.5, f=0.3)
        for _ in range(10):
            M, R = int(rng.integers(1, 6)), int(rng.integers(1, 4))
            times = tuple(sorted(rng.uniform(0, 1, size=M)))
            ens = ClickEnsemble(times=times, window_T=1.0)
            density = _stub(ens, rng.random((M, R)) + 0.01)
            gamma = match_marginals(ens, params, density, "a", R)
            assert 0.0 <= gamma.sum() <= min(M, R) + 1e-12

    def test_lambda_zero_single_click(self, tiny_schedule):
        # with no false positives allowed, one click must be a true click
        params = Params(delta=0.2, sigma=0.02, lam=0.0, f=0.1)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        t = tiny_schedule.onset("a", 0) + params.delta
        ens = ClickEnsemble(times=(t,), window_T=6.0)
        gamma = match_marginals(ens, params, density, "a", 2)
        assert gamma.sum() == pytest.approx(1.0)
        assert gamma[0, 0] > 0.999

    def test_impossible_window_raises(self, tiny_schedule):
        params = Params(delta=0.2, sigma=0.02, lam=0.0, f=0.1)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        ens = ClickEnsemble(times=(0.1, 0.2, 0.3), window_T=6.0)  # M=3 > R=2
        with pytest.raises(ValueError):
            match_marginals(ens, params, density, "a", 2)


class TestDensityNormalization:
    def test_gaussian_density_integrates_to_one(self, tiny_schedule):
        density = GaussianClickDensity(tiny_schedule, 0.5, 0.1)
        xs = np.linspace(-2.0, 8.0, 20001)
        for letter in "ab":
            for r in range(2):
                ys = [density.density(x, letter, r) for x in xs]
                assert np.trapezoid(ys, xs) == pytest.approx(1.0, abs=1e-6)


class TestModelNormalization:
    def test_total_probability_near_one(self, tiny_schedule):
        # integrate the window likelihood over ordered click vectors, sum over
        # M; Gauss-Legendre for M <= 3, Monte Carlo for the tiny tail mass
        params = Params(delta=0.5, sigma=0.1, lam=0.1 / 6.5, f=0.3)
        density = GaussianClickDensity.from_params(tiny_schedule, params)
        T = 6.5
        R = 2
        total = ensemble_likelihood(
            ClickEnsemble(times=(), window_T=T), params, density, "a", R
        )
        for M, n_nodes in [(1, 4000), (2, 220), (3, 60)]:
            nodes, weights = np.polynomial.legendre.leggauss(n_nodes)
            nodes = 0.5 * T * (nodes + 1.0)
            weights = 0.5 * T * weights
            grids = np.meshgrid(*([nodes] * M), indexing="ij")
            wgrids = np.meshgrid(*([weights] * M), indexing="ij")
            pts = np.stack([g.ravel() for g in grids], axis=1)
            wts = np.prod(np.stack([g.ravel() for g in wgrids], axis=1), axis=1)
            vals = np.empty(len(pts))
            for i, row in enumerate(pts):
                ts = np.sort(row)
                for k in range(1, M):
                    if ts[k] <= ts[k - 1]:
                        ts[k] = ts[k - 1] + 1e-12
                ens = ClickEnsemble(times=tuple(ts), window_T=T)
                vals[i] = ensemble_likelihood(ens, params, density, "a", R)
            total += float((vals * wts).sum()) / math.factorial(M)
        rng = np.random.default_rng(7)
        for M in (4, 5, 6):
            pts = rng.uniform(0, T, size=(20_000, M))
            acc = 0.0
            for row in pts:
                ts = np.sort(row)
                ens = ClickEnsemble(times=tuple(ts), window_T=T)
                acc += ensemble_likelihood(ens, params, density, "a", R)
            total += acc / len(pts) * T**M / math.factorial(M)
        assert total == pytest.approx(1.0, abs=1e-2)
