import math

import numpy as np
import pytest

from replica_markov import (
    ConditionalInputLaw,
    MarkovPrior,
    MatchedModelRequired,
    ModelSpec,
    TransitionMatrix,
    binary_markov_kernel,
    fixed_point_residual,
    free_energy,
    free_energy_term,
    gauss_markov_eta,
    gauss_markov_free_energy,
    mutual_information,
    replica_mmse,
    solve_fixed_point,
    sparse_hmm_prior,
)
from replica_markov.iid_reference import iid_replica
from oracles import LOG_2PIE, g_bar_binary, sparse_hmm_hand_path

BINARY_SYM = ModelSpec(prior=MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3)))
GM_UNIT = ModelSpec(prior=MarkovPrior.gauss_markov(0.5, 1.0))


class TestFixedPoint:
    def test_vanishing_load_gives_unit_eta(self):
        sols = solve_fixed_point(BINARY_SYM, 1e-9)
        assert len(sols) == 1
        eta, xi = sols[0]
        assert abs(eta - 1.0) < 1e-8 and xi == eta

    def test_gauss_markov_matches_quadratic_root(self):
        # oracle: positive root of a*eta^2 + ((beta-1)a+1)*eta - 1
        for beta, a in ((1.0, 1.0), (0.5, 2.0), (2.0, 0.7)):
            roots = np.roots([a, (beta - 1.0) * a + 1.0, -1.0])
            oracle = float(roots[roots > 0][0])
            model = ModelSpec(prior=MarkovPrior.gauss_markov(0.4, a))
            sols = solve_fixed_point(model, beta)
            assert len(sols) == 1
            assert abs(sols[0][0] - oracle) < 1e-9
            assert abs(gauss_markov_eta(beta, a) - oracle) < 1e-12

    def test_golden_ratio_point(self):
        assert abs(gauss_markov_eta(1.0, 1.0) - (math.sqrt(5.0) - 1.0) / 2.0) < 1e-15

    def test_gauss_markov_eta_limits(self):
        assert abs(gauss_markov_eta(1e-12, 1.0) - 1.0) < 1e-11
        assert abs(gauss_markov_eta(1.0, 1e-12) - 1.0) < 1e-11
        eta = gauss_markov_eta(1.3, 0.9)
        assert abs(1.0 / eta - 1.0 - 1.3 * 0.9 / (eta * 0.9 + 1.0)) < 1e-12

    def test_eta_strictly_decreasing_in_beta(self):
        etas = [solve_fixed_point(BINARY_SYM, b)[0][0] for b in (0.5, 1.0, 2.0)]
        assert etas[0] > etas[1] > etas[2]

    def test_residuals_below_tolerance(self):
        for model in (BINARY_SYM, GM_UNIT, ModelSpec(prior=sparse_hmm_prior(0.3, 0.8))):
            for eta, xi in solve_fixed_point(model, 1.3):
                assert fixed_point_residual(model, 1.3, eta, xi) < 1e-8

    def test_mismatched_sigma_two_dimensional_system(self):
        model = ModelSpec(prior=MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3)), sigma=1.5)
        sols = solve_fixed_point(model, 1.0)
        assert sols
        eta, xi = sols[0]
        assert eta != xi
        assert fixed_point_residual(model, 1.0, eta, xi) < 1e-8

    def test_mismatched_free_energy_tracks_exact_evidence(self):
        # no closed-form reference exists off the matched point, so the
        # evidence oracle is the check: same desk-scale agreement as matched
        from replica_markov.simulator import empirical_free_energy

        for sigma in (1.3, 0.8):
            model = ModelSpec(
                prior=MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3)), sigma=sigma
            )
            sol = free_energy(model, 1.0)
            assert sol.mutual_info is None and sol.mmse is None
            emp, _se = empirical_free_energy(model, 12, 1.0, trials=150, seed=77)
            assert abs(sol.free_energy - emp) / abs(emp) < 0.05

    def test_mismatched_vanishing_load_limits(self):
        # beta -> 0: eta -> 1 and xi -> 1/sigma^2
        model = ModelSpec(prior=MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3)), sigma=1.5)
        eta, xi = solve_fixed_point(model, 1e-9)[0]
        assert abs(eta - 1.0) < 1e-8
        assert abs(xi - 1.0 / 1.5**2) < 1e-8


class TestFreeEnergyTerm:
    def test_binary_matches_trapezoid_oracle(self):
        beta = 1.0
        sol = free_energy(BINARY_SYM, beta)
        g_minus = free_energy_term(BINARY_SYM, 0, sol.eta, sol.xi, beta)
        assert abs(g_minus - g_bar_binary(-1, sol.eta, 0.3, beta)) < 1e-7
        g_plus = free_energy_term(BINARY_SYM, 1, sol.eta, sol.xi, beta)
        assert abs(g_plus - g_bar_binary(1, sol.eta, 0.3, beta)) < 1e-7

    def test_gauss_markov_term_is_closed_form(self):
        beta = 1.0
        eta = gauss_markov_eta(beta, 1.0)
        term = free_energy_term(GM_UNIT, 0, eta, eta, beta)
        assert abs(term - gauss_markov_free_energy(beta, 1.0)) < 1e-10

    def test_matched_cross_entropy_is_output_entropy(self):
        # with p = q the integral term is the differential entropy of U
        beta, eta = 1.0, 0.7
        term = free_energy_term(GM_UNIT, 0, eta, eta, beta)
        entropy = 0.5 * math.log(2.0 * math.pi * math.e * (1.0 + 1.0 / eta))
        const = (
            ((eta - 1.0) - math.log(eta)) / (2.0 * beta)
            - 0.5 * math.log(2.0 * math.pi / eta)
            - 0.5
            + math.log(2.0 * math.pi) / (2.0 * beta)
            + 1.0 / (2.0 * beta)
        )
        assert abs(term - (entropy + const)) < 1e-9


class TestFreeEnergy:
    def test_iid_reduction_matches_reference_path(self):
        model = ModelSpec(prior=MarkovPrior.discrete(binary_markov_kernel(0.5, 0.5)))
        law = ConditionalInputLaw.point_masses([-1.0, 1.0], [0.5, 0.5])
        for beta in (0.2, 1.0, 2.4):
            sol = free_energy(model, beta)
            ref = iid_replica(law, 1.0, beta)
            assert abs(sol.free_energy - ref.free_energy) < 1e-9
            assert abs(sol.mutual_info - ref.mutual_info) < 1e-9
            assert abs(sol.mmse - ref.mmse) < 1e-9

    def test_iid_reduction_any_equal_rows_prior(self):
        kern = TransitionMatrix((-1.0, 0.0, 2.0), np.tile([0.2, 0.5, 0.3], (3, 1)))
        model = ModelSpec(prior=MarkovPrior.discrete(kern))
        law = ConditionalInputLaw.point_masses([-1.0, 0.0, 2.0], [0.2, 0.5, 0.3])
        sol = free_energy(model, 1.0)
        ref = iid_replica(law, 1.0, 1.0)
        assert abs(sol.free_energy - ref.free_energy) < 1e-9
        assert abs(sol.mmse - ref.mmse) < 1e-9

    def test_gauss_markov_quadrature_equals_closed_form(self):
        for beta in np.arange(0.2, 3.01, 0.2):
            sol = free_energy(GM_UNIT, float(beta))
            assert abs(sol.free_energy - gauss_markov_free_energy(float(beta), 1.0)) < 1e-6

    def test_gauss_markov_free_energy_has_no_nu(self):
        vals = {
            nu: free_energy(ModelSpec(prior=MarkovPrior.gauss_markov(nu, 1.0)), 1.0).free_energy
            for nu in (0.1, 0.5, 0.8)
        }
        assert vals[0.1] == vals[0.5] == vals[0.8]

    def test_minimizer_is_argmin_of_candidates(self):
        sol = free_energy(BINARY_SYM, 1.0)
        assert all(sol.free_energy <= g + 1e-15 for _, _, g in sol.all_solutions)

    def test_snr_distribution_is_accepted(self):
        model = ModelSpec(
            prior=MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3)),
            snr=((0.5, 0.5), (2.0, 0.5)),
        )
        sol = free_energy(model, 1.0)
        assert np.isfinite(sol.free_energy)
        assert fixed_point_residual(model, 1.0, sol.eta, sol.xi) < 1e-8


class TestMutualInformation:
    def test_point_mass_prior_learns_nothing(self):
        kern = TransitionMatrix((0.5,), np.array([[1.0]]))
        model = ModelSpec(prior=MarkovPrior.discrete(kern))
        for beta in (0.5, 1.0):
            sol = free_energy(model, beta)
            assert abs(sol.free_energy - LOG_2PIE / (2.0 * beta)) < 1e-10
            assert abs(sol.mutual_info) < 1e-10
            assert abs(sol.mmse) < 1e-10

    def test_mismatched_model_rejected(self):
        model = ModelSpec(prior=MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3)), sigma=2.0)
        with pytest.raises(MatchedModelRequired):
            mutual_information(model, 1.0)
        with pytest.raises(MatchedModelRequired):
            replica_mmse(model, 1.0)

    def test_monotone_nonincreasing_in_beta(self):
        vals = [mutual_information(BINARY_SYM, float(b)) for b in np.arange(0.2, 3.01, 0.4)]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))

    def test_bits_conversion(self):
        nats = mutual_information(BINARY_SYM, 1.0)
        bits = mutual_information(BINARY_SYM, 1.0, units="bits")
        assert abs(bits - nats / math.log(2.0)) < 1e-15


class TestReplicaMmse:
    def test_sparse_hmm_iid_case_rows_agree(self):
        # kappa=0.5, gamma=1: both hidden rows are (0.5, 0.5), so the two
        # per-state conditional laws coincide and MMSE = kappa - R
        from replica_markov import joint_chain

        eff = joint_chain(sparse_hmm_prior(0.5, 1.0))
        assert eff.laws[0] == eff.laws[1]
        model = ModelSpec(prior=sparse_hmm_prior(0.5, 1.0))
        eta, free_ref, mmse_ref = sparse_hmm_hand_path(0.5, 1.0, 1.0)
        sol = free_energy(model, 1.0)
        assert abs(sol.mmse - mmse_ref) < 1e-7
        assert abs(sol.eta - eta) < 1e-7

    def test_hand_specialized_sparse_path_grid(self):
        for kappa, gamma, beta in (
            (0.3, 0.8, 0.5),
            (0.3, 0.8, 1.5),
            (0.5, 1.0, 1.0),
            (0.6, 0.5, 0.8),
        ):
            model = ModelSpec(prior=sparse_hmm_prior(kappa, gamma))
            sol = free_energy(model, beta)
            _, free_ref, mmse_ref = sparse_hmm_hand_path(kappa, gamma, beta)
            assert abs(sol.free_energy - free_ref) < 1e-7
            assert abs(sol.mmse - mmse_ref) < 1e-7

    def test_low_load_limit_matches_scalar_channel(self):
        # beta -> 0: eta -> 1 and the MMSE is the scalar-channel value
        model = BINARY_SYM
        mmse = replica_mmse(model, 1e-6)
        u = np.linspace(-12, 12, 200_001)
        c = 1.0 / math.sqrt(2.0 * math.pi)
        f = 0.7 * c * np.exp(-0.5 * (u + 1) ** 2) + 0.3 * c * np.exp(-0.5 * (u - 1) ** 2)
        ratio = (0.7 / 0.3) * np.exp(-2.0 * u)
        g = (1.0 - ratio) / (1.0 + ratio)
        scalar = 1.0 - np.trapezoid(f * g * g, u)
        assert abs(mmse - scalar) < 1e-6

    def test_bounds(self):
        for model, m2 in ((BINARY_SYM, 1.0), (ModelSpec(prior=sparse_hmm_prior(0.3, 0.8)), 0.3)):
            for beta in (0.4, 1.0, 2.5):
                val = replica_mmse(model, beta)
                assert 0.0 <= val <= m2 + 1e-12


class TestValidation:
    def test_snr_probabilities_must_sum_to_one(self):
        with pytest.raises(Exception):
            ModelSpec(prior=MarkovPrior.gauss_markov(0.5, 1.0), snr=((1.0, 0.5), (2.0, 0.6)))

    def test_sigma_positive(self):
        with pytest.raises(Exception):
            ModelSpec(prior=MarkovPrior.gauss_markov(0.5, 1.0), sigma=0.0)

    def test_matched_detection_with_explicit_equal_prior(self):
        prior = MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3))
        same = MarkovPrior.discrete(binary_markov_kernel(0.3, 0.3))
        assert ModelSpec(prior=prior, postulated_prior=same).is_matched
        other = MarkovPrior.discrete(binary_markov_kernel(0.3, 0.4))
        assert not ModelSpec(prior=prior, postulated_prior=other).is_matched
