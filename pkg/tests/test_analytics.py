"""Operator-complexity measures, bound calculators, and structure checks."""

import math
import warnings

import numpy as np
import pytest

from pauliprop.analytics import (
    TruncationError,
    UnnormalizedOperatorWarning,
    delta_bound,
    distributions,
    k_prescription,
    ose,
    truncation_error,
    weight_truncation_bound,
    xy_structure_check,
)
from pauliprop.hamiltonian import build_xxz_chain
from pauliprop.pauli import PauliWord
from pauliprop.propagation import RunConfig, backpropagate, conjugate_rotation
from pauliprop.sparse import PauliSum, add, pauli_norm2, scale, squared_tail, tensor_product


def w(text: str) -> PauliWord:
    return PauliWord.from_string(text)


def from_map(mapping: dict[str, float]) -> PauliSum:
    n = len(next(iter(mapping)))
    return PauliSum.from_terms(n, ((w(k), v) for k, v in mapping.items()))


def random_unit_sum(rng: np.random.Generator, n: int, terms: int, signed: bool = True) -> PauliSum:
    terms = min(terms, 4**n)
    out = PauliSum(n)
    while len(out) < terms:
        x = int(rng.integers(0, 1 << n))
        z = int(rng.integers(0, 1 << n))
        c = float(rng.standard_normal())
        if not signed:
            c = abs(c)
        if c != 0.0:
            out._data[(x, z)] = c
    return scale(out, 1.0 / pauli_norm2(out))


def evolved_unit_z(L: int = 6, t: float = 1.0, N: int = 10, Jz: float = 0.5) -> PauliSum:
    H = build_xxz_chain(L, 1.0, 1.0, Jz)
    O = PauliSum.from_terms(L, [(PauliWord.single(L, L // 2, "Z"), 1.0)])
    out, _ = backpropagate(O, H, RunConfig(t=t, N=N))
    return out


class TestOse:
    def test_single_stabilizer_is_zero(self):
        s = from_map({"Z": 1.0})
        for alpha in (0.25, 0.5, 0.75, 1.0):
            assert ose(s, alpha).value == pytest.approx(0.0, abs=1e-14)

    def test_flat_pair_is_ln2(self):
        s = from_map({"X": math.sqrt(0.5), "Z": math.sqrt(0.5)})
        for alpha in (0.25, 0.5, 1.0):
            assert ose(s, alpha).value == pytest.approx(math.log(2), abs=1e-12)

    def test_result_carries_alpha(self):
        out = ose(from_map({"Z": 1.0}), 0.5)
        assert out.alpha == 0.5

    def test_tensor_additivity(self):
        rng = np.random.default_rng(13)
        for _ in range(25):
            a = random_unit_sum(rng, 2, int(rng.integers(1, 5)))
            b = random_unit_sum(rng, 3, int(rng.integers(1, 9)))
            ab = tensor_product(a, b)
            for alpha in (0.25, 0.5, 0.75, 1.0):
                assert ose(ab, alpha).value == pytest.approx(
                    ose(a, alpha).value + ose(b, alpha).value, abs=1e-10
                )

    def test_monotone_non_increasing_in_alpha(self):
        rng = np.random.default_rng(19)
        alphas = [0.1, 0.25, 0.5, 0.75, 0.9, 1.0]
        for _ in range(25):
            s = random_unit_sum(rng, 3, int(rng.integers(2, 20)))
            vals = [ose(s, a).value for a in alphas]
            assert all(y <= x + 1e-12 for x, y in zip(vals, vals[1:]))

    def test_shannon_branch_is_alpha_to_one_limit(self):
        rng = np.random.default_rng(23)
        s = random_unit_sum(rng, 3, 12)
        assert ose(s, 1.0).value == pytest.approx(ose(s, 1.0 - 1e-7).value, abs=1e-5)

    def test_invariant_under_half_pi_rotations(self):
        rng = np.random.default_rng(29)
        for _ in range(20):
            s = random_unit_sum(rng, 3, int(rng.integers(1, 20)))
            word = PauliWord(3, int(rng.integers(0, 8)), int(rng.integers(0, 8)))
            if word.is_identity():
                continue
            rotated = conjugate_rotation(s, word, 1.0, math.pi / 4)
            for alpha in (0.25, 0.5, 1.0):
                assert ose(rotated, alpha).value == pytest.approx(
                    ose(s, alpha).value, abs=1e-10
                )

    def test_concave_on_nonnegative_mixtures_below_half(self):
        rng = np.random.default_rng(31)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnnormalizedOperatorWarning)
            for _ in range(100):
                a = random_unit_sum(rng, 2, int(rng.integers(1, 10)), signed=False)
                b = random_unit_sum(rng, 2, int(rng.integers(1, 10)), signed=False)
                lam = float(rng.uniform(0.05, 0.95))
                mix = add(scale(a, lam), scale(b, 1.0 - lam), prune_eps=0.0)
                for alpha in (0.1, 0.25, 0.49):
                    lhs = ose(mix, alpha).value
                    rhs = lam * ose(a, alpha).value + (1.0 - lam) * ose(b, alpha).value
                    assert lhs >= rhs - 1e-10

    def test_signed_cancellation_breaks_the_mixture_lower_bound(self):
        # cancellation between mixture components can concentrate the
        # surviving squared coefficients, so the concavity statement holds
        # for distributions (non-negative coefficients), not signed sums
        a = from_map({"X": 1.0})
        b = scale(from_map({"X": -0.9, "Z": 1.0}), 1.0 / math.sqrt(1.81))
        mix = add(scale(a, 0.5), scale(b, 0.5), prune_eps=0.0)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnnormalizedOperatorWarning)
            lhs = ose(mix, 0.25).value
            rhs = 0.5 * ose(a, 0.25).value + 0.5 * ose(b, 0.25).value
        assert lhs < rhs

    def test_exp_convex_on_signed_mixtures_above_half(self):
        rng = np.random.default_rng(37)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", UnnormalizedOperatorWarning)
            for _ in range(100):
                a = random_unit_sum(rng, 2, int(rng.integers(1, 10)))
                b = random_unit_sum(rng, 2, int(rng.integers(1, 10)))
                lam = float(rng.uniform(0.05, 0.95))
                mix = add(scale(a, lam), scale(b, 1.0 - lam), prune_eps=0.0)
                if len(mix) == 0:
                    continue
                for alpha in (0.5, 0.75, 0.99):
                    lhs = math.exp(ose(mix, alpha).value)
                    rhs = lam * math.exp(ose(a, alpha).value) + (1.0 - lam) * math.exp(
                        ose(b, alpha).value
                    )
                    assert lhs <= rhs + 1e-10

    def test_warns_on_unnormalized_input(self):
        with pytest.warns(UnnormalizedOperatorWarning):
            ose(from_map({"Z": 0.5}), 0.5)

    def test_no_warning_when_normalized(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            ose(from_map({"Z": 1.0}), 0.5)

    def test_empty_operator_rejected(self):
        with pytest.raises(ValueError):
            ose(PauliSum(2), 0.5)

    @pytest.mark.parametrize("alpha", [0.0, -0.25, 1.5])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ValueError):
            ose(from_map({"Z": 1.0}), alpha)


class TestDeltaBound:
    def test_trivial_point(self):
        assert delta_bound(0.0, 1, 0.5) == 0.0

    def test_published_operating_point(self):
        val = delta_bound(6.08, 874_000_000, 0.5)
        assert val == pytest.approx(-14.509, abs=0.01)
        assert math.exp(val) == pytest.approx(0.5e-6, rel=0.02)

    @pytest.mark.parametrize("alpha", [0.0, 1.0, 1.5])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ValueError):
            delta_bound(1.0, 10, alpha)

    def test_budget_domain(self):
        with pytest.raises(ValueError):
            delta_bound(1.0, 0, 0.5)

    def test_dominates_tail_of_evolved_operator(self):
        s = evolved_unit_z()
        for alpha in (0.25, 0.5, 0.75):
            S = ose(s, alpha).value
            for K in (1, 2, 4, 16, 64, 256, 1024):
                tail = squared_tail(s, K)
                if tail <= 0.0:
                    continue
                assert math.log(tail) <= delta_bound(S, K, alpha) + 1e-12


class TestKPrescription:
    def test_published_operating_points(self):
        k = k_prescription(6.08, 0.001, 0.5)
        assert 8.7e8 < k < 8.8e8
        k = k_prescription(13.18, 0.001, 0.5)
        assert 1.05e12 < k < 1.07e12

    def test_matches_formula(self):
        S, eps, alpha = 2.5, 0.01, 0.5
        want = math.ceil(math.exp(S) * (2 * alpha / ((1 - alpha) * eps * eps)))
        assert k_prescription(S, eps, alpha) == want

    def test_loose_target_clamps_to_one(self):
        assert k_prescription(0.0, math.sqrt(2), 0.3) == 1
        assert k_prescription(5.0, 1.5, 0.7) == 1

    def test_overflow_reports_log_budget(self):
        with pytest.raises(OverflowError, match="representable budget"):
            k_prescription(1e9, 0.001, 0.5)

    def test_epsilon_domain(self):
        with pytest.raises(ValueError):
            k_prescription(1.0, 0.0, 0.5)

    @pytest.mark.parametrize("alpha", [0.0, 1.0])
    def test_alpha_domain(self, alpha):
        with pytest.raises(ValueError):
            k_prescription(1.0, 0.001, alpha)

    def test_prescription_closes_the_loop(self):
        # plugging the prescribed K back into the ln-bound lands at or
        # below ln(eps^2 / 2)
        for S, eps, alpha in ((3.0, 0.05, 0.5), (6.08, 0.001, 0.5), (2.0, 0.1, 0.75)):
            K = k_prescription(S, eps, alpha)
            assert delta_bound(S, K, alpha) <= math.log(eps * eps / 2.0) + 1e-9


class TestTruncationErrorCalc:
    def test_budget_covers_everything(self):
        s = from_map({"XI": 0.8, "IZ": 0.6})
        assert truncation_error(s, 2) == TruncationError(0.0, 0.0)

    def test_three_term_example(self):
        s = from_map(
            {"XII": math.sqrt(0.5), "IYI": math.sqrt(0.3), "IIZ": math.sqrt(0.2)}
        )
        exact, bound = truncation_error(s, 1)
        assert exact == pytest.approx(math.sqrt(2 * (1 - math.sqrt(0.5))), abs=1e-12)
        assert bound == pytest.approx(1.0, abs=1e-12)

    def test_exact_below_bound_everywhere(self):
        rng = np.random.default_rng(41)
        for _ in range(80):
            s = random_unit_sum(rng, 3, int(rng.integers(1, 40)))
            for K in (1, 2, 5, 17):
                exact, bound = truncation_error(s, K)
                assert exact <= bound + 1e-12

    def test_budget_domain(self):
        with pytest.raises(ValueError):
            truncation_error(from_map({"Z": 1.0}), 0)


class TestXyStructureCheck:
    def test_zero_steps_trivially_pass(self):
        rep = xy_structure_check(from_map({"IZI": 1.0}), 1, 0)
        assert rep.ok and rep.count_bound is None and rep.terms == 1

    def test_single_bond_step(self):
        H = build_xxz_chain(2, 1.0, 1.0, 0.0)
        O = PauliSum.from_terms(2, [(PauliWord.single(2, 0, "Z"), 1.0)])
        out, _ = backpropagate(O, H, RunConfig(t=0.3, N=1))
        rep = xy_structure_check(out, 0, 1)
        assert rep.ok
        assert rep.family_ok and rep.cone_ok and rep.count_ok
        assert rep.terms <= rep.count_bound == 6

    def test_z_coupling_breaks_the_family(self):
        H = build_xxz_chain(4, 1.0, 1.0, 0.5)
        O = PauliSum.from_terms(4, [(PauliWord.single(4, 1, "Z"), 1.0)])
        out, _ = backpropagate(O, H, RunConfig(t=1.0, N=4))
        rep = xy_structure_check(out, 1, 4)
        assert not rep.family_ok
        assert rep.witness is not None

    def test_cone_violation_witnessed(self):
        rep = xy_structure_check(from_map({"IIIZ": 1.0}), 0, 1)
        assert not rep.cone_ok
        assert "cone" in rep.witness

    def test_count_violation_witnessed(self):
        # 7 in-family terms inside the s=1 cone of site 3, against a bound of 6
        labels = ["IIZIIII", "IIIZIII", "IIIIZII", "IIXXIII", "IIXYIII", "IIYXIII", "IIYYIII"]
        s = from_map({lab: 0.1 for lab in labels})
        rep = xy_structure_check(s, 3, 1)
        assert rep.family_ok and rep.cone_ok
        assert not rep.count_ok
        assert "count" in rep.witness

    def test_site_domain(self):
        with pytest.raises(ValueError):
            xy_structure_check(from_map({"Z": 1.0}), 2, 1)


class TestWeightTruncationBound:
    def test_light_operator(self):
        assert weight_truncation_bound(from_map({"ZI": 1.0}), 2) == pytest.approx(4 / 9)

    def test_heavy_operator(self):
        assert weight_truncation_bound(from_map({"XX": 1.0}), 2) == pytest.approx(13 / 9)

    def test_all_light_unit_norm(self):
        s = from_map({"ZII": 0.6, "IXI": 0.8})
        for M in (2, 3, 5):
            assert weight_truncation_bound(s, M) == pytest.approx((2 / 3) ** M, rel=1e-12)

    def test_threshold_domain(self):
        with pytest.raises(ValueError):
            weight_truncation_bound(from_map({"Z": 1.0}), 0)


class TestDistributions:
    def test_weight_histogram(self):
        mag, wt, count = distributions(from_map({"ZI": 0.6, "XX": 0.8}))
        assert wt == pytest.approx({1: 0.36, 2: 0.64})
        assert count == 2
        assert mag == pytest.approx({-2: 0.36, -1: 0.64})

    def test_single_term(self):
        mag, wt, count = distributions(from_map({"Z": 1.0}))
        assert wt == {1: 1.0}
        assert count == 1
        assert list(mag) == [0]
        assert mag[0] == 1.0

    def test_total_mass_conserved(self):
        rng = np.random.default_rng(43)
        s = random_unit_sum(rng, 4, 30)
        mag, wt, count = distributions(s)
        assert sum(mag.values()) == pytest.approx(1.0, rel=1e-12)
        assert sum(wt.values()) == pytest.approx(1.0, rel=1e-12)
        assert count == 30
