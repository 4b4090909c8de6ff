"""Heisenberg-picture propagation engine: rotations, trajectories, aborts."""

import math

import numpy as np
import pytest

from pauliprop.hamiltonian import Hamiltonian, build_xxz_chain
from pauliprop.pauli import PauliWord
from pauliprop.propagation import (
    EngineAbort,
    ProductState,
    RunConfig,
    backpropagate,
    conjugate_rotation,
    expectation_product_state,
    staggered_magnetization,
    staggered_observable,
)
from pauliprop.sparse import PauliSum, TruncationPolicy, pauli_norm2


def w(text: str) -> PauliWord:
    return PauliWord.from_string(text)


def from_map(mapping: dict[str, float]) -> PauliSum:
    n = len(next(iter(mapping)))
    return PauliSum.from_terms(n, ((w(k), v) for k, v in mapping.items()))


def as_map(sum_: PauliSum) -> dict[str, float]:
    return {word.to_string(): c for word, c in sum_.items()}


class TestConjugateRotation:
    def test_x_under_z_rotation(self):
        out = conjugate_rotation(from_map({"X": 1.0}), w("Z"), 1.0, math.pi / 8)
        got = as_map(out)
        assert got["X"] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)
        assert got["Y"] == pytest.approx(math.sqrt(2) / 2, abs=1e-15)

    def test_commuting_word_untouched(self):
        before = from_map({"ZZ": 0.7, "IZ": 0.2})
        out = conjugate_rotation(before, w("ZI"), 1.3, 0.4)
        assert as_map(out) == as_map(before)

    def test_identity_angle_untouched(self):
        before = from_map({"X": 0.7})
        assert as_map(conjugate_rotation(before, w("Z"), 1.0, 0.0)) == as_map(before)

    def test_norm_preserved(self):
        rng = np.random.default_rng(7)
        s = PauliSum.from_terms(
            3,
            (
                (PauliWord(3, int(rng.integers(0, 8)), int(rng.integers(0, 8))), c)
                for c in rng.standard_normal(20)
            ),
        )
        out = conjugate_rotation(s, w("XYZ"), 0.83, 0.31)
        assert pauli_norm2(out) == pytest.approx(pauli_norm2(s), rel=1e-12)

    def test_clifford_angle_relabels(self):
        # 2 w tau = pi/2 sends each anticommuting word to a single new word
        out = conjugate_rotation(from_map({"X": 0.6, "Z": 0.8}), w("Z"), 1.0, math.pi / 4)
        got = as_map(out)
        assert set(got) == {"Y", "Z"}
        assert got["Y"] == pytest.approx(0.6, abs=1e-15)
        assert got["Z"] == pytest.approx(0.8, abs=1e-15)


class TestBackpropagate:
    def test_single_bond_closed_form(self):
        H = Hamiltonian(2, ((1.0, w("XX")),))
        t = 0.9
        out, _ = backpropagate(from_map({"ZI": 1.0}), H, RunConfig(t=t, N=1))
        got = as_map(out)
        assert got["ZI"] == pytest.approx(math.cos(2 * t), abs=1e-14)
        assert got["YX"] == pytest.approx(-math.sin(2 * t), abs=1e-14)

    def test_diagonal_hamiltonian_is_trivial_on_z(self):
        H = build_xxz_chain(4, 0.0, 0.0, 1.0)
        O = from_map({"ZIII": 1.0})
        out, records = backpropagate(O, H, RunConfig(t=2.0, N=10))
        assert as_map(out) == as_map(O)
        assert all(r.terms == 1 for r in records)

    def test_two_site_closed_form_value(self):
        H = build_xxz_chain(2, 1.0, 1.0, 0.0)
        state = ProductState.neel(2)
        for t in (0.3, 0.7, 1.1):
            res = staggered_magnetization(H, state, RunConfig(t=t, N=16))
            assert res.value == pytest.approx(math.cos(4 * t) / 2, abs=1e-12)

    def test_unitarity_untruncated(self):
        H = build_xxz_chain(6, 1.0, 0.9, 0.5)
        O = from_map({"ZIIIII": 1.0})
        _, records = backpropagate(O, H, RunConfig(t=1.0, N=20))
        for r in records:
            assert abs(r.norm_ratio - 1.0) < 1e-10

    def test_norm_monotone_under_truncation(self):
        H = build_xxz_chain(8, 1.0, 1.0, 0.5)
        O = staggered_observable(8)
        _, records = backpropagate(O, H, RunConfig(t=2.0, N=40, K=24))
        ratios = [r.norm_ratio for r in records]
        assert all(b <= a + 1e-12 for a, b in zip(ratios, ratios[1:]))
        assert all(r.discarded_mass >= 0.0 for r in records)
        diffs = [r.discarded_mass for r in records]
        assert all(b >= a for a, b in zip(diffs, diffs[1:]))

    def test_clifford_angles_keep_term_count(self):
        # every rotation angle 2 w tau = pi/2: the circuit permutes words
        H = build_xxz_chain(5, 1.0, 1.0, 1.0)
        O = staggered_observable(5)
        cfg = RunConfig(t=3 * math.pi / 4, N=3)
        assert cfg.tau == pytest.approx(math.pi / 4)
        out, _ = backpropagate(O, H, cfg)
        assert len(out) == len(O)
        got = sorted(abs(c) for _, c in out.items())
        want = sorted(abs(c) for _, c in O.items())
        assert got == pytest.approx(want, rel=1e-12)

    def test_deterministic_repeat(self):
        H = build_xxz_chain(6, 1.0, 0.8, 0.3)
        O = staggered_observable(6)
        cfg = RunConfig(t=1.5, N=15, K=50)
        a, _ = backpropagate(O, H, cfg)
        b, _ = backpropagate(O, H, cfg)
        assert as_map(a) == as_map(b)

    def test_matches_truncation_free_reference_at_large_budget(self):
        H = build_xxz_chain(5, 1.0, 1.0, 0.5)
        O = staggered_observable(5)
        state = ProductState.neel(5)
        exact, _ = backpropagate(O, H, RunConfig(t=0.8, N=8), state=state)
        capped, _ = backpropagate(O, H, RunConfig(t=0.8, N=8, K=4**5), state=state)
        assert as_map(capped) == pytest.approx(as_map(exact), abs=1e-12)

    def test_final_operator_is_rescaled(self):
        H = build_xxz_chain(6, 1.0, 1.0, 0.5)
        O = staggered_observable(6)
        out, _ = backpropagate(O, H, RunConfig(t=1.5, N=15, K=16))
        assert pauli_norm2(out) == pytest.approx(pauli_norm2(O), rel=1e-12)

    def test_record_cadence(self):
        H = build_xxz_chain(3, 1.0, 1.0, 0.0)
        O = staggered_observable(3)
        cfg = RunConfig(t=0.7, N=7, record_every=3)
        _, records = backpropagate(O, H, cfg)
        assert [r.step for r in records] == [3, 6, 7]
        assert [r.time for r in records] == pytest.approx([0.3, 0.6, 0.7])

    def test_zero_time_single_record(self):
        H = build_xxz_chain(3, 1.0, 1.0, 0.0)
        O = staggered_observable(3)
        state = ProductState.neel(3)
        out, records = backpropagate(O, H, RunConfig(t=0.0, N=1), state=state)
        assert len(records) == 1
        assert records[0].step == 1
        assert records[0].value == pytest.approx(
            expectation_product_state(O, state), abs=1e-15
        )
        assert as_map(out) == as_map(O)

    def test_value_nan_without_state(self):
        H = build_xxz_chain(3, 1.0, 1.0, 0.0)
        _, records = backpropagate(staggered_observable(3), H, RunConfig(t=0.4, N=4))
        assert all(math.isnan(r.value) for r in records)

    def test_ose_columns_present_when_requested(self):
        H = build_xxz_chain(4, 1.0, 1.0, 0.5)
        _, records = backpropagate(
            staggered_observable(4), H, RunConfig(t=0.5, N=5, ose=True)
        )
        for r in records:
            assert r.ose_half is not None and r.ose_shannon is not None
            assert r.ose_half >= r.ose_shannon - 1e-12

    def test_rescale_each_step_keeps_ratio_one(self):
        H = build_xxz_chain(6, 1.0, 1.0, 0.5)
        O = staggered_observable(6)
        cfg = RunConfig(t=1.5, N=15, K=16, rescale_each_step=True)
        _, records = backpropagate(O, H, cfg)
        assert all(abs(r.norm_ratio - 1.0) < 1e-12 for r in records)

    def test_abort_when_weight_cap_empties(self):
        H = Hamiltonian(2, ((1.0, w("XX")),))
        policy = TruncationPolicy(kind="weight_cap", M=1)
        with pytest.raises(EngineAbort, match="step 1"):
            backpropagate(from_map({"XI": 1.0}), H, RunConfig(t=1.0, N=1, policy=policy))

    def test_abort_on_norm_collapse(self):
        # each step leaks sin(0.1) of the amplitude into a discarded term
        H = Hamiltonian(1, ((1.0, w("Z")),))
        cfg = RunConfig(t=350.0, N=7000, K=1, record_every=10**9)
        with pytest.raises(EngineAbort, match="collapsed"):
            backpropagate(from_map({"X": 1.0}), H, cfg)

    def test_site_count_mismatch(self):
        H = build_xxz_chain(3, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            backpropagate(from_map({"ZI": 1.0}), H, RunConfig(t=1.0, N=1))

    def test_empty_observable_rejected(self):
        H = build_xxz_chain(3, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError):
            backpropagate(PauliSum(3), H, RunConfig(t=1.0, N=1))


class TestRunConfig:
    def test_tau(self):
        assert RunConfig(t=1.0, N=4).tau == 0.25

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"t": -1.0, "N": 1},
            {"t": math.nan, "N": 1},
            {"t": 1.0, "N": 0},
            {"t": 1.0, "N": 1, "K": -1},
            {"t": 1.0, "N": 1, "record_every": 0},
        ],
    )
    def test_rejects_bad_values(self, kwargs):
        with pytest.raises(ValueError):
            RunConfig(**kwargs)

    def test_policy_overrides_budget(self):
        policy = TruncationPolicy(kind="top_k_bucket", K=8)
        cfg = RunConfig(t=1.0, N=1, K=99, policy=policy)
        assert cfg.effective_policy() is policy

    def test_zero_budget_means_untruncated(self):
        assert RunConfig(t=1.0, N=1, K=0).effective_policy() is None

    def test_budget_maps_to_exact_policy(self):
        policy = RunConfig(t=1.0, N=1, K=7).effective_policy()
        assert policy is not None
        assert policy.kind == "top_k_exact" and policy.K == 7


class TestProductState:
    def test_neel_pattern(self):
        state = ProductState.neel(4)
        assert state.bloch[:, 2].tolist() == [1.0, -1.0, 1.0, -1.0]

    def test_bloch_is_read_only(self):
        state = ProductState.all_up(2)
        with pytest.raises(ValueError):
            state.bloch[0, 2] = 0.0

    @pytest.mark.parametrize(
        "arr",
        [
            np.zeros((3,)),
            np.zeros((0, 3)),
            np.full((2, 3), np.nan),
            np.array([[0.0, 0.0, 1.5]]),
        ],
    )
    def test_rejects_bad_bloch(self, arr):
        with pytest.raises(ValueError):
            ProductState(arr)

    def test_mixed_states_allowed(self):
        ProductState(np.array([[0.0, 0.0, 0.25]]))


class TestExpectation:
    def test_neel_z_values(self):
        state = ProductState.neel(3)
        assert expectation_product_state(from_map({"ZII": 1.0}), state) == 1.0
        assert expectation_product_state(from_map({"IZI": 1.0}), state) == -1.0
        assert expectation_product_state(from_map({"ZZI": 1.0}), state) == -1.0

    def test_transverse_term_vanishes(self):
        state = ProductState.all_up(2)
        assert expectation_product_state(from_map({"XI": 1.0}), state) == 0.0

    def test_linear_combination(self):
        state = ProductState.neel(2)
        s = from_map({"ZI": 0.5, "IZ": 0.25, "XX": 3.0})
        assert expectation_product_state(s, state) == pytest.approx(0.25)


class TestStaggeredMagnetization:
    def test_joint_equals_per_site_untruncated(self):
        H = build_xxz_chain(4, 1.0, 1.0, 0.5)
        state = ProductState.neel(4)
        cfg = RunConfig(t=0.6, N=6)
        joint = staggered_magnetization(H, state, cfg, mode="joint")
        split = staggered_magnetization(H, state, cfg, mode="per_site")
        assert split.value == pytest.approx(joint.value, abs=1e-12)
        assert split.operator is None and joint.operator is not None

    def test_thread_count_does_not_change_results(self, monkeypatch):
        H = build_xxz_chain(4, 1.0, 1.0, 0.5)
        state = ProductState.neel(4)
        cfg = RunConfig(t=0.6, N=6, K=8)
        baseline = staggered_magnetization(H, state, cfg, mode="per_site")
        monkeypatch.setenv("PAULIPROP_THREADS", "4")
        threaded = staggered_magnetization(H, state, cfg, mode="per_site")
        assert [r.value for r in threaded.records] == [r.value for r in baseline.records]

    def test_initial_value_is_half(self):
        for L in (2, 5, 8):
            H = build_xxz_chain(L, 1.0, 1.0, 0.0)
            res = staggered_magnetization(
                H, ProductState.neel(L), RunConfig(t=0.0, N=1)
            )
            assert res.value == pytest.approx(0.5, abs=1e-14)

    def test_rejects_unknown_mode(self):
        H = build_xxz_chain(2, 1.0, 1.0, 0.0)
        with pytest.raises(ValueError, match="mode"):
            staggered_magnetization(
                H, ProductState.neel(2), RunConfig(t=0.1, N=1), mode="sideways"
            )
