import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diagsearch.errors import EmptyDatasetError, UndefinedProbabilityError
from diagsearch.mdp import Estimator, State, best_diagnosis_from, entropy

from conftest import make_costs, make_dataset


def ten_examples():
    X = [[0, 0], [0, 1], [0, 1], [0, 0], [1, 0], [1, 1], [1, 1], [1, 0], [1, 1], [1, 0]]
    y = [0, 0, 1, 1, 1, 1, 1, 0, 1, 1]
    return make_dataset(X, y)


class TestState:
    def test_order_independent(self):
        assert State.of([(2, 1), (0, 0)]) == State.of({0: 0, 2: 1})
        assert hash(State.of([(2, 1), (0, 0)])) == hash(State.of([(0, 0), (2, 1)]))

    def test_extend_and_membership(self):
        s = State().extend(3, 1).extend(1, 0)
        assert s.pairs == ((1, 0), (3, 1))
        assert 3 in s and 2 not in s and len(s) == 2
        with pytest.raises(ValueError):
            s.extend(1, 1)

    def test_duplicate_attribute(self):
        with pytest.raises(ValueError):
            State.of([(1, 0), (1, 1)])


class TestMatching:
    def test_empty_state_matches_all(self):
        est = Estimator(ten_examples())
        np.testing.assert_array_equal(est.matching(State()), np.arange(10))

    def test_single_condition(self):
        est = Estimator(ten_examples())
        np.testing.assert_array_equal(est.matching(State.of({0: 0})), [0, 1, 2, 3])

    def test_intersection_matches_filter(self):
        d = ten_examples()
        est = Estimator(d)
        got = est.matching(State.of({0: 0, 1: 1}))
        want = [i for i in range(10) if d.X[i, 0] == 0 and d.X[i, 1] == 1]
        np.testing.assert_array_equal(got, want)

    def test_subset_indices_map_back(self):
        d = ten_examples()
        est = Estimator(d, indices=[4, 5, 6, 0])
        np.testing.assert_array_equal(est.matching(State.of({0: 1})), [4, 5, 6])

    def test_empty_training_set(self):
        with pytest.raises(EmptyDatasetError):
            Estimator(ten_examples(), indices=[])


class TestProbabilities:
    def outcome_fixture(self):
        # 8 examples, value 1 of a 3-valued test seen twice
        X = [[0], [0], [0], [0], [0], [2], [1], [1]]
        return make_dataset(X, [0, 1] * 4, [3])

    def test_p_outcome_ml(self):
        assert Estimator(self.outcome_fixture()).p_outcome(State(), 0, 1) == pytest.approx(0.25)

    def test_p_outcome_laplace(self):
        est = Estimator(self.outcome_fixture(), laplace=True)
        assert est.p_outcome(State(), 0, 1) == pytest.approx(3 / 11)

    def test_laplace_zero_matches_uniform(self):
        d = make_dataset([[0, 0], [0, 1]], [0, 1], [2, 3])
        est = Estimator(d, laplace=True)
        np.testing.assert_allclose(est.outcome_distribution(State.of({0: 1}), 1), [1 / 3] * 3)
        np.testing.assert_allclose(est.class_distribution(State.of({0: 1})), [0.5, 0.5])

    def test_ml_zero_matches_raises(self):
        d = make_dataset([[0, 0], [0, 1]], [0, 1])
        with pytest.raises(UndefinedProbabilityError):
            Estimator(d).class_distribution(State.of({0: 1}))

    def test_p_class(self):
        y = [1] * 7 + [0] * 3
        d = make_dataset(np.zeros((10, 1), int), y, [2])
        assert Estimator(d).p_class(State(), 1) == pytest.approx(0.7)
        assert Estimator(d, laplace=True).p_class(State(), 1) == pytest.approx(8 / 12)

    def test_measured_attribute_rejected(self):
        with pytest.raises(ValueError):
            Estimator(ten_examples()).outcome_distribution(State.of({0: 0}), 0)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 1), st.integers(0, 2)), min_size=1, max_size=40),
           st.booleans())
    def test_distributions_sum_to_one(self, rows, laplace):
        X = [[a, b] for a, b, _ in rows]
        y = [c for _, _, c in rows]
        d = make_dataset(X, y, [3, 2], classes=("a", "b", "c"))
        est = Estimator(d, laplace=laplace)
        for v in range(3):
            s = State.of({0: v})
            m = est.match_local(s)
            if len(m) == 0 and not laplace:
                continue
            pc = est.class_distribution(s)
            po = est.outcome_distribution(s, 1)
            assert pc.sum() == pytest.approx(1.0, abs=1e-9)
            assert po.sum() == pytest.approx(1.0, abs=1e-9)
            if laplace:
                assert ((pc > 0) & (pc < 1)).all() and ((po > 0) & (po < 1)).all()
            counts = [len(est.refine(m, 1, w)) for w in range(2)]
            assert sum(counts) == len(m)


class TestDiagnosisCost:
    def test_point_mass(self):
        d = make_dataset([[0]] * 3, [1, 1, 1], [2], classes=("healthy", "sick"))
        cm = make_costs(d, [1], [[0, 100], [5, 0]])
        assert Estimator(d).diagnosis_cost(cm, State(), 0) == pytest.approx(100)

    def test_hand_expectation(self):
        # classes ordered (sick, healthy); P = (0.7, 0.3)
        d = make_dataset([[0]] * 10, [0] * 7 + [1] * 3, [2], classes=("sick", "healthy"))
        cm = make_costs(d, [1], [[0, 20], [50, 0]])
        assert Estimator(d).diagnosis_cost(cm, State(), 0) == pytest.approx(6.0)

    def test_symmetric_tie_goes_to_class_zero(self):
        d = make_dataset([[0], [0]], [0, 1], [2])
        cm = make_costs(d, [1], [[0, 60], [60, 0]])
        assert Estimator(d).best_diagnosis(cm, State()) == (0, pytest.approx(30.0))

    def test_best_of_skewed(self):
        d = make_dataset([[0]] * 10, [0] * 9 + [1], [2])
        cm = make_costs(d, [1], [[0, 100], [100, 0]])
        k, c = Estimator(d).best_diagnosis(cm, State())
        assert k == 0 and c == pytest.approx(10.0)

    def test_zero_matrix(self):
        d = make_dataset([[0], [0]], [0, 1], [2])
        k, c = best_diagnosis_from(make_costs(d, [1], np.zeros((2, 2))), np.array([0.3, 0.7]))
        assert (k, c) == (0, 0.0)


class TestEntropy:
    def test_values(self):
        assert entropy([0.5, 0.5]) == pytest.approx(1.0)
        assert entropy([1.0, 0.0]) == 0.0
        assert entropy([0.25, 0.75]) == pytest.approx(0.811278, abs=1e-6)
