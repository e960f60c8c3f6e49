import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from diagsearch.aostar import AOStar, AoConfig
from diagsearch.graph import (AND_NODE_BYTES, EDGE_BYTES, MATCH_BYTES, OR_NODE_BYTES, AndOrGraph,
                              MemoryLimitError, canonical_key, heuristic_q, values_from_scratch)
from diagsearch.mdp import Diagnose, Estimator, State
from diagsearch.policy import expected_value

from conftest import dp_optimum, make_costs, make_dataset, random_instance


def graph_for(data, cm, laplace=False, limit=10**9):
    return AndOrGraph(Estimator(data, laplace=laplace), cm.for_dataset(data), limit)


class TestCanonicalKey:
    def test_keys(self):
        assert canonical_key(State.of([(1, 0), (2, 1)])) == canonical_key(State.of([(2, 1), (1, 0)]))
        assert canonical_key(State.of({1: 0})) != canonical_key(State.of({1: 1}))
        assert canonical_key(State()) != canonical_key(State.of({1: 0}))


class TestHeuristic:
    def test_cheapest_next_test(self):
        rng = np.random.default_rng(0)
        X = rng.integers(0, 2, size=(20, 3))
        X[:4] = [[0, 0, 0], [0, 1, 1], [1, 0, 1], [1, 1, 0]]
        d = make_dataset(X, rng.integers(0, 2, 20))
        cm = make_costs(d, [4, 10, 10], [[50, 100], [100, 50]])
        assert heuristic_q(State(), 0, Estimator(d), cm) == pytest.approx(4 + 10)

    def test_no_tests_left(self):
        d = make_dataset([[0], [0], [1], [1], [1]], [0, 1, 1, 1, 0])
        cm = make_costs(d, [2], [[0, 10], [10, 0]])
        # outcome 0: (1/2, 1/2) -> 5; outcome 1: (1/3, 2/3) -> 10/3
        want = 2 + 0.4 * 5 + 0.6 * (10 / 3)
        assert heuristic_q(State(), 0, Estimator(d), cm) == pytest.approx(want)

    def test_hand_value(self):
        # P = (0.5, 0.5); outcome 0 has classes 3:1 -> min cost 4, outcome 1 has 2:2 -> 8
        d = make_dataset([[0]] * 4 + [[1]] * 4, [0, 0, 0, 1, 0, 0, 1, 1])
        cm = make_costs(d, [3], [[0, 16], [16, 0]])
        assert heuristic_q(State(), 0, Estimator(d), cm) == pytest.approx(9.0)

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6), st.booleans())
    def test_graph_stubs_match_reference(self, seed, laplace):
        inst = random_instance(seed)
        g = graph_for(inst.data, inst.cm, laplace)
        est = g.est
        for a in g.root.ands:
            assert a.heuristic == pytest.approx(heuristic_q(State(), a.attribute, est, g.cm), abs=1e-9)
            assert a.heuristic >= a.cost


class TestExpand:
    def two_by_two(self):
        X = [[0, 0], [0, 1], [1, 0], [1, 1], [0, 0], [1, 1]]
        return make_dataset(X, [0, 1, 1, 0, 0, 1])

    def test_binary_outcomes(self):
        d = self.two_by_two()
        g = graph_for(d, make_costs(d, [1, 1], [[0, 10], [10, 0]]))
        before = g.bytes_used
        created = g.expand(g.root.and_for(0))
        assert len(created) == 2
        assert {c.state for c in created} == {State.of({0: 0}), State.of({0: 1})}
        assert g.bytes_used > before

    def test_sharing(self):
        d = self.two_by_two()
        g = graph_for(d, make_costs(d, [1, 1], [[0, 10], [10, 0]]))
        g.expand(g.root.and_for(0))
        g.expand(g.get(State.of({0: 0})).and_for(1))
        shared = g.get(State.of({0: 0, 1: 1}))
        g.expand(g.root.and_for(1))
        created = g.expand(g.get(State.of({1: 1})).and_for(0))
        assert shared not in created
        assert g.get(State.of({1: 1})).and_for(0).children[0] is shared
        assert len(shared.parents) == 2

    def test_ml_unseen_outcome_omitted(self):
        d = make_dataset([[0, 0], [0, 0], [1, 1], [1, 0]], [0, 1, 0, 1])
        g = graph_for(d, make_costs(d, [1, 1], [[0, 10], [10, 0]]))
        g.expand(g.root.and_for(0))
        left = g.get(State.of({0: 0}))
        a = left.and_for(1)
        np.testing.assert_array_equal(a.probs, [1.0, 0.0])
        created = g.expand(a)
        assert len(created) == 1 and a.children[1] is None
        assert g.get(State.of({0: 0, 1: 1})) is None
        assert len(left.match) == 2 and len(a.children[0].match) == 2

    def test_laplace_unseen_outcome_diagnosis_only(self):
        d = make_dataset([[0, 0], [0, 0], [1, 1], [1, 0]], [0, 1, 0, 1])
        g = graph_for(d, make_costs(d, [1, 1], [[0, 10], [10, 0]]), laplace=True)
        g.expand(g.root.and_for(0))
        a = g.get(State.of({0: 0})).and_for(1)
        np.testing.assert_allclose(a.probs, [3 / 4, 1 / 4])
        g.expand(a)
        empty = a.children[1]
        assert empty.match_count == 0 and empty.ands == []
        assert empty.diag_cost == pytest.approx(5.0)  # uniform class distribution
        assert empty.v_opt == empty.v_real == empty.diag_cost

    def test_memory_accounting(self):
        d = self.two_by_two()
        g = graph_for(d, make_costs(d, [1, 1], [[0, 10], [10, 0]]))
        assert g.bytes_used == OR_NODE_BYTES + MATCH_BYTES * 6 + AND_NODE_BYTES * 2
        g.expand(g.root.and_for(0))
        child = OR_NODE_BYTES + AND_NODE_BYTES  # one test left below each outcome
        want = OR_NODE_BYTES + MATCH_BYTES * 6 + AND_NODE_BYTES * 2 + 2 * (child + EDGE_BYTES) + MATCH_BYTES * 6
        assert g.bytes_used == want

    def test_limit_refuses_without_mutation(self):
        d = self.two_by_two()
        cm = make_costs(d, [1, 1], [[0, 10], [10, 0]])
        g = graph_for(d, cm, limit=graph_for(d, cm).bytes_used + 10)
        a = g.root.and_for(0)
        with pytest.raises(MemoryLimitError):
            g.expand(a)
        assert not a.expanded and len(g) == 1


class TestBackup:
    def test_only_and_under_root(self):
        d = make_dataset([[0], [1], [1], [0]], [0, 1, 1, 1])
        g = graph_for(d, make_costs(d, [1], [[0, 10], [10, 0]]))
        g.expand(g.root.and_for(0))
        g.backup([g.root])
        a = g.root.and_for(0)
        assert g.root.v_opt == pytest.approx(min(g.root.diag_cost, a.q_opt))

    def test_all_pruned(self):
        d = make_dataset([[0, 1], [1, 0], [1, 1], [0, 0]], [0, 1, 1, 1])
        g = graph_for(d, make_costs(d, [1, 1], [[0, 10], [10, 0]]))
        g.prune(g.root, 0)
        g.prune(g.root, 1)
        assert g.root.v_opt == g.root.v_real == g.root.diag_cost
        assert g.root.opt_action == Diagnose(g.root.diag)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(0, 10**6), st.booleans(), st.integers(0, 2**32 - 1))
    def test_matches_recomputation_after_random_expansions(self, seed, laplace, order_seed):
        inst = random_instance(seed)
        g = graph_for(inst.data, inst.cm, laplace)
        rng = np.random.default_rng(order_seed)
        for _ in range(12):
            open_ands = [a for nd in g.table.values() for a in nd.ands if not a.expanded]
            if not open_ands:
                break
            a = open_ands[int(rng.integers(len(open_ands)))]
            if rng.random() < 0.2:
                g.prune(a.parent, a.attribute)
                continue
            g.expand(a)
            g.backup([a.parent])
            oracle = values_from_scratch(g)
            for key, nd in g.table.items():
                assert nd.v_opt == pytest.approx(oracle[key][0], abs=1e-9)
                assert nd.v_real == pytest.approx(oracle[key][1], abs=1e-9)
                assert nd.v_opt <= nd.v_real + 1e-9
                assert nd.v_real <= nd.diag_cost + 1e-12


def filtered_value(nd):
    """Best complete policy value using only expanded structure (independent recursion)."""
    best = nd.diag_cost
    for a in nd.ands:
        if a.expanded and a.attribute not in nd.pruned:
            q = a.cost + sum(p * filtered_value(c) for p, c in zip(a.probs, a.children) if c is not None)
            best = min(best, q)
    return best


class TestRealisticPolicy:
    def test_fresh_graph_single_leaf(self, tiny):
        g = graph_for(tiny, make_costs(tiny, [1, 1], [[0, 10], [10, 0]]))
        p = g.realistic_policy()
        assert p.is_trivial and p.root.diagnosis == tiny.classes[g.root.diag]

    @settings(max_examples=30, deadline=None)
    @given(st.integers(0, 10**6))
    def test_mid_search_and_converged(self, seed):
        inst = random_instance(seed)
        search = AOStar(inst.data, inst.cm, AoConfig())
        est = search.est
        prev_opt, prev_real = -np.inf, np.inf
        while not search.done:
            search.step()
            root = search.root
            assert root.v_opt >= prev_opt - 1e-9 and root.v_real <= prev_real + 1e-9
            prev_opt, prev_real = root.v_opt, root.v_real
            p = search.policy()
            assert expected_value(p, est, inst.cm) == pytest.approx(root.v_real, abs=1e-9)
            assert root.v_real == pytest.approx(filtered_value(root), abs=1e-9)
        assert search.trace.converged
        assert search.root.v_opt == pytest.approx(search.root.v_real, abs=1e-9)
        assert search.root.v_real == pytest.approx(dp_optimum(est, inst.cm), abs=1e-9)

    def test_complete_on_real_data(self, pima, pima_costs):
        search = AOStar(pima, pima_costs["low"], AoConfig(max_iterations=200))
        search.run()
        p = search.policy()
        p.validate(pima)  # every test node branches on every value, unseen ones included
        assert expected_value(p, search.est, pima_costs["low"]) == pytest.approx(search.root.v_real)
