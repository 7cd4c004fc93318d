import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from causaltest.dag import (CausalDag, CycleError, DagError, DotSyntaxError, DuplicateEdgeError,
                            NoAdjustmentSetError, UnknownNodeError, backdoor_paths, d_separated,
                            enumerate_adjustment_sets, minimal_adjustment_set, parse_dot,
                            satisfies_backdoor, serialize_dot, validate_roles)

from oracles import naive_backdoor_ok, naive_d_separated, queries, random_dag

CHAIN = CausalDag.from_edges([("A", "B"), ("B", "C")])
COLLIDER = CausalDag.from_edges([("A", "B"), ("C", "B")])
PLT_ROLES = {"W": "input", "H": "input", "I": "input",
             "L_t": "output", "P_t": "output", "L_u": "output", "P_u": "output"}


class TestParse:
    def test_confounded_triangle(self):
        g = parse_dot("digraph G { Z -> X; Z -> Y; X -> Y; }")
        assert g.nodes == {"X", "Y", "Z"}
        assert g.edges == {("Z", "X"), ("Z", "Y"), ("X", "Y")}

    def test_single_node(self):
        g = parse_dot("digraph G { A; }")
        assert g.nodes == {"A"} and not g.edges

    def test_cycle(self):
        with pytest.raises(CycleError) as exc:
            parse_dot("digraph G { A -> B; B -> A; }")
        assert exc.value.cycle[0] == exc.value.cycle[-1]

    def test_duplicate_edge(self):
        with pytest.raises(DuplicateEdgeError):
            parse_dot("digraph { A -> B; A -> B; }")

    def test_syntax_error_position(self):
        with pytest.raises(DotSyntaxError) as exc:
            parse_dot("digraph G {\n  A -> ;\n}")
        assert exc.value.line == 2
        assert exc.value.column == 8

    def test_comments_chains_and_attributes(self, caplog):
        g = parse_dot("// header\ndigraph {\n  a -> b -> c [color=red]; // tail\n  d;\n}")
        assert g.edges == {("a", "b"), ("b", "c")}
        assert "d" in g.nodes
        assert "ignoring attributes" in caplog.text

    def test_anonymous_and_missing_brace(self):
        parse_dot("digraph { x; }")
        assert parse_dot("digraph { a -> b\n b -> c }").edges == {("a", "b"), ("b", "c")}
        with pytest.raises(DotSyntaxError):
            parse_dot("digraph G { x;")
        with pytest.raises(DotSyntaxError):
            parse_dot("graph G { x; }")

    def test_self_loop_rejected(self):
        with pytest.raises(DagError):
            parse_dot("digraph { a -> a; }")

    def test_roundtrip_canonical(self, infection_dag, plt_dag):
        for g in (infection_dag, plt_dag, parse_dot("digraph { q; a -> b; }")):
            text = serialize_dot(g)
            assert parse_dot(text) == g
            assert serialize_dot(parse_dot(text)) == text


class TestRoles:
    def test_plt_dag_clean(self, plt_dag):
        assert validate_roles(plt_dag, PLT_ROLES) == []

    def test_output_to_input(self, plt_dag):
        # adding P_u -> I to the full PLT graph would close a cycle through L_t,
        # so the reversed edge is checked on the graph without I -> L_t
        g = CausalDag(plt_dag.nodes, [e for e in plt_dag.edges if e != ("I", "L_t")] + [("P_u", "I")])
        v = validate_roles(g, PLT_ROLES)
        assert [(x.assumption, x.severity, x.edge) for x in v] == [(1, "error", ("P_u", "I"))]

    def test_input_to_input_is_warning(self, plt_dag):
        v = validate_roles(plt_dag.with_edge("W", "H"), PLT_ROLES)
        assert [(x.assumption, x.severity) for x in v] == [(2, "warning")]

    def test_unknown_node(self, plt_dag):
        with pytest.raises(UnknownNodeError):
            validate_roles(plt_dag, {**PLT_ROLES, "Q": "input"})


class TestDSeparation:
    def test_adjacent_never_separated(self, fig3_dag):
        assert not d_separated(fig3_dag, {"X"}, {"Y"}, {"Z"})

    def test_chain(self):
        assert d_separated(CHAIN, {"A"}, {"C"}, {"B"})
        assert not d_separated(CHAIN, {"A"}, {"C"}, set())

    def test_collider(self):
        assert d_separated(COLLIDER, {"A"}, {"C"}, set())
        assert not d_separated(COLLIDER, {"A"}, {"C"}, {"B"})

    def test_collider_descendant_opens(self):
        g = CausalDag.from_edges([("A", "B"), ("C", "B"), ("B", "D")])
        assert not d_separated(g, "A", "C", {"D"})

    def test_errors(self, fig3_dag):
        with pytest.raises(UnknownNodeError):
            d_separated(fig3_dag, {"X"}, {"Q"}, set())
        with pytest.raises(DagError):
            d_separated(fig3_dag, {"X"}, {"Y"}, {"X"})
        with pytest.raises(DagError):
            d_separated(fig3_dag, set(), {"Y"}, set())

    def test_matches_oracle_on_fixtures(self, infection_dag, plt_dag):
        for g in (infection_dag, plt_dag):
            nodes = sorted(g.nodes)
            for x, y, zs in queries(nodes):
                assert d_separated(g, {x}, {y}, zs) == naive_d_separated(nodes, g.edges, [x], [y], zs)

    def test_set_valued_queries_match_oracle(self):
        rng = np.random.default_rng(7)
        for _ in range(100):
            nodes, edges = random_dag(rng, 6, 0.4)
            g = CausalDag(nodes, edges)
            perm = list(rng.permutation(nodes))
            xs, ys, zs = set(perm[:2]), set(perm[2:4]), set(perm[4:5])
            assert d_separated(g, xs, ys, zs) == naive_d_separated(nodes, edges, xs, ys, zs)


@st.composite
def dags(draw, max_nodes=6):
    n = draw(st.integers(2, max_nodes))
    nodes = [f"v{i}" for i in range(n)]
    order = draw(st.permutations(nodes))
    edges = [(order[i], order[j]) for i in range(n) for j in range(i + 1, n)
             if draw(st.booleans())]
    return CausalDag(nodes, edges)


@settings(max_examples=150, deadline=None)
@given(dags(), st.data())
def test_d_separation_symmetric(g, data):
    nodes = sorted(g.nodes)
    x, y = data.draw(st.lists(st.sampled_from(nodes), min_size=2, max_size=2, unique=True))
    rest = [n for n in nodes if n not in (x, y)]
    zs = set(data.draw(st.lists(st.sampled_from(rest), unique=True))) if rest else set()
    assert d_separated(g, {x}, {y}, zs) == d_separated(g, {y}, {x}, zs)


class TestBackdoor:
    def test_fork_path(self, fig3_dag):
        assert backdoor_paths(fig3_dag, "X", "Y") == [["X", "Z", "Y"]]

    def test_chain_has_none(self):
        assert backdoor_paths(CHAIN, "A", "C") == []

    def test_infection_paths(self, infection_dag):
        assert backdoor_paths(infection_dag, "beta", "I") == [
            ["beta", "L", "A", "I"], ["beta", "L", "C", "I"]]

    def test_satisfies(self, fig3_dag, infection_dag):
        assert satisfies_backdoor(fig3_dag, "X", "Y", {"Z"})
        assert not satisfies_backdoor(fig3_dag, "X", "Y", set())
        assert satisfies_backdoor(infection_dag, "beta", "I", {"A", "C"})
        assert not satisfies_backdoor(infection_dag, "beta", "I", {"A"})

    def test_descendant_excluded(self):
        assert not satisfies_backdoor(CHAIN, "A", "C", {"B"})

    def test_unknown_node(self, fig3_dag):
        with pytest.raises(UnknownNodeError):
            backdoor_paths(fig3_dag, "X", "nope")

    def test_enumerate_infection(self, infection_dag):
        sets = enumerate_adjustment_sets(infection_dag, "beta", "I")
        assert set(sets) == {frozenset(s) for s in ({"A", "C"}, {"L"}, {"A", "C", "L"},
                                                    {"L", "A"}, {"L", "C"})}
        assert [sorted(s) for s in sets] == [["L"], ["A", "C"], ["A", "L"], ["C", "L"],
                                             ["A", "C", "L"]]

    def test_enumerate_plt_includes_empty(self, plt_dag):
        assert frozenset() in enumerate_adjustment_sets(plt_dag, "I", "P_u")

    def test_enumerate_chain(self):
        assert enumerate_adjustment_sets(CHAIN, "A", "C") == [frozenset()]

    def test_enumeration_cap(self):
        g = CausalDag([f"n{i}" for i in range(21)], [])
        with pytest.raises(DagError):
            enumerate_adjustment_sets(g, "n0", "n1")
        assert enumerate_adjustment_sets(g, "n0", "n1", max_nodes=25)[0] == frozenset()

    def test_minimal(self, infection_dag, fig3_dag, plt_dag):
        # smallest-then-lexicographic over the five sets: {L} has size 1
        assert minimal_adjustment_set(infection_dag, "beta", "I") == {"L"}
        assert minimal_adjustment_set(fig3_dag, "X", "Y") == {"Z"}
        assert minimal_adjustment_set(plt_dag, "I", "P_u") == set()

    def test_unidentifiable(self):
        g = CausalDag.from_edges([("Y", "X")])
        with pytest.raises(NoAdjustmentSetError):
            minimal_adjustment_set(g, "X", "Y")


def test_enumeration_is_exact_against_oracle():
    rng = np.random.default_rng(3)
    for _ in range(60):
        nodes, edges = random_dag(rng, 6, 0.45)
        g = CausalDag(nodes, edges)
        x, y = rng.choice(nodes, 2, replace=False)
        returned = set(enumerate_adjustment_sets(g, x, y))
        desc = g.descendants(x)
        universe = [n for n in nodes if n not in (x, y) and n not in desc]
        for k in range(len(universe) + 1):
            for combo in itertools.combinations(universe, k):
                ok = naive_backdoor_ok(nodes, edges, x, y, set(combo))
                assert (frozenset(combo) in returned) == ok
                assert satisfies_backdoor(g, x, y, set(combo)) == ok


def test_adding_edge_keeps_unrelated_backdoor_paths(infection_dag, plt_dag):
    for g, extra in ((infection_dag, ("A", "C")), (plt_dag, ("W", "H")), (plt_dag, ("L_t", "P_u"))):
        g2 = g.with_edge(*extra)
        for x, y in itertools.permutations(sorted(g.nodes), 2):
            if set(extra) & {x, y}:
                continue
            before = backdoor_paths(g, x, y)
            after = backdoor_paths(g2, x, y)
            assert all(p in after for p in before)
