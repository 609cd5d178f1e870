"""Contest-rule automata: builders, diagnostics, extension, serialization."""

import math

import pytest

from contestlab import (
    ContestAutomaton,
    DomainError,
    StructureError,
    automaton_from_dict,
    automaton_to_dict,
    build_best_of,
    build_consecutive_win,
    build_extension,
    build_mk1,
    build_single_battle,
    build_tug_of_war,
    check_exchangeable,
    check_symmetric,
    default_exchangeability_depth,
    isomorphic,
    min_length,
    minimize,
)
from contestlab.automaton import restrict


def walk(m, outcomes):
    """Follow a deterministic outcome sequence from the start state."""
    s = m.start
    for w in outcomes:
        s = m.step(s, w)
    return s


class TestBestOf:
    def test_terminal_history_quotient(self):
        m = build_best_of(1)
        # the four quotient terminal histories of a first-to-two race
        for hist, winner in [("AA", "A"), ("BAA", "A"), ("ABB", "B"), ("BB", "B")]:
            s = walk(m, hist)
            assert m.winner(s) == winner
            # no proper prefix terminates
            for cut in range(1, len(hist)):
                assert not m.is_terminal(walk(m, hist[:cut]))

    def test_state_counts(self):
        m = build_best_of(1)
        assert m.num_states == 8  # 3x3 score grid minus the impossible corner
        assert len(m.nonterminal_states) == 4
        assert len(m.terminal_states) == 4

    def test_single_battle(self):
        m = build_best_of(0)
        assert len(m.nonterminal_states) == 1
        assert min_length(m) == 1

    @pytest.mark.parametrize("k", [0, 1, 2, 5])
    def test_min_length(self, k):
        assert min_length(build_best_of(k)) == k + 1

    def test_acyclic(self):
        m = build_best_of(3)
        # every transition strictly increases the total score
        for (s, _w), dist in m.transitions.items():
            for t, _p in dist:
                assert m.labels[t] != m.labels[s]


class TestTugOfWar:
    def test_terminal_histories(self):
        m = build_tug_of_war(2)
        for hist, winner in [("AA", "A"), ("BB", "B"), ("ABBB", "B"), ("BAAA", "A")]:
            assert m.winner(walk(m, hist)) == winner

    def test_single_battle_margin_one(self):
        m = build_tug_of_war(1)
        assert len(m.nonterminal_states) == 1

    @pytest.mark.parametrize("n", [1, 2, 3, 7])
    def test_min_length(self, n):
        assert min_length(build_tug_of_war(n)) == n

    def test_reset_layer(self):
        m = build_tug_of_war(3, reset_p=0.5)
        center = m.start
        for s in m.nonterminal_states:
            for w in ("A", "B"):
                dist = m.successors(s, w)
                assert abs(sum(p for _t, p in dist) - 1.0) < 1e-12
                targets = dict(dist)
                landing = [t for t in targets if not m.is_terminal(t) and t != center]
                if landing:  # a nonterminal move away from center carries the reset leg
                    assert targets.get(center) == pytest.approx(0.5)

    def test_head_start(self):
        m = build_tug_of_war(3, head_start=2)
        assert m.labels[m.start] == "lead +2"
        with pytest.raises(DomainError):
            build_tug_of_war(3, head_start=3)
        with pytest.raises(DomainError):
            build_tug_of_war(2, reset_p=1.0)


class TestConsecutiveWin:
    def test_order_matters(self):
        m = build_consecutive_win(3)
        assert walk(m, "AAB") != walk(m, "ABA")

    def test_state_count(self):
        m = build_consecutive_win(2)
        assert m.num_states == 5

    def test_single_battle(self):
        assert len(build_consecutive_win(1).nonterminal_states) == 1

    @pytest.mark.parametrize("k", [1, 2, 3, 6])
    def test_min_length(self, k):
        assert min_length(build_consecutive_win(k)) == k

    def test_loss_resets_streak(self):
        m = build_consecutive_win(4)
        assert m.labels[walk(m, "AAB")] == "streak -1"
        assert m.labels[walk(m, "AABA")] == "streak +1"


class TestMk1:
    def test_incumbent_ends_immediately(self):
        m = build_mk1(3)
        assert min_length(m) == 1
        assert m.winner(m.step(m.start, "A")) == "A"

    def test_chain_structure(self):
        m = build_mk1(2)
        # the challenger walks a chain of k states before victory
        assert len(m.nonterminal_states) == 2
        assert m.winner(walk(m, "BB")) == "B"
        assert m.winner(walk(m, "BA")) == "A"

    def test_k1_single_battle(self):
        m = build_mk1(1)
        assert len(m.nonterminal_states) == 1
        assert min_length(m) == 1

    def test_not_symmetric(self):
        assert not check_symmetric(build_mk1(2))


class TestExchangeability:
    def test_families(self):
        assert check_exchangeable(build_best_of(2), 6) == (True, None)
        assert check_exchangeable(build_tug_of_war(3), 6) == (True, None)

    def test_consecutive_win_witness(self):
        ok, witness = check_exchangeable(build_consecutive_win(3), 3)
        assert not ok
        assert witness == (("A", "A", "B"), ("A", "B", "A"))

    def test_reset_layer_breaks_order_invariance(self):
        ok, witness = check_exchangeable(build_tug_of_war(3, reset_p=0.5), 4)
        assert not ok
        assert witness[0] == witness[1]  # same history, split by chance

    def test_state_is_score_function(self):
        # exchangeable families: state depends only on the win counts
        m = build_best_of(3)
        assert walk(m, "AABAB") == walk(m, "BABAA")

    def test_depth_default(self):
        assert 2 <= default_exchangeability_depth(build_best_of(1)) <= 12
        assert default_exchangeability_depth(build_tug_of_war(10)) == 12

    def test_depth_validation(self):
        with pytest.raises(DomainError):
            check_exchangeable(build_best_of(1), 1)


class TestSymmetry:
    @pytest.mark.parametrize(
        "m",
        [
            build_best_of(2),
            build_tug_of_war(4),
            build_tug_of_war(3, reset_p=0.5),
            build_consecutive_win(3),
        ],
    )
    def test_symmetric_families(self, m):
        assert check_symmetric(m)

    def test_constructed_without_candidate(self):
        m = build_best_of(2)
        bare = ContestAutomaton(
            start=m.start,
            transitions=m.transitions,
            terminal=m.terminal,
            labels=m.labels,
        )
        assert check_symmetric(bare)


class TestExtension:
    def test_two_extension_of_single_battle(self):
        ext = build_extension(build_single_battle(), 2)
        assert isomorphic(ext, build_best_of(1))

    def test_best_of_chain(self):
        ext = build_extension(build_single_battle(), 2)
        ext = build_extension(ext, 3)
        assert isomorphic(ext, build_best_of(2))
        ext = build_extension(ext, 4)
        assert isomorphic(ext, build_best_of(3))

    @pytest.mark.parametrize("n", [2, 3, 4])
    def test_tug_of_war_self_extension(self, n):
        assert isomorphic(build_extension(build_tug_of_war(n), n), build_tug_of_war(n))

    def test_subgame_after_split_is_base(self):
        base = build_tug_of_war(3)
        ext = build_extension(base, 3)
        inner = walk(ext, "AB")
        assert isomorphic(restrict(ext, inner), base, up_to_bisimulation=False)

    def test_requires_exchangeable_base(self):
        with pytest.raises(StructureError):
            build_extension(build_consecutive_win(3), 2)

    def test_requires_symmetric_base(self):
        with pytest.raises(StructureError):
            build_extension(build_mk1(2), 2)

    def test_min_length_bounded_by_n(self):
        # a pure streak of n ends it, but order-invariance can end the
        # contest sooner: AAAB ~ ABAA already decides the margin-2 subgame,
        # so the 5-extension of the margin-2 rule has a length-4 history
        ext = build_extension(build_tug_of_war(2), 5)
        assert min_length(ext) <= 5
        assert min_length(ext) == 4


class TestMinimizeIsomorphic:
    def test_minimize_merges_equivalent_terminals(self):
        m = build_best_of(1)
        q = minimize(m)
        assert len(q.terminal_states) == 2
        assert len(q.nonterminal_states) == len(m.nonterminal_states)

    def test_isomorphic_negative(self):
        assert not isomorphic(build_best_of(1), build_best_of(2))
        # after (A, B) a margin-2 laggard needs two wins, a streak-2 laggard
        # loses the next battle outright: the rules genuinely differ
        assert not isomorphic(build_tug_of_war(2), build_consecutive_win(2))

    def test_chance_automata_rejected(self):
        with pytest.raises(StructureError):
            isomorphic(build_tug_of_war(2, reset_p=0.5), build_tug_of_war(2, reset_p=0.5))


class TestValidationAndJson:
    def test_round_trip(self):
        m = build_tug_of_war(3, reset_p=0.25)
        doc = automaton_to_dict(m)
        back = automaton_from_dict(doc)
        assert back.start == m.start
        assert back.terminal == m.terminal
        assert back.transitions == m.transitions

    def test_schema_shape(self):
        doc = automaton_to_dict(build_best_of(1))
        assert set(doc) == {"states", "start", "edges"}
        assert all(set(s) == {"id", "label", "terminal"} for s in doc["states"])
        assert all(set(e) == {"from", "winner", "to"} for e in doc["edges"])

    def test_rejects_unreachable(self):
        with pytest.raises(StructureError):
            ContestAutomaton(
                start=0,
                transitions={(0, "A"): ((1, 1.0),), (0, "B"): ((2, 1.0),)},
                terminal={1: "A", 2: "B", 3: "A"},
            )

    def test_rejects_terminal_with_outgoing(self):
        with pytest.raises(StructureError):
            ContestAutomaton(
                start=0,
                transitions={
                    (0, "A"): ((1, 1.0),),
                    (0, "B"): ((2, 1.0),),
                    (1, "A"): ((2, 1.0),),
                },
                terminal={1: "A", 2: "B"},
            )

    def test_rejects_bad_probabilities(self):
        with pytest.raises(StructureError):
            ContestAutomaton(
                start=0,
                transitions={(0, "A"): ((1, 0.5), (0, 0.2)), (0, "B"): ((2, 1.0),)},
                terminal={1: "A", 2: "B"},
            )

    def test_rejects_all_infinite_play(self):
        with pytest.raises(StructureError):
            ContestAutomaton(
                start=0,
                transitions={(0, "A"): ((0, 1.0),), (0, "B"): ((0, 1.0),)},
                terminal={},
            )

    def test_rejects_malformed_document(self):
        with pytest.raises(StructureError):
            automaton_from_dict({"states": [], "edges": []})


class TestMinLengthEdge:
    def test_infinite_when_unreachable(self):
        # bypass validation to probe the reporting path
        m = ContestAutomaton(
            start=0,
            transitions={(0, "A"): ((0, 1.0),), (0, "B"): ((0, 1.0),)},
            terminal={},
            validate=False,
        )
        assert math.isinf(min_length(m))
