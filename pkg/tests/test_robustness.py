import math
import random
import time

import numpy as np
import pytest

from avtestbed import presets, supervisor
from avtestbed import robustness as rb
from avtestbed.robustness import (
    Always,
    And,
    Atom,
    Eventually,
    FormulaSyntaxError,
    Implies,
    Interval,
    LinearPredicate,
    Not,
    Or,
    Requirement,
    Trace,
    Until,
    convert_trajectory,
    format_formula,
    parse_formula,
    predicate_robustness,
    requirement_from_json,
    robustness,
    robustness_signal,
)
from avtestbed.scenario import column_names

from oracles import (
    naive_boolean,
    naive_robustness,
    random_formula,
    random_predicates,
    random_trace,
)

# demo log layout: state columns after dropping time
EGO_X, EGO_Y, EGO_TH, EGO_V, AGENT_X, AGENT_Y, AGENT_TH, AGENT_V, PED_X, PED_Y = range(10)

N_STATE = 10


def demo_predicates():
    def pred(name, entries, b):
        a = np.zeros(N_STATE)
        for idx, coeff in entries:
            a[idx] = coeff
        return LinearPredicate(name, a, b)

    return [
        pred("y_check1", [(AGENT_Y, 1.0), (EGO_Y, -1.0)], 1.5),
        pred("y_check2", [(AGENT_Y, -1.0), (EGO_Y, 1.0)], 1.5),
        pred("x_check1", [(AGENT_X, 1.0), (EGO_X, -1.0)], 8.0),
        pred("x_check2", [(AGENT_X, -1.0), (EGO_X, 1.0)], 0.0),
    ]


COLLISION_PHI = "[](!(y_check1 /\\ y_check2 /\\ x_check1 /\\ x_check2))"


def single_sample_trace(ego_x, ego_y, agent_x, agent_y):
    state = np.zeros((1, N_STATE))
    state[0, EGO_X] = ego_x
    state[0, EGO_Y] = ego_y
    state[0, AGENT_X] = agent_x
    state[0, AGENT_Y] = agent_y
    return Trace(times=np.array([0.0]), states=state)


class TestConvertTrajectory:
    def test_demo_trajectory(self):
        env, config = presets.demo_scenario()
        trajectory = supervisor.run_embedded(env, config).trajectory
        trace = convert_trajectory(trajectory)
        assert trace.times[0] == 0.0
        assert trace.times[1500] == 15.0
        assert trace.states.shape == (1501, 10)

    def test_single_row(self):
        trajectory = supervisor.run_embedded(*presets.demo_scenario(sim_duration_ms=0)).trajectory
        trace = convert_trajectory(trajectory)
        assert len(trace.times) == 1

    def test_non_time_first_column_rejected(self):
        from avtestbed.scenario import ItemType, LogItemDescription, StateId, Trajectory

        traj = Trajectory(
            column_labels=[LogItemDescription(ItemType.VEHICLE, 0, StateId.POSITION_X)],
            rows=np.zeros((1, 1)),
        )
        with pytest.raises(ValueError, match="TIME"):
            convert_trajectory(traj)


class TestParser:
    def test_collision_formula_shape(self):
        phi = parse_formula(COLLISION_PHI)
        assert isinstance(phi, Always)
        assert phi.interval is None
        inner = phi.operand
        assert isinstance(inner, Not)
        conj = inner.operand
        # left-associative conjunction: ((a /\ b) /\ c) /\ d
        assert isinstance(conj, And)
        assert conj.right == Atom("x_check2")
        assert isinstance(conj.left, And)
        assert conj.left.right == Atom("x_check1")
        assert isinstance(conj.left.left, And)
        assert conj.left.left == And(Atom("y_check1"), Atom("y_check2"))

    def test_bounded_always(self):
        phi = parse_formula("[]_[0,5] p")
        assert phi == Always(Atom("p"), Interval(0.0, 5.0))

    def test_bounded_until_and_eventually(self):
        assert parse_formula("p U_[1,2] q") == Until(Atom("p"), Atom("q"), Interval(1.0, 2.0))
        assert parse_formula("<>_[0,inf] p") == Eventually(Atom("p"), Interval(0.0, math.inf))

    def test_precedence(self):
        phi = parse_formula("a /\\ b \\/ c -> d")
        assert phi == Implies(Or(And(Atom("a"), Atom("b")), Atom("c")), Atom("d"))

    def test_until_binds_tighter_than_and(self):
        phi = parse_formula("a U b /\\ c")
        assert phi == And(Until(Atom("a"), Atom("b")), Atom("c"))

    def test_trailing_operator_is_error(self):
        with pytest.raises(FormulaSyntaxError):
            parse_formula("p /\\")

    def test_error_carries_position(self):
        with pytest.raises(FormulaSyntaxError, match="position"):
            parse_formula("p @ q")

    def test_unbalanced_paren(self):
        with pytest.raises(FormulaSyntaxError):
            parse_formula("(p /\\ q")

    def test_format_parse_fixed_point(self):
        rng = random.Random(17)
        for _ in range(200):
            formula = random_formula(rng, ["a", "b", "c"], depth=4)
            text = format_formula(formula)
            reparsed = parse_formula(text)
            assert reparsed == formula
            assert format_formula(reparsed) == text


class TestPredicateRobustness:
    def test_y_check1_margin(self):
        preds = {p.name: p for p in demo_predicates()}
        x = np.zeros(N_STATE)
        x[EGO_Y], x[AGENT_Y] = 0.0, 1.0
        assert predicate_robustness(preds["y_check1"], x) == pytest.approx(0.5, abs=1e-15)

    def test_x_check2_margin(self):
        preds = {p.name: p for p in demo_predicates()}
        x = np.zeros(N_STATE)
        x[EGO_X], x[AGENT_X] = 10.0, 12.0
        assert predicate_robustness(preds["x_check2"], x) == pytest.approx(2.0, abs=1e-15)

    def test_degenerate_zero_predicate(self):
        pred = LinearPredicate("zero", np.zeros(3), 0.0)
        for _ in range(5):
            assert predicate_robustness(pred, np.random.default_rng(1).uniform(-9, 9, 3)) == 0.0

    def test_non_finite_coefficients_rejected(self):
        with pytest.raises(ValueError, match="finite"):
            LinearPredicate("bad", np.array([math.inf]), 0.0)


class TestRobustness:
    def test_hand_derived_single_sample(self):
        trace = single_sample_trace(ego_x=10.0, ego_y=0.0, agent_x=12.0, agent_y=1.0)
        value = robustness(parse_formula(COLLISION_PHI), demo_predicates(), trace)
        # margins: y_check1 0.5, y_check2 2.5, x_check1 6.0, x_check2 2.0
        assert value == pytest.approx(-0.5, abs=1e-12)

    def test_constant_positive_signal(self):
        pred = LinearPredicate("p", np.array([0.0]), 1.0)
        trace = Trace(times=np.arange(5) * 0.1, states=np.zeros((5, 1)))
        assert robustness(parse_formula("[](p)"), [pred], trace) == 1.0

    def test_unresolved_atom(self):
        trace = single_sample_trace(0, 0, 0, 0)
        with pytest.raises(ValueError, match="unresolved atom"):
            robustness(parse_formula("ghost"), demo_predicates(), trace)

    def test_dimension_mismatch(self):
        pred = LinearPredicate("p", np.array([1.0, 2.0]), 0.0)
        trace = Trace(times=np.array([0.0]), states=np.zeros((1, 3)))
        with pytest.raises(ValueError, match="state columns"):
            robustness(Atom("p"), [pred], trace)

    def test_duplicate_predicate_names_rejected(self):
        preds = [
            LinearPredicate("p", np.array([1.0]), 0.0),
            LinearPredicate("p", np.array([2.0]), 0.0),
        ]
        trace = Trace(times=np.array([0.0]), states=np.zeros((1, 1)))
        with pytest.raises(ValueError, match="duplicate"):
            robustness(Atom("p"), preds, trace)

    def test_dp_equals_naive_oracle_on_random_instances(self):
        rng = random.Random(4242)
        for trial in range(500):
            dims = rng.randint(1, 4)
            trace = random_trace(rng, max_samples=20, dims=dims)
            preds = random_predicates(rng, rng.randint(1, 4), dims)
            formula = random_formula(rng, [p.name for p in preds], depth=rng.randint(0, 4))
            got = robustness(formula, preds, trace)
            want = naive_robustness(formula, preds, trace)
            assert got == want or abs(got - want) <= 1e-12, (
                f"trial {trial}: dp {got} vs naive {want} for {format_formula(formula)}"
            )

    def test_negation_duality_exact(self):
        rng = random.Random(77)
        for _ in range(100):
            dims = rng.randint(1, 3)
            trace = random_trace(rng, max_samples=12, dims=dims)
            preds = random_predicates(rng, 3, dims)
            formula = random_formula(rng, [p.name for p in preds], depth=3)
            assert robustness(Not(formula), preds, trace) == -robustness(formula, preds, trace)

    def test_soundness_against_boolean_semantics(self):
        rng = random.Random(4099)
        checked = 0
        for _ in range(300):
            dims = rng.randint(1, 3)
            trace = random_trace(rng, max_samples=10, dims=dims)
            preds = random_predicates(rng, 3, dims)
            formula = random_formula(rng, [p.name for p in preds], depth=3)
            rho = robustness(formula, preds, trace)
            if rho == 0.0 or math.isinf(rho):
                continue
            sat = naive_boolean(formula, preds, trace)
            assert (rho > 0) == sat
            checked += 1
        assert checked > 200

    def test_monotone_in_b_for_positive_atoms(self):
        rng = random.Random(31)
        for _ in range(50):
            dims = 3
            trace = random_trace(rng, max_samples=10, dims=dims)
            preds = random_predicates(rng, 3, dims)
            # negation-free formula: atoms appear positively
            formula = parse_formula("([](p0 /\\ p1)) \\/ (p2 U p0)")
            base = robustness(formula, preds, trace)
            eps = 0.25
            bumped = [LinearPredicate(p.name, p.a.copy(), p.b + eps) for p in preds]
            assert robustness(formula, bumped, trace) >= base

    def test_empty_bounded_window_conventions(self):
        pred = LinearPredicate("p", np.array([-1.0]), 0.0)
        trace = Trace(times=np.array([0.0]), states=np.array([[5.0]]))
        # only sample is at t=0; window [1, 2] is empty
        assert robustness(Always(Atom("p"), Interval(1.0, 2.0)), [pred], trace) == math.inf
        assert robustness(Eventually(Atom("p"), Interval(1.0, 2.0)), [pred], trace) == -math.inf

    def test_bounded_always_window_selection(self):
        pred = LinearPredicate("p", np.array([-1.0]), 0.0)  # margin = x
        times = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
        states = np.array([[5.0], [4.0], [1.0], [2.0], [0.5]])
        trace = Trace(times=times, states=states)
        # window [0.1, 0.3] from t=0 covers samples at 0.1, 0.2, 0.3
        got = robustness(Always(Atom("p"), Interval(0.1, 0.3)), [pred], trace)
        assert got == 1.0


class TestRobustnessSignal:
    def test_element_zero_matches_scalar(self):
        rng = random.Random(5150)
        for _ in range(50):
            dims = 2
            trace = random_trace(rng, max_samples=15, dims=dims)
            preds = random_predicates(rng, 2, dims)
            formula = random_formula(rng, [p.name for p in preds], depth=3)
            signal = robustness_signal(formula, preds, trace)
            assert len(signal) == len(trace.times)
            assert signal[0] == robustness(formula, preds, trace)

    def test_matches_oracle_at_offsets(self):
        rng = random.Random(60)
        trace = random_trace(rng, max_samples=15, dims=3)
        while len(trace.times) < 5:
            trace = random_trace(rng, max_samples=15, dims=3)
        preds = random_predicates(rng, 3, 3)
        formula = random_formula(rng, [p.name for p in preds], depth=3)
        signal = robustness_signal(formula, preds, trace)
        for offset in (1, len(trace.times) // 2, len(trace.times) - 1):
            want = naive_robustness(formula, preds, trace, i=offset)
            assert signal[offset] == want or abs(signal[offset] - want) <= 1e-12

    def test_single_sample_signal(self):
        pred = LinearPredicate("p", np.array([0.0]), 2.0)
        trace = Trace(times=np.array([0.0]), states=np.zeros((1, 1)))
        signal = robustness_signal(Atom("p"), [pred], trace)
        assert list(signal) == [2.0]

    def test_constant_satisfying_trace(self):
        pred = LinearPredicate("p", np.array([0.0]), 3.0)
        trace = Trace(times=np.arange(10) * 0.1, states=np.zeros((10, 1)))
        signal = robustness_signal(parse_formula("[](p)"), [pred], trace)
        assert np.all(signal == 3.0)


class TestPerformance:
    def test_interval_free_dp_is_fast_at_a_million_samples(self):
        n = 1_000_000
        times = np.arange(n) * 0.01
        states = np.random.default_rng(0).uniform(-1, 1, size=(n, 2))
        preds = [
            LinearPredicate("p", np.array([1.0, 0.0]), 0.5),
            LinearPredicate("q", np.array([0.0, 1.0]), 0.5),
        ]
        formula = parse_formula("(([](p /\\ q)) \\/ (<> (p -> q))) /\\ (p U q)")
        trace = Trace(times=times, states=states)
        start = time.monotonic()
        robustness(formula, preds, trace)
        assert time.monotonic() - start < 1.0


class TestRequirementFiles:
    def test_demo_requirement_resolves_against_log_layout(self):
        req = requirement_from_json(presets.collision_requirement_json())
        env = presets.demo_environment()
        names = column_names(env.data_log_descriptions)
        preds = req.resolve(names[1:])
        assert [p.name for p in preds] == ["y_check1", "y_check2", "x_check1", "x_check2"]
        y1 = preds[0]
        assert y1.a[AGENT_Y] == 1.0 and y1.a[EGO_Y] == -1.0 and y1.b == 1.5
        assert np.count_nonzero(y1.a) == 2

    def test_unknown_column_rejected(self):
        req = Requirement("p", [{"name": "p", "a": {"bogus_col": 1.0}, "b": 0.0}])
        with pytest.raises(ValueError, match="bogus_col"):
            req.resolve(["vehicle0_position_x"])

    def test_round_trip(self, tmp_path):
        req = requirement_from_json(presets.collision_requirement_json())
        path = tmp_path / "req.json"
        rb.save_requirement(req, str(path))
        back = rb.load_requirement(str(path))
        assert back == req

    def test_bad_formula_rejected_at_load(self):
        with pytest.raises(FormulaSyntaxError):
            requirement_from_json({"formula": "p /\\", "predicates": []})
