import numpy as np
import pytest

from relucert.simplex import (EQ, GE, LE, LpModel, LpStatus, solve_lp,
                              write_lp_format)


def assert_optimal(sol, value, tol=1e-7):
    assert sol.status == LpStatus.OPTIMAL
    assert sol.objective_value == pytest.approx(value, abs=tol)


class TestBasics:
    def test_textbook(self):
        m = LpModel()
        m.add_variable(0, 1, obj=1.0)
        m.add_variable(0, 1, obj=1.0)
        m.add_constraint([0, 1], [1.0, 1.0], LE, 1.0)
        assert_optimal(solve_lp(m), 1.0)

    def test_box_only_optimum_at_vertex(self):
        m = LpModel()
        m.add_variable(-2, 5, obj=3.0)
        m.add_variable(-1, 4, obj=-2.0)
        sol = solve_lp(m)
        assert_optimal(sol, 17.0)
        assert np.array_equal(sol.x, [5.0, -1.0])

    def test_objective_constant(self):
        m = LpModel()
        m.add_variable(0, 2, obj=1.0)
        m.obj_constant = 10.0
        assert_optimal(solve_lp(m), 12.0)

    def test_infeasible(self):
        m = LpModel()
        m.add_variable(0, 1, obj=1.0)
        m.add_constraint([0], [1.0], GE, 2.0)
        assert solve_lp(m).status == LpStatus.INFEASIBLE

    def test_unbounded(self):
        m = LpModel()
        m.add_variable(0, np.inf, obj=1.0)
        assert solve_lp(m).status == LpStatus.UNBOUNDED

    def test_equalities(self):
        m = LpModel()
        m.add_variable(0, 10, obj=2.0)
        m.add_variable(0, 10, obj=1.0)
        m.add_constraint([0, 1], [1.0, 1.0], EQ, 4.0)
        m.add_constraint([0], [1.0], LE, 3.0)
        sol = solve_lp(m)
        assert_optimal(sol, 7.0)
        assert np.allclose(sol.x, [3.0, 1.0])

    def test_free_variable(self):
        m = LpModel()
        m.add_variable(-np.inf, np.inf, obj=-1.0)
        m.add_constraint([0], [1.0], GE, -3.0)
        sol = solve_lp(m)
        assert_optimal(sol, 3.0)

    def test_crossed_bounds_rejected(self):
        m = LpModel()
        with pytest.raises(ValueError):
            m.add_variable(1.0, 0.0)

    def test_bad_constraint_rejected(self):
        m = LpModel()
        m.add_variable(0, 1)
        with pytest.raises(ValueError):
            m.add_constraint([3], [1.0], LE, 0.0)
        with pytest.raises(ValueError):
            m.add_constraint([0], [1.0], "<", 0.0)

    def test_degenerate_lp_terminates(self):
        # many redundant rows through one vertex: exercises the anti-cycling
        # fallback rather than looping
        m = LpModel()
        n = 6
        for j in range(n):
            m.add_variable(0, 1, obj=1.0)
        for _ in range(12):
            m.add_constraint(np.arange(n), np.ones(n), LE, 0.0)
        sol = solve_lp(m)
        assert_optimal(sol, 0.0)


class TestAgainstReference:
    def test_random_lps_match_scipy(self):
        linprog = pytest.importorskip("scipy.optimize").linprog
        rng = np.random.default_rng(0)
        for _ in range(300):
            n = int(rng.integers(2, 8))
            k = int(rng.integers(1, 9))
            lb = rng.uniform(-2, 0, n)
            ub = lb + rng.uniform(0.05, 3, n)
            c = rng.uniform(-2, 2, n)
            m = LpModel()
            for j in range(n):
                m.add_variable(lb[j], ub[j], obj=c[j])
            Aub, bub, Aeq, beq = [], [], [], []
            for _ in range(k):
                row = rng.uniform(-1, 1, n)
                sense = (LE, GE, EQ)[int(rng.integers(3))]
                rhs = float(rng.uniform(-1.5, 1.5))
                m.add_constraint(np.arange(n), row, sense, rhs)
                if sense == LE:
                    Aub.append(row); bub.append(rhs)
                elif sense == GE:
                    Aub.append(-row); bub.append(-rhs)
                else:
                    Aeq.append(row); beq.append(rhs)
            sol = solve_lp(m)
            ref = linprog(-c, A_ub=np.array(Aub) if Aub else None,
                          b_ub=bub or None,
                          A_eq=np.array(Aeq) if Aeq else None,
                          b_eq=beq or None,
                          bounds=list(zip(lb, ub)), method="highs")
            if ref.status == 2:
                assert sol.status == LpStatus.INFEASIBLE
            elif ref.status == 0:
                assert sol.status == LpStatus.OPTIMAL
                assert sol.objective_value == pytest.approx(-ref.fun, abs=1e-6)


class TestWarmStart:
    def test_added_rows_resolve_matches_cold(self):
        rng = np.random.default_rng(9)
        for trial in range(50):
            n = int(rng.integers(3, 9))
            m = LpModel()
            for j in range(n):
                m.add_variable(-1, 1, obj=float(rng.uniform(-1, 1)))
            for _ in range(int(rng.integers(1, 6))):
                m.add_constraint(np.arange(n), rng.uniform(-1, 1, n), LE,
                                 float(rng.uniform(0.2, 1.0)))
            first = solve_lp(m)
            assert first.status == LpStatus.OPTIMAL
            for _ in range(int(rng.integers(1, 4))):
                m.add_constraint(np.arange(n), rng.uniform(-1, 1, n), LE,
                                 float(rng.uniform(0.05, 0.6)))
            warm = solve_lp(m, warm_basis=first.basis)
            cold = solve_lp(m)
            assert warm.status == cold.status
            if cold.status == LpStatus.OPTIMAL:
                assert warm.objective_value == pytest.approx(
                    cold.objective_value, abs=1e-7)

    def test_warm_start_typically_cheaper(self):
        rng = np.random.default_rng(10)
        m = LpModel()
        n = 10
        for j in range(n):
            m.add_variable(-1, 1, obj=float(rng.uniform(-1, 1)))
        for _ in range(8):
            m.add_constraint(np.arange(n), rng.uniform(-1, 1, n), LE, 0.5)
        first = solve_lp(m)
        m.add_constraint(np.arange(n), rng.uniform(-1, 1, n), LE, 0.1)
        warm = solve_lp(m, warm_basis=first.basis)
        cold = solve_lp(m)
        assert warm.iterations <= cold.iterations

    def test_incompatible_basis_falls_back_to_cold(self):
        m = LpModel()
        m.add_variable(0, 1, obj=1.0)
        m.add_constraint([0], [1.0], LE, 0.5)
        good = solve_lp(m)
        m2 = LpModel()
        m2.add_variable(0, 1, obj=1.0)
        m2.add_variable(0, 1, obj=2.0)
        m2.add_constraint([0, 1], [1.0, 1.0], LE, 0.5)
        sol = solve_lp(m2, warm_basis=good.basis)
        assert_optimal(sol, 1.0)

    def test_feasibility_residuals_checked(self):
        # optimal status implies rows hold within tolerance (verified inside
        # solve_lp; this asserts externally as well)
        rng = np.random.default_rng(12)
        m = LpModel()
        n = 7
        for j in range(n):
            m.add_variable(-1, 1, obj=float(rng.uniform(-1, 1)))
        rows = [rng.uniform(-1, 1, n) for _ in range(5)]
        for row in rows:
            m.add_constraint(np.arange(n), row, LE, 0.3)
        sol = solve_lp(m)
        assert sol.status == LpStatus.OPTIMAL
        for row in rows:
            assert float(row @ sol.x) <= 0.3 + 1e-7

    def test_iteration_limit_status(self):
        m = LpModel()
        for j in range(5):
            m.add_variable(0, 1, obj=1.0)
        m.add_constraint(np.arange(5), np.ones(5), LE, 2.0)
        assert solve_lp(m, max_iter=0).status == LpStatus.ITERATION_LIMIT


def test_lp_format_dump(tmp_path):
    m = LpModel()
    m.add_variable(0, 1, obj=1.0, name="a")
    m.add_variable(-1, 2, obj=-0.5, name="b")
    m.add_constraint([0, 1], [2.0, -1.0], LE, 0.25)
    path = tmp_path / "model.lp"
    write_lp_format(m, path)
    text = path.read_text()
    assert text.startswith("Maximize")
    assert "Subject To" in text and "Bounds" in text and text.rstrip().endswith("End")
    assert "2 a" in text and "- 1 b" in text
