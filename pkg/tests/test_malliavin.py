from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rolling_lab import catalog
from rolling_lab import malliavin as M
from rolling_lab.algebra import ContractError
from rolling_lab.cutoff import CutoffSpec, make_coefficient
from rolling_lab.flow import solve_rolling
from rolling_lab.group import ScalarField, get_model
from rolling_lab.wiener import PathGrid, coarsen, energy, sample_brownian_batch

AREA = ScalarField(lambda g: g[..., 2], lambda g: np.eye(3)[2] + 0 * g, "area")


def _setup(label, n_steps=512, n_paths=8, seed=3):
    model = get_model(label)
    omega = sample_brownian_batch(PathGrid(n_steps), model.k, seed, range(n_paths))
    coeff = make_coefficient(model, "full")
    return model, coeff, omega, solve_rolling(model, coeff, omega)


class TestDerivative:
    @pytest.mark.parametrize("label", ["abelian:2", "heisenberg", "paper-example", "filiform:5"])
    @pytest.mark.parametrize("fname", ["poly", "trig"])
    def test_formula_matches_oracle(self, label, fname):
        model, coeff, omega, flow = _setup(label, 1024)
        f = catalog.scalar_field(fname)
        h = catalog.direction("wave", omega.grid, model.k)
        form = M.derivative_formula(model, f, flow, h)
        orac = M.derivative_fd_oracle(model, f, coeff, omega, h)
        assert np.median(M.DerivativeReport.relative(form, orac)) < 1e-4

    @pytest.mark.parametrize("hname", list(catalog.DIRECTIONS))
    def test_heisenberg_closed_form(self, hname):
        model, _, omega, flow = _setup("heisenberg", 256)
        h = catalog.direction(hname, omega.grid, 2)
        for t in (64, 256):
            np.testing.assert_allclose(
                M.derivative_formula(model, AREA, flow, h, t), M.heisenberg_closed_form(omega, h, t), atol=1e-12
            )

    def test_abelian_derivative_is_gradient_against_h(self):
        model, _, omega, flow = _setup("abelian:3", 128)
        f = catalog.scalar_field("gauss")
        h = catalog.direction("wave", omega.grid, 3)
        expected = f.gradient(omega.values[:, -1]) @ h.values[-1]
        np.testing.assert_allclose(M.derivative_formula(model, f, flow, h), expected, atol=1e-13)

    def test_late_direction_does_not_move_early_times(self):
        model, _, omega, flow = _setup("paper-example", 256)
        h = catalog.direction("late", omega.grid, 2)
        f = catalog.scalar_field("trig")
        assert np.all(M.derivative_formula(model, f, flow, h, 100) == 0.0)

    def test_formula_requires_full_coefficient(self):
        model, _, omega, _ = _setup("heisenberg", 64, 2)
        flow = solve_rolling(model, make_coefficient(model, "u_m", CutoffSpec(m=0.5)), omega)
        h = catalog.direction("line", omega.grid, 2)
        with pytest.raises(ContractError):
            M.derivative_formula(model, AREA, flow, h)
        with pytest.raises(ContractError):
            M.derivative_formula(model, AREA, solve_rolling(model, make_coefficient(model, "full"), omega), h, 65)

    def test_theta_route_agrees_with_Theta_route_for_full_coefficient(self):
        model, coeff, omega, flow = _setup("paper-example", 2048)
        f = catalog.scalar_field("trig")
        h = catalog.direction("wave", omega.grid, 2)
        a = M.derivative_via_theta(model, f, coeff, flow, omega, h)
        b = M.derivative_formula(model, f, flow, h)
        assert np.max(np.abs(a - b)) < 0.05

    def test_eps_scaling_is_second_order(self):
        model, coeff, omega, _ = _setup("paper-example", 512, 16)
        f = catalog.scalar_field("trig")
        h = catalog.direction("wave", omega.grid, 2)
        ref = M.richardson(
            M.derivative_fd_oracle(model, f, coeff, omega, h, eps=1e-3),
            M.derivative_fd_oracle(model, f, coeff, omega, h, eps=5e-4),
        )
        eps = np.array([0.1, 0.05, 0.025, 0.0125])
        err = [np.mean(np.abs(M.derivative_fd_oracle(model, f, coeff, omega, h, eps=e) - ref)) for e in eps]
        slope = np.polyfit(np.log(eps), np.log(err), 1)[0]
        assert abs(slope - 2.0) <= 0.3

    def test_dt_scaling(self):
        model, coeff, omega, _ = _setup("paper-example", 8192, 16)
        f = catalog.scalar_field("trig")
        vals = {}
        for n in (512, 1024, 2048, 8192):
            om = coarsen(omega, 8192 // n)
            vals[n] = M.derivative_formula(model, f, solve_rolling(model, coeff, om), catalog.direction("wave", om.grid, 2))
        ns = [512, 1024, 2048]
        err = [np.mean(np.abs(vals[n] - vals[8192])) for n in ns]
        assert M.fitted_rate(ns, err) >= 0.5

    def test_oracle_rejects_nonpositive_eps(self):
        model, coeff, omega, _ = _setup("heisenberg", 16, 1)
        with pytest.raises(ContractError):
            M.derivative_fd_oracle(model, AREA, coeff, omega, catalog.direction("line", omega.grid, 2), eps=0.0)


class TestSecondDerivative:
    def test_area_second_derivative_is_path_independent(self):
        model, coeff, omega, _ = _setup("heisenberg", 128, 6)
        h1 = catalog.direction("line", omega.grid, 2)
        h2 = catalog.direction("wave", omega.grid, 2)
        d2 = M.second_derivative_fd(model, AREA, coeff, omega, h1, h2)
        np.testing.assert_allclose(d2, d2[0], atol=1e-7)
        # the area is bilinear in the path: d_h1 d_h2 is the area form of (h1, h2)
        a, b = h1.values, h2.values
        mid = lambda x: 0.5 * (x[:-1] + x[1:])
        form = 0.5 * (np.sum(mid(a)[:, 0] * np.diff(b[:, 1]) - mid(a)[:, 1] * np.diff(b[:, 0]))
                      + np.sum(mid(b)[:, 0] * np.diff(a[:, 1]) - mid(b)[:, 1] * np.diff(a[:, 0])))
        np.testing.assert_allclose(d2, form, atol=1e-7)

    def test_grid_stable_in_eps(self):
        model, coeff, omega, _ = _setup("paper-example", 256, 4)
        f = catalog.scalar_field("trig")
        h1 = catalog.direction("line", omega.grid, 2)
        h2 = catalog.direction("wave", omega.grid, 2)
        a = M.second_derivative_fd(model, f, coeff, omega, h1, h2, eps=2e-3)
        b = M.second_derivative_fd(model, f, coeff, omega, h1, h2, eps=1e-3)
        np.testing.assert_allclose(a, b, rtol=1e-3, atol=1e-4)


class TestKernel:
    @pytest.mark.parametrize("label", ["heisenberg", "paper-example", "filiform:5"])
    def test_reconstruction(self, label):
        model, _, omega, flow = _setup(label, 256)
        f = catalog.scalar_field("trig")
        K = M.kernel_path(model, f, flow)
        for hname in catalog.DIRECTIONS:
            h = catalog.direction(hname, omega.grid, model.k)
            np.testing.assert_allclose(
                M.reconstruct_derivative(K, h), M.derivative_formula(model, f, flow, h), rtol=1e-12, atol=1e-12
            )

    def test_kernel_freezes_after_t(self):
        model, _, omega, flow = _setup("paper-example", 128, 3)
        f = catalog.scalar_field("gauss")
        K = M.kernel_path(model, f, flow, 40)
        assert np.all(K[:, 0] == 0.0)
        assert np.all(K[:, 40:] == K[:, 40:41])
        h = catalog.direction("wave", omega.grid, 2)
        np.testing.assert_allclose(M.reconstruct_derivative(K, h), M.derivative_formula(model, f, flow, h, 40),
                                   rtol=1e-12, atol=1e-12)

    def test_kernel_D_indexing(self):
        model, _, omega, flow = _setup("heisenberg", 32, 2)
        K = M.kernel_path(model, AREA, flow)
        assert np.all(M.kernel_D(model, AREA, flow, 1, 17) == K[:, 17, 1])
        with pytest.raises(ContractError):
            M.kernel_D(model, AREA, flow, 2, 0)
        with pytest.raises(ContractError):
            M.kernel_D(model, AREA, flow, 0, 33)


def test_sobolev_surrogate_is_a_lower_bound_on_abelian():
    model, _, omega, flow = _setup("abelian:2", 128)
    f = catalog.scalar_field("poly")
    hs = [catalog.direction(n, omega.grid, 2) for n in catalog.DIRECTIONS]
    s = M.sobolev_surrogate(model, f, flow, hs)
    # on the abelian group D f(xi_1) = grad f(omega_1) (t ^ .), of H-norm |grad f|
    assert np.all(s <= np.linalg.norm(f.gradient(omega.values[:, -1]), axis=-1) + 1e-12)
    for h in hs:
        assert np.all(s >= np.abs(M.derivative_formula(model, f, flow, h)) / np.sqrt(energy(h)) - 1e-15)


class TestBattery:
    def test_small_battery(self):
        reports, closed = M.verify_derivative_battery(n_paths=4, n_steps=512, threads=1)
        assert len(reports) == 3 * 3 * 3 * 4
        s = M.summarize_battery(reports, closed)
        assert s.closed_form_max <= 1e-10 and s.passed

    def test_summary_flags_bad_reports(self):
        bad = [M.DerivativeReport("m", "f", "h", i, 1.0, 2.0, 0.5, 1e-5, 8) for i in range(5)]
        assert not M.summarize_battery(bad).passed

    def test_thread_invariant(self):
        a, _ = M.verify_derivative_battery(("heisenberg",), ("trig",), ("wave",), n_paths=300, n_steps=32, threads=1)
        b, _ = M.verify_derivative_battery(("heisenberg",), ("trig",), ("wave",), n_paths=300, n_steps=32, threads=3)
        assert a == b


class TestIBP:
    def test_closed_form_triple(self):
        grid = PathGrid(64)
        label, F, G, hname = catalog.ibp_battery()[0]
        h = catalog.direction(hname, grid, 2)
        r = M.ibp_statistic(F, G, h, 2000, 7, label, expected=0.5)
        assert r.lhs_mean == 0.5 and r.lhs_stderr == 0.0
        assert r.passed and abs(r.rhs_mean - 0.5) < 4 * r.rhs_stderr

    @pytest.mark.parametrize("triple", catalog.ibp_battery()[1:], ids=lambda t: t[0])
    def test_battery_triples_balance(self, triple):
        label, F, G, hname = triple
        h = catalog.direction(hname, PathGrid(64), 2)
        r = M.ibp_statistic(F, G, h, 4000, 11, label)
        assert abs(r.z_score) < 4

    def test_needs_enough_paths(self):
        label, F, G, hname = catalog.ibp_battery()[0]
        with pytest.raises(ContractError):
            M.ibp_statistic(F, G, catalog.direction(hname, PathGrid(8), 2), 999, 0)

    def test_z_score_edge_cases(self):
        r = M.IBPReport("x", 0, 0, 0, 0, 0.0, 0.0, 1000)
        assert r.z_score == 0.0
        assert M.IBPReport("x", 0, 0, 0, 0, 1.0, 0.0, 1000).z_score == float("inf")


class TestConvergence:
    def test_identical_processes(self):
        grid = PathGrid(16)
        row = M.lp_sup_distance(lambda om: (om.values, om.values), 2, 200, 0, grid, 2)
        assert row.estimate == 0.0 and row.stderr == 0.0 and row.n_paths == 200

    def test_sup_distance_excludes_nan_paths(self):
        A = np.zeros((3, 5, 2))
        B = np.ones((3, 5, 2))
        B[1, 2, 0] = np.nan
        s = M.sup_distance(A, B)
        assert np.isnan(s[1]) and s[0] == pytest.approx(np.sqrt(2))
        row = M.lp_row(s, 4, 1.0)
        assert row.n_paths == 2 and row.excluded == 1 and row.estimate == pytest.approx(4.0)
        with pytest.raises(ContractError):
            M.lp_row(s, 3, 1.0)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(0, 10), min_size=2, max_size=20))
    def test_lp_row_moments(self, xs):
        xs = np.array(xs)
        assert M.lp_row(xs, 4, 0).estimate == pytest.approx(np.mean(xs**4))

    def test_Theta_n_vanishes_on_abelian(self):
        t = M.run_convergence_study("Theta_n", "abelian:2", n_paths=64, n_steps=64, parameters=(1, 2))
        assert all(r.estimate == 0.0 for tab in t.values() for r in tab.rows)

    def test_theta_m_with_zero_direction(self):
        t = M.run_convergence_study("theta_m", "heisenberg", n_paths=32, n_steps=64, parameters=(0.5, 1.0),
                                    zero_h=True, shortcut=False)
        assert all(r.estimate == 0.0 for tab in t.values() for r in tab.rows)

    def test_large_m_is_exact(self):
        t = M.run_convergence_study("eta_m", "heisenberg", p_list=(2,), n_paths=32, n_steps=64,
                                    parameters=(1000.0,), shortcut=False)
        assert t[2].rows[0].estimate == 0.0

    @pytest.mark.parametrize("kind", M.STUDY_KINDS)
    def test_shortcut_changes_nothing(self, kind):
        params = (1, 4, 64) if kind == "Theta_n" else (0.5, 2.0, 8.0)
        kw = dict(p_list=(2, 4), n_paths=48, n_steps=128, parameters=params, threads=1)
        a = M.run_convergence_study(kind, "heisenberg", shortcut=True, **kw)
        b = M.run_convergence_study(kind, "heisenberg", shortcut=False, **kw)
        for p in (2, 4):
            assert a[p].records() == b[p].records()

    def test_thread_invariant(self):
        kw = dict(p_list=(2,), n_paths=300, n_steps=64, parameters=(0.5, 1.0))
        a = M.run_convergence_study("theta_m", "heisenberg", threads=1, **kw)
        b = M.run_convergence_study("theta_m", "heisenberg", threads=3, **kw)
        assert a[2].records() == b[2].records()

    @pytest.mark.parametrize("kind", M.STUDY_KINDS)
    def test_example_group_small(self, kind):
        params = (1, 16, 256) if kind == "Theta_n" else (0.5, 2.0, 8.0)
        tabs = M.run_convergence_study(kind, "paper-example", n_paths=128, n_steps=256, parameters=params)
        for tab in tabs.values():
            assert all(np.isfinite(r.estimate) for r in tab.rows)
            assert tab.decreasing() and tab.vanishes()
        assert not M.blowup_exceeds_tolerance(list(tabs.values()))

    def test_argument_checks(self):
        with pytest.raises(ContractError):
            M.run_convergence_study("zeta", "heisenberg")
        with pytest.raises(ContractError):
            M.run_convergence_study("eta_m", "heisenberg", parameters=(2.0, 1.0))
        with pytest.raises(ContractError):
            M.run_convergence_study("eta_m", "heisenberg", p_list=(3,))

    def test_table_logic(self):
        R = M.ConvergenceRow
        tab = M.ConvergenceTable("eta_m", "m", 2, 0, [R(1, 1.0, 0.01, 100, 0), R(8, 0.0, 0.0, 100, 0)])
        assert tab.decreasing() and tab.vanishes() and tab.parameters == [1, 8]
        tab.rows[-1] = R(8, 0.99, 0.01, 98, 2)
        assert not tab.decreasing() and not tab.vanishes()
        assert tab.excluded_fraction() == pytest.approx(0.02)
        assert M.blowup_exceeds_tolerance([tab])
        rec = tab.records()[0]
        assert rec["N"] == 100 and rec["kind"] == "eta_m" and rec["seed"] == 0


class TestRates:
    def test_fitted_rate(self):
        n = [8, 16, 32, 64]
        assert M.fitted_rate(n, [1 / x**1.5 for x in n]) == pytest.approx(1.5)
        s = M.RateStudy("x", n, [8.0, 4.0, 2.0, 1.0], 1.0)
        assert s.ratios == [2.0, 2.0, 2.0]

    def test_heisenberg_routes_coincide(self):
        s = M.adjoint_crosscheck("heisenberg", "u_m", n_list=(64, 128), n_paths=8, spec=CutoffSpec(m=1.0))
        assert max(s.errors) < 1e-12

    def test_example_group_rate(self):
        s = M.adjoint_crosscheck("paper-example", "v", n_list=(256, 512, 1024), n_paths=32)
        assert 0.6 <= s.rate <= 1.4

    def test_theta_moments_stable_across_grids(self):
        rows = M.theta_sup_moment("heisenberg", n_list=(128, 256), n_paths=256)
        for p, (a, b) in rows.items():
            assert np.isfinite(a.estimate) and abs(a.estimate - b.estimate) < 0.1 * a.estimate

    def test_explosion_count_small(self):
        assert M.explosion_count("paper-example", n_paths=256, n_steps=256, block_size=128) == 0
        assert M.explosion_count("heisenberg", n_paths=64, n_steps=64, threshold=1e-6) == 64
