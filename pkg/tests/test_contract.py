import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from covsem import contract as ct
from covsem.contract import ContractMenu, EconParams, Mode, PtParams, UavPopulation

ECON = EconParams(upsilon=200.0, unit_cost=90.0, beta_profit=50.0)
PT = PtParams(u_ref=160.0, gain_exp=1.0, loss_exp=1.0, loss_aversion=0.5)


def sample_market(rng):
    theta = (rng.uniform(10, 50), rng.uniform(100, 200))
    lam = tuple(rng.dirichlet([1.0, 1.0]))
    econ = EconParams(200.0, rng.uniform(80, 100), 50.0)
    return UavPopulation(theta, lam, 5), econ


def brute_ic_ir(menu, pop, econ):
    """Independent IR/IC evaluation with plain Python arithmetic."""
    u = lambda th, q, r: econ.upsilon * th * r - econ.unit_cost * q
    k = len(menu.q)
    ir = [u(pop.type_values[i], menu.q[i], menu.r[i]) for i in range(k)]
    ic = {(i, j): ir[i] - u(pop.type_values[i], menu.q[j], menu.r[j])
          for i in range(k) for j in range(k) if i != j}
    return ir, ic


def test_uav_utility_examples():
    assert ct.uav_utility(20, 1, 0.0225, ECON) == pytest.approx(0.0, abs=1e-12)
    assert ct.uav_utility(20, 0, 0, ECON) == 0
    assert ct.uav_utility(150, 3, 0.0285, ECON) == pytest.approx(585.0)


def test_bs_item_utility_examples():
    assert ct.bs_item_utility_eut(0, 0, ECON) == 0
    assert ct.bs_item_utility_eut(math.e - 1, 0, ECON) == pytest.approx(50.0)
    assert ct.bs_item_utility_eut(3, 10, ECON) == pytest.approx(59.3147, abs=1e-4)
    with pytest.raises(ValueError):
        ct.bs_item_utility_eut(-0.1, 0, ECON)


def test_pt_transform_examples():
    assert ct.pt_transform(160.0, PT) == 0.0
    assert ct.pt_transform(200.0, PT) == pytest.approx(40.0)
    assert ct.pt_transform(100.0, PT) == pytest.approx(-30.0)
    curved = PtParams(u_ref=0.0, gain_exp=0.5, loss_exp=0.5, loss_aversion=2.0)
    assert ct.pt_transform(4.0, curved) == pytest.approx(2.0)
    assert ct.pt_transform(-9.0, curved) == pytest.approx(-6.0)


@given(st.floats(-1e4, 1e4), st.floats(-1e4, 1e4), st.floats(0.1, 1.0), st.floats(0.1, 1.0),
       st.floats(0.0, 5.0), st.floats(-500, 500))
def test_pt_transform_monotone(a, b, zp, zm, eta, ref):
    pt = PtParams(ref, zp, zm, eta)
    lo, hi = min(a, b), max(a, b)
    assert ct.pt_transform(lo, pt) <= ct.pt_transform(hi, pt) + 1e-9


def test_pt_linear_slopes():
    u = np.linspace(-500, 800, 131)
    f = ct.pt_transform(u, PT)
    slopes = np.diff(f) / np.diff(u)
    gain, loss = u[1:] <= PT.u_ref, u[:-1] >= PT.u_ref
    assert np.allclose(slopes[u[:-1] >= PT.u_ref], 1.0)
    assert np.allclose(slopes[u[1:] <= PT.u_ref], 0.5)
    assert gain.any() and loss.any()


def test_bs_total_utility_examples():
    pop2 = UavPopulation((20, 150), (0.5, 0.5), 2)
    assert ct.bs_total_utility(ContractMenu.zeros(2), pop2, ECON) == 0
    pop1 = UavPopulation((20,), (1.0,), 5)
    menu1 = ContractMenu((3.0,), (10.0,))
    assert ct.bs_total_utility(menu1, pop1, ECON) == pytest.approx(5 * (50 * math.log(4) - 10))
    # per-item EUT {10, 30}: choose r so that beta ln(1+q) - r hits the targets
    q = (1.0, 2.0)
    r = (50 * math.log(2) - 10, 50 * math.log(3) - 30)
    assert ct.bs_total_utility(ContractMenu(q, r), pop2, ECON) == pytest.approx(40.0)
    with pytest.raises(ValueError):
        ct.bs_total_utility(menu1, pop2, ECON)


def test_pt_aggregated_per_type():
    pop = UavPopulation((20, 150), (0.3, 0.7), 5)
    menu = ContractMenu((1.0, 20.0), (0.1, 5.0))
    per = [50 * math.log1p(q) - r for q, r in zip(menu.q, menu.r)]
    f = [(u - 160) if u >= 160 else -0.5 * (160 - u) for u in per]
    assert ct.bs_total_utility(menu, pop, ECON, Mode.PT, PT) == pytest.approx(5 * (0.3 * f[0] + 0.7 * f[1]))
    with pytest.raises(ValueError):
        ct.bs_total_utility(menu, pop, ECON, Mode.PT, None)


def test_optimal_rewards_examples():
    assert ct.optimal_rewards([1.0], UavPopulation((20,), (1.0,)), ECON) == pytest.approx([0.0225])
    pop2 = UavPopulation((20, 150), (0.5, 0.5))
    assert ct.optimal_rewards([1.0, 3.0], pop2, ECON) == pytest.approx([0.0225, 0.0285])
    assert np.all(ct.optimal_rewards([0.0, 0.0], pop2, ECON) == 0)
    with pytest.raises(ValueError):
        ct.optimal_rewards([3.0, 1.0], pop2, ECON)
    with pytest.raises(ValueError):
        ct.optimal_rewards([1.0], pop2, ECON)


def test_check_feasibility_examples():
    pop2 = UavPopulation((20, 150), (0.5, 0.5))
    rep = ct.check_feasibility(ct.closed_form_menu([1.0, 3.0], pop2, ECON), pop2, ECON)
    assert rep.feasible and all(rep.ir_ok) and len(rep.ic_ok) == 2
    bad = ct.check_feasibility(ContractMenu((1.0, 3.0), (0.03, 0.02)), pop2, ECON)
    assert not bad.monotone_ok and not bad.feasible
    pop1 = UavPopulation((20,), (1.0,))
    rep1 = ct.check_feasibility(ContractMenu((1.0,), (0.0225,)), pop1, ECON)
    assert rep1.feasible and rep1.ic_ok == {}
    assert not ct.check_feasibility(ContractMenu((1.0,), (0.02,)), pop1, ECON).feasible


def test_closed_form_feasible_on_1000_sample_markets():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        pop, econ = sample_market(rng)
        q = np.sort(rng.uniform(0, 50, size=2))
        menu = ct.closed_form_menu(q, pop, econ)
        assert ct.check_feasibility(menu, pop, econ).feasible
        ir, ic = brute_ic_ir(menu, pop, econ)
        assert min(ir) >= -1e-9 and min(ic.values()) >= -1e-9
        assert abs(ir[0]) <= 1e-9
        assert abs(ic[(1, 0)]) <= 1e-9


@settings(max_examples=60)
@given(st.integers(1, 6), st.integers(0, 2 ** 32 - 1))
def test_closed_form_feasible_any_k(k, seed):
    rng = np.random.default_rng(seed)
    theta = tuple(np.sort(rng.uniform(1, 300, size=k)))
    pop = UavPopulation(theta, tuple(rng.dirichlet(np.ones(k))), 5)
    econ = EconParams(rng.uniform(50, 300), rng.uniform(10, 200), 50.0)
    q = np.sort(rng.uniform(0, 100, size=k))
    menu = ct.closed_form_menu(q, pop, econ)
    ir, ic = brute_ic_ir(menu, pop, econ)
    assert ct.check_feasibility(menu, pop, econ).feasible
    assert abs(ir[0]) <= 1e-9 * max(1.0, q.max())
    for i in range(1, k):
        assert abs(ic[(i, i - 1)]) <= 1e-9 * max(1.0, q.max())
    assert np.all(np.diff(menu.r) >= 0)


def test_k1_grid_matches_first_order_condition():
    pop = UavPopulation((20.0,), (1.0,), 5)
    q_star = 50 * 200 * 20 / 90 - 1
    assert q_star == pytest.approx(2221.22, abs=1e-2)
    step = 3000 / 1000
    sol = ct.oracle_grid_solve(pop, ECON, Mode.EUT, q_max=3000.0, grid_n=1001)
    assert abs(sol.menu.q[0] - q_star) <= step
    fine = ct.oracle_grid_solve(pop, ECON, Mode.EUT, q_max=3000.0, grid_n=30001)
    assert abs(fine.menu.q[0] - q_star) <= 0.1
    assert ct.check_feasibility(sol.menu, pop, ECON).feasible


def test_oracle_zero_qmax():
    pop = UavPopulation((20.0, 150.0), (0.5, 0.5), 5)
    sol = ct.oracle_grid_solve(pop, ECON, Mode.EUT, q_max=0.0)
    assert sol.menu == ContractMenu.zeros(2) and sol.utility == 0


def test_oracle_is_exhaustive_argmax():
    rng = np.random.default_rng(3)
    pop, econ = sample_market(rng)
    sol = ct.oracle_grid_solve(pop, econ, Mode.PT, PT, q_max=50.0, grid_n=21)
    grid = np.linspace(0, 50, 21)
    best = -np.inf
    for i, a in enumerate(grid):
        for b in grid[i:]:
            best = max(best, ct.bs_total_utility(ct.closed_form_menu([a, b], pop, econ), pop, econ, Mode.PT, PT))
    assert sol.utility == pytest.approx(best, rel=1e-12)
    assert ct.check_feasibility(sol.menu, pop, econ).feasible


def test_grid_argmax_tie_breaks_to_smallest_and_is_chunk_invariant():
    cands = ct.nondecreasing_grid(np.linspace(0, 1, 30), 3)
    flat = lambda qs: np.zeros(len(qs))
    assert ct.grid_argmax(cands, flat)[0] == 0
    obj = lambda qs: -np.round(np.abs(qs.sum(axis=1) - 1.5), 6)
    ref = ct.grid_argmax(cands, obj)
    for chunk, jobs in ((7, 1), (97, 4), (1000, 3)):
        assert ct.grid_argmax(cands, obj, chunk=chunk, n_jobs=jobs) == ref


def test_nondecreasing_grid_count():
    cands = ct.nondecreasing_grid(np.arange(5.0), 3)
    assert len(cands) == math.comb(7, 3)
    assert np.all(np.diff(cands, axis=1) >= 0)


def test_complete_info_examples():
    pop1 = UavPopulation((20.0,), (1.0,), 5)
    cc = ct.complete_info_solve(pop1, ECON, Mode.EUT, q_max=3000.0, grid_n=11)
    assert cc.menu.q[0] == pytest.approx(50 * 200 * 20 / 90 - 1)
    assert cc.menu.r[0] == pytest.approx(90 * cc.menu.q[0] / (200 * 20))
    z = ct.complete_info_solve(UavPopulation((20.0, 150.0), (0.5, 0.5)), ECON, Mode.EUT, q_max=0.0)
    assert z.utility == 0


def test_scheme_ordering_every_instance():
    rng = np.random.default_rng(11)
    for _ in range(30):
        pop, econ = sample_market(rng)
        for mode in (Mode.EUT, Mode.PT):
            ca = ct.oracle_grid_solve(pop, econ, mode, PT, grid_n=51)
            cc = ct.complete_info_solve(pop, econ, mode, PT, grid_n=51)
            rnd = ct.random_menu_utility(pop, econ, mode, PT, rng, grid_n=51, n_draws=128)
            assert cc.utility >= ca.utility - 1e-9
            assert ca.utility >= rnd - 1e-9


def test_random_menu_feasible():
    rng = np.random.default_rng(5)
    pop, econ = sample_market(rng)
    for _ in range(50):
        assert ct.check_feasibility(ct.random_menu(pop, econ, rng), pop, econ).feasible


def test_eut_pt_argmax_coincide_single_type():
    rng = np.random.default_rng(2)
    for _ in range(20):
        pop = UavPopulation((rng.uniform(10, 50),), (1.0,), 5)
        econ = EconParams(200.0, rng.uniform(80, 100), 50.0)
        pt = PtParams(u_ref=rng.uniform(0, 500), loss_aversion=rng.uniform(0.1, 3.0))
        a = ct.oracle_grid_solve(pop, econ, Mode.EUT, q_max=60.0, grid_n=61)
        b = ct.oracle_grid_solve(pop, econ, Mode.PT, pt, q_max=60.0, grid_n=61)
        assert a.menu.q == b.menu.q


def test_menu_json_round_trip(tmp_path):
    pop = UavPopulation((20.0, 150.0), (0.4, 0.6), 5)
    menu = ct.closed_form_menu([1.0, 3.0], pop, ECON)
    path = tmp_path / "menu.json"
    ct.save_menu(path, menu, pop, ECON, PT)
    recs = json.loads(path.read_text())
    assert [set(r) for r in recs] == [{"k", "theta", "lambda", "q", "r", "u_uav", "u_bs_eut", "u_bs_pt"}] * 2
    assert recs[1]["u_uav"] == pytest.approx(585.0)
    assert ct.load_menu(path) == menu


def test_invalid_inputs():
    with pytest.raises(ValueError):
        UavPopulation((50.0, 20.0), (0.5, 0.5))
    with pytest.raises(ValueError):
        UavPopulation((20.0, 50.0), (0.5, 0.6))
    with pytest.raises(ValueError):
        EconParams(upsilon=0.0)
    with pytest.raises(ValueError):
        PtParams(gain_exp=1.5)
    with pytest.raises(ValueError):
        ContractMenu((1.0,), (-1.0,))
