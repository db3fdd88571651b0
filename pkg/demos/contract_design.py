"""Optimal contract menus under asymmetric and complete information.

Solves one two-type market with the grid oracle, checks the closed-form
rewards are feasible, and compares the BS utility across schemes.

    python3 demos/contract_design.py
"""

import numpy as np

from covsem import contract as ct
from covsem.contract import EconParams, Mode, PtParams, UavPopulation


def main():
    pop = UavPopulation(type_values=(25.0, 150.0), proportions=(0.6, 0.4), uav_count=5)
    econ = EconParams(upsilon=200.0, unit_cost=90.0, beta_profit=50.0)
    pt = PtParams(u_ref=160.0, loss_aversion=0.5)

    for mode in (Mode.EUT, Mode.PT):
        ca = ct.oracle_grid_solve(pop, econ, mode, pt, grid_n=201)
        cc = ct.complete_info_solve(pop, econ, mode, pt, grid_n=201)
        rnd = ct.random_menu_utility(pop, econ, mode, pt, np.random.default_rng(0))
        feas = ct.check_feasibility(ca.menu, pop, econ)
        print(f"{mode.value.upper()}: random {rnd:8.1f}  CA {ca.utility:8.1f}  CC {cc.utility:8.1f}  "
              f"CA feasible {feas.feasible}")
        for rec in ct.menu_records(ca.menu, pop, econ):
            print("   ", rec)


if __name__ == "__main__":
    main()
