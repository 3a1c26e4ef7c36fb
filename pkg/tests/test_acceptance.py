"""Acceptance criteria 1-10, each at its stated tolerance.

Every test prints one ``criterion N: PASS|FAIL`` line; the lines are
collected again in the pytest terminal summary.
"""

import math

import numpy as np
import pytest

from ddepi import analysis
from ddepi.core import TABLE1, ModelParams, TimeGrid
from ddepi.integrator import ScalarDde, integrate
from ddepi.scenario import load_scenario, resolve_config, scenario_from_dict, simulate
from ddepi.stability import boundary_curve, characteristic_roots, is_stable, theorem31_check


def shipped(name):
    return load_scenario(resolve_config(name))


def run(name):
    return simulate(shipped(name))


def d_increment_ratios(result, t_min=None):
    return analysis.envelope_ratios(result.times[1:], analysis.increments(result.series("d")), t_min=t_min)


@pytest.fixture(scope="module")
def pde_table1():
    return {s: run(f"pde_table1_sigma{s}") for s in (5, 10, 15, 20)}


def test_criterion_01_stability_table(acceptance_report):
    expected = {
        (1 / 32, 3 / 640): {5: True, 10: True, 15: True, 20: True},
        (3 / 32, 1 / 80): {5: True, 10: True, 15: False},
        (3 / 56, 3 / 320): {5: True, 10: True, 15: True, 20: True},
    }
    got = {pair: {s: theorem31_check(ModelParams(phi_r=pair[0], phi_d=pair[1], sigma_delay=s)).stable for s in table}
           for pair, table in expected.items()}
    ok = got == expected
    acceptance_report(1, ok, f"theorem bound classification {'matches' if ok else 'differs: ' + repr(got)}")
    assert ok


def test_criterion_02_dynamic_confirmation(acceptance_report):
    stable = d_increment_ratios(run("ode_phi_unstable_sigma10"))
    unstable = d_increment_ratios(run("ode_phi_unstable_sigma15"))
    ok = (stable.size >= 3 and np.all(stable < 1)) and (unstable.size >= 3 and np.all(unstable > 1))
    acceptance_report(2, ok, f"sigma=10 ratios {np.round(stable, 3).tolist()}; "
                             f"sigma=15 ratios {np.round(unstable, 3).tolist()}")
    assert ok


def test_criterion_03_near_periodic(acceptance_report):
    res = run("ode_phi_periodic_sigma15")
    t_min = res.times[-1] - 100
    r_d = d_increment_ratios(res, t_min=t_min)
    r_i = analysis.envelope_ratios(res.times, res.series("i"), t_min=t_min)
    ratios = np.concatenate([r_d, r_i])
    ok = r_d.size >= 1 and r_i.size >= 1 and np.all((ratios >= 0.8) & (ratios <= 1.25))
    acceptance_report(3, ok, f"final-100-day ratios: d-increments {np.round(r_d, 4).tolist()}, "
                             f"i {np.round(r_i, 4).tolist()}")
    assert ok


def test_criterion_04_lockdown(acceptance_report):
    base = analysis.peak(*_ti(run("ode_table1_sigma5")))[0]
    lock = analysis.peak(*_ti(run("ode_table1_sigma5_lockdown")))[0]
    reduction = 1 - lock / base
    ok = 0.15 <= reduction <= 0.30
    acceptance_report(4, ok, f"peak infected {base:.2f} -> {lock:.2f}, reduction {reduction:.1%}")
    assert ok


def _ti(res):
    return res.times, res.series("i")


def test_criterion_05_delay_ordering(acceptance_report, pde_table1):
    ode = [analysis.peak(*_ti(run(f"ode_table1_sigma{s}")))[0] for s in (5, 10, 15, 20)]
    pde = [analysis.peak(*_ti(pde_table1[s]))[0] for s in (5, 10, 15, 20)]
    ok = bool(np.all(np.diff(ode) > 0) and np.all(np.diff(pde) > 0))
    acceptance_report(5, ok, f"ODE peaks {np.round(ode, 2).tolist()}; PDE peaks {np.round(pde, 4).tolist()}")
    assert ok


def test_criterion_06_nonphysical_excursion(acceptance_report, pde_table1):
    res = pde_table1[20]
    i = res.series("i")
    late = np.abs(i[res.times >= res.times[-1] - 50]).max()
    ok = i.min() < 0 and late <= np.abs(i).max() and np.all(np.isfinite(i))
    acceptance_report(6, ok, f"min integrated i {i.min():.4g} at t={res.times[np.argmin(i)]}; "
                             f"max|i| final 50 days {late:.4g} vs run {np.abs(i).max():.4g}")
    assert ok


def test_criterion_07_root_oracle(acceptance_report):
    phis = np.linspace(0.05, math.pi - 0.05, 50)
    re = np.array([abs(characteristic_roots(boundary_curve(p)).rightmost.real) for p in phis])
    points = [boundary_curve(p) for p in phis] + [(a, b) for a in (-2, -0.5, 0, 0.5, 1) for b in (-5, -1.5, -0.2, 0.3, 2)]
    residual = max(float(characteristic_roots(p).residuals().max()) for p in points)
    ok = re.max() < 1e-6 and residual < 1e-10
    acceptance_report(7, ok, f"boundary max|Re| {re.max():.2e}; max root residual {residual:.2e}")
    assert ok


def test_criterion_08_conservation(acceptance_report, pde_table1):
    drifts = {}
    for name in ("ode_table1_sigma20", "ode_phi_periodic_sigma15"):
        tot = run(name).totals.sum(axis=1)
        drifts[name] = np.max(np.abs(tot / tot[0] - 1))
    tot = pde_table1[20].totals.sum(axis=1)
    drifts["pde_table1_sigma20 (A=0)"] = np.max(np.abs(tot / tot[0] - 1))
    tot = run("pde_allee_sigma10").totals.sum(axis=1)
    drifts["pde_allee_sigma10 (A=0.05)"] = np.max(np.abs(tot / tot[0] - 1))
    ok = max(drifts.values()) < 1e-8
    acceptance_report(8, ok, "; ".join(f"{k} {v:.1e}" for k, v in drifts.items()))
    assert ok


def test_criterion_09_homogeneous_reduction(acceptance_report):
    ode = shipped("ode_table1_sigma10")
    pde = shipped("pde_homogeneous_sigma10")
    a = simulate(ode).totals / ode.normalize_by
    b = simulate(pde).totals
    err = analysis.relative_state_error(a, b)
    ok = err.max() < 1e-6
    acceptance_report(9, ok, f"max relative state difference {err.max():.2e} over {len(err)} steps")
    assert ok


def test_criterion_10_bdf2_order(acceptance_report):
    # u' = -e^{-1} u(t - 1) with history e^{-t}: exact solution e^{-t}
    hist = lambda t: np.array([math.exp(-t)])
    errs = []
    for k in (3, 4, 5, 6):
        tr = integrate(ScalarDde(0.0, -math.exp(-1), 1.0), hist, TimeGrid(0, 4, 2.0 ** -k))
        errs.append(np.max(np.abs(tr.states[:, 0] - np.exp(-tr.times))))
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    ok = bool(np.all((rates >= 1.8) & (rates <= 2.2)))
    acceptance_report(10, ok, f"observed rates {np.round(rates, 3).tolist()}")
    assert ok
