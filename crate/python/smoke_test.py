"""Smoke test for the `mca` Python extension.

Build and install first:  pip install --no-build-isolation -e crates/python
Then run:                 python python/smoke_test.py
"""

import json

import mca


def main() -> None:
    inst = mca.sample_instance(2, 3, 2, 1, 2, seed=7)
    assert inst.dims == (2, 3, 2)
    assert abs(sum(inst.weights) - 1.0) < 1e-12
    again = mca.ProblemInstance.from_json(inst.to_json())
    assert again.phi == inst.phi

    res = mca.solve_sgpa(inst, record_trace=True)
    alloc = res["allocation"]
    assert mca.is_feasible(inst, alloc)
    assert abs(mca.evaluate_wsu(inst, alloc) - res["wsu"]) < 1e-12
    assert len(res["trace"]) == res["iterations_run"]

    heur = mca.heuristic(inst)
    best, best_wsu = mca.oracle(inst)
    assert mca.is_feasible(inst, heur) and mca.is_feasible(inst, best)
    assert res["wsu"] <= best_wsu + 1e-9
    assert mca.evaluate_wsu(inst, heur) <= best_wsu + 1e-9

    slack = mca.sample_instance(3, 2, 4, 2, 2, seed=1)
    greedy, caps_ok = mca.greedy(slack)
    assert caps_ok
    assert mca.solve_sgpa(slack)["wsu"] == mca.evaluate_wsu(slack, greedy)

    kappa, x = mca.normalize([3.0, 2.0, 1.0], 2)
    assert abs(kappa - 3.0) < 1e-12 and abs(sum(x) - 2.0) < 1e-12

    rates, beta, _ = mca.fig1(M=20, Mk=3, iterations=200, seed=4)
    assert beta[-1][:3] == [1.0, 1.0, 1.0] and sum(beta[-1]) == 3.0

    doc = json.loads(alloc.to_json())
    assert set(doc) >= {"alpha", "beta", "gamma"}

    big = mca.sample_instance(30, 50, 100, 4, 20)
    try:
        mca.oracle(big)
    except mca.BudgetExceededError:
        pass
    else:
        raise AssertionError("oracle budget guard did not fire")

    try:
        mca.normalize([0.0, 0.0], 1)
    except ValueError:
        pass
    else:
        raise AssertionError("all-zero normalize should raise")

    print(f"smoke test passed: sgpa {res['wsu']:.4f}, oracle {best_wsu:.4f}")


if __name__ == "__main__":
    main()
