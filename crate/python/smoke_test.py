"""Smoke test for the prefmobo_py extension.

Build and install first:
    maturin build --release -m crates/py/Cargo.toml
    pip install target/wheels/prefmobo_py-*.whl
"""

import json
import sys

import prefmobo_py as pm


def csf(f, w):
    return min(v / wi for v, wi in zip(f, w))


def interactive_loop():
    truth = [0.7, 0.3]
    s = pm.Session("schaffer2", config={"method": "proposed", "seed": 3, "initial_points": 3})
    assert s.n_objectives == 2 and s.input_dim == 1
    for _ in range(3):
        s.observe_candidate(s.suggest()["index"])
    for _ in range(4):
        q = s.next_query("pc")
        a, b = q["scaled"]
        s.answer(q["id"], preferred=0 if csf(a, truth) >= csf(b, truth) else 1)
        q = s.next_query("ir")
        point = q["scaled"][0]
        s.answer(q["id"], dim=min(range(2), key=lambda i: point[i] / truth[i]))
        s.observe_candidate(s.suggest()["index"])
    summary = s.summary()
    assert summary["n_observations"] == 7
    assert summary["n_pc"] == 4 and summary["n_ir"] == 4
    w = summary["posterior_mean_w"]
    assert abs(sum(w) - 1.0) < 1e-9, w
    restored = pm.Session.from_json(s.to_json())
    assert restored.summary()["n_observations"] == 7
    print(f"interactive loop: posterior mean w = {[round(v, 3) for v in w]}")


def external_mode():
    cands = [[x / 10.0] for x in range(11)]
    s = pm.Session.external(cands, [0.0, 0.0], [1.0, 1.0], minimize=True, config={"method": "random", "seed": 1})
    x = s.suggest()["x"]
    assert s.observe(x, [x[0], 1.0 - x[0]]) == 0
    assert s.summary()["n_observations"] == 1
    try:
        s.answer(99, preferred=0)
    except RuntimeError:
        pass
    else:
        raise AssertionError("answering without a pending query must fail")
    print("external mode: ok")


def module_functions():
    assert "kursawe" in pm.benchmarks()
    assert pm.evaluate("kursawe", [0.0, 0.0, 0.0]) == [-20.0, 0.0]
    try:
        pm.evaluate("nope", [0.0])
    except ValueError as e:
        assert "schaffer2" in str(e)
    ei = pm.expected_improvement([0.6], [0.1], [1.0], 0.5)
    assert abs(ei - 0.1083315470) < 1e-6, ei
    out = pm.run_experiment({"benchmark": "fonseca", "method": "random", "iterations": 2, "seeds": [1, 2]})
    lines = out["csv"].splitlines()
    assert lines[0] == "iteration,seed,regret,w_error,incumbent,selected_index"
    assert len(lines) == 7
    assert out["manifest"]["config"]["benchmark"] == "fonseca"
    json.dumps(out["manifest"])
    print("module functions: ok")


def self_checks():
    checks = pm.self_check()
    for name, passed, detail in checks:
        print(f"[{'PASS' if passed else 'FAIL'}] {name}: {detail}")
    assert all(p for _, p, _ in checks)


if __name__ == "__main__":
    interactive_loop()
    external_mode()
    module_functions()
    self_checks()
    print("smoke test passed")
    sys.exit(0)
