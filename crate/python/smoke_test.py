"""Smoke test for the pyhybridrelay extension.

Build and install first:

    pip install maturin
    cd crates/py && pip install -e . --no-build-isolation
"""

import math

import pyhybridrelay as hr


def small_config():
    cfg = hr.Config()
    cfg.set("num_users", "3")
    cfg.set("num_relays", "2")
    cfg.set("num_subcarriers", "16")
    cfg.set("power_mask", "2")
    return cfg


def test_rates():
    assert math.isclose(hr.direct_rate(1.0, 1.0), 1.0)
    assert hr.df_rate(0.0, 0.0, 1.0, 1.0, 1.0) == 0.0
    try:
        hr.direct_rate(-1.0, 1.0)
    except ValueError:
        pass
    else:
        raise AssertionError("negative power accepted")


def test_config_round_trip():
    cfg = hr.Config()
    cfg.validate()
    assert cfg.get("num_users") == "8"
    again = hr.Config.parse(cfg.to_string())
    assert again.get("v") == cfg.get("v")
    bad = hr.Config()
    bad.set("v", "1e9")
    try:
        bad.validate()
    except ValueError as e:
        assert "invalid config" in str(e)
    else:
        raise AssertionError("infeasible V accepted")


def test_run_and_summary():
    cfg = small_config()
    trace = hr.run(cfg, policy="free", seed=3, slots=200)
    assert len(trace) == 200
    s = trace.summary()
    q_max = float(cfg.get("buffer_packets")) * float(cfg.get("mean_packet_size"))
    s_max = float(cfg.get("s_max"))
    assert s["max_q"] <= q_max
    assert 0.0 <= s["battery_min"] <= s["battery_max"] <= s_max
    assert len(s["mean_admitted"]) == 3
    assert trace.to_csv().splitlines()[0].startswith("t,Q_1,Q_2,Q_3,U_1")
    again = hr.run(cfg, policy="free", seed=3, slots=200)
    assert again.to_csv() == trace.to_csv()


def test_policies_and_sweep():
    cfg = small_config()
    for p in hr.POLICIES:
        assert len(hr.run(cfg, policy=p, seed=1, slots=20)) == 20
    csv = hr.sweep(cfg, "v", [10.0, 50.0], [1, 2], slots=40)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("axis,value,seeds_ok")
    assert len(lines) == 3


def test_verify():
    for report in hr.verify_subproblems(cases=20, resolution=400):
        assert report["passed"], report


def test_fairness():
    assert hr.fairness_index([1.0, 1.0]) == 1.0
    assert hr.fairness_index([1.0, 0.0]) == 0.5


if __name__ == "__main__":
    for name, fn in list(globals().items()):
        if name.startswith("test_") and callable(fn):
            fn()
            print(f"ok {name}")
