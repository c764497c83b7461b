"""Smoke test for the rpl_powertrain extension module.

Build and copy the module next to this script first:

    cargo build --release -p rpl-powertrain-py
    cp target/release/librpl_powertrain.so python/rpl_powertrain.so
    python3 python/smoke_test.py
"""

import json
import math
import os
import sys
import tempfile

sys.path.insert(0, os.path.dirname(os.path.abspath(__file__)))

import rpl_powertrain as rp


def main():
    cfg = rp.Config()
    assert "beta" in rp.Config.keys()
    assert cfg.get("beta") == "0.1"
    for key, value in [
        ("batch_size", "64"), ("action_samples", "8"), ("retrace_samples", "4"),
        ("retrace_steps", "5"), ("critic_updates", "2"), ("policy_updates", "1"),
        ("actor_hidden", "16,16"), ("critic_hidden", "16,16"), ("learn_every", "50"),
        ("training_cycles", "2"), ("agent", "rpl"), ("seed", "3"),
    ]:
        cfg.set(key, value)
    cfg.validate()
    assert rp.Config.parse(cfg.to_text()).to_text() == cfg.to_text()
    try:
        cfg.set("gamma", "fast")
        raise AssertionError("bad value accepted")
    except ValueError:
        pass

    plant = rp.Plant(cfg, velocity=10.0)
    torque, gear_cmd = plant.source_action(0.0)
    out = plant.step(torque, gear_cmd)
    assert abs(out["acceleration"]) < 1e-9, out
    assert math.isclose(plant.velocity, 10.0, abs_tol=1e-9)

    a = rp.idm_acceleration(10.0, 4.0 + 10.0 * 3.0, 10.0)
    assert math.isclose(a, -2.0 * (10.0 / 30.0) ** 4, rel_tol=1e-12), a

    speeds = rp.load_cycle()
    assert len(speeds) == 1801
    short = speeds[:301]

    metrics, steps = rp.simulate_baseline(cfg, speeds=short)
    assert metrics["mpg"] > 0 and steps.startswith("time,")

    with tempfile.TemporaryDirectory() as tmp:
        run = os.path.join(tmp, "run")
        summary = rp.train(cfg, run, speeds=short)
        assert summary["cycles"] == 2
        assert math.isclose(summary["baseline"]["mpg"], metrics["mpg"], rel_tol=1e-12)

        ck = rp.Checkpoint.load(os.path.join(run, "checkpoint.json"))
        assert ck.agent == "rpl" and ck.cycles_trained == 2
        assert rp.Checkpoint.from_json(ck.to_json()).to_json() == ck.to_json()
        status, m, log = ck.drive(speeds=short)
        assert status in ("ok", "collided", "stalled")

        cycle_path = os.path.join(tmp, "short.csv")
        with open(cycle_path, "w") as f:
            f.write("time_s,speed_mps\n")
            for t, v in enumerate(short):
                f.write(f"{t},{v!r}\n")
        ev = rp.evaluate(os.path.join(run, "checkpoint.json"), [cycle_path], os.path.join(tmp, "eval"), reps=2)
        assert ev["reps"] == 2 and len(ev["cycles"]) == 1

        files = rp.plotdata(run)
        assert len(files) == 2 and all(os.path.isfile(p) for p in files)
        with open(os.path.join(run, "metrics.json")) as f:
            assert json.load(f)["agent"] == "rpl"

    print("rpl_powertrain smoke test: ok")


if __name__ == "__main__":
    main()
