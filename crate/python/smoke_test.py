"""Smoke test for the hybridsim_py extension.

Build and install first:  pip install maturin && maturin develop -m crates/python/Cargo.toml
(or `maturin build` and pip install the wheel).
"""

import hybridsim_py as hs


def main():
    zoo = hs.zoo_models()
    assert [m.name for m in zoo][:2] == ["gpt-355m", "gpt-774m"] and len(zoo) == 7

    opt = hs.ModelSpec.load("opt-1.3b").with_context(4096)
    assert opt.low_precision_fraction() == 0.75
    low, high = opt.mac_counts()
    assert low == 3 * high
    assert opt.num_matmuls() == opt.n_layers * (6 + 2 * opt.h)

    rec = hs.simulate(hs.ModelSpec.load("opt-6.7b"), mode="hybrid")
    assert rec["speedup_vs_tpu"] > 1.0
    assert abs(rec["words_per_battery"] - 18000 * rec["tokens_per_joule"] / 1.5) <= 1e-5 * rec["words_per_battery"]
    base = hs.simulate(hs.ModelSpec.load("opt-6.7b"), mode="tpu-only")
    assert base["speedup_vs_tpu"] == 1.0

    rows = hs.sweep([hs.ModelSpec.load("gpt-355m")], context_lens=[128, 4096], modes=["hybrid"])
    assert [r["context_len"] for r in rows] == [128, 4096]
    assert rows[0]["speedup_vs_tpu"] > rows[1]["speedup_vs_tpu"]

    a = hs.analytic_cycles(8, 5, 8, rows=4, cols=4, dataflow="WS")
    o = hs.cycle_accurate_sim(8, 5, 8, rows=4, cols=4, dataflow="WS")
    assert a["total_cycles"] == o["total_cycles"] and a["macs"] == 320

    w = [[1, 0, -1], [0, 1, 1], [-1, -1, 0], [1, 1, 1]]
    x = [3, -7, 127, -128]
    ref = [sum(w[r][c] * x[r] for r in range(4)) for c in range(3)]
    assert hs.functional_mvm(w, x, xbar_size=2) == ref
    assert hs.functional_mvm(w, x, xbar_size=2, quantized=True) == ref

    hw = hs.HardwareSpec().with_dataflow("IS")
    assert hw.dataflow == "IS" and hw.calibration == "uncalibrated"

    try:
        hs.ModelSpec("bad", 10, 3, 40, 1)
    except ValueError as e:
        assert "divisible" in str(e)
    else:
        raise AssertionError("invalid model accepted")

    print("smoke test passed")


if __name__ == "__main__":
    main()
