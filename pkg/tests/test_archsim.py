import math
from dataclasses import fields

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from photobnn.archsim import (BUILTIN_VARIANTS, Engine, PeripheralParams, SimEvent, audit_trace,
                              build_config, compare, dump_config_file, load_config_file,
                              metrics_csv, read_metrics_csv, run_layer, run_network,
                              simulate_layer, simulate_network)
from photobnn.archsim.engine import SimulationError, format_trace
from photobnn.errors import ValidationError
from photobnn.mapping import ConvWorkload, build_schedule
from photobnn.workloads import Layer, builtin_model

NS = 1e-9
FIG4 = ConvWorkload(1, 1, 15, 1, 1, 2)  # two vector pairs of 15 bits


def zero_latency_peripherals(keep=()):
    return {f.name: 0.0 for f in fields(PeripheralParams)
            if f.name.endswith(("latency_ns", "cycles")) and not f.name.startswith(keep)}


def small(policy, **extra):
    overrides = {"xpe_size": 9, "xpe_count": 2, "policy": policy}
    overrides.update(extra)
    return build_config("custom", overrides)


class TestConfig:
    @pytest.mark.parametrize("name,n,dr,count,policy", [
        ("OXBNN_5", 53, 5, 100, "oxbnn"), ("OXBNN_50", 19, 50, 1123, "oxbnn"),
        ("ROBIN_PO", 50, 5, 183, "baseline"), ("ROBIN_EO", 10, 5, 916, "baseline"),
        ("LIGHTBULB", 16, 50, 1139, "baseline"),
    ])
    def test_builtins(self, name, n, dr, count, policy):
        cfg = build_config(name)
        assert (cfg.xpe_size, cfg.datarate_GSps, cfg.xpe_count, cfg.policy) == (n, dr, count, policy)
        assert cfg.xpes_per_xpc == n and cfg.xpcs_per_tile == 4
        assert cfg.oxg_energy_per_op_J == 0.032e-9 and cfg.oxg_area_mm2 == 0.011

    def test_oxbnn_capacity(self):
        assert (build_config("OXBNN_50").pca_capacity.gamma, build_config("OXBNN_50").alpha) == (8503, 447)
        assert build_config("OXBNN_5").alpha == 561

    def test_peripheral_defaults(self):
        p = PeripheralParams()
        assert (p.reduction_power_mW, p.reduction_latency_ns) == (0.050, 3.125)
        assert (p.activation_power_mW, p.activation_latency_ns) == (0.52, 0.78)
        assert (p.io_power_mW, p.io_latency_ns) == (140.18, 0.78)
        assert (p.pooling_power_mW, p.pooling_latency_ns) == (0.4, 3.125)
        assert (p.edram_power_mW, p.edram_latency_ns) == (41.1, 1.56)
        assert (p.bus_power_mW, p.bus_latency_cycles, p.router_power_mW, p.router_latency_cycles) == (7, 5, 42, 2)
        assert (p.eo_tuning_power_mW_per_fsr, p.eo_tuning_latency_ns) == (0.080, 20)
        assert (p.to_tuning_power_mW_per_fsr, p.to_tuning_latency_ns) == (275, 4000)

    def test_custom_echoes_overrides(self):
        cfg = build_config("custom", {"xpe_size": 9, "xpes_per_xpc": 2})
        assert (cfg.name, cfg.xpe_size, cfg.xpes_per_xpc) == ("custom", 9, 2)

    def test_derived_counts(self):
        cfg = build_config("OXBNN_50")
        assert cfg.xpc_count == math.ceil(1123 / 19) and cfg.tile_count == math.ceil(cfg.xpc_count / 4)
        assert cfg.tau_s == pytest.approx(20e-12)

    @pytest.mark.parametrize("name,overrides", [("TPU", {}), ("OXBNN_5", {"warp": 1}),
                                                 ("OXBNN_5", {"peripherals": {"flux": 1}}),
                                                 ("OXBNN_5", {"xpe_count": 0}),
                                                 ("OXBNN_5", {"policy": "systolic"})])
    def test_rejects_bad_input(self, name, overrides):
        with pytest.raises(ValidationError):
            build_config(name, overrides)

    @pytest.mark.parametrize("name", BUILTIN_VARIANTS)
    def test_ini_round_trip(self, name, tmp_path):
        cfg = build_config(name)
        path = tmp_path / "c.cfg"
        path.write_text(dump_config_file(cfg))
        assert load_config_file(path) == cfg

    def test_ini_sections(self, tmp_path):
        path = tmp_path / "c.cfg"
        path.write_text("[accelerator]\nvariant = ROBIN_EO\nxpe_count = 10\n"
                        "[peripherals]\nreduction_latency_ns = 0\n")
        cfg = load_config_file(path)
        assert (cfg.name, cfg.xpe_count, cfg.peripherals.reduction_latency_ns) == ("ROBIN_EO", 10, 0.0)
        path.write_text("[gpu]\nx = 1\n")
        with pytest.raises(ValidationError):
            load_config_file(path)


class TestEngine:
    def test_fifo_reservation(self):
        eng = Engine(keep_trace=True)
        a = eng.occupy("r", 0.0, 2.0, "pass")
        b = eng.occupy("r", 1.0, 2.0, "pass")
        c = eng.occupy("r", 10.0, 1.0, "pass")
        eng.run()
        assert (a, b, c) == (0.0, 2.0, 10.0)
        assert eng.audit.ok and eng.event_count == 3

    def test_callbacks_run_in_time_then_insertion_order(self):
        eng, seen = Engine(), []
        eng.at(2.0, lambda: seen.append("late"))
        eng.at(1.0, lambda: seen.append("a"))
        eng.at(1.0, lambda: seen.append("b"))
        eng.run()
        assert seen == ["a", "b", "late"]

    def test_audit_flags_overlap(self):
        events = [SimEvent(0.0, 2.0, "pass", "x"), SimEvent(1.0, 1.0, "pass", "x"),
                  SimEvent(1.5, 1.0, "pass", "y")]
        audit = audit_trace(events)
        assert len(audit.violations) == 1 and not audit.ok

    def test_rejects_unknown_kind_and_past(self):
        eng = Engine()
        with pytest.raises(SimulationError):
            eng.occupy("r", 0.0, 1.0, "teleport")
        eng.at(5.0, lambda: eng.at(1.0, lambda: None))
        with pytest.raises(SimulationError):
            eng.run()


class TestLayerTiming:
    def test_single_window_critical_path(self):
        cfg = build_config("custom", {"xpe_size": 9, "xpe_count": 1,
                                      "peripherals": zero_latency_peripherals(keep="activation")})
        m = simulate_layer(ConvWorkload(3, 3, 1, 3, 3, 1), cfg)
        assert m.latency_s == pytest.approx(cfg.tau_s + 0.78 * NS, rel=1e-12)

    def test_fig4_reduction_occupancy(self):
        base = run_layer(FIG4, small("baseline"), keep_trace=True)
        ox = run_layer(FIG4, small("oxbnn"), keep_trace=True)
        red = [e for e in base.trace if e.kind == "reduction"]
        assert len(red) == 1 and red[0].duration == pytest.approx(3.125 * NS)
        assert dict(red[0].payload)["ops"] == 2 == base.metrics.reduction_ops
        assert not [e for e in ox.trace if e.kind == "reduction"] and ox.metrics.reduction_ops == 0
        assert base.metrics.latency_s > ox.metrics.latency_s
        assert base.metrics.passes == ox.metrics.passes == 2

    def test_long_vector_pass_train(self):
        cfg = build_config("custom", {"xpe_size": 19, "xpe_count": 1})
        r = run_layer(ConvWorkload(1, 1, 4608, 1, 1, 1), cfg, granularity="pass", keep_trace=True)
        passes = [e for e in r.trace if e.kind == "pass"]
        assert len(passes) == 243
        assert all(a.end == pytest.approx(b.timestamp) for a, b in zip(passes, passes[1:]))
        assert passes[-1].end - passes[0].timestamp == pytest.approx(243 * 20e-12)
        readout = next(e for e in r.trace if e.kind == "readout")
        assert readout.timestamp == pytest.approx(passes[-1].end)

    def test_granularity_does_not_change_timing(self):
        w = ConvWorkload(6, 6, 32, 3, 3, 8, 1, 1)
        for name in ("OXBNN_5", "ROBIN_PO"):
            cfg = build_config(name, {"xpe_count": 7})
            a, b = simulate_layer(w, cfg), simulate_layer(w, cfg, granularity="pass")
            assert a.latency_s == pytest.approx(b.latency_s, rel=1e-12)
            assert a.energy_breakdown == pytest.approx(b.energy_breakdown)

    def test_slow_discharge_stalls(self):
        w = ConvWorkload(4, 4, 9, 1, 1, 4)
        fast = simulate_layer(w, small("oxbnn"))
        slow = simulate_layer(w, small("oxbnn", pca={"discharge_latency_s": 5e-9}))
        assert fast.stall_s == 0.0 and fast.event_counts.get("stall", 0) == 0
        assert slow.stall_s > 0 and slow.latency_s > fast.latency_s

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 40), st.integers(1, 6), st.integers(1, 60), st.integers(1, 12),
           st.sampled_from(["oxbnn", "baseline"]), st.integers(1, 4))
    def test_reduction_events_match_schedule(self, s, pairs, n, x, policy, alpha):
        gamma = alpha * n
        cfg = build_config("custom", {"xpe_size": n, "xpe_count": x, "policy": policy,
                                      "pca_gamma": gamma})
        m = simulate_layer(ConvWorkload(1, 1, s, 1, 1, pairs), cfg)
        sched = build_schedule(policy, pairs, s, x, n, cfg.alpha)
        assert m.reduction_ops == len(sched.reduction_ops)
        assert m.bit_ops == pairs * s


class TestEnergy:
    @pytest.mark.parametrize("name", BUILTIN_VARIANTS)
    def test_breakdown_and_metric_identities(self, name):
        cfg = build_config(name)
        w = ConvWorkload(8, 8, 64, 3, 3, 32, 1, 1)
        m = simulate_layer(w, cfg)
        assert m.total_energy_J == pytest.approx(sum(m.energy_breakdown.values()), rel=1e-9)
        assert m.energy_breakdown["oxg"] == pytest.approx(w.bit_ops * cfg.gates_per_xnor * 0.032e-9)
        assert m.fps == pytest.approx(1 / m.latency_s)
        assert m.fps_per_watt == pytest.approx(m.fps / m.total_power_W)
        assert m.total_power_W == pytest.approx(m.total_energy_J / m.latency_s)

    def test_laser_static_power(self):
        cfg = build_config("OXBNN_5")
        m = simulate_layer(ConvWorkload(4, 4, 53, 1, 1, 4), cfg)
        laser_w = 10 ** (5 / 10) * 1e-3 / 0.1 * 53 * cfg.xpc_count
        assert m.energy_breakdown["laser"] == pytest.approx(laser_w * m.latency_s)


class TestNetwork:
    def test_single_layer_adds_load_and_io(self):
        cfg = build_config("OXBNN_50")
        w = ConvWorkload(8, 8, 16, 3, 3, 16, 1, 1)
        layer, net = simulate_layer(w, cfg), simulate_network([w], cfg)
        load = max(4000 * NS, 0.78 * NS)
        assert net.latency_s == pytest.approx(load + layer.latency_s + 0.78 * NS, rel=1e-9)
        assert net.event_counts["pass"] == layer.event_counts["pass"]
        assert net.event_counts["io"] == 2 and net.event_count == layer.event_count + 3

    def test_duplicated_layer_doubles_compute_events(self):
        cfg = build_config("ROBIN_PO")
        w = ConvWorkload(8, 8, 64, 3, 3, 16, 1, 1)
        one, two = simulate_network([w], cfg), simulate_network([w, w], cfg)
        assert two.event_counts["pass"] == 2 * one.event_counts["pass"]
        assert two.reduction_ops == 2 * one.reduction_ops

    def test_pool_and_concat_layers(self):
        pool = Layer("pool", ConvWorkload(8, 8, 4, 2, 2, 4, 2, 0))
        m = simulate_network([pool, Layer("concat", None, ())], build_config("OXBNN_5"))
        assert m.event_counts["pooling"] == 1 and m.passes == 0

    def test_empty_network(self):
        with pytest.raises(ValidationError):
            simulate_network([], build_config("OXBNN_5"))

    def test_deterministic_and_audited(self):
        spec = builtin_model("vgg-small")
        a = run_network(spec, build_config("LIGHTBULB"))
        b = run_network(spec, build_config("LIGHTBULB"))
        assert a.metrics == b.metrics and a.audit_ok and a.overlaps == 0

    @settings(max_examples=25, deadline=None)
    @given(st.sampled_from(BUILTIN_VARIANTS), st.integers(1, 300), st.integers(1, 300))
    def test_more_xpes_never_slower(self, name, a, b):
        w = ConvWorkload(7, 7, 48, 3, 3, 24, 1, 1)
        lo, hi = sorted((a, b))
        slow = simulate_layer(w, build_config(name, {"xpe_count": lo}))
        fast = simulate_layer(w, build_config(name, {"xpe_count": hi}))
        assert fast.latency_s <= slow.latency_s * (1 + 1e-12)


class TestReport:
    def _metrics(self, cfg, fps_by_workload):
        w = ConvWorkload(1, 1, 9, 1, 1, 1)
        base = simulate_layer(w, build_config(cfg))
        from dataclasses import replace
        return [replace(base, workload=name, latency_s=1 / fps, fps=fps, fps_per_watt=fps)
                for name, fps in fps_by_workload.items()]

    def test_identity(self):
        rows = self._metrics("OXBNN_5", {"a": 3.0, "b": 5.0})
        rep = compare({"x": rows, "y": rows})
        c = rep.get("y")
        assert c.gmean_fps == pytest.approx(1.0) and all(r.fps == 1.0 for r in c.per_workload)

    def test_gmean(self):
        ref = self._metrics("OXBNN_5", {"a": 2.0, "b": 8.0})
        other = self._metrics("OXBNN_5", {"a": 1.0, "b": 1.0})
        assert compare({"x": ref, "y": other}).get("y").gmean_fps == pytest.approx(4.0)

    def test_mismatched_workloads(self):
        with pytest.raises(ValidationError):
            compare({"x": self._metrics("OXBNN_5", {"a": 1.0}),
                     "y": self._metrics("OXBNN_5", {"b": 1.0})})

    def test_csv_round_trip(self):
        spec = builtin_model("shufflenet_v2")
        rows = [simulate_network(spec, build_config("OXBNN_50"))]
        text = metrics_csv(rows)
        assert text.splitlines()[0] == "config,workload,latency_s,fps,power_w,fps_per_w"
        (parsed,) = read_metrics_csv(text)
        assert parsed["latency_s"] == rows[0].latency_s and parsed["fps_per_w"] == rows[0].fps_per_watt

    def test_trace_lines_monotone(self):
        r = run_layer(FIG4, small("baseline"), keep_trace=True)
        lines = format_trace(r.trace).splitlines()
        stamps = [float(line.split()[0]) for line in lines]
        assert stamps == sorted(stamps)
        assert lines[0].split()[1:3] == ["tuning", "tuning"]
