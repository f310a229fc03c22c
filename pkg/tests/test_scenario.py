"""Tests for calibration, the closed loop and summaries."""

import math
import time

import numpy as np
import pytest

from conftest import CONFIG_DIR, load_case
from dmc_sim.config import apply_overrides, load_scenario
from dmc_sim.errors import CalibrationError, InfeasibleLimitsError, StalledRunError
from dmc_sim.models import BusMode, ControlPhase, ScenarioConfig, TelemetryRecord
from dmc_sim.plant import initial_state
from dmc_sim.scenario import calibrate_operating_point, run, summarize, summarize_arrays
from dmc_sim.telemetry import summarize_csv, write_telemetry

TARGET_ENERGY = 300e6


def _settled_band(result):
    """Records of the final band episode past the grace window."""
    limits = result.config.limits
    records = result.telemetry
    band = [k for k, r in enumerate(records) if r.phase is ControlPhase.BAND_TRACKING]
    start = band[-1]
    while start > 0 and records[start - 1].phase is ControlPhase.BAND_TRACKING:
        start -= 1
    entered = records[start].time
    return [records[k] for k in range(start, band[-1] + 1)
            if records[k].time - entered >= limits.grace_window]


# ============================================================================
# CALIBRATION
# ============================================================================

class TestCalibration:
    def test_ring_operating_point(self, plant_params):
        state = initial_state(plant_params)
        assert state.generator.p_output == pytest.approx(70e6, rel=0.005)
        assert state.generator.q_output == pytest.approx(5e6, rel=0.005)
        assert state.bus_voltage == pytest.approx(4599.3, abs=2.0)
        assert plant_params.network.r_load == pytest.approx(0.304, rel=0.01)

    def test_split_plant_halves_output(self):
        params = calibrate_operating_point(ScenarioConfig(mode=BusMode.SPLIT_PLANT))
        state = initial_state(params)
        assert state.generator.p_output == pytest.approx(35e6, rel=0.005)
        assert state.generator.q_output == pytest.approx(2.5e6, rel=0.005)
        assert params.generator.x_sync == pytest.approx(0.024)

    def test_bus_voltage_target(self):
        params = calibrate_operating_point(ScenarioConfig(initial_bus_voltage=4800.0))
        state = initial_state(params)
        assert state.bus_voltage == pytest.approx(4800.0, rel=0.005)
        assert state.generator.p_output == pytest.approx(70e6, rel=0.005)
        assert state.generator.q_output == pytest.approx(5e6, rel=0.005)

    def test_no_load(self):
        params = calibrate_operating_point(ScenarioConfig(initial_p=0.0, initial_q=0.0))
        assert math.isinf(params.network.r_load)
        assert initial_state(params).bus_voltage == pytest.approx(5000.0)

    def test_over_rating(self):
        with pytest.raises(CalibrationError) as info:
            calibrate_operating_point(ScenarioConfig(initial_p=100e6))
        assert info.value.code == "CALIBRATION_FAILED"
        assert info.value.achieved["rating"] == 82e6

    def test_power_without_reactive_output(self):
        with pytest.raises(CalibrationError):
            calibrate_operating_point(ScenarioConfig(initial_q=0.0))

    def test_setpoint_holds_equilibrium(self, plant_params):
        gen = plant_params.generator
        assert gen.emf_reference == gen.emf_nominal
        assert gen.v_terminal_setpoint == pytest.approx(initial_state(plant_params).generator.v_terminal)


# ============================================================================
# SUMMARIES
# ============================================================================

def _records(phases, v_bus=4300.0, q=8e6, refs=None, t0=5.0, step=0.5):
    refs = refs or [0.0] * len(phases)
    return [
        TelemetryRecord(
            time=t0 + k * step, v_bus=v_bus, q_mtg=q, i_charge=ref, v_cap=0.0, energy=0.0,
            phase=phase, duty=0.0, reference=ref,
        )
        for k, (phase, ref) in enumerate(zip(phases, refs))
    ]


class TestSummary:
    def test_empty_stream(self, default_config):
        row = summarize([], default_config)
        assert row.empty
        assert row.max_metric is None
        assert not row.completed

    def test_idle_only_window_is_empty(self, default_config):
        row = summarize(_records([ControlPhase.IDLE] * 4, t0=0.0), default_config)
        assert row.empty

    def test_constant_stream(self, default_config):
        phases = [ControlPhase.IDLE, ControlPhase.PROBING, ControlPhase.SUSPENDED,
                  ControlPhase.FIXED_TRACKING, ControlPhase.FIXED_TRACKING, ControlPhase.DONE]
        refs = [0.0, 1000.0, 0.0, 4300.0, 4300.0, 0.0]
        row = summarize(_records(phases, refs=refs, t0=4.5), default_config)
        assert row.max_metric == row.min_metric == row.avg_metric == 4300.0
        assert row.charging_current == 4300.0
        assert row.charging_time == pytest.approx(2.0)
        assert row.completed
        assert row.test_setting == "M1_limit=0.8 kV"

    def test_incomplete_run(self, default_config):
        row = summarize(_records([ControlPhase.PROBING] * 3), default_config)
        assert not row.completed
        assert row.charging_time is None

    def test_band_from_final_episode(self):
        config = load_case("m2_10Mvar")
        phases = [ControlPhase.PROBING, ControlPhase.BAND_TRACKING, ControlPhase.BAND_TRACKING,
                  ControlPhase.SUSPENDED, ControlPhase.PROBING, ControlPhase.SUSPENDED,
                  ControlPhase.BAND_TRACKING, ControlPhase.BAND_TRACKING, ControlPhase.DONE]
        refs = [3000.0, 3474.0, 3300.0, 0.0, 3100.0, 0.0, 3300.0, 2970.0, 0.0]
        row = summarize(_records(phases, refs=refs), config)
        assert row.charging_band == pytest.approx((2970.0, 3300.0))
        assert row.metric_unit == "var"
        assert row.attenuation == 0.95

    def test_average_stays_between_extremes(self, default_config):
        rng = np.random.default_rng(5)
        values = rng.uniform(4100.0, 4200.0, 50)
        phases = [ControlPhase.PROBING.value] * 50
        row = summarize_arrays(
            np.arange(50) * 0.1 + 5.0, values, np.zeros(50), phases, np.zeros(50), 0, default_config,
        )
        assert row.min_metric <= row.avg_metric <= row.max_metric


# ============================================================================
# CLOSED LOOP
# ============================================================================

class TestRun:
    def test_infeasible_limits_fail_fast(self):
        config = load_case("m1_0.8kV")
        config = config.model_copy(update={"limits": config.limits.model_copy(update={"m1_limit": 0.0})})
        with pytest.raises(InfeasibleLimitsError):
            run(config)

    def test_watchdog(self):
        config = load_case("m1_0.8kV", charge_start=0.5, sim_duration=20.0,
                           watchdog_window=2.0, watchdog_min_progress=500.0)
        config = config.model_copy(
            update={"limits": config.limits.model_copy(update={"m1_alert": 405.0, "m1_limit": 420.0})}
        )
        with pytest.raises(StalledRunError) as info:
            run(config)
        assert info.value.code == "RUN_STALLED"

    def test_idle_before_charge_start(self):
        config = apply_overrides(load_case("m1_0.8kV"), duration=5.0)
        result = run(config)
        assert all(r.phase is ControlPhase.IDLE for r in result.telemetry)
        assert result.summary.empty
        assert result.final_state.supercap.voltage == 0.0

    def test_deterministic(self):
        config = apply_overrides(load_case("m1_0.8kV"), duration=7.0)
        first, second = run(config), run(config)
        assert first.telemetry == second.telemetry
        assert first.summary == second.summary

    def test_progress_callback(self):
        seen = []
        run(apply_overrides(load_case("m1_0.8kV"), duration=5.5), on_progress=seen.append)
        assert seen
        assert all(0.0 <= f <= 1.0 + 1e-9 for f in seen)


class TestCanonicalCases:
    @pytest.mark.parametrize("name", ["m1_0.6kV", "m1_0.8kV", "m2_6Mvar", "m2_10Mvar"])
    def test_completes_with_target_energy(self, canonical_runs, name):
        result = canonical_runs[name]
        assert result.controller.phase is ControlPhase.DONE
        assert result.summary.completed
        energy = result.final_state.supercap.stored_energy
        assert TARGET_ENERGY <= energy <= TARGET_ENERGY * 1.01
        assert result.extras["energy_cap_in_j"] == pytest.approx(energy, rel=0.005)
        assert result.extras["energy_bus_in_j"] >= result.extras["energy_cap_in_j"]
        assert result.extras["peak_blocking_v"] <= 6500.0

    @pytest.mark.parametrize(
        "name,reference_time",
        [("m1_0.6kV", 21.0), ("m1_0.8kV", 19.0), ("m2_6Mvar", 50.0), ("m2_10Mvar", 26.0)],
    )
    def test_charging_time_scale(self, canonical_runs, name, reference_time):
        time = canonical_runs[name].summary.charging_time
        assert reference_time / 3 <= time <= reference_time * 3

    @pytest.mark.parametrize("name", ["m1_0.6kV", "m1_0.8kV", "m2_6Mvar", "m2_10Mvar"])
    def test_time_respects_power_bound(self, canonical_runs, name):
        result = canonical_runs[name]
        engaged = [r for r in result.telemetry if r.phase is not ControlPhase.IDLE]
        peak_v = max(r.v_bus for r in engaged)
        peak_i = max(r.i_charge for r in result.telemetry)
        assert result.summary.charging_time * peak_v * peak_i * 1.05 >= TARGET_ENERGY

    @pytest.mark.parametrize("name", ["m1_0.6kV", "m1_0.8kV"])
    def test_bus_deviation_capped(self, canonical_runs, name):
        result = canonical_runs[name]
        limit = result.config.limits.m1_limit
        fixed = [r for r in result.telemetry if r.phase is ControlPhase.FIXED_TRACKING]
        assert fixed
        assert max(abs(5000.0 - r.v_bus) for r in fixed) <= limit
        assert result.summary.charging_current > 0

    @pytest.mark.parametrize("name", ["m2_6Mvar", "m2_10Mvar"])
    def test_reactive_power_band(self, canonical_runs, name):
        result = canonical_runs[name]
        limits = result.config.limits
        lower, upper = result.summary.charging_band
        assert lower / upper == pytest.approx(limits.band_coefficient)
        settled = _settled_band(result)
        assert settled
        assert all(r.q_mtg <= limits.q_limit for r in settled)

    def test_m1_trend(self, canonical_runs):
        tight, loose = canonical_runs["m1_0.6kV"].summary, canonical_runs["m1_0.8kV"].summary
        assert tight.charging_current < loose.charging_current
        assert tight.charging_time > loose.charging_time

    def test_m2_trend(self, canonical_runs):
        tight, loose = canonical_runs["m2_6Mvar"].summary, canonical_runs["m2_10Mvar"].summary
        assert tight.charging_band[1] < loose.charging_band[1]
        assert tight.charging_time > loose.charging_time

    def test_csv_summary_matches(self, canonical_runs, tmp_path):
        for name, result in canonical_runs.items():
            path = write_telemetry(result.telemetry, tmp_path / f"{name}.csv")
            row = summarize_csv(path, result.config, attenuation_count=result.summary.attenuation_count)
            assert row == result.summary


class TestAttenuation:
    """M2 with a fast probe and a high alert, so reactive power overshoots the limit."""

    @pytest.fixture(scope="class")
    def overshoot(self):
        config = load_case("m2_10Mvar")
        limits = config.limits.model_copy(update={"probe_slew": 50000.0, "q_alert": 9.9e6})
        return run(config.model_copy(update={"limits": limits}))

    def test_overshoot_is_attenuated(self, overshoot):
        limit = overshoot.config.limits.q_limit
        assert max(r.q_mtg for r in overshoot.telemetry) > limit
        assert overshoot.controller.attenuation_count >= 1
        assert len(overshoot.attenuations) == overshoot.controller.attenuation_count
        assert overshoot.summary.attenuation_count == overshoot.controller.attenuation_count

    def test_each_attenuation_scales_by_factor(self, overshoot):
        alpha = overshoot.config.limits.attenuation
        for event in overshoot.attenuations:
            assert event.i_max_before > 0
            assert event.i_max_after == pytest.approx(alpha * event.i_max_before, rel=1e-12)

    def test_recorded_maximum_never_grows(self, overshoot):
        events = overshoot.attenuations
        for earlier, later in zip(events, events[1:]):
            assert later.time > earlier.time
            assert later.i_max_before <= earlier.i_max_after
        counts = [r.attenuation_count for r in overshoot.telemetry]
        assert counts == sorted(counts)

    def test_completes_inside_limit(self, overshoot):
        assert overshoot.controller.phase is ControlPhase.DONE
        assert overshoot.summary.completed
        assert overshoot.final_state.supercap.stored_energy >= TARGET_ENERGY
        settled = _settled_band(overshoot)
        assert settled
        assert all(r.q_mtg <= overshoot.config.limits.q_limit for r in settled)
        lower, upper = overshoot.summary.charging_band
        assert upper == pytest.approx(overshoot.controller.i_max_recorded)


@pytest.mark.slow
class TestFullResolution:
    """The M1 pair at the shipped 50 us step, timed."""

    WALL_CLOCK_BUDGET = 10.0

    @pytest.fixture(scope="class")
    def m1_pair(self):
        timed = {}
        for name in ("m1_0.8kV", "m1_0.6kV"):
            config = load_scenario(CONFIG_DIR / f"{name}.cfg")
            started = time.perf_counter()
            result = run(config)
            timed[name] = (result, time.perf_counter() - started)
        return timed

    def test_step_is_shipped_default(self, m1_pair):
        for result, _ in m1_pair.values():
            assert result.config.dt == 50e-6

    def test_thirty_second_run_within_budget(self, m1_pair):
        result, elapsed = m1_pair["m1_0.8kV"]
        assert result.config.sim_duration <= 30.0
        assert elapsed < self.WALL_CLOCK_BUDGET, f"{result.steps} steps took {elapsed:.1f} s"

    def test_completes_with_trend(self, m1_pair):
        tight, loose = m1_pair["m1_0.6kV"][0], m1_pair["m1_0.8kV"][0]
        for result in (tight, loose):
            assert result.controller.phase is ControlPhase.DONE
            assert result.final_state.supercap.stored_energy >= TARGET_ENERGY
            fixed = [r for r in result.telemetry if r.phase is ControlPhase.FIXED_TRACKING]
            assert max(abs(5000.0 - r.v_bus) for r in fixed) <= result.config.limits.m1_limit
        assert tight.summary.charging_current < loose.summary.charging_current
        assert tight.summary.charging_time > loose.summary.charging_time
