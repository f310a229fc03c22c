"""Tests for the S1/S2 switch bank."""

import logging

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from dmc_sim.errors import DeviceOverstressError
from dmc_sim.models import SwitchActual, SwitchCommand, SwitchgearParams
from dmc_sim.switchgear import apply_gate, check_blocking, conduction_fraction, new_bank

OPEN = SwitchCommand.OPEN
CLOSED = SwitchCommand.CLOSED
DELAY = 7.3e-6


@pytest.fixture
def bank():
    return new_bank(SwitchgearParams())


class TestGate:
    def test_new_bank_is_open(self, bank):
        assert bank.s1.actual is SwitchActual.OPEN
        assert bank.s2.actual is SwitchActual.OPEN
        assert bank.s1.name == "S1"
        assert bank.s2.name == "S2"

    def test_close_is_immediate(self, bank):
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        assert bank.s1.actual is SwitchActual.CLOSED
        assert bank.s1.conducting

    def test_open_waits_for_turnoff_delay(self, bank):
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        bank = apply_gate(bank, OPEN, OPEN, 1.0)
        assert bank.s1.actual is SwitchActual.TURNING_OFF
        assert bank.s1.turnoff_deadline == pytest.approx(1.0 + DELAY)

        still = apply_gate(bank, OPEN, OPEN, 1.0 + DELAY / 2)
        assert still.s1.actual is SwitchActual.TURNING_OFF

        done = apply_gate(bank, OPEN, OPEN, 1.0 + 2 * DELAY)
        assert done.s1.actual is SwitchActual.OPEN

    def test_zero_delay_opens_at_once(self):
        bank = new_bank(SwitchgearParams(turnoff_delay=0.0))
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        bank = apply_gate(bank, OPEN, OPEN, 1e-3)
        assert bank.s1.actual is SwitchActual.OPEN

    def test_repeated_command_returns_same_bank(self, bank):
        closed = apply_gate(bank, CLOSED, OPEN, 0.0)
        assert apply_gate(closed, CLOSED, OPEN, 1e-3) is closed
        assert apply_gate(bank, OPEN, OPEN, 0.0) is bank

    def test_reclose_during_turnoff(self, bank):
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        bank = apply_gate(bank, OPEN, OPEN, 1.0)
        bank = apply_gate(bank, CLOSED, OPEN, 1.0 + DELAY / 4)
        assert bank.s1.actual is SwitchActual.CLOSED


class TestInterlock:
    def test_second_switch_rejected(self, bank, caplog):
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        with caplog.at_level(logging.WARNING, logger="dmc_sim.switchgear"):
            bank = apply_gate(bank, CLOSED, CLOSED, 1e-3)
        assert bank.s1.actual is SwitchActual.CLOSED
        assert bank.s2.actual is SwitchActual.OPEN
        assert bank.interlock_rejections == 1
        assert "S2 close rejected" in caplog.text

    def test_rejected_while_other_turns_off(self, bank):
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        bank = apply_gate(bank, OPEN, CLOSED, 1.0)
        assert bank.s1.actual is SwitchActual.TURNING_OFF
        assert bank.s2.actual is SwitchActual.OPEN
        assert bank.interlock_rejections == 1

        bank = apply_gate(bank, OPEN, CLOSED, 1.0 + 2 * DELAY)
        assert bank.s1.actual is SwitchActual.OPEN
        assert bank.s2.actual is SwitchActual.CLOSED

    def test_simultaneous_close_grants_s1(self, bank):
        bank = apply_gate(bank, CLOSED, CLOSED, 0.0)
        assert bank.s1.actual is SwitchActual.CLOSED
        assert bank.s2.actual is SwitchActual.OPEN
        assert bank.interlock_rejections == 1

    def test_random_command_stream_never_overlaps(self, bank):
        rng = np.random.default_rng(7)
        commands = rng.integers(0, 2, size=(100_000, 2))
        dt = 2e-6
        rejections = 0
        for i, (a, b) in enumerate(commands):
            bank = apply_gate(bank, CLOSED if a else OPEN, CLOSED if b else OPEN, i * dt)
            assert not (bank.s1.conducting and bank.s2.conducting)
            assert bank.interlock_rejections >= rejections
            rejections = bank.interlock_rejections
        assert rejections > 0


@given(st.lists(st.tuples(st.booleans(), st.booleans(), st.floats(min_value=0.0, max_value=1e-4)),
                max_size=60))
def test_interlock_holds_for_any_sequence(steps):
    bank = new_bank(SwitchgearParams())
    now = 0.0
    for s1, s2, gap in steps:
        now += gap
        bank = apply_gate(bank, CLOSED if s1 else OPEN, CLOSED if s2 else OPEN, now)
        assert not (bank.s1.conducting and bank.s2.conducting)


class TestConduction:
    def test_fractions(self, bank):
        assert conduction_fraction(bank.s1, 0.0, 50e-6) == 0.0
        closed = apply_gate(bank, CLOSED, OPEN, 0.0)
        assert conduction_fraction(closed.s1, 0.0, 50e-6) == 1.0
        turning = apply_gate(closed, OPEN, OPEN, 1e-3)
        assert conduction_fraction(turning.s1, 1e-3, 50e-6) == pytest.approx(DELAY / 50e-6, rel=1e-6)
        assert conduction_fraction(turning.s1, 1e-3, 1e-6) == 1.0
        assert conduction_fraction(turning.s1, 2e-3, 50e-6) == 0.0


class TestBlocking:
    def test_peak_recorded_on_open_switches_only(self, bank):
        bank = apply_gate(bank, CLOSED, OPEN, 0.0)
        bank = check_blocking(bank, 5000.0, 3000.0)
        assert bank.peak_blocking_s1 == 0.0
        assert bank.peak_blocking_s2 == 3000.0
        bank = check_blocking(bank, 5000.0, 2000.0)
        assert bank.peak_blocking == 3000.0

    def test_unchanged_peak_returns_same_bank(self, bank):
        bank = check_blocking(bank, 4000.0, 100.0)
        assert check_blocking(bank, 3900.0, 50.0) is bank

    def test_overstress(self, bank):
        with pytest.raises(DeviceOverstressError) as info:
            check_blocking(bank, 7000.0, 0.0)
        assert info.value.code == "DEVICE_OVERSTRESS"
        assert "S1" in info.value.message
