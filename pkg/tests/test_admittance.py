from __future__ import annotations

import numpy as np
import pytest
from pydantic import ValidationError

from app.config import AdmittanceSettings
from app.control.admittance import (
    AdmittanceGains,
    TerminationWindow,
    WrenchFilter,
    admittance_step,
    check_termination,
    deadzone,
    select,
)
from app.control.interaction import InteractionController, InteractionOutcome, controller_trace_header
from app.sim.contact import ContactPlant

from conftest import pose_facing


@pytest.fixture
def gains(settings) -> AdmittanceGains:
    return AdmittanceGains.from_settings(settings.admittance)


def test_filter_step_response():
    filt = WrenchFilter(51)
    for i in range(51):
        out = filt.push(np.array([0, 0, 0, 0, 0, 1.0 if i >= 25 else 0.0]))
    assert out[5] == pytest.approx(26 / 51)


def test_filter_partial_window_averages_received_samples():
    filt = WrenchFilter(51)
    filt.push(np.full(6, 2.0))
    out = filt.push(np.full(6, 4.0))
    assert np.allclose(out, 3.0)


def test_filter_forgets_old_samples():
    filt = WrenchFilter(3)
    for v in (9.0, 1.0, 1.0, 1.0):
        out = filt.push(np.full(6, v))
    assert np.allclose(out, 1.0)


def test_deadzone_examples():
    assert deadzone(0.5, 0.2) == pytest.approx(0.3)
    assert deadzone(-0.5, 0.2) == pytest.approx(-0.3)
    assert deadzone(0.1, 0.2) == 0.0
    assert np.allclose(deadzone(np.array([0.2, -0.2, 1.0]), 0.2), [0.0, 0.0, 0.8])


def test_select_masks_unselected_axes(settings):
    assert np.array_equal(select(settings.admittance.selection, np.arange(1.0, 7.0)), [0, 0, 0, 0, 5, 6])


def test_zero_contact_accelerates_forward(gains):
    accel, twist = admittance_step(gains, np.zeros(6), np.zeros(6))
    assert accel[5] == pytest.approx(0.18)
    assert accel[4] == 0.0
    assert twist[5] == pytest.approx(0.18 * 0.002)


def test_velocity_decays_at_desired_force(gains):
    filtered = np.array([0, 0, 0, 0, 0, 2.0])
    twist = np.array([0, 0, 0, 0, 0.01, 0.01])
    _, new = admittance_step(gains, filtered, twist)
    assert new[4] == pytest.approx(0.01 * 0.992)
    assert new[5] == pytest.approx(0.01 * 0.95)
    assert np.allclose(gains.decay_factors()[4:], [0.992, 0.95])


def test_unselected_axes_have_zero_twist(gains):
    _, new = admittance_step(gains, np.full(6, 5.0), np.array([1.0, 1.0, 1.0, 1.0, 0.0, 0.0]))
    assert np.all(new[:4] == 0.0)


def test_unstable_gains_rejected():
    with pytest.raises(ValueError):
        AdmittanceGains(
            mass=[0, 0, 0, 0, 0.1, 10],
            damping=[0, 0, 0, 0, 400, 250],
            selection=[0, 0, 0, 0, 1, 1],
            desired=[0] * 6,
            deadzone=0.2,
            inner_dt=0.002,
        )


def test_unstable_gains_rejected_by_config():
    with pytest.raises(ValidationError):
        AdmittanceSettings(mass=[0, 0, 0, 0, 0.5, 10])


def _window(tau: float, motion: float) -> TerminationWindow:
    win = TerminationWindow(1.0, 0.002, 0.0025, 0.0005)
    for i in range(win.capacity):
        step = motion * i / (win.capacity - 1)
        win.push(tau, step, step)
    return win


@pytest.mark.parametrize(
    "tau, motion, expected",
    [
        (0.001, 0.0002, True),
        (0.01, 0.0002, False),
        (0.001, 0.002, False),
    ],
)
def test_termination_truth_table(tau, motion, expected):
    assert check_termination(_window(tau, motion), 0.0) is expected


def test_termination_needs_full_window():
    win = TerminationWindow(1.0, 0.002, 0.0025, 0.0005)
    for _ in range(win.capacity - 1):
        win.push(0.0, 0.0, 0.0)
    assert win.capacity == 501
    assert not check_termination(win)
    win.push(0.0, 0.0, 0.0)
    assert check_termination(win)


def test_controller_trace_header():
    header = controller_trace_header()
    assert header[0] == "time"
    assert len(header) == 1 + 5 * 6
    assert "filtered_fz" in header


def test_interaction_seats_branch_and_terminates(settings, scene, target):
    plant = ContactPlant(scene, target, pose_facing(target.point, 0.03), settings.plant, seed=1)
    controller = InteractionController(settings.admittance)
    result = controller.run(plant, settings.supervisor.interact_timeout, record_trace=True)
    assert result.outcome is InteractionOutcome.DONE
    assert plant.contact_occurred
    assert len(result.trace) == result.ticks
    offset = plant.branch_offset()
    assert np.hypot(*offset) < 0.01
    assert abs(result.trace[-1].filtered[5] - 2.0) <= 0.2 + 0.05


def test_interaction_times_out_in_free_space(settings, scene, target):
    plant = ContactPlant(scene, target, pose_facing(target.point, 0.15, (0.05, 0.0)), settings.plant, seed=1)
    result = InteractionController(settings.admittance).run(plant, 0.5)
    assert result.outcome is InteractionOutcome.TIMEOUT
    assert result.ticks == 250
    assert result.duration == pytest.approx(0.5)
