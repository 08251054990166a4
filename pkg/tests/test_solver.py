"""Transient solver tests: oracles, events, conservation, determinism."""

import numpy as np
import pytest

from oxpix.defaults import default_config
from oxpix.devices import ELEMENTARY_CHARGE, PhotodiodeParams
from oxpix.errors import SolverError
from oxpix.pixel import GateWaveform, Stimulus, Topology
from oxpix.solver import (
    EventKind,
    SolverOptions,
    charge_balance_error,
    integrate,
)


def closed_form_vpd(pd: PhotodiodeParams, i_exp: float, t: float) -> float:
    """Reference discharge of the bare pixel with full-well and floor caps."""
    if t <= pd.trst:
        return pd.vrst
    q = i_exp * (t - pd.trst)
    q = min(q, pd.fwc_electrons * ELEMENTARY_CHARGE)
    return max(pd.vrst - q / pd.c_pd, 0.0)


@pytest.mark.parametrize("i_exp", [1e-12, 1e-10, 1e-9, 2.5e-9])
def test_bare_matches_closed_form(i_exp):
    cfg = default_config(Topology.BARE_3T)
    trace = integrate(cfg, Stimulus(i_exp), SolverOptions())
    expected = closed_form_vpd(cfg.pd, i_exp, cfg.t_end)
    assert trace.final_vpd == pytest.approx(expected, abs=1e-4)


def test_bare_one_nanoamp_final():
    cfg = default_config(Topology.BARE_3T)
    trace = integrate(cfg, Stimulus(1e-9), SolverOptions())
    assert trace.final_vpd == pytest.approx(0.47, abs=1e-4)


def test_bare_pointwise_oracle_until_clamp():
    # Max pointwise |vpd(t) - closed form| <= 1e-4 V for three exposures.
    cfg = default_config(Topology.BARE_3T)
    for i_exp in (1e-12, 1e-10, 1e-9):
        trace = integrate(cfg, Stimulus(i_exp), SolverOptions())
        ref = np.array([closed_form_vpd(cfg.pd, i_exp, t) for t in trace.t])
        assert float(np.max(np.abs(trace.vpd - ref))) <= 1e-4


def test_bare_zero_stimulus_exact():
    cfg = default_config(Topology.BARE_3T)
    trace = integrate(cfg, Stimulus(0.0), SolverOptions())
    assert trace.final_vpd == cfg.pd.vrst
    assert not trace.events


def test_case_i_saturates_near_reference_level(calibrated):
    cfg = default_config(Topology.HYBRID_CASE_I, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    trace = integrate(cfg, Stimulus(1e-12), SolverOptions())
    assert trace.final_vpd == pytest.approx(1.17, abs=0.05)


def test_case_i_single_switching_event(calibrated):
    # Exactly one rupture-completion event during the programming window.
    cfg = default_config(Topology.HYBRID_CASE_I, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    trace = integrate(cfg, Stimulus(1e-12), SolverOptions())
    switching = [e for e in trace.events
                 if e.kind in (EventKind.SET_TO_RESET,
                               EventKind.SOFT_TO_HARD_RESET)]
    assert len(switching) == 1
    assert switching[0].t_event <= cfg.pd.trst


@pytest.mark.xfail(strict=True, reason=(
    "With the over-strong filament level reachable (criterion 7), the "
    "1.25 MOhm pre-programmed state sits mid-gap, so its completion is "
    "classified soft-RESET -> hard-RESET rather than SET -> RESET, and the "
    "branch-current peak sits at the start of the programming window, not "
    "within 100 ns of the 90 % crossing."))
def test_case_i_set_to_reset_coincides_with_current_peak(calibrated):
    cfg = default_config(Topology.HYBRID_CASE_I, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    trace = integrate(cfg, Stimulus(1e-12), SolverOptions())
    events = trace.events_of(EventKind.SET_TO_RESET)
    assert len(events) == 1
    t_peak = float(trace.t[int(np.argmax(trace.i_ox))])
    assert abs(t_peak - events[0].t_event) <= 100e-9


def test_bare_run_has_no_oxram_events():
    cfg = default_config(Topology.BARE_3T)
    trace = integrate(cfg, Stimulus(1e-9), SolverOptions())
    kinds = {e.kind for e in trace.events}
    assert not kinds & {EventKind.SET_TO_RESET, EventKind.RESET_TO_SET,
                        EventKind.SOFT_TO_HARD_RESET, EventKind.ABRUPT_FALL}


def test_case_iii_reset_to_set_then_abrupt_fall(calibrated):
    cfg = default_config(Topology.HYBRID_CASE_III, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    trace = integrate(cfg, Stimulus(1e-12), SolverOptions())
    r2s = trace.events_of(EventKind.RESET_TO_SET)
    fall = trace.events_of(EventKind.ABRUPT_FALL)
    assert len(r2s) == 1 and len(fall) == 1
    assert r2s[0].t_event < fall[0].t_event


def test_fwc_saturation_event_and_level():
    cfg = default_config(Topology.BARE_3T)
    trace = integrate(cfg, Stimulus(2.5e-9), SolverOptions())
    assert trace.events_of(EventKind.FWC_SATURATION)
    swing = cfg.pd.vrst - trace.final_vpd
    assert swing == pytest.approx(cfg.pd.full_well_swing, rel=1e-6)


@pytest.mark.parametrize("topo,i_exp", [
    (Topology.BARE_3T, 1e-9),
    (Topology.HYBRID_CASE_I, 0.0),
    (Topology.HYBRID_CASE_I, 2.5e-12),
    (Topology.HYBRID_CASE_I, 1e-9),
    (Topology.HYBRID_CASE_II, 1e-12),
    (Topology.HYBRID_CASE_II, 5e-10),
    (Topology.HYBRID_CASE_III, 1e-11),
])
def test_charge_conservation(calibrated, topo, i_exp):
    cfg = default_config(topo, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    trace = integrate(cfg, Stimulus(i_exp), SolverOptions())
    assert charge_balance_error(trace, cfg) <= 5e-3


def test_gap_stays_within_bounds(calibrated):
    for topo in (Topology.HYBRID_CASE_I, Topology.HYBRID_CASE_II,
                 Topology.HYBRID_CASE_III):
        cfg = default_config(topo, oxram=calibrated.oxram,
                             selector=calibrated.selector)
        trace = integrate(cfg, Stimulus(5e-11), SolverOptions())
        assert float(trace.gap.min()) >= cfg.oxram.gap_min - 1e-12
        assert float(trace.gap.max()) <= cfg.oxram.gap_max + 1e-12


def test_determinism_bit_identical(calibrated):
    cfg = default_config(Topology.HYBRID_CASE_I, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    a = integrate(cfg, Stimulus(3.3e-12), SolverOptions())
    b = integrate(cfg, Stimulus(3.3e-12), SolverOptions())
    assert np.array_equal(a.t, b.t)
    assert np.array_equal(a.vpd, b.vpd)
    assert np.array_equal(a.i_ox, b.i_ox)
    assert np.array_equal(a.gap, b.gap)
    assert a.final_vpd == b.final_vpd


def test_tolerance_convergence(calibrated):
    cfg = default_config(Topology.HYBRID_CASE_I, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    coarse = integrate(cfg, Stimulus(1e-12), SolverOptions(rel_tol=1e-5))
    fine = integrate(cfg, Stimulus(1e-12), SolverOptions(rel_tol=5e-6))
    budget = max(coarse.est_error_v, 10 * SolverOptions().abs_tol_v)
    assert abs(coarse.final_vpd - fine.final_vpd) <= budget


def test_reset_noise_is_optional_and_seeded():
    cfg = default_config(Topology.BARE_3T)
    opts = SolverOptions(reset_noise=True, noise_seed=7)
    a = integrate(cfg, Stimulus(0.0), opts)
    b = integrate(cfg, Stimulus(0.0), opts)
    assert a.vstart == b.vstart
    assert a.vstart != cfg.pd.vrst
    sigma = cfg.pd.reset_noise_sigma
    assert abs(a.vstart - cfg.pd.vrst) < 6 * sigma


def test_stiffness_diagnostic_carries_state(calibrated):
    # Forcing max_step == min_step leaves no room to resolve the collapse,
    # which must surface as a diagnostic, not a wrong answer.
    cfg = default_config(Topology.HYBRID_CASE_III, oxram=calibrated.oxram,
                         selector=calibrated.selector)
    opts = SolverOptions(max_step=1e-8, min_step=1e-8)
    with pytest.raises(SolverError) as err:
        integrate(cfg, Stimulus(1e-9), opts)
    assert "t" in err.value.detail


def test_trace_downsampling_keeps_events():
    cfg = default_config(Topology.HYBRID_CASE_III)
    opts = SolverOptions(max_trace_points=64)
    trace = integrate(cfg, Stimulus(1e-11), opts)
    assert len(trace.t) <= 3 * 64  # every k-th plus event-adjacent samples
    assert trace.events_of(EventKind.ABRUPT_FALL)
    assert np.all(np.diff(trace.t) > 0)


def test_trace_time_strictly_increasing_and_first_sample():
    cfg = default_config(Topology.HYBRID_CASE_I)
    trace = integrate(cfg, Stimulus(1e-12), SolverOptions())
    assert trace.vpd[0] == cfg.pd.vrst
    assert np.all(np.diff(trace.t) > 0)


def test_long_exposure_with_selector_disconnected():
    # 2 ms at 1 pA with the selector held off: the hybrid keeps a readable
    # level because the resistive branch is out of the circuit.
    pd = PhotodiodeParams(texp=2e-3)
    wf = GateWaveform(((0.0, pd.trst + pd.texp, 0.0),))
    cfg = default_config(Topology.HYBRID_CASE_I, pd=pd, vg_waveform=wf)
    opts = SolverOptions(max_step=1e-6)
    trace = integrate(cfg, Stimulus(1e-12), opts)
    assert trace.final_vpd == pytest.approx(1.42 - 0.2, abs=1e-3)
