"""Protocol drivers: continuous-wave and pump-probe spectroscopy of the
stimulated three-wave coupling, Rabi control of the blockaded logical mode,
Wigner tomography preparation, and the coherence suite.

Each driver returns an ExperimentResult with labeled axes (frequencies in
GHz, couplings in MHz, times in ns on disk), fit outputs, and the
numerical-hygiene extrema of every trajectory it ran.
"""

import time
from dataclasses import dataclass, replace
from typing import Optional, Sequence

import numpy as np

from . import fits
from .circuit import CircuitParams, FluxSweep, ModelCoefficients, flux_sweep, \
    normal_modes
from .constants import TWO_PI
from .dynamics import (DriveSettings, FrameHamiltonian, ModulationResult,
                       build_frame, find_delta_for_g2, modulation_coupling,
                       optimal_pump_frequency, transition_frequencies)
from .lindblad import NoiseRates, SolverConfig, SteadyStateSweep, evolve, \
    steady_state
from .operators import (DensityMatrix, HilbertSpace, Operator, coherent_dm,
                        fock, fock_dm, ladder, thermal_dm)
from .pulses import Envelope, PulseSequence, calibrate_pi_pulse, \
    channel_callable, envelope_area, gaussian, plateau, square
from .results import Axis, ExperimentResult
from .tomography import (ReadoutModel, fidelity, logical_populations,
                         measured_populations, qubit_ket, reconstruct,
                         wigner_map)


@dataclass(frozen=True)
class SimContext:
    """Everything an experiment needs: device, noise, truncation, solver."""

    params: CircuitParams
    coeffs: ModelCoefficients
    sweep: FluxSweep
    rates: NoiseRates
    space: HilbertSpace
    solver: SolverConfig
    drive: DriveSettings
    seed: int = 0

    @classmethod
    def build(cls, params: Optional[CircuitParams] = None,
              rates: Optional[NoiseRates] = None,
              space: Optional[HilbertSpace] = None,
              solver: Optional[SolverConfig] = None,
              drive: Optional[DriveSettings] = None,
              seed: int = 0, sweep_span=0.25, sweep_points=41):
        params = params if params is not None else CircuitParams.canonical()
        grid = np.linspace(-sweep_span, sweep_span, sweep_points)
        return cls(
            params=params, coeffs=normal_modes(params),
            sweep=flux_sweep(params, grid),
            rates=rates if rates is not None else NoiseRates.from_mhz(
                kappa_a_mhz=0.0352, kappa_b_mhz=1.0),
            space=space if space is not None else HilbertSpace(10, 5),
            solver=solver if solver is not None else SolverConfig(),
            drive=drive if drive is not None else DriveSettings(delta=0.12),
            seed=seed)

    def readout_model(self, ideal=False) -> ReadoutModel:
        return ReadoutModel(chi_ab=self.coeffs.chi_ab,
                            kappa_b=self.rates.kappa_b,
                            kappa_a=self.rates.kappa_a, ideal=ideal)


@dataclass(frozen=True)
class WorkingPoint:
    """Pump working point: modulation output, optimal pump frequency, and
    the pump-on transition frequencies of the logical ladder."""

    delta: float
    mod: ModulationResult
    omega_p: float
    omega_01: float
    transitions: dict

    @property
    def g2_tilde(self):
        return self.mod.g2_tilde

    @property
    def splitting(self):
        """Full two-photon gap 2*sqrt(2)*|g2_tilde|."""
        return 2.0 * np.sqrt(2.0) * abs(self.mod.g2_tilde)


def working_point(ctx: SimContext, delta: float,
                  space: Optional[HilbertSpace] = None) -> WorkingPoint:
    mod = modulation_coupling(ctx.sweep, delta)
    omega_p = optimal_pump_frequency(ctx.coeffs, mod)
    ref = DriveSettings(omega_p=omega_p, delta=delta,
                        omega_d=ctx.coeffs.omega_a + mod.shift_a, eps_d=0.0)
    trans = transition_frequencies(ctx.coeffs, ref, space or ctx.space,
                                   shifts=mod.shifts, g2_amp=mod.g2_tilde)
    return WorkingPoint(delta=delta, mod=mod, omega_p=omega_p,
                        omega_01=trans["omega_01"], transitions=trans)


# ---------------------------------------------------------------------------
# shared propagation helpers

class _Hygiene:
    def __init__(self):
        self.trace = 0.0
        self.herm = 0.0
        self.eig = 0.0
        self.duration = 0.0

    def absorb(self, traj, duration):
        self.trace = max(self.trace, traj.max_trace_dev)
        self.herm = max(self.herm, traj.max_herm_dev)
        self.eig = min(self.eig, traj.min_eigenvalue)
        self.duration += duration

    def check(self):
        us = max(self.duration / 1e3, 1.0)
        if self.trace > 1e-8 * us or self.herm > 1e-9 * us or self.eig < -1e-8:
            raise ValueError(
                f"numerical hygiene violated: trace {self.trace:.2e}, "
                f"herm {self.herm:.2e}, min eig {self.eig:.2e} over "
                f"{self.duration:.0f} ns")
        return self

    def meta(self):
        return {"max_trace_dev": self.trace, "max_herm_dev": self.herm,
                "min_eigenvalue": self.eig,
                "simulated_ns": self.duration}


def _run_windows(ctx, rho, h_of_t, space, windows, rates=None, hyg=None,
                 observables=None):
    """Propagate through (t0, t1, dt) windows, accumulating hygiene.

    Returns (final rho array, trajectory list at recorded windows)."""
    rates = rates if rates is not None else ctx.rates
    hyg = hyg if hyg is not None else _Hygiene()
    trajs = []
    for (t0, t1, dt) in windows:
        if t1 <= t0:
            continue
        cfg = replace(ctx.solver, dt=dt, method="rk4")
        traj = evolve(rho, h_of_t, rates, cfg, (t0, t1), space=space,
                      observables=observables, check_hygiene=False)
        hyg.absorb(traj, t1 - t0)
        rho = traj.final
        trajs.append(traj)
    return rho, hyg, trajs


def _n_op(space):
    a = ladder(space, "logical").matrix
    return a.conj().T @ a


def _proj_logical(space, n):
    m = np.zeros((space.dim, space.dim), dtype=complex)
    for ib in range(space.n_b):
        m[space.index(n, ib), space.index(n, ib)] = 1.0
    return m


def _homodyne_proxy(rho_mat, space, readout: ReadoutModel):
    """Blockade transmission probed at the vacuum peak: Lorentzian-weighted
    sum of logical photon-number populations."""
    dm = DensityMatrix(space, rho_mat)
    p = logical_populations(dm)
    S = readout.selectivity(len(p))
    return float(S[0] @ p)


# ---------------------------------------------------------------------------
# spectroscopy of the stimulated coupling (continuous-wave, steady state)

def two_tone_spectroscopy(ctx: SimContext, delta: Optional[float] = None,
                          probe_offsets=None, pump_offsets=None,
                          eps_probe=None,
                          space: Optional[HilbertSpace] = None
                          ) -> ExperimentResult:
    """Blockade transmission vs (probe, pump) frequency with the flux pump
    on: the hybridized |2_a 0_b> / |0_a 1_b> branches produce a normal-mode
    splitting whose hyperbola fit returns the stimulated coupling."""
    t_wall = time.time()
    delta = delta if delta is not None else ctx.drive.delta
    space = space or HilbertSpace(5, 3)
    wp = working_point(ctx, delta, space)
    g2t = wp.g2_tilde
    scale = max(np.sqrt(2.0) * abs(g2t), 20.0 * ctx.rates.kappa_b, 1e-4)

    if pump_offsets is None:
        pump_offsets = np.linspace(-1.6, 1.6, 13) * scale
    if probe_offsets is None:
        probe_offsets = np.linspace(-2.1, 2.1, 121) * scale
    pump_offsets = np.asarray(pump_offsets, float)
    probe_offsets = np.asarray(probe_offsets, float)
    eps_probe = eps_probe if eps_probe is not None \
        else 0.05 * max(ctx.rates.kappa_b, 1e-4)

    co = ctx.coeffs
    wa = co.omega_a + wp.mod.shift_a
    wb = co.omega_b + wp.mod.shift_b
    pump_grid = wp.omega_p + pump_offsets
    probe_grid = wb + probe_offsets

    a = ladder(space, "logical").matrix
    b = ladder(space, "blockade").matrix
    ad, bd = a.conj().T, b.conj().T
    na, nb = ad @ a, bd @ b
    v3 = ad @ ad @ b
    h_fix = (g2t * (v3 + v3.conj().T) + eps_probe * (b + bd)
             + co.chi_ab * (na @ nb)
             + 0.5 * co.chi_aa * (ad @ ad @ a @ a)
             + 0.5 * co.chi_bb * (bd @ bd @ b @ b))

    da0 = wa - 0.5 * (pump_grid[0] + probe_grid[0])
    db0 = wb - probe_grid[0]
    sweep_solver = SteadyStateSweep(h_fix, [na, nb], ctx.rates, space,
                                    check_point=(da0, db0))
    resp = np.empty((len(pump_grid), len(probe_grid)))
    for i, wpump in enumerate(pump_grid):
        for j, wprobe in enumerate(probe_grid):
            da = wa - 0.5 * (wpump + wprobe)
            db = wb - wprobe
            rho_ss = sweep_solver.solve((da, db))
            resp[i, j] = abs(np.trace(rho_ss @ b))

    lower = np.full(len(pump_grid), np.nan)
    upper = np.full(len(pump_grid), np.nan)
    resolved = np.zeros(len(pump_grid), dtype=bool)
    for i in range(len(pump_grid)):
        peaks = fits.local_maxima(resp[i], min_fraction=0.15)[:2]
        if len(peaks) == 2:
            c = sorted(fits.refine_peak(probe_grid, resp[i], k)[0]
                       for k in peaks)
            lower[i], upper[i] = c
            resolved[i] = True
        elif len(peaks) == 1:
            lower[i] = upper[i] = fits.refine_peak(probe_grid, resp[i],
                                                   peaks[0])[0]

    fit_out = {"injected_g2_tilde_mhz": abs(g2t) / TWO_PI * 1e3,
               "delta_phi0": delta}
    try:
        cross = fits.avoided_crossing_fit(pump_grid[resolved],
                                          lower[resolved], upper[resolved],
                                          slope_sign=-1,
                                          g0=abs(g2t))
        cross["g2_tilde_mhz"] = cross["g"] / TWO_PI * 1e3
        cross["sqrt2_g2_mhz"] = np.sqrt(2.0) * cross["g"] / TWO_PI * 1e3
        cross["min_gap_mhz"] = cross["min_gap"] / TWO_PI * 1e3
        cross["low_confidence"] = bool(
            2.0 * np.sqrt(2.0) * abs(g2t) < max(ctx.rates.kappa_b,
                                                ctx.rates.kappa_a))
        fit_out["crossing"] = cross
    except fits.FitError as exc:
        fit_out["crossing"] = {"error": str(exc), "low_confidence": True}

    axes = [Axis("pump_frequency", "GHz", pump_grid / TWO_PI),
            Axis("probe_frequency", "GHz", probe_grid / TWO_PI)]
    data = {"blockade_response": resp,
            "branch_lower_GHz": lower / TWO_PI,
            "branch_upper_GHz": upper / TWO_PI}
    meta = {"delta_phi0": delta, "g2_tilde_mhz": abs(g2t) / TWO_PI * 1e3,
            "omega_p_star_GHz": wp.omega_p / TWO_PI,
            "eps_probe_mhz": eps_probe / TWO_PI * 1e3,
            "truncation": (space.n_a, space.n_b),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("two_tone", axes, data, fit_out, meta)


def pump_probe_spectroscopy(ctx: SimContext, delta: Optional[float] = None,
                            pump_offsets=None,
                            space: Optional[HilbertSpace] = None
                            ) -> ExperimentResult:
    """Positions of the |1_a> -> |2+-> transitions versus pump frequency:
    the avoided crossing seen when probing the logical resonator after
    populating |1_a>, fitted for sqrt(2) g2_tilde."""
    t_wall = time.time()
    delta = delta if delta is not None else ctx.drive.delta
    space = space or HilbertSpace(6, 3)
    wp = working_point(ctx, delta, space)
    g2t = wp.g2_tilde
    scale = max(np.sqrt(2.0) * abs(g2t), 1e-3)
    if pump_offsets is None:
        pump_offsets = np.linspace(-1.6, 1.6, 41) * scale
    pump_offsets = np.asarray(pump_offsets, float)
    pump_grid = wp.omega_p + pump_offsets

    lower = np.empty(len(pump_grid))
    upper = np.empty(len(pump_grid))
    omega01 = np.empty(len(pump_grid))
    for i, wpump in enumerate(pump_grid):
        ref = DriveSettings(omega_p=wpump, delta=delta,
                            omega_d=ctx.coeffs.omega_a + wp.mod.shift_a)
        tr = transition_frequencies(ctx.coeffs, ref, space,
                                    shifts=wp.mod.shifts, g2_amp=g2t)
        # probe resonances on the populated |1_a> state
        lower[i] = 2.0 * tr["omega_02m_half"] - tr["omega_01"]
        upper[i] = 2.0 * tr["omega_02p_half"] - tr["omega_01"]
        omega01[i] = tr["omega_01"]

    gap = upper - lower
    # two-photon drive detunings from the single-photon line
    two_photon_lo = (lower - omega01) / 2.0
    two_photon_hi = (upper - omega01) / 2.0
    iso = np.minimum(np.abs(two_photon_lo), np.abs(two_photon_hi))
    window = pump_grid[iso >= 0.7 * iso.max()]

    cross = fits.avoided_crossing_fit(pump_grid, lower, upper, slope_sign=+1,
                                      g0=abs(g2t))
    cross["g2_tilde_mhz"] = cross["g"] / TWO_PI * 1e3
    cross["sqrt2_g2_mhz"] = np.sqrt(2.0) * cross["g"] / TWO_PI * 1e3
    cross["min_gap_mhz"] = float(gap.min()) / TWO_PI * 1e3

    axes = [Axis("pump_frequency", "GHz", pump_grid / TWO_PI)]
    data = {"transition_lower_GHz": lower / TWO_PI,
            "transition_upper_GHz": upper / TWO_PI,
            "single_photon_GHz": omega01 / TWO_PI,
            "isolation_MHz": iso / TWO_PI * 1e3}
    meta = {"delta_phi0": delta, "g2_tilde_mhz": abs(g2t) / TWO_PI * 1e3,
            "omega_p_star_GHz": wp.omega_p / TWO_PI,
            "optimal_window_GHz": [float(window.min() / TWO_PI),
                                   float(window.max() / TWO_PI)],
            "truncation": (space.n_a, space.n_b),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("pump_probe", axes, data,
                            {"crossing": cross}, meta)


def g2_vs_amplitude(ctx: SimContext, deltas=None, include_target_mhz=25.0,
                    space: Optional[HilbertSpace] = None) -> ExperimentResult:
    """Stimulated coupling vs flux modulation amplitude, each point
    calibrated through a two-tone fit, with a linear fit of the trend."""
    t_wall = time.time()
    if deltas is None:
        deltas = [0.02, 0.04, 0.06, 0.09]
        if include_target_mhz:
            target = TWO_PI * include_target_mhz * 1e-3 / np.sqrt(2.0)
            deltas.append(find_delta_for_g2(ctx.sweep, target))
    deltas = np.asarray(sorted(deltas), float)

    fitted = np.empty(len(deltas))
    injected = np.empty(len(deltas))
    for i, d in enumerate(deltas):
        res = two_tone_spectroscopy(
            ctx, delta=float(d),
            pump_offsets=np.linspace(-1.2, 1.2, 9)
            * max(np.sqrt(2.0) * abs(modulation_coupling(ctx.sweep, float(d)).g2_tilde),
                  20.0 * ctx.rates.kappa_b),
            space=space)
        injected[i] = res.fits["injected_g2_tilde_mhz"]
        cr = res.fits["crossing"]
        fitted[i] = cr.get("g2_tilde_mhz", np.nan)

    lin = fits.linear_fit(deltas, fitted)
    i0 = int(np.argmin(np.abs(ctx.sweep.flux)))
    slope_ref = abs(ctx.sweep.dg2_dphi[i0]) / TWO_PI * 1e3
    axes = [Axis("delta", "phi0", deltas)]
    data = {"g2_tilde_fit_MHz": fitted, "g2_tilde_injected_MHz": injected,
            "sqrt2_g2_fit_MHz": np.sqrt(2.0) * fitted}
    fit_out = {"linear": lin, "slope_MHz_per_phi0": lin["slope"],
               "flux_slope_reference_MHz_per_phi0": slope_ref,
               "r2": lin["r2"]}
    meta = {"wall_time_s": time.time() - t_wall}
    return ExperimentResult("g2_sweep", axes, data, fit_out, meta)


# ---------------------------------------------------------------------------
# time-domain control of the blockaded logical mode

def _sequence_frames(ctx, wp, seq: PulseSequence, omega_d, space,
                     extra_detuning=0.0):
    """Frame Hamiltonian callback following a pulse sequence.

    The pump channel carries the flux amplitude (units of delta); it is
    normalized so the three-wave coupling scales linearly and the induced
    shifts quadratically with the instantaneous amplitude.  The logical
    drive channel carries the full complex drive amplitude in rad/ns.
    """
    delta = wp.delta
    pump_raw = channel_callable(seq, "flux_pump")
    drive_raw = channel_callable(seq, "logical_drive")

    def pump_env(t):
        return np.real(pump_raw(t)) / delta if delta else 0.0

    drive = DriveSettings(omega_p=wp.omega_p, delta=delta, omega_d=0.0,
                          eps_d=0.0)
    frame = build_frame(ctx.coeffs, drive, shifts=wp.mod.shifts,
                        g2_amp=wp.g2_tilde, pump_env=pump_env,
                        drive_env=drive_raw,
                        omega_d=np.asarray(omega_d) + extra_detuning,
                        eps_d=1.0)
    return frame.bound(space)


def _pump_envelope(delta, t_on, t_off):
    return square(delta, t_on, t_off - t_on)


@dataclass
class PulseCalibration:
    amp_pi: float
    amp_pi2: float
    four_sigma: float
    final_population: float


def calibrate_logical_pi(ctx: SimContext, wp: WorkingPoint,
                         space: Optional[HilbertSpace] = None,
                         four_sigma=100.0, dt=0.5,
                         rates: Optional[NoiseRates] = None
                         ) -> PulseCalibration:
    """Golden-section calibration of the resonant pi amplitude at the
    pump-on working point (drive pulse of the given length)."""
    space = space or HilbertSpace(6, 3)
    rates = rates if rates is not None else ctx.rates
    margin = 10.0
    t_end = four_sigma + 2 * margin
    n_op = _n_op(space)
    rho0 = fock_dm(space, 0, 0).matrix

    def system(env):
        seq = PulseSequence({
            "flux_pump": [_pump_envelope(wp.delta, 0.0, t_end)],
            "logical_drive": [env]})
        h = _sequence_frames(ctx, wp, seq, wp.omega_01, space)
        rho, _, _ = _run_windows(ctx, rho0, h, space,
                                 [(0.0, t_end, dt)], rates=rates)
        return np.real(np.trace(rho @ n_op))

    area = envelope_area(gaussian(1.0, margin, four_sigma))
    est = np.pi / (2.0 * area)
    shape = gaussian(est, margin, four_sigma, phase=np.pi / 2)
    amp = calibrate_pi_pulse(system, shape, amp_max=1.6 * est,
                             amp_min=0.5 * est, tol=1e-4)
    final = system(gaussian(amp, margin, four_sigma, phase=np.pi / 2))
    return PulseCalibration(amp_pi=amp, amp_pi2=amp / 2.0,
                            four_sigma=four_sigma, final_population=final)


def rabi_time_domain(ctx: SimContext, delta: Optional[float] = None,
                     eps_mhz=None, t_max=4000.0, dt=1.0,
                     space: Optional[HilbertSpace] = None
                     ) -> ExperimentResult:
    """Resonant continuous drive of the blockaded mode: population
    oscillations whose angular frequency is 2*eps_d (vacuum Rabi of the
    two-level reduction), fitted per drive amplitude."""
    t_wall = time.time()
    delta = delta if delta is not None else ctx.drive.delta
    space = space or HilbertSpace(6, 3)
    wp = working_point(ctx, delta, space)
    if eps_mhz is None:
        eps_mhz = np.linspace(0.3, 1.2, 5)
    eps_mhz = np.asarray(eps_mhz, float)
    eps = TWO_PI * eps_mhz * 1e-3

    drive = DriveSettings(omega_p=wp.omega_p, delta=delta, omega_d=0.0,
                          eps_d=0.0)
    frame = build_frame(ctx.coeffs, drive, shifts=wp.mod.shifts,
                        g2_amp=wp.g2_tilde, omega_d=wp.omega_01, eps_d=eps)
    h = frame.bound(space)
    rho0 = np.broadcast_to(fock_dm(space, 0, 0).matrix,
                           (len(eps), space.dim, space.dim)).copy()
    cfg = replace(ctx.solver, dt=dt, record_stride=4)
    traj = evolve(rho0, h, ctx.rates, cfg, (0.0, t_max), space=space,
                  observables={"n_a": _n_op(space)}, check_hygiene=False)
    hyg = _Hygiene()
    hyg.absorb(traj, t_max)
    hyg.check()

    pops = np.real(traj.expectations["n_a"])  # (T, E)
    rabi = np.empty(len(eps))
    for k in range(len(eps)):
        fit = fits.damped_cosine_fit(traj.times, pops[:, k],
                                     freq0=2.0 * eps[k])
        rabi[k] = fit["freq"]
    lin = fits.linear_fit(eps, rabi)

    axes = [Axis("eps_d", "MHz", eps_mhz)]
    data = {"rabi_freq_MHz": rabi / TWO_PI * 1e3}
    fit_out = {"linear": lin, "slope": lin["slope"], "r2": lin["r2"]}
    meta = {"delta_phi0": delta, "omega_01_GHz": wp.omega_01 / TWO_PI,
            "truncation": (space.n_a, space.n_b), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("rabi_slope", axes, data, fit_out, meta)


def rabi_chevron(ctx: SimContext, delta: Optional[float] = None,
                 freq_offsets_mhz=None, eps_mhz=None, four_sigma=1000.0,
                 dt=0.5, space: Optional[HilbertSpace] = None
                 ) -> ExperimentResult:
    """Pulsed spectroscopy map: narrow-band Gaussian drive of varying
    frequency and amplitude with the pump on, readout after pump-off.

    Records the final logical population and the blockade homodyne proxy;
    locates the single-photon line and the two-photon lines at
    omega_01 +- sqrt(2) g2_tilde / 2."""
    t_wall = time.time()
    delta = delta if delta is not None else ctx.drive.delta
    space = space or ctx.space
    wp = working_point(ctx, delta, space)
    half_split_mhz = np.sqrt(2.0) * abs(wp.g2_tilde) / 2.0 / TWO_PI * 1e3

    if freq_offsets_mhz is None:
        freq_offsets_mhz = np.linspace(-1.6, 1.6, 33) * half_split_mhz
    if eps_mhz is None:
        eps_mhz = np.geomspace(0.1, 2.5, 7)
    freq_offsets_mhz = np.asarray(freq_offsets_mhz, float)
    eps_mhz = np.asarray(eps_mhz, float)
    omega_d = wp.omega_01 + TWO_PI * freq_offsets_mhz * 1e-3

    margin = 15.0
    t_end = four_sigma + 2 * margin
    drive_pulse = gaussian(1.0, margin, four_sigma, phase=np.pi / 2)
    n_op = _n_op(space)
    readout = ctx.readout_model()

    pop = np.empty((len(eps_mhz), len(freq_offsets_mhz)))
    proxy = np.empty_like(pop)
    hyg = _Hygiene()
    rho0 = np.broadcast_to(
        fock_dm(space, 0, 0).matrix,
        (len(omega_d), space.dim, space.dim)).copy()
    drive0 = DriveSettings(omega_p=wp.omega_p, delta=delta, omega_d=0.0,
                           eps_d=0.0)
    for k, e_mhz in enumerate(eps_mhz):
        eps = TWO_PI * e_mhz * 1e-3
        env = drive_pulse

        def drive_env(t, _eps=eps, _env=env):
            return _eps * _env.value(t)

        frame = build_frame(ctx.coeffs, drive0, shifts=wp.mod.shifts,
                            g2_amp=wp.g2_tilde, drive_env=drive_env,
                            omega_d=omega_d, eps_d=1.0)
        h = frame.bound(space)
        rho, hyg, _ = _run_windows(ctx, rho0, h, space,
                                   [(0.0, t_end, dt)], hyg=hyg)
        for j in range(len(omega_d)):
            pop[k, j] = np.real(np.trace(rho[j] @ n_op))
            proxy[k, j] = _homodyne_proxy(rho[j], space, readout)
    hyg.check()

    # locate lines on the strongest row with visible two-photon features
    fit_out = {"predicted_omega_01_GHz": wp.omega_01 / TWO_PI,
               "predicted_two_photon_offsets_MHz":
                   [-half_split_mhz, half_split_mhz]}
    row = pop[-1]
    peaks = fits.local_maxima(row, min_fraction=0.1)
    centers = sorted(fits.refine_peak(freq_offsets_mhz, row, i)[0]
                     for i in peaks[:5])
    fit_out["strong_row_peaks_MHz"] = centers

    axes = [Axis("eps_d", "MHz", eps_mhz),
            Axis("drive_offset", "MHz", freq_offsets_mhz)]
    data = {"final_population": pop, "homodyne_proxy": proxy}
    meta = {"delta_phi0": delta, "four_sigma_ns": four_sigma,
            "omega_01_GHz": wp.omega_01 / TWO_PI,
            "sqrt2_g2_over_2_MHz": half_split_mhz,
            "truncation": (space.n_a, space.n_b), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("rabi_chevron", axes, data, fit_out, meta)


def fwhm_vs_amplitude(ctx: SimContext, delta: Optional[float] = None,
                      eps_mhz=None, n_detuning=41,
                      space: Optional[HilbertSpace] = None
                      ) -> ExperimentResult:
    """Steady-state lineshape of the driven blockaded mode vs drive
    amplitude: Lorentzian FWHM per amplitude and the power-broadening
    line against the two-level closed form."""
    t_wall = time.time()
    delta = delta if delta is not None else ctx.drive.delta
    space = space or HilbertSpace(5, 2)
    wp = working_point(ctx, delta, space)
    if eps_mhz is None:
        eps_mhz = np.linspace(0.1, 1.0, 8)
    eps_mhz = np.asarray(eps_mhz, float)

    kappa = ctx.rates.kappa_a
    t1 = 1.0 / kappa
    t2 = 1.0 / (0.5 * kappa + 0.5 * ctx.rates.kappa_phi_a)
    co = ctx.coeffs

    a = ladder(space, "logical").matrix
    b = ladder(space, "blockade").matrix
    ad, bd = a.conj().T, b.conj().T
    na, nb = ad @ a, bd @ b
    v3 = ad @ ad @ b
    h_x = a + ad
    h_kerr = (co.chi_ab * (na @ nb) + 0.5 * co.chi_aa * (ad @ ad @ a @ a)
              + 0.5 * co.chi_bb * (bd @ bd @ b @ b))
    h_pump = wp.g2_tilde * (v3 + v3.conj().T)

    sweep_solver = SteadyStateSweep(h_kerr + h_pump, [na, nb, h_x],
                                    ctx.rates, space,
                                    check_point=(0.0, 0.0,
                                                 TWO_PI * eps_mhz[0] * 1e-3))
    fwhm = np.empty(len(eps_mhz))
    fit_quality = np.empty(len(eps_mhz))
    expected = np.empty(len(eps_mhz))
    for k, e_mhz in enumerate(eps_mhz):
        eps = TWO_PI * e_mhz * 1e-3
        omega_rabi = 2.0 * eps
        width = np.sqrt(1.0 / t2**2 + omega_rabi**2 * t1 / t2)
        expected[k] = width
        det = np.linspace(-4.0, 4.0, n_detuning) * width
        pops = np.empty(n_detuning)
        for j, dd in enumerate(det):
            # drive at omega_01 + dd: detunings follow the drive frequency
            wd = wp.omega_01 + dd
            da = co.omega_a + wp.mod.shift_a - wd
            db = co.omega_b + wp.mod.shift_b - 2.0 * wd + wp.omega_p
            rho_ss = sweep_solver.solve((da, db, eps))
            pops[j] = np.real(np.trace(rho_ss @ na))
        fit = fits.lorentzian_fit(det, pops)
        fwhm[k] = fit["fwhm"]
        fit_quality[k] = fit["r2"]

    # regression of ordinary-frequency FWHM on ordinary Rabi frequency
    # (both MHz): the closed form FWHM = Omega sqrt(T1/T2)/pi gives the
    # dimensionless slope 2 sqrt(T1/T2)
    rabi_mhz = 2.0 * eps_mhz
    strong = rabi_mhz * 1e-3 * TWO_PI * np.sqrt(t1 * t2) > 3.0
    lin = fits.linear_fit(rabi_mhz[strong], fwhm[strong] / TWO_PI * 1e3)
    slope_ref = 2.0 * np.sqrt(t1 / t2)

    axes = [Axis("eps_d", "MHz", eps_mhz)]
    data = {"fwhm_MHz": fwhm / TWO_PI * 1e3,
            "fwhm_expected_MHz": expected / TWO_PI * 1e3,
            "fit_r2": fit_quality}
    fit_out = {"linear_strong_drive": lin,
               "slope_fit": lin["slope"],
               "slope_bloch": float(slope_ref),
               "t1_ns": t1, "t2_ns": t2}
    meta = {"delta_phi0": delta, "truncation": (space.n_a, space.n_b),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("fwhm", axes, data, fit_out, meta)

# ---------------------------------------------------------------------------
# coherence suite

def coherent_state_decay(ctx: SimContext, alpha0=3.0, delays=None,
                         n_a: Optional[int] = None, dt=4.0
                         ) -> ExperimentResult:
    """Vacuum-return measurement of the cavity decay rate: displace to
    alpha0, wait, read the vacuum population P0(tau) = exp(-|alpha|^2
    e^{-kappa tau}), fit the double exponential.  Runs without flux
    modulation; the thermal channel is disabled so the fit probes pure
    photon loss."""
    t_wall = time.time()
    if n_a is None:
        n_a = int(np.ceil(abs(alpha0) ** 2 + 6.0 * abs(alpha0))) + 4
    space = HilbertSpace(n_a, 1)
    rates = replace(ctx.rates, n_thermal=0.0, kappa_phi_a=0.0)
    kappa = rates.kappa_a
    if delays is None:
        delays = np.linspace(0.0, 2.5 / kappa, 26)
    delays = np.asarray(delays, float)

    rho = coherent_dm(space, alpha0).matrix
    p0_op = _proj_logical(space, 0)
    p0 = np.empty(len(delays))
    p0[0] = np.real(np.trace(rho @ p0_op))
    hyg = _Hygiene()
    for i in range(1, len(delays)):
        rho, hyg, _ = _run_windows(ctx, rho, None, space,
                                   [(delays[i - 1], delays[i], dt)],
                                   rates=rates, hyg=hyg)
        p0[i] = np.real(np.trace(rho @ p0_op))
    hyg.check()

    fit = fits.vacuum_return_fit(delays, p0, n0_guess=abs(alpha0) ** 2,
                                 kappa_guess=kappa)
    fit["kappa_fit_mhz"] = fit["kappa"] / TWO_PI * 1e3
    fit["kappa_injected_mhz"] = kappa / TWO_PI * 1e3
    fit["T_kappa_us"] = 1.0 / fit["kappa"] / 1e3

    axes = [Axis("delay", "ns", delays)]
    data = {"p0": p0}
    meta = {"alpha0": alpha0, "truncation": (n_a, 1), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("coherent_decay", axes, data, fit, meta)


def _qubit_pulse(cal: PulseCalibration, t0, kind, phase):
    """kind: 'pi' or 'pi2'."""
    amp = cal.amp_pi if kind == "pi" else cal.amp_pi2
    return gaussian(amp, t0, cal.four_sigma, phase=phase)


def t1_experiment(ctx: SimContext, delays=None, four_sigma=100.0,
                  space: Optional[HilbertSpace] = None, dt=0.5,
                  delay_dt=4.0) -> ExperimentResult:
    """Energy relaxation of the prepared |1_a> state: calibrated pi pulse
    with the pump on, pump off during the delay, exponential fit of the
    logical population."""
    t_wall = time.time()
    space = space or HilbertSpace(6, 3)
    wp = working_point(ctx, ctx.drive.delta, space)
    cal = calibrate_logical_pi(ctx, wp, space, four_sigma, dt)
    kappa = ctx.rates.kappa_a
    if delays is None:
        delays = np.linspace(0.0, 3.0 / kappa, 25)
    delays = np.asarray(delays, float)

    margin = 10.0
    t_prep = four_sigma + 2 * margin
    seq = PulseSequence({
        "flux_pump": [_pump_envelope(wp.delta, 0.0, t_prep)],
        "logical_drive": [_qubit_pulse(cal, margin, "pi", np.pi / 2)]})
    h = _sequence_frames(ctx, wp, seq, wp.omega_01, space)
    rho0 = fock_dm(space, 0, 0).matrix
    hyg = _Hygiene()
    rho, hyg, _ = _run_windows(ctx, rho0, h, space, [(0.0, t_prep, dt)],
                               hyg=hyg)

    n_op = _n_op(space)
    pops = np.empty(len(delays))
    pops[0] = np.real(np.trace(rho @ n_op))
    for i in range(1, len(delays)):
        rho, hyg, _ = _run_windows(ctx, rho, None, space,
                                   [(delays[i - 1], delays[i], delay_dt)],
                                   hyg=hyg)
        pops[i] = np.real(np.trace(rho @ n_op))
    hyg.check()

    fit = fits.exp_decay_fit(delays, pops, tau0=1.0 / kappa)
    fit["T1_us"] = fit["tau"] / 1e3
    fit["T1_injected_us"] = 1.0 / kappa / 1e3
    axes = [Axis("delay", "ns", delays)]
    data = {"population": pops}
    meta = {"pi_amp_radns": cal.amp_pi, "four_sigma_ns": four_sigma,
            "prepared_population": float(pops[0]),
            "truncation": (space.n_a, space.n_b), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("t1", axes, data, fit, meta)


def _ramsey_like(ctx, wp, cal, space, tau, phase2, middle_pi, dt, delay_dt,
                 hyg, quasistatic=None):
    """One (phase-resolved) Ramsey or echo sequence; returns P1 final.

    quasistatic: optional array of frozen detunings (rad/ns), batched as a
    stack; the returned population is averaged over realizations."""
    margin = 10.0
    tp = cal.four_sigma + 2 * margin
    extra = 0.0 if quasistatic is None else np.asarray(quasistatic)

    pulses = [_qubit_pulse(cal, margin, "pi2", np.pi / 2)]
    if middle_pi:
        t_pi = tp + 0.5 * tau
        pulses.append(_qubit_pulse(cal, t_pi + margin, "pi", np.pi / 2))
        t2_start = t_pi + tp + 0.5 * tau
        t_end = t2_start + tp
    else:
        t2_start = tp + tau
        t_end = t2_start + tp
    pulses.append(_qubit_pulse(cal, t2_start + margin, "pi2",
                               np.pi / 2 + phase2))
    seq = PulseSequence({
        "flux_pump": [_pump_envelope(wp.delta, 0.0, t_end)],
        "logical_drive": pulses})
    h = _sequence_frames(ctx, wp, seq, wp.omega_01, space,
                         extra_detuning=extra)

    if quasistatic is None:
        rho0 = fock_dm(space, 0, 0).matrix
    else:
        rho0 = np.broadcast_to(fock_dm(space, 0, 0).matrix,
                               (len(extra), space.dim, space.dim)).copy()
    # fine steps inside pulses, coarse during free evolution
    if middle_pi:
        windows = [(0.0, tp, dt), (tp, t_pi, delay_dt),
                   (t_pi, t_pi + tp, dt), (t_pi + tp, t2_start, delay_dt),
                   (t2_start, t_end, dt)]
    else:
        windows = [(0.0, tp, dt), (tp, t2_start, delay_dt),
                   (t2_start, t_end, dt)]
    rho, hyg, _ = _run_windows(ctx, rho0, h, space, windows, hyg=hyg)
    p1_op = _proj_logical(space, 1)
    val = np.einsum("...ij,ji->...", rho, p1_op)
    return float(np.mean(np.real(val)))


def ramsey_experiment(ctx: SimContext, delays=None, fringe_mhz=0.8,
                      four_sigma=100.0, space: Optional[HilbertSpace] = None,
                      dt=0.5, delay_dt=4.0, quasistatic_sigma=0.0,
                      n_realizations=1) -> ExperimentResult:
    """Phase coherence via two pi/2 pulses with an artificial fringe: the
    azimuth of the second pulse advances by omega_fr * tau.  Phase cycling
    (second pulse shifted by pi) isolates the fringe contrast, which is fit
    to a damped cosine for T2*."""
    t_wall = time.time()
    space = space or HilbertSpace(5, 3)
    wp = working_point(ctx, ctx.drive.delta, space)
    cal = calibrate_logical_pi(ctx, wp, space, four_sigma, dt)
    kappa = ctx.rates.kappa_a
    if delays is None:
        delays = np.linspace(20.0, 2.8 / max(kappa, 1e-6), 25)
    delays = np.asarray(delays, float)
    omega_fr = TWO_PI * fringe_mhz * 1e-3
    if delays.size >= 2 and omega_fr < 2.0 * TWO_PI / delays.max():
        import warnings
        warnings.warn("fringe frequency below 2 periods over the delay "
                      "range; fit may be underdetermined", RuntimeWarning,
                      stacklevel=2)

    noise = None
    if quasistatic_sigma > 0.0:
        rng = np.random.default_rng(ctx.seed)
        noise = rng.normal(0.0, quasistatic_sigma, size=n_realizations)

    hyg = _Hygiene()
    contrast = np.empty(len(delays))
    for i, tau in enumerate(delays):
        ph = omega_fr * tau
        p_plus = _ramsey_like(ctx, wp, cal, space, tau, ph, False, dt,
                              delay_dt, hyg, noise)
        p_minus = _ramsey_like(ctx, wp, cal, space, tau, ph + np.pi, False,
                               dt, delay_dt, hyg, noise)
        contrast[i] = 0.5 * (p_plus - p_minus)
    hyg.check()

    if quasistatic_sigma > 0.0:
        fit = fits.gauss_damped_cosine_fit(delays, contrast, freq0=omega_fr)
    else:
        fit = fits.damped_cosine_fit(delays, contrast, freq0=omega_fr)
    fit["T2_star_us"] = fit["tau"] / 1e3
    fit["fringe_fit_mhz"] = fit["freq"] / TWO_PI * 1e3
    fit["fringe_set_mhz"] = fringe_mhz
    t1 = 1.0 / kappa
    if fit["tau"] > 0:
        inv_tphi = 1.0 / fit["tau"] - 0.5 / t1
        fit["T_phi_us"] = (1.0 / inv_tphi / 1e3) if inv_tphi > 1e-12 else None

    axes = [Axis("delay", "ns", delays)]
    data = {"fringe_contrast": contrast}
    meta = {"four_sigma_ns": four_sigma,
            "quasistatic_sigma_radns": quasistatic_sigma,
            "n_realizations": n_realizations,
            "truncation": (space.n_a, space.n_b), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("ramsey", axes, data, fit, meta)


def echo_experiment(ctx: SimContext, delays=None, four_sigma=100.0,
                    space: Optional[HilbertSpace] = None, dt=0.5,
                    delay_dt=4.0, quasistatic_sigma=0.0,
                    n_realizations=1) -> ExperimentResult:
    """Single-echo decay: pi/2 - tau/2 - pi - tau/2 - pi/2 with phase
    cycling; quasi-static detuning noise is refocused, leaving the
    loss-limited envelope T2e ~ 2 T1."""
    t_wall = time.time()
    space = space or HilbertSpace(5, 3)
    wp = working_point(ctx, ctx.drive.delta, space)
    cal = calibrate_logical_pi(ctx, wp, space, four_sigma, dt)
    kappa = ctx.rates.kappa_a
    if delays is None:
        delays = np.linspace(40.0, 3.2 / max(kappa, 1e-6), 17)
    delays = np.asarray(delays, float)

    noise = None
    if quasistatic_sigma > 0.0:
        rng = np.random.default_rng(ctx.seed + 1)
        noise = rng.normal(0.0, quasistatic_sigma, size=n_realizations)

    hyg = _Hygiene()
    contrast = np.empty(len(delays))
    for i, tau in enumerate(delays):
        p_plus = _ramsey_like(ctx, wp, cal, space, tau, 0.0, True, dt,
                              delay_dt, hyg, noise)
        p_minus = _ramsey_like(ctx, wp, cal, space, tau, np.pi, True, dt,
                               delay_dt, hyg, noise)
        contrast[i] = 0.5 * (p_plus - p_minus)
    hyg.check()

    fit = fits.exp_decay_fit(delays, contrast, tau0=2.0 / kappa)
    fit["T2e_us"] = fit["tau"] / 1e3
    t1 = 1.0 / kappa
    fit["T1_injected_us"] = t1 / 1e3
    fit["ratio_T2e_T1"] = fit["tau"] / t1
    inv_tphi = 1.0 / fit["tau"] - 0.5 / t1
    fit["T_phi_echo_us"] = (1.0 / inv_tphi / 1e3) if inv_tphi > 1e-9 else None

    axes = [Axis("delay", "ns", delays)]
    data = {"echo_contrast": contrast}
    meta = {"four_sigma_ns": four_sigma,
            "quasistatic_sigma_radns": quasistatic_sigma,
            "n_realizations": n_realizations,
            "truncation": (space.n_a, space.n_b), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult("echo", axes, data, fit, meta)


# ---------------------------------------------------------------------------
# Wigner tomography of prepared logical states

PREP_PULSES = {"zero": None, "one": "pi", "plus": "pi2"}


def prepare_logical_state(ctx: SimContext, state: str,
                          wp: Optional[WorkingPoint] = None,
                          space: Optional[HilbertSpace] = None,
                          four_sigma=100.0, dt=0.5,
                          displacement_wait=10.0):
    """Master-equation preparation of |0>, |1>, or |+> = (|0>+|1>)/sqrt(2).

    Starts from the thermal state of the logical mode, runs the pump-on
    preparation pulse, turns the pump off, and adds the idle window that
    stands in for the finite tomography displacement pulse.  Returns
    (rho, calibration, hygiene)."""
    if state not in PREP_PULSES:
        raise ValueError(f"unknown state {state!r}; expected one of "
                         f"{tuple(PREP_PULSES)}")
    space = space or HilbertSpace(16, 2)
    wp = wp or working_point(ctx, ctx.drive.delta, space)
    cal = calibrate_logical_pi(ctx, wp, HilbertSpace(6, 3), four_sigma, dt)

    margin = 10.0
    t_prep = four_sigma + 2 * margin
    pulses = []
    kind = PREP_PULSES[state]
    if kind is not None:
        pulses.append(_qubit_pulse(cal, margin, kind, np.pi / 2))
    seq = PulseSequence({
        "flux_pump": [_pump_envelope(wp.delta, 0.0, t_prep)],
        "logical_drive": pulses})
    h = _sequence_frames(ctx, wp, seq, wp.omega_01, space)

    rho0 = thermal_dm(space, ctx.rates.n_thermal).matrix
    hyg = _Hygiene()
    rho, hyg, _ = _run_windows(ctx, rho0, h, space, [(0.0, t_prep, dt)],
                               hyg=hyg)
    if displacement_wait > 0.0:
        rho, hyg, _ = _run_windows(ctx, rho, None, space,
                                   [(t_prep, t_prep + displacement_wait,
                                     1.0)], hyg=hyg)
    hyg.check()
    return DensityMatrix(space, rho), cal, hyg


TARGET_KETS = {"zero": qubit_ket(1, 0), "one": qubit_ket(0, 1),
               "plus": qubit_ket(1, 1)}


def wigner_tomography(ctx: SimContext, state="plus", grid_points=21,
                      grid_radius=2.0, n_rec=4, four_sigma=100.0,
                      space: Optional[HilbertSpace] = None, dt=0.5,
                      ideal_readout=False, calibration_block=True
                      ) -> ExperimentResult:
    """Full tomography chain on one prepared state: preparation through the
    master equation, Wigner map through the displaced number-resolved
    readout, least-squares reconstruction, fidelity against the target."""
    t_wall = time.time()
    rho, cal, hyg = prepare_logical_state(ctx, state, space=space,
                                          four_sigma=four_sigma, dt=dt)
    readout = ctx.readout_model(ideal=ideal_readout)
    ax = np.linspace(-grid_radius, grid_radius, grid_points)
    wmap = wigner_map(rho, ax, ax, readout=readout, method="readout",
                      label=state)
    wmap.check_bounds(tol=1e-3 + 0.05)
    rec = reconstruct(wmap, n_rec=n_rec)
    target = TARGET_KETS[state]
    fid = fidelity(rec.rho, target)
    fid_direct = fidelity(rho, target)

    fit_out = {"fidelity": fid, "fidelity_preprojection_state": fid_direct,
               "residual_norm": rec.residual_norm,
               "reconstruction_rank": rec.rank, "n_rec": n_rec}
    if calibration_block:
        fit_out["poisson_calibration"] = _poisson_calibration_block(
            ctx, readout, scale_true=0.05, seed=ctx.seed)

    axes = [Axis("alpha_im", "", ax), Axis("alpha_re", "", ax)]
    data = {"wigner": wmap.values}
    meta = {"state": state, "pi_amp_radns": cal.amp_pi,
            "four_sigma_ns": four_sigma,
            "rho_reconstructed_re": rec.rho.matrix.real.tolist(),
            "rho_reconstructed_im": rec.rho.matrix.imag.tolist(),
            "n_thermal": ctx.rates.n_thermal,
            "truncation": (rho.space.n_a, rho.space.n_b), **hyg.meta(),
            "wall_time_s": time.time() - t_wall}
    return ExperimentResult(f"wigner_{state}", axes, data, fit_out, meta)


def _poisson_calibration_block(ctx, readout, scale_true, seed, n_max=3):
    """Simulated displacement-amplitude calibration: synthetic voltages
    from displaced vacua at known instrument amplitudes, fed to the
    Poisson fit; mirrors the experimental amplitude normalization."""
    from .tomography import poisson_calibrate

    space = HilbertSpace(14, 1)
    u = np.linspace(2.0, 36.0, 12)
    volts = np.empty((n_max + 1, len(u)))
    gains = 1.0 + 0.1 * np.cos(np.arange(n_max + 1))
    for j, uj in enumerate(u):
        dm = coherent_dm(space, scale_true * uj)
        p = measured_populations(dm, readout, n_max=n_max)
        volts[:, j] = gains * p
    out = poisson_calibrate(u, volts, n_max=n_max)
    out["scale_true"] = scale_true
    out["scale_error_rel"] = abs(out["scale"] - scale_true) / scale_true
    return {k: v for k, v in out.items() if k != "norms"} | {
        "norms": list(out["norms"])}
