"""Time-domain envelopes and channel sequencing.

Three channels drive the experiments: the flux pump (three-wave coupling
envelope), the logical drive, and the blockade probe used for readout.
Gaussian pulse lengths follow the 4-sigma convention: the stated duration
equals 4*sigma and the envelope is truncated at +-2*sigma.
"""

from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

CHANNELS = ("flux_pump", "logical_drive", "blockade_probe")


@dataclass(frozen=True)
class Envelope:
    """One timed envelope on a channel.

    kind: 'gaussian', 'square', or 'plateau' (constant with sin^2 ramps of
    length `ramp` on both sides).  amplitude is in channel units; `phase`
    multiplies the sampled value by exp(i*phase) to steer rotation axes.
    """

    kind: str
    amplitude: float
    t_start: float
    duration: float
    sigma: float = 0.0
    phase: float = 0.0
    ramp: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "square", "plateau"):
            raise ValueError(f"unknown envelope kind {self.kind!r}")
        if self.duration <= 0.0:
            raise ValueError("envelope duration must be positive")
        if self.kind == "gaussian" and self.sigma <= 0.0:
            raise ValueError("gaussian envelope needs sigma > 0")
        if self.kind == "plateau" and not 0.0 <= 2 * self.ramp <= self.duration:
            raise ValueError("plateau ramps exceed the envelope duration")
        if not np.isfinite(self.amplitude):
            raise ValueError("amplitude must be finite")

    @property
    def t_end(self):
        return self.t_start + self.duration

    def value(self, t):
        """Complex envelope value at time t (0 outside the window)."""
        t = np.asarray(t, dtype=float)
        inside = (t >= self.t_start) & (t <= self.t_end)
        if self.kind == "gaussian":
            t0 = self.t_start + 0.5 * self.duration
            shape = np.exp(-((t - t0) ** 2) / (2.0 * self.sigma**2))
        elif self.kind == "square":
            shape = np.ones_like(t)
        else:
            shape = np.ones_like(t)
            if self.ramp > 0.0:
                up = (t - self.t_start) < self.ramp
                down = (self.t_end - t) < self.ramp
                shape = np.where(
                    up, np.sin(0.5 * np.pi * (t - self.t_start) / self.ramp) ** 2,
                    shape)
                shape = np.where(
                    down, np.sin(0.5 * np.pi * (self.t_end - t) / self.ramp) ** 2,
                    shape)
        out = self.amplitude * np.exp(1j * self.phase) * shape * inside
        return complex(out) if out.ndim == 0 else out


def gaussian(amplitude, t_start, four_sigma, phase=0.0) -> Envelope:
    """Gaussian pulse with total window 4*sigma (truncated at +-2 sigma)."""
    return Envelope("gaussian", amplitude, t_start, four_sigma,
                    sigma=four_sigma / 4.0, phase=phase)


def square(amplitude, t_start, duration, phase=0.0) -> Envelope:
    return Envelope("square", amplitude, t_start, duration, phase=phase)


def plateau(amplitude, t_start, duration, ramp=10.0, phase=0.0) -> Envelope:
    return Envelope("plateau", amplitude, t_start, duration, ramp=ramp,
                    phase=phase)


@dataclass(frozen=True)
class PulseSequence:
    """Per-channel envelope lists.  Envelopes on one channel must not
    overlap, and blockade-probe (readout) windows must not overlap
    flux-pump-on windows: the pump is always turned off before readout."""

    channels: Dict[str, List[Envelope]]
    total_duration: float = 0.0

    def __post_init__(self):
        for name in self.channels:
            if name not in CHANNELS:
                raise ValueError(f"unknown channel {name!r}; expected one of "
                                 f"{CHANNELS}")
        for name, envs in self.channels.items():
            ordered = sorted(envs, key=lambda e: e.t_start)
            for e1, e2 in zip(ordered, ordered[1:]):
                if e2.t_start < e1.t_end - 1e-12:
                    raise ValueError(
                        f"overlapping envelopes on channel {name!r}: "
                        f"[{e1.t_start}, {e1.t_end}] vs "
                        f"[{e2.t_start}, {e2.t_end}]")
        for probe in self.channels.get("blockade_probe", []):
            for pump in self.channels.get("flux_pump", []):
                if (probe.t_start < pump.t_end - 1e-12
                        and pump.t_start < probe.t_end - 1e-12):
                    raise ValueError(
                        "readout window overlaps a flux-pump-on window: "
                        f"probe [{probe.t_start}, {probe.t_end}] vs pump "
                        f"[{pump.t_start}, {pump.t_end}]")
        end = max((e.t_end for envs in self.channels.values() for e in envs),
                  default=0.0)
        if self.total_duration < end:
            object.__setattr__(self, "total_duration", end)


def sample(seq: PulseSequence, channel: str, t):
    """Deterministic complex amplitude of one channel at time t."""
    if channel not in CHANNELS:
        raise ValueError(f"unknown channel {channel!r}; expected one of "
                         f"{CHANNELS}")
    envs = seq.channels.get(channel, [])
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros(t_arr.shape, dtype=complex)
    for env in envs:
        out = out + env.value(t_arr)
    return complex(out) if out.ndim == 0 else out


def channel_callable(seq: PulseSequence, channel: str):
    """t -> complex amplitude closure for the integrator."""
    envs = list(seq.channels.get(channel, []))

    def f(t):
        val = 0.0 + 0.0j
        for env in envs:
            if env.t_start <= t <= env.t_end:
                val += env.value(t)
        return val

    return f


def envelope_area(env: Envelope, n=801):
    """Time integral of |envelope| over its window (numerical)."""
    t = np.linspace(env.t_start, env.t_end, n)
    return float(np.trapezoid(np.abs(env.value(t)), t))


def calibrate_pi_pulse(system, shape: Envelope, amp_max, amp_min=0.0,
                       tol=1e-4, max_iter=80):
    """Drive amplitude maximizing the post-pulse logical population.

    `system` maps an Envelope to the final <a^dag a>; the search is a
    golden-section scan of the amplitude in [amp_min, amp_max], which must
    bracket the first population maximum.  Returns the pi amplitude; the
    pi/2 amplitude of the same shape is half of it (half the pulse area).
    """
    if shape.duration <= 0.0:
        raise ValueError("cannot calibrate a zero-duration pulse")
    if amp_max <= amp_min:
        raise ValueError("need amp_max > amp_min")

    def f(amp):
        env = Envelope(shape.kind, amp, shape.t_start, shape.duration,
                       sigma=shape.sigma, phase=shape.phase, ramp=shape.ramp)
        return -float(system(env))

    gr = (np.sqrt(5.0) - 1.0) / 2.0
    a, b = amp_min, amp_max
    c = b - gr * (b - a)
    d = a + gr * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(max_iter):
        if abs(b - a) < tol * max(abs(b), 1.0):
            break
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - gr * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + gr * (b - a)
            fd = f(d)
    best = 0.5 * (a + b)
    span = amp_max - amp_min
    if best - amp_min < 0.01 * span or amp_max - best < 0.01 * span:
        raise ValueError(
            f"no interior population maximum in [{amp_min}, {amp_max}] "
            f"(search settled at {best:.6g})")
    return float(best)
