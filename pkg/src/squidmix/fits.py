"""Least-squares fit helpers shared by the experiment drivers.

Everything goes through scipy's Levenberg-Marquardt / trust-region
machinery with numeric Jacobians, initialized from simple peak-finding
heuristics.  Every fit reports its residual norm so callers can flag
low-confidence extractions.
"""

import numpy as np
from scipy.optimize import curve_fit


class FitError(RuntimeError):
    pass


def _finish(name, popt, pcov, resid, y):
    out = {"fit": name, "params": popt,
           "residual_norm": float(np.linalg.norm(resid))}
    ss_tot = float(np.sum((y - np.mean(y)) ** 2))
    out["r2"] = 1.0 - float(np.sum(resid**2)) / ss_tot if ss_tot > 0 else 1.0
    with np.errstate(invalid="ignore"):
        err = np.sqrt(np.diag(pcov)) if pcov is not None else None
    out["errors"] = err
    return out


def linear_fit(x, y):
    """y = m x + c; returns dict with slope, intercept, r2, residual_norm."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = y - A @ coef
    out = _finish("linear", coef, None, resid, y)
    out.update(slope=float(coef[0]), intercept=float(coef[1]))
    return out


def lorentzian(x, x0, fwhm, amp, offset):
    hw = 0.5 * fwhm
    return amp * hw**2 / ((x - x0) ** 2 + hw**2) + offset


def lorentzian_fit(x, y, x0=None, fwhm=None):
    """Single Lorentzian peak; initial center/width from the data shape."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    base = np.min(y)
    i_pk = int(np.argmax(y))
    if x0 is None:
        x0 = x[i_pk]
    if fwhm is None:
        half = base + 0.5 * (y[i_pk] - base)
        above = x[y >= half]
        fwhm = max(above.max() - above.min(), 2 * np.min(np.diff(x)))
    p0 = [x0, fwhm, y[i_pk] - base, base]
    try:
        popt, pcov = curve_fit(lorentzian, x, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"lorentzian fit failed: {exc}") from exc
    popt[1] = abs(popt[1])
    out = _finish("lorentzian", popt, pcov, y - lorentzian(x, *popt), y)
    out.update(center=float(popt[0]), fwhm=float(popt[1]),
               amplitude=float(popt[2]), offset=float(popt[3]))
    return out


def exp_decay(t, amp, tau, offset):
    return amp * np.exp(-t / tau) + offset


def exp_decay_fit(t, y, tau0=None):
    t, y = np.asarray(t, float), np.asarray(y, float)
    if tau0 is None:
        tau0 = max((t[-1] - t[0]) / 3.0, np.finfo(float).eps)
    p0 = [y[0] - y[-1], tau0, y[-1]]
    try:
        popt, pcov = curve_fit(exp_decay, t, y, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"exponential fit failed: {exc}") from exc
    out = _finish("exp_decay", popt, pcov, y - exp_decay(t, *popt), y)
    out.update(amplitude=float(popt[0]), tau=float(abs(popt[1])),
               offset=float(popt[2]))
    return out


def damped_cosine(t, amp, tau, freq, phase, offset):
    return amp * np.exp(-t / tau) * np.cos(freq * t + phase) + offset


def damped_cosine_fit(t, y, freq0=None, tau0=None):
    """A exp(-t/tau) cos(w t + phi) + C with FFT-seeded frequency."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    if freq0 is None:
        dt = np.mean(np.diff(t))
        spec = np.abs(np.fft.rfft(y - y.mean()))
        freqs = 2.0 * np.pi * np.fft.rfftfreq(len(t), dt)
        freq0 = freqs[1 + int(np.argmax(spec[1:]))] if len(spec) > 1 else 0.0
    if tau0 is None:
        tau0 = t[-1] - t[0]
    p0 = [0.5 * (y.max() - y.min()), tau0, freq0, 0.0, y.mean()]
    try:
        popt, pcov = curve_fit(damped_cosine, t, y, p0=p0, maxfev=40000)
    except RuntimeError as exc:
        raise FitError(f"damped cosine fit failed: {exc}") from exc
    out = _finish("damped_cosine", popt, pcov, y - damped_cosine(t, *popt), y)
    out.update(amplitude=float(popt[0]), tau=float(abs(popt[1])),
               freq=float(abs(popt[2])), phase=float(popt[3]),
               offset=float(popt[4]))
    return out


def gauss_damped_cosine(t, amp, tau, freq, phase, offset):
    return amp * np.exp(-(t / tau) ** 2) * np.cos(freq * t + phase) + offset


def gauss_damped_cosine_fit(t, y, freq0=None, tau0=None):
    """A exp(-(t/tau)^2) cos(w t + phi) + C, the quasi-static-noise Ramsey
    envelope; tau relates to the 1/e dephasing time of the contrast."""
    t, y = np.asarray(t, float), np.asarray(y, float)
    if freq0 is None:
        dt = np.mean(np.diff(t))
        spec = np.abs(np.fft.rfft(y - y.mean()))
        freqs = 2.0 * np.pi * np.fft.rfftfreq(len(t), dt)
        freq0 = freqs[1 + int(np.argmax(spec[1:]))] if len(spec) > 1 else 0.0
    if tau0 is None:
        tau0 = 0.7 * (t[-1] - t[0])
    p0 = [0.5 * (y.max() - y.min()), tau0, freq0, 0.0, y.mean()]
    try:
        popt, pcov = curve_fit(gauss_damped_cosine, t, y, p0=p0, maxfev=40000)
    except RuntimeError as exc:
        raise FitError(f"gaussian damped cosine fit failed: {exc}") from exc
    out = _finish("gauss_damped_cosine", popt, pcov,
                  y - gauss_damped_cosine(t, *popt), y)
    out.update(amplitude=float(popt[0]), tau=float(abs(popt[1])),
               freq=float(abs(popt[2])), phase=float(popt[3]),
               offset=float(popt[4]))
    return out


def vacuum_return(t, n0, kappa):
    return np.exp(-n0 * np.exp(-kappa * t))

def vacuum_return_fit(t, p0_data, n0_guess, kappa_guess):
    """Double exponential P0(t) = exp(-n0 exp(-kappa t))."""
    t = np.asarray(t, float)
    y = np.asarray(p0_data, float)
    try:
        popt, pcov = curve_fit(vacuum_return, t, y,
                               p0=[n0_guess, kappa_guess], maxfev=20000)
    except RuntimeError as exc:
        raise FitError(f"vacuum-return fit failed: {exc}") from exc
    out = _finish("vacuum_return", popt, pcov, y - vacuum_return(t, *popt), y)
    out.update(n0=float(popt[0]), kappa=float(abs(popt[1])))
    return out


def avoided_crossing_branches(x, x0, center, g, slope_sign):
    eta = x - x0
    root = np.sqrt(eta**2 + 8.0 * g**2)
    upper = center + 0.5 * (slope_sign * eta + root)
    lower = center + 0.5 * (slope_sign * eta - root)
    return lower, upper


def avoided_crossing_fit(x, lower, upper, slope_sign=+1, g0=None):
    """Joint two-branch hyperbola fit of an avoided crossing.

    Branch form: center + (s*eta +- sqrt(eta^2 + 8 g^2))/2 with
    eta = x - x0; the minimum branch separation is 2*sqrt(2)*g.
    Returns |g| plus the crossing location x0 and asymptote center.
    """
    x = np.asarray(x, float)
    lo = np.asarray(lower, float)
    up = np.asarray(upper, float)
    mask = np.isfinite(lo) & np.isfinite(up)
    if mask.sum() < 3:
        raise FitError("avoided-crossing fit needs >= 3 resolved pump points")
    x, lo, up = x[mask], lo[mask], up[mask]
    gap = up - lo
    i_min = int(np.argmin(gap))
    if g0 is None:
        g0 = gap[i_min] / (2.0 * np.sqrt(2.0))
    p0 = [x[i_min], 0.5 * (up[i_min] + lo[i_min]), g0]

    def model(xx, x0, center, g):
        l, u = avoided_crossing_branches(xx, x0, center, g, slope_sign)
        return np.concatenate([l, u])

    ydata = np.concatenate([lo, up])
    try:
        popt, pcov = curve_fit(model, x, ydata, p0=p0, maxfev=40000)
    except RuntimeError as exc:
        raise FitError(f"avoided-crossing fit failed: {exc}") from exc
    resid = ydata - model(x, *popt)
    out = _finish("avoided_crossing", popt, pcov, resid, ydata)
    out.update(x0=float(popt[0]), center=float(popt[1]), g=float(abs(popt[2])),
               min_gap=float(2.0 * np.sqrt(2.0) * abs(popt[2])))
    return out


def local_maxima(y, min_fraction=0.2):
    """Indices of strict local maxima above min_fraction of the range."""
    y = np.asarray(y, float)
    thresh = y.min() + min_fraction * (y.max() - y.min())
    idx = [i for i in range(1, len(y) - 1)
           if y[i] > y[i - 1] and y[i] >= y[i + 1] and y[i] > thresh]
    return sorted(idx, key=lambda i: -y[i])


def refine_peak(x, y, i, half_window=8):
    """Windowed Lorentzian refinement of a peak near index i."""
    lo = max(i - half_window, 0)
    hi = min(i + half_window + 1, len(x))
    try:
        fit = lorentzian_fit(x[lo:hi], y[lo:hi], x0=x[i])
        if x[lo] <= fit["center"] <= x[hi - 1]:
            return fit["center"], fit
    except FitError:
        pass
    # parabolic fallback through three points
    if 0 < i < len(x) - 1:
        d1 = y[i] - y[i - 1]
        d2 = y[i] - y[i + 1]
        denom = d1 + d2
        if denom > 0:
            return x[i] + 0.5 * (x[i + 1] - x[i]) * (d1 - d2) / denom, None
    return x[i], None
