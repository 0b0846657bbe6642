"""Wigner-function measurement pipeline for the logical mode.

Mirrors the experimental chain: displaced-state photon statistics are read
out through the cross-Kerr-shifted blockade resonance (each photon number
n shifts the readout peak by n*chi_ab, so a probe parked at the n-th peak
collects Lorentzian-weighted contributions from neighboring numbers), the
displaced parities assemble the Wigner function

    W(alpha) = (2/pi) sum_n (-1)^n P_n(displaced state),

and least-squares inversion of a W(alpha) map reconstructs the density
matrix.  A direct-operator route (2/pi) Tr(rho D_alpha P D_alpha^dag) is
kept alongside as the cross-check.
"""

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .operators import (DensityMatrix, HilbertSpace, displacement, fock_dm,
                        parity, reduced_logical)


@dataclass(frozen=True)
class ReadoutModel:
    """Number-resolved readout through the blockade cross-Kerr shift.

    chi_ab and kappa_b in rad/ns; ideal=True bypasses the Lorentzian
    selectivity and returns exact occupation probabilities.
    """

    chi_ab: float
    kappa_b: float
    kappa_a: float = 0.0
    ideal: bool = False

    def selectivity(self, n_levels):
        """S[n, m]: response at the n-th readout peak from population m."""
        if self.ideal:
            return np.eye(n_levels)
        if abs(self.chi_ab) <= max(self.kappa_a, self.kappa_b):
            warnings.warn(
                "dispersive condition |chi_ab| > kappa_a, kappa_b violated; "
                "readout peaks overlap", RuntimeWarning, stacklevel=3)
        k = np.arange(n_levels)
        det = (k[:, None] - k[None, :]) * self.chi_ab
        half = 0.5 * self.kappa_b
        return half**2 / (det**2 + half**2)


def logical_populations(rho: DensityMatrix):
    """Diagonal of the reduced logical-mode density matrix."""
    return np.real(np.diag(reduced_logical(rho)))


def number_resolved_readout(rho: DensityMatrix, n: int,
                            readout: ReadoutModel) -> float:
    """Measured probability of n logical photons (Lorentzian-convolved
    unless the readout model is ideal)."""
    p = logical_populations(rho)
    if not 0 <= n < len(p):
        raise ValueError(f"photon number {n} outside truncation {len(p)}")
    S = readout.selectivity(len(p))
    return float(S[n] @ p)


def measured_populations(rho: DensityMatrix, readout: ReadoutModel,
                         n_max: Optional[int] = None):
    p = logical_populations(rho)
    meas = readout.selectivity(len(p)) @ p
    return meas if n_max is None else meas[:n_max + 1]


def poisson_calibrate(instr_amps, voltages, n_max=3):
    """Instrument-amplitude to |alpha| conversion from a displacement sweep.

    voltages[n, j] is the readout voltage of the n-th photon peak at
    instrument amplitude instr_amps[j].  Fits V_n(u) = c_n P_n(|alpha|=s u)
    with Poisson P_n; returns the scale s and the per-peak normalizations
    c_n used to convert voltages into occupation probabilities.
    """
    from scipy.optimize import minimize_scalar
    from scipy.special import factorial

    u = np.asarray(instr_amps, float)
    V = np.asarray(voltages, float)
    if V.shape != (n_max + 1, len(u)):
        raise ValueError(f"voltages must have shape ({n_max + 1}, {len(u)})")
    if np.ptp(V) <= 0.0:
        raise ValueError("flat readout response; calibration is degenerate")

    ns = np.arange(n_max + 1)[:, None]

    def poisson(s):
        nbar = (s * u[None, :]) ** 2
        return np.exp(-nbar) * nbar**ns / factorial(ns)

    def cost(log_s):
        P = poisson(np.exp(log_s))
        c = np.sum(P * V, axis=1) / np.maximum(np.sum(P * P, axis=1), 1e-300)
        return float(np.sum((V - c[:, None] * P) ** 2))

    # seed from the vacuum-peak half-decay point: P0 = exp(-(su)^2)
    v0 = V[0] / max(V[0].max(), 1e-300)
    idx = np.argmin(np.abs(v0 - np.exp(-1.0)))
    s_seed = 1.0 / max(u[idx], 1e-12)
    res = minimize_scalar(cost, bracket=(np.log(s_seed * 0.3),
                                         np.log(s_seed),
                                         np.log(s_seed * 3.0)),
                          method="golden", options={"maxiter": 200})
    s = float(np.exp(res.x))
    P = poisson(s)
    c = np.sum(P * V, axis=1) / np.maximum(np.sum(P * P, axis=1), 1e-300)
    resid = float(np.sqrt(res.fun))
    if not np.all(c > 0.0):
        raise ValueError("calibration produced non-positive normalizations")
    return {"scale": s, "norms": c, "residual_norm": resid}


def wigner_point(rho: DensityMatrix, alpha: complex,
                 readout: Optional[ReadoutModel] = None,
                 method="readout", n_max: Optional[int] = None) -> float:
    """W(alpha) of the logical mode.

    method='readout' displaces the state by -alpha and sums measured
    photon-number parities (the experimental path); method='operator'
    evaluates (2/pi) Tr(rho D_alpha P D_alpha^dag) directly.
    """
    space = rho.space
    if method == "operator":
        D = displacement(space, alpha).matrix
        P = parity(space).matrix
        M = D @ P @ D.conj().T
        return float(np.real(np.trace(rho.matrix @ M)))  * (2.0 / np.pi)
    if method != "readout":
        raise ValueError(f"unknown wigner method {method!r}")
    D = displacement(space, -alpha).matrix
    rho_d = DensityMatrix(space, D @ rho.matrix @ D.conj().T)
    if readout is None:
        readout = ReadoutModel(chi_ab=1.0, kappa_b=0.0, ideal=True)
    p = measured_populations(rho_d, readout, n_max)
    signs = (-1.0) ** np.arange(len(p))
    return float((2.0 / np.pi) * np.sum(signs * p))


@dataclass
class WignerMap:
    """W values over a rectangular grid of displacement amplitudes."""

    alpha_re: np.ndarray
    alpha_im: np.ndarray
    values: np.ndarray            # shape (len(alpha_im), len(alpha_re))
    label: str = ""
    metadata: dict = field(default_factory=dict)

    def check_bounds(self, tol=1e-3):
        lim = 2.0 / np.pi + tol
        worst = float(np.max(np.abs(self.values)))
        if worst > lim:
            raise ValueError(f"|W| = {worst:.4f} exceeds 2/pi + {tol}")
        return self

    def points(self):
        """Flattened (alpha, W) pairs, row-major over (im, re)."""
        re, im = np.meshgrid(self.alpha_re, self.alpha_im)
        return (re + 1j * im).ravel(), self.values.ravel()

    def integral(self):
        """Grid integral of W over the covered patch (d2alpha measure)."""
        return float(np.trapezoid(
            np.trapezoid(self.values, self.alpha_re, axis=1), self.alpha_im))


def wigner_map(rho: DensityMatrix, alpha_re=None, alpha_im=None,
               readout: Optional[ReadoutModel] = None, method="readout",
               n_max: Optional[int] = None, label="") -> WignerMap:
    """Wigner map of a prepared state over a rectangular grid (default
    21 x 21 covering [-2, 2]^2)."""
    if alpha_re is None:
        alpha_re = np.linspace(-2.0, 2.0, 21)
    if alpha_im is None:
        alpha_im = np.linspace(-2.0, 2.0, 21)
    alpha_re = np.asarray(alpha_re, float)
    alpha_im = np.asarray(alpha_im, float)
    radius = np.hypot(np.abs(alpha_re).max(), np.abs(alpha_im).max())
    if radius**2 > rho.space.n_a / 2.0:
        warnings.warn(
            f"grid radius {radius:.2f} unsafe for truncation n_a = "
            f"{rho.space.n_a}", RuntimeWarning, stacklevel=2)
    vals = np.empty((len(alpha_im), len(alpha_re)))
    for i, im in enumerate(alpha_im):
        for j, re in enumerate(alpha_re):
            vals[i, j] = wigner_point(rho, re + 1j * im, readout, method,
                                      n_max)
    return WignerMap(alpha_re=alpha_re, alpha_im=alpha_im, values=vals,
                     label=label,
                     metadata={"method": method, "n_a": rho.space.n_a,
                               "n_max": n_max})


@dataclass
class ReconstructedState:
    rho: DensityMatrix
    residual_norm: float
    rank: int
    fidelity: Optional[float] = None


def _displaced_parity_block(alpha, n_rec, n_build):
    """Top-left n_rec block of (2/pi) D_alpha P D_alpha^dag computed on a
    larger space so truncation errors stay out of the design matrix."""
    space = HilbertSpace(n_build, 1)
    D = displacement(space, alpha).matrix
    P = parity(space).matrix
    M = (2.0 / np.pi) * (D @ P @ D.conj().T)
    return M[:n_rec, :n_rec]


def reconstruct(wmap: WignerMap, n_rec=4,
                n_build: Optional[int] = None) -> ReconstructedState:
    """Linear least-squares inversion of a Wigner map.

    W is linear in rho, so each grid point contributes one real equation
    with the flattened displaced-parity operator as its row.  The raw
    solution is projected to the nearest physical state (hermitize, clip
    negative eigenvalues, renormalize) and the pre-projection residual is
    reported.
    """
    alphas, w = wmap.points()
    if len(alphas) < n_rec**2:
        raise ValueError(f"{len(alphas)} grid points cannot determine "
                         f"{n_rec}^2 density-matrix elements")
    if n_build is None:
        n_build = max(2 * n_rec + 8,
                      int(np.ceil(np.max(np.abs(alphas))**2 * 2)) + 8)
    rows = np.empty((len(alphas), n_rec * n_rec), dtype=complex)
    for i, al in enumerate(alphas):
        # Tr(rho M) = sum_{jk} M[j,k] rho[k,j] -> row is M transposed-flat
        rows[i] = _displaced_parity_block(al, n_rec, n_build).T.ravel()

    sol, _, rank, _ = np.linalg.lstsq(rows, w.astype(complex), rcond=None)
    if rank < n_rec * n_rec:
        raise ValueError(
            f"rank-deficient design matrix (rank {rank} < {n_rec**2}); the "
            f"grid does not resolve the full operator subspace")
    resid = float(np.linalg.norm(rows @ sol - w))

    rho = sol.reshape(n_rec, n_rec)
    rho = 0.5 * (rho + rho.conj().T)
    evals, evecs = np.linalg.eigh(rho)
    evals = np.clip(evals, 0.0, None)
    if evals.sum() <= 0.0:
        raise ValueError("reconstruction collapsed to the zero matrix")
    rho = (evecs * evals) @ evecs.conj().T
    rho = rho / np.trace(rho).real
    dm = DensityMatrix(HilbertSpace(n_rec, 1), rho)
    return ReconstructedState(rho=dm, residual_norm=resid, rank=int(rank))


def fidelity(rho: DensityMatrix, target_ket) -> float:
    """State fidelity <psi| rho |psi> against a pure logical-mode target.

    rho may live on the composite space (the blockade mode is traced out)
    or directly on a single-mode space; the target ket is padded or must
    not exceed the logical truncation.
    """
    red = reduced_logical(rho) if rho.space.n_b > 1 else rho.matrix
    ket = np.asarray(target_ket, dtype=complex)
    if ket.ndim != 1:
        raise ValueError("target must be a ket vector")
    if len(ket) > red.shape[0]:
        raise ValueError(f"target dimension {len(ket)} exceeds logical "
                         f"truncation {red.shape[0]}")
    full = np.zeros(red.shape[0], dtype=complex)
    full[:len(ket)] = ket / np.linalg.norm(ket)
    val = float(np.real(full.conj() @ red @ full))
    if not -1e-9 <= val <= 1.0 + 1e-9:
        raise ValueError(f"fidelity {val} outside [0, 1]")
    return val


def qubit_ket(c0, c1):
    """Convenience |psi> = c0|0> + c1|1> (normalized)."""
    v = np.array([c0, c1], dtype=complex)
    return v / np.linalg.norm(v)
