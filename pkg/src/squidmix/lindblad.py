"""Time-dependent Lindblad master equation: integration and steady states.

The generator is

    drho/dt = -i[H(t), rho] + sum_k D[L_k] rho,
    D[L] rho = L rho L^dag - (L^dag L rho + rho L^dag L) / 2

with photon loss on both modes, optional pure dephasing of the logical
mode, and an optional thermal excitation channel.  kappa_a is the *energy*
decay rate: <a^dag a> of an undriven mode decays as exp(-kappa_a t), and a
coherent amplitude as exp(-kappa_a t / 2).

The default integrator is fixed-step RK4 (the generator is linear and
traceless, so trace and hermiticity are preserved to roundoff for any
step); an adaptive RK45 route through scipy.integrate.solve_ivp is
available for stiff drives.  Steady states come from the null space of the
column-stacked Liouvillian.

All propagation routines accept either a single density matrix (d, d) or a
stack (G, d, d) sharing the same collapse operators; stacked Hamiltonians
evolve all sweep points in one pass.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import solve_ivp
from scipy.linalg import lstsq, svd

from .constants import TWO_PI
from .operators import DensityMatrix, HilbertSpace, Operator, destroy, ladder


class SteadyStateError(RuntimeError):
    """Liouvillian null space is degenerate or the solve did not converge."""


@dataclass(frozen=True)
class NoiseRates:
    """Loss and dephasing rates, rad/ns.  kappa_phi_a dephases the logical
    mode; n_thermal adds upward jumps kappa_a * n_thermal * D[a^dag]."""

    kappa_a: float = 0.0
    kappa_b: float = 0.0
    kappa_phi_a: float = 0.0
    n_thermal: float = 0.0

    def __post_init__(self):
        for name in ("kappa_a", "kappa_b", "kappa_phi_a", "n_thermal"):
            if getattr(self, name) < 0.0:
                raise ValueError(f"NoiseRates.{name} must be >= 0")

    def collapse_matrices(self, space: HilbertSpace):
        """Jump operators sqrt(rate) * L on the composite space."""
        a = ladder(space, "logical").matrix
        ops = []
        if self.kappa_a > 0.0:
            ops.append(np.sqrt(self.kappa_a * (1.0 + self.n_thermal)) * a)
            if self.n_thermal > 0.0:
                ops.append(np.sqrt(self.kappa_a * self.n_thermal) * a.conj().T)
        if self.kappa_b > 0.0 and space.n_b > 1:
            ops.append(np.sqrt(self.kappa_b) * ladder(space, "blockade").matrix)
        if self.kappa_phi_a > 0.0:
            ops.append(np.sqrt(self.kappa_phi_a) * (a.conj().T @ a))
        return ops

    @classmethod
    def from_mhz(cls, kappa_a_mhz=0.0, kappa_b_mhz=0.0, kappa_phi_mhz=0.0,
                 n_thermal=0.0):
        return cls(kappa_a=TWO_PI * kappa_a_mhz * 1e-3,
                   kappa_b=TWO_PI * kappa_b_mhz * 1e-3,
                   kappa_phi_a=TWO_PI * kappa_phi_mhz * 1e-3,
                   n_thermal=n_thermal)


@dataclass(frozen=True)
class SolverConfig:
    method: str = "rk4"          # "rk4" (fixed step) or "rk45" (adaptive)
    dt: float = 0.5              # ns, fixed-step size
    rtol: float = 1e-8           # adaptive only
    atol: float = 1e-10          # adaptive only
    max_step: float = np.inf     # adaptive only
    record_stride: int = 1       # record every k-th fixed step

    def __post_init__(self):
        if self.dt <= 0.0:
            raise ValueError("dt must be positive")
        if self.method not in ("rk4", "rk45"):
            raise ValueError(f"unknown method {self.method!r}")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


@dataclass
class Trajectory:
    """Recorded times, expectation values, and numerical-hygiene extrema."""

    times: np.ndarray
    expectations: dict
    final: np.ndarray
    rhos: Optional[np.ndarray] = None
    max_trace_dev: float = 0.0
    max_herm_dev: float = 0.0
    min_eigenvalue: float = 0.0
    diagnostics: dict = field(default_factory=dict)

    def assert_hygiene(self, duration_ns, trace_per_us=1e-8, herm_per_us=1e-9,
                       eig_floor=-1e-8):
        """Enforce trace / hermiticity / positivity bounds, scaled per
        simulated microsecond."""
        us = max(duration_ns / 1e3, 1.0)
        if self.max_trace_dev > trace_per_us * us:
            raise ValueError(f"trace drift {self.max_trace_dev:.3e} exceeds "
                             f"{trace_per_us * us:.3e}")
        if self.max_herm_dev > herm_per_us * us:
            raise ValueError(f"hermiticity drift {self.max_herm_dev:.3e} "
                             f"exceeds {herm_per_us * us:.3e}")
        if self.min_eigenvalue < eig_floor:
            raise ValueError(f"negative eigenvalue {self.min_eigenvalue:.3e}")
        return self


def _as_matrix(x):
    if isinstance(x, (Operator, DensityMatrix)):
        return x.matrix
    return np.asarray(x, dtype=complex)


def _dag(m):
    return np.swapaxes(m, -1, -2).conj()


class _Generator:
    """Precomputed dissipator pieces; applies the full generator."""

    def __init__(self, rates: NoiseRates, space: HilbertSpace):
        self.Ls = rates.collapse_matrices(space)
        self.Lds = [L.conj().T for L in self.Ls]
        self.LdLs = [Ld @ L for L, Ld in zip(self.Ls, self.Lds)]

    def apply(self, H, rho):
        if H is None:
            out = np.zeros_like(rho)
        else:
            out = -1j * (H @ rho - rho @ H)
        for L, Ld, LdL in zip(self.Ls, self.Lds, self.LdLs):
            out += L @ rho @ Ld - 0.5 * (LdL @ rho + rho @ LdL)
        return out


def rhs(rho, hamiltonian, rates: NoiseRates, space=None):
    """One evaluation of the master-equation right-hand side.

    Accepts DensityMatrix/Operator wrappers or bare arrays; the output is
    traceless to roundoff by construction of the generator.
    """
    rho_m = _as_matrix(rho)
    H = None if hamiltonian is None else _as_matrix(hamiltonian)
    if H is not None and H.shape[-1] != rho_m.shape[-1]:
        raise ValueError(f"dimension mismatch: H {H.shape} vs rho {rho_m.shape}")
    if space is None:
        space = (rho.space if isinstance(rho, DensityMatrix)
                 else _space_of_dim(rho_m.shape[-1]))
    return _Generator(rates, space).apply(H, rho_m)


def _space_of_dim(d):
    # single-mode stand-in space for raw-matrix calls
    return HilbertSpace(d, 1)


def _record(rho, obs_mats):
    return {name: np.einsum("...ij,ji->...", rho, m)
            for name, m in obs_mats.items()}


def evolve(rho0, hamiltonian, rates: NoiseRates, config: SolverConfig,
           t_span, observables=None, space: Optional[HilbertSpace] = None,
           record_states=False, check_hygiene=True) -> Trajectory:
    """Integrate the master equation over t_span = (t0, t1).

    hamiltonian may be None (free decay), a constant matrix/Operator, or a
    callable t -> matrix; matrices may carry a stacked leading axis to
    propagate a batch of sweep points at once (rho0 broadcasts against it).
    observables maps names to Operators/matrices recorded at every stride
    point.  Hygiene extrema (trace, hermiticity, positivity) are tracked at
    recorded points and enforced on exit unless check_hygiene is False.
    """
    if isinstance(rho0, DensityMatrix):
        space = rho0.space
        rho = rho0.matrix.copy()
    else:
        rho = np.array(rho0, dtype=complex)
        if space is None:
            space = _space_of_dim(rho.shape[-1])
    t0, t1 = float(t_span[0]), float(t_span[1])
    if t1 <= t0:
        raise ValueError("t_span must satisfy t1 > t0")

    if hamiltonian is None:
        h_of_t = None
    elif callable(hamiltonian):
        h_of_t = lambda t: _as_matrix(hamiltonian(t))
    else:
        h_const = _as_matrix(hamiltonian)
        h_of_t = lambda t: h_const

    gen = _Generator(rates, space)
    obs_mats = {name: _as_matrix(op) for name, op in (observables or {}).items()}

    if config.method == "rk45":
        traj = _evolve_adaptive(rho, h_of_t, gen, config, t0, t1, obs_mats,
                                record_states)
    else:
        traj = _evolve_rk4(rho, h_of_t, gen, config, t0, t1, obs_mats,
                           record_states)
    if check_hygiene:
        traj.assert_hygiene(t1 - t0)
    return traj


def _hygiene(rho):
    tr = np.abs(np.einsum("...ii->...", rho) - 1.0).max()
    herm = np.abs(rho - _dag(rho)).max()
    hermitized = 0.5 * (rho + _dag(rho))
    mineig = np.linalg.eigvalsh(hermitized).min()
    return float(tr), float(herm), float(mineig)


def _evolve_rk4(rho, h_of_t, gen, config, t0, t1, obs_mats, record_states):
    n_steps = max(1, int(np.ceil((t1 - t0) / config.dt)))
    h = (t1 - t0) / n_steps

    times = [t0]
    records = [_record(rho, obs_mats)]
    states = [rho.copy()] if record_states else None
    tr_dev, herm_dev, min_eig = _hygiene(rho)

    t = t0
    H_next = None if h_of_t is None else h_of_t(t)
    for step in range(1, n_steps + 1):
        if h_of_t is None:
            H0 = H_mid = H1 = None
        else:
            H0 = H_next
            H_mid = h_of_t(t + 0.5 * h)
            H1 = h_of_t(t + h)
            H_next = H1
        k1 = gen.apply(H0, rho)
        k2 = gen.apply(H_mid, rho + 0.5 * h * k1)
        k3 = gen.apply(H_mid, rho + 0.5 * h * k2)
        k4 = gen.apply(H1, rho + h * k3)
        rho = rho + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t = t0 + step * h
        if step % config.record_stride == 0 or step == n_steps:
            times.append(t)
            records.append(_record(rho, obs_mats))
            if record_states:
                states.append(rho.copy())
            a, b, c = _hygiene(rho)
            tr_dev, herm_dev = max(tr_dev, a), max(herm_dev, b)
            min_eig = min(min_eig, c)

    expect = {name: np.array([r[name] for r in records])
              for name in obs_mats}
    return Trajectory(times=np.array(times), expectations=expect, final=rho,
                      rhos=np.array(states) if record_states else None,
                      max_trace_dev=tr_dev, max_herm_dev=herm_dev,
                      min_eigenvalue=min_eig,
                      diagnostics={"method": "rk4", "dt": h, "steps": n_steps})


def _evolve_adaptive(rho, h_of_t, gen, config, t0, t1, obs_mats,
                     record_states):
    if rho.ndim != 2:
        raise ValueError("adaptive integration supports a single density "
                         "matrix, not a stacked batch")
    shape = rho.shape

    def f(t, y):
        r = y.reshape(shape)
        H = None if h_of_t is None else h_of_t(t)
        return gen.apply(H, r).ravel()

    n_rec = max(2, int(np.ceil((t1 - t0) / config.dt)) // config.record_stride + 1)
    t_eval = np.linspace(t0, t1, n_rec)
    sol = solve_ivp(f, (t0, t1), rho.ravel(), method="RK45", t_eval=t_eval,
                    rtol=config.rtol, atol=config.atol,
                    max_step=config.max_step)
    if not sol.success:
        raise RuntimeError(f"adaptive step failed near t = {sol.t[-1] if len(sol.t) else t0:.3f} ns: "
                           f"{sol.message}")
    rhos = sol.y.T.reshape(-1, *shape)
    records = [_record(r, obs_mats) for r in rhos]
    tr_dev = herm_dev = 0.0
    min_eig = np.inf
    for r in rhos:
        a, b, c = _hygiene(r)
        tr_dev, herm_dev, min_eig = max(tr_dev, a), max(herm_dev, b), min(min_eig, c)
    expect = {name: np.array([r[name] for r in records]) for name in obs_mats}
    return Trajectory(times=sol.t, expectations=expect, final=rhos[-1],
                      rhos=rhos if record_states else None,
                      max_trace_dev=tr_dev, max_herm_dev=herm_dev,
                      min_eigenvalue=float(min_eig),
                      diagnostics={"method": "rk45", "nfev": sol.nfev})


def liouvillian(hamiltonian, rates: NoiseRates, space: HilbertSpace):
    """Column-stacked superoperator: vec(drho/dt) = L vec(rho), with
    vec(.) stacking columns (Fortran order)."""
    d = space.dim
    eye = np.eye(d, dtype=complex)
    L_super = np.zeros((d * d, d * d), dtype=complex)
    if hamiltonian is not None:
        H = _as_matrix(hamiltonian)
        L_super += -1j * (np.kron(eye, H) - np.kron(H.T, eye))
    for Lm in rates.collapse_matrices(space):
        LdL = Lm.conj().T @ Lm
        L_super += (np.kron(Lm.conj(), Lm)
                    - 0.5 * np.kron(eye, LdL)
                    - 0.5 * np.kron(LdL.T, eye))
    return L_super


def steady_state(hamiltonian, rates: NoiseRates,
                 space: Optional[HilbertSpace] = None) -> DensityMatrix:
    """Unique steady state from the Liouvillian null space.

    Uniqueness is checked through the second-smallest singular value
    (> 1e-8 required); the trace constraint is appended as an extra row of
    the least-squares system.
    """
    if space is None:
        if not isinstance(hamiltonian, Operator):
            raise ValueError("pass `space` when hamiltonian is a bare matrix")
        space = hamiltonian.space
    d = space.dim
    L_super = liouvillian(hamiltonian, rates, space)

    sv = svd(L_super, compute_uv=False)
    if d > 1 and sv[-2] <= 1e-8:
        raise SteadyStateError(
            f"degenerate Liouvillian null space (second singular value "
            f"{sv[-2]:.3e})")

    # trace row: sum of diagonal entries of vec(rho) equals 1
    tr_row = np.zeros((1, d * d), dtype=complex)
    tr_row[0, ::d + 1] = 1.0
    A = np.vstack([L_super, tr_row])
    b = np.zeros(d * d + 1, dtype=complex)
    b[-1] = 1.0
    x = lstsq(A, b, lapack_driver="gelsd")[0]
    rho = x.reshape((d, d), order="F")
    rho = 0.5 * (rho + rho.conj().T)
    rho = rho / np.trace(rho).real

    resid = np.linalg.norm(L_super @ rho.reshape(-1, order="F"))
    if resid > 1e-10 * max(1.0, np.abs(L_super).max()):
        raise SteadyStateError(f"steady-state residual {resid:.3e} too large")
    return DensityMatrix(space, rho)


class SteadyStateSweep:
    """Steady states of a parameterized Hamiltonian family.

    H = H_fix + sum_k c_k H_k with per-point coefficients c_k; collapse
    operators are shared.  Null-space uniqueness is verified once (the
    sweep shares the Liouvillian structure), then each point is a single
    LU solve of the trace-constrained system with a per-point residual
    check.  Orders of magnitude faster than calling steady_state per point.
    """

    def __init__(self, h_fix, h_terms, rates: NoiseRates,
                 space: HilbertSpace, check_point=None):
        self.space = space
        d = space.dim
        self.d = d
        eye = np.eye(d, dtype=complex)

        def comm_super(H):
            return -1j * (np.kron(eye, H) - np.kron(H.T, eye))

        self.L_fix = liouvillian(_as_matrix(h_fix), rates, space)
        self.L_terms = [comm_super(_as_matrix(h)) for h in h_terms]
        self.tr_row = np.zeros(d * d, dtype=complex)
        self.tr_row[::d + 1] = 1.0
        self.scale = max(np.abs(self.L_fix).max(), 1.0)
        if check_point is not None:
            L = self._assemble(check_point)
            sv = svd(L, compute_uv=False)
            if d > 1 and sv[-2] <= 1e-8:
                raise SteadyStateError(
                    f"degenerate Liouvillian null space at the check point "
                    f"(second singular value {sv[-2]:.3e})")

    def _assemble(self, coeffs):
        L = self.L_fix.copy()
        for c, Lk in zip(coeffs, self.L_terms):
            if c != 0.0:
                L += c * Lk
        return L

    def solve(self, coeffs):
        L = self._assemble(coeffs)
        row0 = L[0].copy()
        L[0] = self.tr_row
        b = np.zeros(self.d * self.d, dtype=complex)
        b[0] = 1.0
        try:
            v = np.linalg.solve(L, b)
        except np.linalg.LinAlgError as exc:
            raise SteadyStateError(f"singular trace-constrained system: "
                                   f"{exc}") from exc
        resid = np.abs(row0 @ v)
        L[0] = row0
        resid = max(resid, np.linalg.norm(L @ v) / np.sqrt(self.d))
        if resid > 1e-9 * self.scale:
            raise SteadyStateError(f"steady-state residual {resid:.3e}")
        rho = v.reshape((self.d, self.d), order="F")
        rho = 0.5 * (rho + rho.conj().T)
        return rho / np.trace(rho).real


def propagate_expm(rho0, hamiltonian, rates: NoiseRates, space: HilbertSpace,
                   t):
    """Dense matrix-exponential propagation of the vectorized Liouvillian.

    Reference route for validating the time steppers on small spaces.
    """
    from scipy.linalg import expm

    L_super = liouvillian(hamiltonian, rates, space)
    v0 = _as_matrix(rho0).reshape(-1, order="F")
    v = expm(L_super * t) @ v0
    return v.reshape((space.dim, space.dim), order="F")
