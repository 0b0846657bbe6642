"""squidmix: simulator for two superconducting oscillators coupled through
a flux-pumped rf-SQuID, from lumped circuit values to stimulated three-wave
mixing, qubit-like oscillator control, Wigner tomography, and coherence
experiments."""

__version__ = "0.1.0"

from .circuit import (CircuitParams, ExpansionCoefficients, FluxSweep,
                      ModelCoefficients, equilibrium_phase,
                      expansion_coefficients, flux_sweep, normal_modes)
from .operators import (DensityMatrix, HilbertSpace, Operator, displacement,
                        expectation, ladder, parity)
from .lindblad import NoiseRates, SolverConfig, Trajectory, evolve, rhs, \
    steady_state
from .dynamics import (DriveSettings, FrameHamiltonian, build_frame,
                       build_static_hamiltonian, eigenspectrum,
                       modulation_coupling, rotating_frame_hamiltonian,
                       schrieffer_wolff_dressed)
