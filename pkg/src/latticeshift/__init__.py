"""Dipole-dipole frequency shifts of Ramsey spectroscopy in optical lattices.

Lengths are in units of 1/k0 and rates in units of the single-atom decay
rate Gamma throughout.
"""

from .errors import (BracketError, CapacityError, ConfigError, DegenerateFringeError, DomainError,
                     IntegratorError, LatticeShiftError, NoCrossingError)
from .kernels import (F_AT_ZERO, classical_field_z, energy_and_quadrature, f_and_g, f_kernel, g_kernel,
                      pair_energy, quadrature_coupling)
from .lattice import (SR87_KAPPA, AtomSample, DensityProfile, LatticeGeometry, Sites, build_six_beam_lattice,
                      enumerate_sites, make_rng, read_sites_csv, sample_occupancy, write_sites_csv)
from .oracle import (N_MAX, Liouvillian, OracleSignal, apply_pulse, build_liouvillian, check_density_matrix, evolve,
                     ground_state, oracle_coherences, oracle_peak_shift, pulse_unitary, ramsey_experiment,
                     rotate_detuning)
from .ramsey import (CoherenceTerms, PairMatrices, SignalCurve, analytic_peak_shift, coherence_perturbative_full,
                     coherence_simplified, coherence_terms, effective_signal, effective_signal_value, extract_peak_shift,
                     independent_signal, read_signal_csv, write_signal_csv)
from .resonance import (ResonanceSolution, ScalingEstimate, ZeroShift, beta_from_cell_volume, bragg_residual,
                        find_resonant_angles, find_zero_shift, resonant_theta_closed_form, scaling_estimate)
from .shift import (PairHistogram, RamseyParams, ShiftResult, mean_shift_imperfect, pair_count, pair_histogram,
                    shift_brute, shift_restructured_perfect, shift_restructured_sample, variance_diffuse,
                    variance_full)

__version__ = "0.1.0"
