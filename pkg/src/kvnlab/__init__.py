"""Koopman-von Neumann-Sudarshan mechanics and electrodynamics on a desk-scale grid."""

__version__ = "0.1.0"

from .errors import (ConfigurationError, DegenerateStateError, GridMismatchError, KvnLabError,
                     NumericDomainError, OutflowError, PreconditionError, TruncationError,
                     UnsupportedError)
from .hamiltonians import HamiltonianSpec, Kind
from .phase_space import (KvnWaveFunction, Observable, PhaseSpaceGrid, Representation,
                          amplitude_phase_split, density, expectation, from_function, gaussian,
                          inner_product, make_grid, normalize)
from .propagator import liouville_flow, propagate_qp, superselection_check
from .lambda_rep import from_lambda_rep, propagate_lambda, to_lambda_rep
from .wigner import (QuantumState1D, WignerFunction, classical_limit_gap, moyal_rhs,
                     propagate_moyal, wigner_from_psi)
from .em import EmFieldState, EmGrid, build_beta, poynting, propagate_em
from .beams import (AnalyzerSetting, BeamState, chsh, chsh_max_scan, correlation,
                    mermin_peres_witness, schmidt_decompose)
from .measurement import (HybridSpinKvnState, MeterMomentState, momentum_meter_evolve,
                          position_unmeasurability_report, reduced_spin_coherence,
                          sg_outcome_histogram, sg_propagate)
