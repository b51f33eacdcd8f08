"""bundlelab: desk-scale lattice laboratory for relativistic wave equations
solved in the conventional picture and in the frame-field picture, with
retarded kernels tied back to the evolution maps."""

from .lattice import Lattice, plane_wave, random_smooth_field
from .clifford import (Metric, GammaSet, Gamma5Set, build_gamma_set,
                       build_gamma5_set, anticommutator, slash)
from .matrixop import (MatrixOperator, FrameMatrixField, apply, odot,
                       frame_connection, matrix_of, dirac_operator_matrix)
from .transport import (FrameField, Transport, TransportCoefficients, Section,
                        make_transport, coefficients, slashed_gamma,
                        transported_section, derivation_along, bundle_morphism,
                        generic_transport_check, frame_from_preset)
from .waveeq import (PotentialField, TwoComponentField, FiveComponentField,
                     DegenerateMassError, StepAccuracyWarning, dirac_residual,
                     dirac_hamiltonian, evolve_dirac, evolve_dirac_bundle,
                     kg_residual, kg_reduce_5, kg5_residual,
                     kg_two_component_step, kg_charge, schrodinger_hamiltonian)
from .green import (GreenKernel, SpectralBasis, KernelBudgetError,
                    BornDivergenceWarning, schrodinger_green, apply_kernel,
                    dirac_green, born_iterate, born_residual, kg_green,
                    kg_green_tilde, kg_pairing_row, kg_reconstruct,
                    green_morphism, finite_window_evolution, dump_kernel,
                    load_kernel)

__version__ = "0.1.0"
