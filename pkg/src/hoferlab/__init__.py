"""Numerical lab for symplectic isotopies of flat tori T^{2n}.

Lengths of isotopies (Hofer length, l0, symmetrized l), flux, spectral Hodge
splitting of closed one-forms, displacement-energy upper bounds, and lab
drivers for the commutator and conjugation arguments.
"""

__version__ = "0.1.0"

from .torus import GridSpec, ScalarField, torus_distance, wrap, wrap_delta  # noqa: E402
from .forms import HarmonicForm, HodgeDecomposition, NotClosedError, OneForm, flux, hodge  # noqa: E402
from .isotopy import (FlowMap, Isotopy, ScalarFamily, compose_pointwise, conjugate, identity,  # noqa: E402
                      invert, make_explicit, make_hamiltonian, make_rotation, symplectic_residual)
from .regions import Ball, RectUnion, Strip, whole_torus  # noqa: E402
from .energy import (DisplacementCertificate, EnergyEstimate, LengthReport, displacement_energy_upper,  # noqa: E402
                     displaces, hl_norm_upper, hofer_length, l0_length, l_length)
from .lab import (CommutatorReport, ConjugationReport, UniquenessReport, alpha_field, commutator_lab,  # noqa: E402
                  conjugation_bound_lab, nu_operator_norm, torus_example_suite, uniqueness_demo)

__all__ = [
    "GridSpec", "ScalarField", "torus_distance", "wrap", "wrap_delta",
    "HarmonicForm", "HodgeDecomposition", "NotClosedError", "OneForm", "flux", "hodge",
    "FlowMap", "Isotopy", "ScalarFamily", "compose_pointwise", "conjugate", "identity", "invert",
    "make_explicit", "make_hamiltonian", "make_rotation", "symplectic_residual",
    "Ball", "RectUnion", "Strip", "whole_torus",
    "DisplacementCertificate", "EnergyEstimate", "LengthReport", "displacement_energy_upper", "displaces",
    "hl_norm_upper", "hofer_length", "l0_length", "l_length",
    "CommutatorReport", "ConjugationReport", "UniquenessReport", "alpha_field", "commutator_lab",
    "conjugation_bound_lab", "nu_operator_norm", "torus_example_suite", "uniqueness_demo",
]
