"""Exact symbolic verification of integrable-system identities.

The package re-derives and checks algebraic identities of an
integrable-PDE hierarchy (zero-curvature conditions, conservation laws,
reciprocal transformations, operator factorizations, Hamiltonian
structure transport) over an exact-rational jet-space differential
algebra.  No floating point is ever used; every comparison is a
normal-form equality, with a seeded rational evaluation oracle as an
independent confirmation layer.
"""

__version__ = "0.1.0"
