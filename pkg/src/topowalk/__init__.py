"""topowalk: momentum-space simulator of split-step quantum walks.

Quasi-energy bands, Bloch-vector decompositions, group velocities, symmetry
classification, and numerical topological invariants (winding and Chern
numbers) for a registry of one-, two-, and three-dimensional walk protocols
with step-scaled coins.
"""

from .protocols import (PROTOCOL_IDS, ProtocolSpec, REGISTRY, build_unitary,
                        registry_lookup, step_independent_reduction)

__all__ = [
    "PROTOCOL_IDS",
    "ProtocolSpec",
    "REGISTRY",
    "build_unitary",
    "registry_lookup",
    "step_independent_reduction",
]

__version__ = "0.1.0"
