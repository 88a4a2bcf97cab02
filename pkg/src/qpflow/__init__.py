"""qpflow: numerics for quasiperiodically forced circle flows.

The package splits into exact continued-fraction arithmetic, a sparse
Fourier layer with weighted majorant norms, the diagonally dominant
homological solver, the KAM step/iteration drivers with their schedule
audits, trajectory-level dynamics oracles, and a batch CLI.
"""

__version__ = "0.1.0"
