"""Pulsed QND phonon-number readout simulator.

Submodules:
    fock       truncated Fock-space operators and states
    protocol   closed-form protocol model and the matrix cross-check path
    sampler    Monte Carlo measurement records and N/T estimation
    wigner     phase-space grids, marginals, P(n) reconstruction
    threelevel full three-level squeezing model and its validation
    cli        batch front-end
"""

__version__ = "0.1.0"
