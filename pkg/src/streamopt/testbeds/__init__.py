"""Experiment generators: level-crossing reconstruction and Poisson
intensity estimation."""

from .lot import (
    LotBasis,
    LotConfig,
    LotStream,
    SincSignal,
    detect_level_crossings,
    generate_lot_stream,
    lot_basis_orthonormality,
)
from .nhpp import (
    BumpIntensity,
    EventBatch,
    NhppFrameLoss,
    NhppHeadLoss,
    NhppProblem,
    SplineBasis,
    SplineNhppConfig,
    build_nhpp_losses,
    generate_problem,
    simulate_nhpp,
)
