"""Rotation-invariant features of 3-D volumes in a spherical shell basis and
recovery of the volume from them by frequency marching."""
from .errors import FormatError, InfeasibleError, NumericalError, OrbitShellsError, RankDeficientError
from .model import (
    CoefficientSet,
    ExpansionConfig,
    VolumeGrid,
    evaluate_points,
    expand_volume,
    load_coefficients,
    load_volume,
    random_coefficients,
    relative_error,
    render_volume,
    save_coefficients,
    save_volume,
)
from .invariants import (
    BispectrumTable,
    InvariantBundle,
    bispectrum,
    compute_invariants,
    deserialize_bundle,
    enumerate_triples,
    serialize_bundle,
)
from .rotation import RotationSpec, align, random_rotation, rotate_coefficients
from .recovery import RecoveryOptions, min_shells_bound, rank_audit, recover
from .harness import NoiseExperimentConfig, condition_table, noise_experiment

__version__ = "0.1.0"
