"""Scaled relative graphs of discrete-time LTI systems from models or data."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    DimensionError,
    IndefiniteQbar,
    NonMonotoneError,
    NotObservableError,
    PreconditionError,
    ProfileError,
    SchemaError,
    SingularConsistency,
    SingularFeedthrough,
    SolverInconclusive,
    SrgError,
    UnitCirclePole,
)
from .gains_data import build_data_matrices, gain_annulus_data, max_gain_data, min_gain_data  # noqa: E402
from .gains_ss import GainBounds, gain_annulus, gain_freq_oracle, max_gain, min_gain  # noqa: E402
from .geometry import (  # noqa: E402
    GainProfile,
    SrgRegion,
    Window,
    compute_profile,
    default_alpha_grid,
    membership,
    rasterize,
    region_contains,
)
from .lti import OperatorKind, StateSpace, Trajectory, simulate  # noqa: E402
from .robust import (  # noqa: E402
    ball_noise_model,
    build_consistency_set,
    robust_gain_annulus,
    robust_max_gain,
    robust_min_gain,
)
from .sdp import GainOptions  # noqa: E402
