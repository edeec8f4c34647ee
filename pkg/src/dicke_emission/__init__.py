"""Direction-resolved photon correlations from two laser-driven atoms.

Modules: ``states`` and ``trajectory`` (two-atom quantum jumps),
``geometry`` (trap, optical phases, Debye-Waller factor), ``detector`` and
``eventfile`` (camera model, binary events), ``correlator`` (g2 histograms),
``model`` (closed-form g2 and phase fit), ``pipeline`` and ``cli``.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    ArchiveError,
    ConfigurationError,
    CorruptEventError,
    DickeEmissionError,
    DomainError,
    EventFileError,
    EventFileVersionError,
    FitError,
)
from .model import ModelParams, fit_delta1, g2_extended, g2_ideal  # noqa: E402
from .states import TwoAtomState, detection_operator, emission_density  # noqa: E402
from .trajectory import DriveParams, run_trajectory, simulate_emissions  # noqa: E402
