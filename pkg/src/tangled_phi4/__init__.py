"""Random-current and tangled-current toolkit for lattice phi^4 models."""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .model_core import (  # noqa: F401
    InteractionGraph,
    ModelSpec,
    SingleSiteParams,
    gs_couplings,
    moment_table,
    single_site_moment,
)
from .currents import Current, Moment, current_expansion  # noqa: F401
from .phi4_oracle import CorrelationRequest, correlate_quadrature  # noqa: F401
