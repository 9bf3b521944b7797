"""Multi-mode sampling-period selection for embedded braking control.

Library layout:

* :mod:`mmctrl.plant` -- quarter-car friction law, nonlinear dynamics,
  affine linearization, RK4 integration
* :mod:`mmctrl.discretization` -- transfer-function and state-space
  discretization, discrete PID, polynomial root extraction
* :mod:`mmctrl.stability` -- closed-loop assembly, unit-circle verdicts,
  stability surfaces, maximal-stable-period search, Bode data
* :mod:`mmctrl.supervisor` -- the three-mode switching automaton with
  hysteresis and glitch filtering
* :mod:`mmctrl.scheduler` -- ECU bandwidth accounting and cyclic schedules
* :mod:`mmctrl.simulator` -- braking/cruising scenario engine
* :mod:`mmctrl.cli` -- command-line front end
"""

__version__ = "0.1.0"

from .config import Config, load as load_config
from .plant import (
    DEFAULT_PARAMS,
    DEFAULT_SURFACES,
    RoadSurface,
    VehicleParams,
    VehicleState,
)
from .discretization import DiscreteTf, PidGains
from .supervisor import BppCategory, GuardTable, ModeId, SupervisorState
