"""Sequential scalar measurement design for forecasting dynamical systems."""
from ._accel import BACKEND
from .information import NoiseModel, crlb_measurement_update, crlb_propagate, fisher_info, forecast_crlb_trace
from .policies import CollapsePolicy, RandomPolicy, closed_form_measurement, policy_decide
from .systems import (AugmentedVanDerPol, DiscreteLinear, DynamicalSystem, Hopf, IntegratorConfig, LinearSystem,
                      Lorenz, VanDerPol)

__version__ = "0.1.0"
