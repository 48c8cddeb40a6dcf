"""Delivery probability of cooperative relaying under correlated interference."""

from .analytic import DeliveryResult, SubsetMask, delivery_probability, one_relay_closed_forms, throughput
from .errors import (ConfigError, CoopRelayError, DegenerateGeometry, EtaSingular, ExpansionTooLarge,
                     NonConvergence, TooManyRelays, WindowTooSmall)
from .montecarlo import EstimateWithError, estimate_attempts, estimate_delivery
from .quadrature import QuadratureSpec
from .retransmission import (AttemptDistribution, attempt_distribution_dependent,
                             attempt_distribution_independent, conditional_success)
from .scenario import (ChannelParams, Combiner, InterferenceModel, PathLossLaw, Position, Scenario,
                       line_scenario, preset)

__version__ = "0.1.0"
