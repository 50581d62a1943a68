"""Contact-interval hazard estimation for epidemic data."""

from .chainbinom import DiscreteHazard, chain_binomial_loglik, fit_escape_probability
from .em import (EMConfig, EMResult, WeightedEventSet, em_estimate, em_estimate_mass_action,
                 infector_probabilities, marginal_estimate, marginal_nelson_aalen_given,
                 marginal_variance)
from .estimators import (Band, StepEstimate, confidence_band, kaplan_meier, nelson_aalen,
                         nelson_aalen_mass_action)
from .hazards import (Exponential, Gamma, HazardModel, SmoothedHazard, Weibull, fit_parametric,
                      make_model)
from .records import (Contacts, EpidemicRecord, PersonHistory, RecordError, RiskSetFunction,
                      infectious_set, mass_action_risk_set, risk_set)
from .simulate import SimulationConfig, generate_ws_network, simulate_epidemic
from .smoothing import SmootherConfig, smooth_cumhaz, smooth_kernel

__version__ = "0.1.0"
