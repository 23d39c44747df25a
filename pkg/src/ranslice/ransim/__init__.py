"""Round-based RAN environment: channels, traffic, per-slice MAC scheduling, KPMs."""

from .channel import (ChannelState, bler_probability, cqi_to_efficiency, cqi_to_mcs,
                      prb_capacity, snr_to_cqi, step_channel)
from .env import (ProtocolError, RanEnv, SessionRound, SessionState, compute_kpm,
                  generate_traffic, schedule_slice)
from .scenario import (RadioConfig, Scenario, ScenarioError, SessionTemplate,
                       TRAFFIC_CLASSES, load_scenario, preset)

__all__ = [
    "ChannelState", "bler_probability", "cqi_to_efficiency", "cqi_to_mcs", "prb_capacity",
    "snr_to_cqi", "step_channel", "ProtocolError", "RanEnv", "SessionRound", "SessionState",
    "compute_kpm", "generate_traffic", "schedule_slice", "RadioConfig", "Scenario",
    "ScenarioError", "SessionTemplate", "TRAFFIC_CLASSES", "load_scenario", "preset",
]
