"""Near-real-time RAN slicing lab: simulated MAC, E2-style control loop, GCN+PPO xApp."""

__version__ = "0.1.0"
