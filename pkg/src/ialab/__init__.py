"""ialab: interference alignment, power control and compressed CSI feedback
for K-user MIMO interference networks, at desk-simulation scale."""

__version__ = "0.1.0"
