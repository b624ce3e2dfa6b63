"""First-passage-time toolkit: weighted KS law, optimal-sell densities, trading thresholds."""

__version__ = "0.1.0"
