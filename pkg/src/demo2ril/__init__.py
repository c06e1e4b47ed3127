"""demo2ril: synthesize executable robot instruction programs from
tabletop manipulation demonstrations recorded as object trajectories."""

__version__ = "0.1.0"
