"""Power control and coverage analysis for D2D links underlaid on a cellular uplink."""

from .netmodel import NetworkRealization, PowerProfile, SystemParams, sample_realization

__all__ = ["NetworkRealization", "PowerProfile", "SystemParams", "sample_realization"]
__version__ = "0.1.0"
