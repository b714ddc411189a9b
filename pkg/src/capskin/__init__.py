"""Simulation, calibration and data acquisition for capacitive fabric skins."""

from capskin.capmodel import FittedCoefficients, TaxelGeometry, TaxelModel
from capskin.dynamics import SensorChannelConfig, ShieldingMode
from capskin.errors import CalibrationError, ConfigError, DataError, DomainError, RankError
from capskin.topology import SkinTopology, build_reference_topology

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "ConfigError",
    "DataError",
    "DomainError",
    "FittedCoefficients",
    "RankError",
    "SensorChannelConfig",
    "ShieldingMode",
    "SkinTopology",
    "TaxelGeometry",
    "TaxelModel",
    "build_reference_topology",
]
