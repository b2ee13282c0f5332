"""Desk-scale simulator for device-independent randomness expansion:
CHSH devices, the VV and RUV sub-protocols, their composition, a Trevisan
extractor, the parameter and error calculus, and a small-dimension
information-theory toolkit."""
from .bits import BitString
from .errors import (CapacityError, CertirandError, ConfigError, InputError, InvalidProbability, InvalidSeedLength,
                     NonSignalingViolation, ProtocolError)
from .params import ProtocolConstants, g, g_iter, load_constants, ruv_params, vv_params

__version__ = "0.1.0"

__all__ = [
    "BitString", "CapacityError", "CertirandError", "ConfigError", "InputError", "InvalidProbability",
    "InvalidSeedLength", "NonSignalingViolation", "ProtocolError", "ProtocolConstants", "g", "g_iter",
    "load_constants", "ruv_params", "vv_params",
]
