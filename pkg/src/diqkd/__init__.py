"""Device-independent QKD with spin-coupled cavities: heralded-state
simulation and collective-attack key rates."""

from .bell_keyrate import KeyRateResult, chsh_horodecki, keyrate_factor, qber_min
from .cavity import CavityParams, analytic_heralded, reflection_coefficients
from .protocol import ProtocolConfig, evaluate, optimize_p, run_protocol, select_strategy

__all__ = [
    "CavityParams",
    "KeyRateResult",
    "ProtocolConfig",
    "analytic_heralded",
    "chsh_horodecki",
    "evaluate",
    "keyrate_factor",
    "optimize_p",
    "qber_min",
    "reflection_coefficients",
    "run_protocol",
    "select_strategy",
]
