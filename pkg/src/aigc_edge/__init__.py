"""Edge AIGC service simulator with a two-timescale RL stack."""

from .config import SimConfig

__all__ = ["SimConfig"]
__version__ = "0.1.0"
