"""Option pricing as ordinal classification of the scale-free price ``100 C / K``."""
from .labels import BinConfig, bin_of, scaled_output

__version__ = "0.1.0"
__all__ = ["BinConfig", "bin_of", "scaled_output"]
