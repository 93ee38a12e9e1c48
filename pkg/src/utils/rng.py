"""
Seeded random streams
Philox counter-based generators give identical draw sequences for a seed
on every platform; normal variates come from numpy's ziggurat sampler.
"""
import numpy as np

from src.core.errors import ParameterError


class RngStream:
    """A reproducible stream of Gaussian draws"""

    def __init__(self, seed: int):
        """
        Args:
            seed: Non-negative 64-bit integer seed
        """
        if int(seed) != seed or seed < 0 or seed >= 2 ** 64:
            raise ParameterError(f"seed must be an integer in [0, 2**64), got {seed!r}")
        self.seed = int(seed)
        self.generator = np.random.Generator(np.random.Philox(self.seed))

    @property
    def counter(self) -> int:
        """Philox block counter (advances with every draw)"""
        return int(self.generator.bit_generator.state["state"]["counter"][0])

    def normal(self, std: float, shape) -> np.ndarray:
        """i.i.d. N(0, std^2) draws filled in C order"""
        return std * self.generator.standard_normal(shape)

    def __repr__(self) -> str:
        return f"RngStream(seed={self.seed}, counter={self.counter})"
