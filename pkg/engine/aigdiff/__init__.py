"""
aigdiff - level-scheduled discrete diffusion for And-Inverter Graph synthesis.
"""

__version__ = "0.1.0"
