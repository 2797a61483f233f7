"""tapc: compiler and bit-accurate simulator for ternary-weight CNN inference
on racetrack-backed associative processors."""

__version__ = "0.1.0"
