"""Tunnel-diode LC oscillator workbench: device models, closed-form tank
predictions, a time-domain circuit simulator, the measurement DSP chain and
tuning-curve fitting."""

__version__ = "0.1.0"
