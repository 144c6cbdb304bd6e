"""
Phase noise and supply interference
===================================

First the estimator is checked on a synthetic carrier with a known white
phase-noise level. Then the simulated oscillator is run twice: once from a
quiet battery and once from a bench supply that carries an 810 kHz ripple.
"""

# %%
# Calibration on a synthetic tone
# -------------------------------
import numpy as np

from tdobench.analytic import TankConfig
from tdobench.dsp import extract_frequency, phase_noise, power_spectrum
from tdobench.simulator import BATTERY_NOISE, BENCH_SUPPLY_NOISE, SimRunConfig, output_chain, simulate, synth_tone

offsets = np.array([1e5, 3e5, 1e6, 3e6, 1e7])
tone = synth_tone(141.8e6, 0.015, 200e-6, 20e9, phase_noise_dbc=-100.0, seed=1)
prof = phase_noise(tone, offsets)
print("injected -100 dBc/Hz, recovered:")
for f, l in zip(offsets, prof.dbc_per_hz):
    print(f"  {f / 1e3:7.0f} kHz  {l:7.2f} dBc/Hz")

# %%
# The simulated oscillator
# ------------------------
# The noise current density of ``BATTERY_NOISE`` is tuned so that the
# default tank lands near -115 dBc/Hz at 1 MHz.
tank = TankConfig()
quiet = simulate(SimRunConfig(dt=50e-12, duration=60e-6, noise=BATTERY_NOISE))
noisy = simulate(SimRunConfig(dt=50e-12, duration=60e-6, noise=BENCH_SUPPLY_NOISE))

for name, res in (("battery", quiet), ("bench supply", noisy)):
    out = output_chain(res.trace, tank)
    spec = power_spectrum(out, window="hann")
    fc = extract_frequency(out)
    side = [spec.power_dbm[int(round((fc + s) / spec.df)) + np.arange(-2, 3)].max() for s in (-810e3, 810e3)]
    l1m = phase_noise(out, [1e6]).dbc_per_hz[0]
    print(f"{name:>12}: carrier {spec.power_dbm.max():6.1f} dBm, sidebands at -/+810 kHz "
          f"{side[0]:6.1f} / {side[1]:6.1f} dBm, L(1 MHz) {l1m:6.1f} dBc/Hz")
