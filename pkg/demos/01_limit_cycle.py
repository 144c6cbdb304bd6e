"""
From small-signal start-up to a limit cycle
===========================================

A tunnel diode biased inside its negative-resistance region can cancel the
losses of an LC tank. This demo walks the default cryogenic tank from the
linear start-up check to a full transient simulation and compares the
oscillation frequency with the plain LC formula.

Run with ``python demos/01_limit_cycle.py``.
"""

# %%
# The tank and the diode
# ----------------------
# ``TankConfig()`` holds the default component values: 95 nH, the tunnel
# junction's depletion capacitance, a varactor and the parasitic capacitance.
from tdobench.analytic import BiasPoint, TankConfig, startup_condition, total_capacitance
from tdobench.models import BD6_CRYO, differential_resistance
from tdobench.simulator import SimRunConfig, simulate

tank = TankConfig()
for v in (0.04, 0.10, 0.14, 0.18, 0.35):
    bias = BiasPoint(v)
    pred = startup_condition(BD6_CRYO, tank, bias)
    print(f"V_TD = {v:.2f} V   C = {total_capacitance(tank, bias) * 1e12:6.3f} pF   "
          f"R_d = {differential_resistance(BD6_CRYO, v) / 1e3:8.2f} kOhm   "
          f"margin = {pred.margin:5.2f}   starts: {pred.oscillates}")

# %%
# The start-up margin compares the tank's parallel loss resistance L/(C R)
# with the magnitude of the diode's negative resistance. Above 1 the
# oscillation grows from noise.
#
# Transient simulation
# --------------------
# ``simulate`` integrates the circuit with a fixed-step RK4 kernel, drops the
# first 10 us of settling and returns the tank-voltage trace plus a summary.
res = simulate(SimRunConfig(bias=BiasPoint(0.1), dt=50e-12))
print(f"\noscillating: {res.oscillating}")
print(f"amplitude:   {res.amplitude * 1e3:.1f} mV")
print(f"frequency:   {res.frequency / 1e6:.3f} MHz (LC formula at the rectified bias: "
      f"{res.analytic_frequency / 1e6:.3f} MHz)")
print(f"output:      {res.output_power_dbm:.1f} dBm after pickup coil and coupler")

# %%
# The simulated frequency sits a little above the LC value. The large swing
# samples the voltage-dependent junction capacitance over a cycle, and the
# effective capacitance differs from its value at the mean bias.
#
# Outside the negative-resistance region the kick decays away:
off = simulate(SimRunConfig(bias=BiasPoint(0.35), dt=50e-12))
print(f"\nV_TD = 0.35 V: amplitude {off.amplitude:.2e} V, oscillating: {off.oscillating}")
