"""Ergodicity experiments: merging filter laws and a negative control.

The noisy-sensor model's filter laws started from opposite vertices merge
geometrically in transport distance, never undercutting the barycenter
floor.  The periodic control (deterministic two-cycle, uninformative
observation) must show no decay anywhere, and the diagnostics flag exactly
that.
"""

import numpy as np

import filterlab as fl
from filterlab.filter import mass_functional
from filterlab.lab import restricted_perron_density

model = fl.example_product([[0.7, 0.3], [0.3, 0.7]], [[0.8, 0.2], [0.2, 0.8]])
e1 = fl.DensityVector.point_mass(model.states, 1)
e2 = fl.DensityVector.point_mass(model.states, 2)

report = fl.weak_contraction_report(model, [(e1, e2)], n_max=9)
print("n   distance      barycenter floor")
for n in range(report.n_max):
    print(f"{n + 1:>2}  {report.distances[0, n]:.6e}  "
          f"{report.lower_bounds[0, n]:.6e}")
rate, residual = report.rates[0]
print(f"fitted decay rate: {rate:.4f} (fit residual {residual:.2e})")
print("floor respected everywhere:", report.floor_ok)

# Oscillation decay of iterated averages over a simplex grid.
u = mass_functional(model, [1])
osc = fl.osc_decay_report(model, [u], n_max=8)
print("\noscillation of the n-fold average:", np.round(osc.oscillations[0], 6))
print("monotone:", osc.monotone_ok, "| decay detected:", osc.decay_detected)

# Negative control: the filter is a deterministic two-cycle; nothing decays.
control = fl.lab.periodic_control_model()
c1 = fl.DensityVector.point_mass(control.states, 1)
c2 = fl.DensityVector.point_mass(control.states, 2)
ctrl_report = fl.weak_contraction_report(control, [(c1, c2)], n_max=6)
print("\nperiodic control distances:", ctrl_report.distances[0])
ctrl_osc = fl.osc_decay_report(control, [mass_functional(control, [1])], n_max=6)
print("periodic control oscillations:", ctrl_osc.oscillations[0],
      "| decay detected:", ctrl_osc.decay_detected)

# Tightness probe: how much mass the filter law keeps near the attracting
# density of the informative observation block.
partition = fl.example_partition([[0.7, 0.3], [0.3, 0.7]], [[1], [2]])
center = restricted_perron_density(partition, [1], 1)
probe = fl.tightness_probe(partition, center, epsilon=0.1,
                           starts=[fl.DensityVector.point_mass(partition.states, s)
                                   for s in (1, 2)], n_max=8)
print("\nmass near the attracting density, per start and step:")
print(np.round(probe.masses, 4))
print("tail lower estimate:", probe.liminf_estimate)
