"""The filtering process and its exactly enumerated laws.

One filter step splits the current belief into one branch per observation:
the branch weight is the observation's likelihood, the branch point the
Bayes update.  With finitely many observations the n-step law is a finite
weighted set of beliefs, computed here exactly.
"""

import numpy as np

import filterlab as fl
from filterlab.filter import mass_functional, pushforward_nodes

model = fl.example_product([[0.7, 0.3], [0.3, 0.7]], [[0.8, 0.2], [0.2, 0.8]])
x = fl.DensityVector(model.states, [0.5, 0.5])

print("likelihood of observation 1 from the flat belief:",
      fl.likelihood(model, x, 1))
print("updated belief:", fl.update(model, x, 1).values)

# The exact one-step law: one atom per observation.
law = fl.pushforward(model, x)
for point, weight in zip(law.points, law.weights):
    print(f"  belief {point} with weight {weight}")

# Deep laws stay exact; every node carries its observation sequence.
nodes = pushforward_nodes(model, x, 3)
print(f"\n3-step law has {len(nodes)} branches; the heaviest:")
for node in sorted(nodes, key=lambda n: -n.weight)[:3]:
    print(f"  obs {node.obs_sequence}: weight {node.weight:.4f} "
          f"point {np.round(node.point.values, 4)}")

# Chaining one-step laws agrees with the one-shot law of the block model.
deep = fl.pushforward_n(model, x, 3)
block = fl.pushforward(fl.iterate(model, 3), x)
gap = np.abs(np.sort(deep.points, axis=0) - np.sort(block.points, axis=0)).max()
print("\nchained law equals block-model law, max point gap:", gap)

# Filtering a concrete observation record.
traj = fl.run_filter(model, x, [1, 1, 2, 1])
print("\nfilter trajectory along observations (1,1,2,1):")
for k, state in enumerate(traj.states):
    print(f"  step {k}: {np.round(state.values, 4)}")

# The averaging operator only smooths: its Lipschitz ratio never exceeds
# three times the test function's constant, at any horizon.
u = mass_functional(model, [1])
probe = fl.lipschitz_probe(model, u, n=5, sample_pairs=500, seed=0)
print("\nempirical smoothing ratios per horizon:", probe.max_ratio)
print("uniform bound 3*gamma:", probe.uniform_bound,
      "| all horizons within it:", probe.uniform_ok)
