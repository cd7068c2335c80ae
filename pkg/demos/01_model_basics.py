"""Build a grid HMM, inspect its kernels, and check its mixing behaviour.

The running example everywhere in these demos is a two-state chain that
stays put with probability 0.7 and a noisy sensor that reports the landing
state correctly with probability 0.8.
"""

import numpy as np

import filterlab as fl

P = [[0.7, 0.3], [0.3, 0.7]]
Q = [[0.8, 0.2], [0.2, 0.8]]

model = fl.example_product(P, Q)
print("state cells:", model.states.cells)
print("observation cells:", model.obs.cells)

# Stepping kernels: "transition and observe a".  Their sum over observations
# recovers the chain's transition matrix exactly.
for a in model.obs.cells:
    print(f"stepping kernel for observation {a}:\n", model.stepping_matrix(a))
total = sum(model.stepping_matrix(a) for a in model.obs.cells)
print("sum of stepping kernels == P:",
      np.allclose(total, fl.markov_kernel(model), atol=1e-14))

# Composition chains two models; iteration collects observations in blocks.
two_step = fl.iterate(model, 2)
print("\ntwo-step observation blocks:", two_step.obs.cells)
print("block (1,1) kernel equals M(1) @ M(1):",
      np.allclose(two_step.stepping_matrix((1, 1)),
                  model.stepping_matrix(1) @ model.stepping_matrix(1)))

# Stationary analysis: the candidate plus per-step worst-case mixing
# distances, with an explicit flag when the evidence does not decay.
pi, report = fl.stationary(model)
print("\nstationary density:", pi.values)
print("worst-case distance to pi after n steps:", report.sup_tv[:6])
print("strong-ergodicity evidence:", report.ergodic)

# Simulation is reproducible under a fixed seed.
path = fl.simulate(model, pi, n=10, seed=0)
print("\nsampled states:      ", path.states)
print("sampled observations:", path.observations)
freq = np.mean([s == 1 for s in fl.simulate(model, pi, 100_000, seed=1).states])
print(f"empirical frequency of state 1 over 1e5 steps: {freq:.4f}")
