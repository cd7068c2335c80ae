"""The filtering process: likelihoods, Bayes updates, and exact pushforwards.

One filter step maps a density ``x`` and an observation ``a`` to the
likelihood ``g(x, a)`` (mass surviving the stepping kernel) and the updated
density ``h(x, a)`` (that mass renormalized).  Because observation grids are
finite, the law of the filter after ``n`` steps started from a point is an
exactly enumerable weighted set of densities; this module materializes it and
evaluates the induced averaging operator on test functions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import BudgetExceeded, SpaceMismatch
from .measures import PointMassMeasure
from .model import DensityVector, HmmModel

ENUMERATION_BUDGET = 10**7


def _masses(model: HmmModel, x: DensityVector) -> np.ndarray:
    if not x.space.same_as(model.states):
        raise SpaceMismatch("density lives on a different state space")
    return x.masses


def likelihood(model: HmmModel, x: DensityVector, a) -> float:
    """Mass surviving the stepping kernel of ``a``: the observation density.

    Against the tau weights these integrate to one over the observation grid.
    """
    return float(_masses(model, x) @ model.stepping_matrix(a).sum(axis=1))


def observation_law(model: HmmModel, x: DensityVector) -> np.ndarray:
    """All likelihoods at once: g(x, a) for every observation cell a."""
    return _masses(model, x) @ model.stepping_matrices.sum(axis=2).T


def update(model: HmmModel, x: DensityVector, a) -> DensityVector:
    """Normalized Bayes update; a zero-likelihood observation returns x unchanged."""
    out = _masses(model, x) @ model.stepping_matrix(a)
    total = out.sum()
    if total <= 0.0:
        return x
    return DensityVector.from_masses(model.states, out / total)


def pushforward(model: HmmModel, x: DensityVector) -> PointMassMeasure:
    """Exact one-step law of the filter started at ``x``.

    One atom per observation with positive likelihood, carrying weight
    ``g(x, a) * tau(a)``; the weights sum to one.
    """
    return pushforward_n(model, x, 1)


@dataclass(frozen=True)
class PushforwardNode:
    """One observation sequence in the exact n-step enumeration."""

    obs_sequence: tuple
    point: DensityVector
    weight: float


def _enumerate_masses(model: HmmModel, x: DensityVector, n: int,
                      prune_eps: float, budget: int):
    """Vectorized depth-n sweep over observation sequences.

    Returns per-sequence unnormalized mass vectors, cumulative weights
    (likelihood times tau mass), sequence index array and pruned mass.  The
    chain rule for stepping kernels makes the depth-n recursion a product of
    per-step matrices, so each level multiplies every surviving sequence by
    every stepping matrix at once.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    n_obs = model.n_obs
    if n_obs**n > budget:
        raise BudgetExceeded(f"|A|^n = {n_obs}**{n} exceeds budget {budget}")
    tau = model.obs.tau_weights
    cur = _masses(model, x)[None, :]
    tau_prod = np.array([1.0])
    seqs = np.zeros((1, 0), dtype=np.int64)
    pruned = 0.0
    for _ in range(n):
        # (seq, a, t): advance every sequence by every observation; the mass
        # vectors carry the cumulative likelihood, tau_prod the tau mass
        stepped = np.einsum("qs,ast->qat", cur, model.stepping_matrices)
        base = np.repeat(seqs, n_obs, axis=0)
        ext = np.tile(np.arange(n_obs), len(seqs))[:, None]
        seqs = np.concatenate([base, ext], axis=1)
        cur = stepped.reshape(-1, model.n_states)
        tau_prod = (tau_prod[:, None] * tau[None, :]).ravel()
        if prune_eps > 0.0:
            cumw = cur.sum(axis=1) * tau_prod
            keep = cumw >= prune_eps
            pruned += float(cumw[~keep].sum())
            cur, tau_prod, seqs = cur[keep], tau_prod[keep], seqs[keep]
    weights = cur.sum(axis=1) * tau_prod
    return cur, weights, seqs, pruned


def pushforward_nodes(model: HmmModel, x: DensityVector, n: int,
                      prune_eps: float = 0.0,
                      budget: int = ENUMERATION_BUDGET) -> list[PushforwardNode]:
    """Unmerged n-step enumeration in lexicographic sequence order.

    Zero-likelihood sequences keep the convention point ``x`` but carry zero
    weight, so they are omitted.
    """
    cur, weights, seqs, _ = _enumerate_masses(model, x, n, prune_eps, budget)
    nodes = []
    for masses, w, seq in zip(cur, weights, seqs):
        if w <= 0.0:
            continue
        total = masses.sum()
        point = DensityVector.from_masses(model.states, masses / total)
        labels = tuple(model.obs.cells[i] for i in seq)
        nodes.append(PushforwardNode(labels, point, float(w)))
    return nodes


def pushforward_n(model: HmmModel, x: DensityVector, n: int,
                  prune_eps: float = 0.0,
                  budget: int = ENUMERATION_BUDGET) -> PointMassMeasure:
    """Exact n-step filter law as a point-mass measure (atoms merged).

    ``prune_eps`` drops sequences whose cumulative weight falls below the
    threshold; the dropped mass is reported on the returned measure.
    """
    cur, weights, _, pruned = _enumerate_masses(model, x, n, prune_eps, budget)
    keep = weights > 0.0
    cur, weights = cur[keep], weights[keep]
    if len(weights) == 0:
        raise BudgetExceeded("pruning removed all mass; lower prune_eps")
    totals = cur.sum(axis=1)
    points = (cur / totals[:, None]) / model.states.lambda_weights[None, :]
    measure = PointMassMeasure(model.states, points, weights, pruned_mass=pruned)
    return measure.merged()


@dataclass(frozen=True)
class LipschitzFunction:
    """Bounded test function on K with declared Lipschitz data.

    ``fn`` maps an array of cell-mass vectors with shape ``(..., n_cells)``
    to values of shape ``(...)``; ``gamma`` and ``sup_norm`` are the declared
    Lipschitz constant (against total variation) and sup norm.
    """

    fn: Callable[[np.ndarray], np.ndarray]
    gamma: float
    sup_norm: float
    name: str = ""

    def __call__(self, x) -> float:
        masses = x.masses if isinstance(x, DensityVector) else np.asarray(x)
        return float(self.fn(masses))

    def on_masses(self, masses: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(masses), dtype=float)


def mass_functional(model_or_space, cells, name: str = "") -> LipschitzFunction:
    """u(x) = x(F): the mass a density gives to a fixed cell subset.

    Lipschitz constant one half, sup norm one.
    """
    space = getattr(model_or_space, "states", model_or_space)
    mask = cells if isinstance(cells, np.ndarray) else space.mask(cells)
    return LipschitzFunction(
        fn=lambda masses: masses[..., mask].sum(axis=-1),
        gamma=0.5, sup_norm=1.0, name=name or f"mass_of({cells})",
    )


def distance_functional(center: DensityVector, name: str = "") -> LipschitzFunction:
    """u(x) = ||x - z0||: total-variation distance to a fixed density."""
    c = center.masses

    def fn(masses):
        return np.abs(masses - c).sum(axis=-1)

    return LipschitzFunction(fn=fn, gamma=1.0, sup_norm=2.0,
                             name=name or "tv_distance_to_center")


def estimate_gamma(fn, space, samples: int = 2000, seed: int = 0) -> float:
    """Sampled lower bound on the Lipschitz constant of a user function.

    Draws random density pairs and returns the largest observed ratio
    ``|u(x) - u(y)| / ||x - y||``.  This is a lower bound only; supply the
    analytic constant when one is known.
    """
    rng = np.random.default_rng(seed)
    xs = rng.dirichlet(np.ones(space.n), size=samples)
    ys = rng.dirichlet(np.ones(space.n), size=samples)
    tv = np.abs(xs - ys).sum(axis=1)
    keep = tv > 1e-9
    vals = np.abs(np.asarray(fn(xs[keep])) - np.asarray(fn(ys[keep])))
    return float((vals / tv[keep]).max()) if keep.any() else 0.0


def lipschitz_function_from(fn, space, sup_norm: float, samples: int = 2000,
                            seed: int = 0, name: str = "") -> LipschitzFunction:
    """Wrap a user function with an estimated (lower-bound) constant."""
    return LipschitzFunction(fn=fn, gamma=estimate_gamma(fn, space, samples, seed),
                             sup_norm=sup_norm, name=name or "user_function")


def apply_T(model: HmmModel, u: LipschitzFunction, x: DensityVector, n: int,
            budget: int = ENUMERATION_BUDGET) -> float:
    """n-fold averaging operator: expectation of u under the n-step filter law."""
    if n == 0:
        return u(x)
    cur, weights, _, _ = _enumerate_masses(model, x, n, 0.0, budget)
    keep = weights > 0.0
    cur, weights = cur[keep], weights[keep]
    normalized = cur / cur.sum(axis=1, keepdims=True)
    return float(weights @ u.on_masses(normalized))


def apply_T_grid(model: HmmModel, u: LipschitzFunction, masses_grid: np.ndarray,
                 n: int) -> np.ndarray:
    """Averaging operator evaluated on a whole grid of start masses at once.

    Enumerates the ``|A|**n`` products of stepping matrices once and reuses
    them for every grid point; zero-likelihood branches contribute nothing.
    """
    grid = np.atleast_2d(np.asarray(masses_grid, dtype=float))
    if n == 0:
        return u.on_masses(grid)
    tau = model.obs.tau_weights
    products = [(np.eye(model.n_states), 1.0)]
    for _ in range(n):
        products = [
            (prod @ model.stepping_matrices[a], tw * tau[a])
            for prod, tw in products
            for a in range(model.n_obs)
        ]
    out = np.zeros(len(grid))
    for prod, tw in products:
        stepped = grid @ prod
        g = stepped.sum(axis=1)
        pos = g > 0
        if not pos.any():
            continue
        vals = u.on_masses(stepped[pos] / g[pos, None])
        out[pos] += tw * g[pos] * vals
    return out


@dataclass
class FilterTrajectory:
    """Filter states along an observation sequence.

    ``states[0]`` is the start; ``zero_likelihood_steps`` lists the indices
    where the observation had zero likelihood and the convention "keep the
    current density" was applied.
    """

    observations: tuple
    states: list[DensityVector]
    zero_likelihood_steps: list[int] = field(default_factory=list)

    def to_csv(self, path) -> None:
        space = self.states[0].space
        with open(path, "w") as fh:
            cells = ",".join(str(c) for c in space.cells)
            fh.write(f"step,observation,{cells}\n")
            for k, state in enumerate(self.states):
                obs = "" if k == 0 else str(self.observations[k - 1])
                vals = ",".join(repr(v) for v in state.values)
                fh.write(f"{k},{obs},{vals}\n")


def run_filter(model: HmmModel, x0: DensityVector, obs_seq: Sequence
               ) -> FilterTrajectory:
    """Sequential Bayes updates along a fixed observation sequence."""
    states = [x0]
    zero_steps = []
    x = x0
    for k, a in enumerate(obs_seq):
        if likelihood(model, x, a) <= 0.0:
            zero_steps.append(k + 1)
        x = update(model, x, a)
        states.append(x)
    return FilterTrajectory(tuple(obs_seq), states, zero_steps)


@dataclass
class LipschitzProbeReport:
    """Observed smoothing ratios of the averaging operator on sampled pairs.

    ``max_ratio[n]`` is the largest ``|T^n u(x) - T^n u(y)| / ||x - y||``
    seen.  ``uniform_bound`` (three times the declared Lipschitz constant)
    holds at every horizon; ``one_step_bound`` additionally caps n = 1.
    """

    gamma_u: float
    sup_norm_u: float
    max_ratio: dict[int, float]
    one_step_bound: float
    uniform_bound: float

    @property
    def one_step_ok(self) -> bool:
        r = self.max_ratio.get(1)
        return r is None or r <= self.one_step_bound + 1e-9

    @property
    def uniform_ok(self) -> bool:
        return all(r <= self.uniform_bound + 1e-9 for r in self.max_ratio.values())


def lipschitz_probe(model: HmmModel, u: LipschitzFunction, n: int,
                    sample_pairs: int = 200, seed: int = 0) -> LipschitzProbeReport:
    """Probe the equicontinuity of the averaging operator on random pairs.

    Reports the empirical maximum ratio per horizon up to ``n``; downstream
    checks compare it against the one-step bound ``sup_norm + 2 gamma`` and
    the uniform bound ``3 gamma``.
    """
    rng = np.random.default_rng(seed)
    k = model.n_states
    xs = rng.dirichlet(np.ones(k), size=sample_pairs)
    ys = rng.dirichlet(np.ones(k), size=sample_pairs)
    tv = np.abs(xs - ys).sum(axis=1)
    keep = tv > 1e-9
    xs, ys, tv = xs[keep], ys[keep], tv[keep]
    max_ratio: dict[int, float] = {}
    for horizon in range(1, n + 1):
        tx = apply_T_grid(model, u, xs, horizon)
        ty = apply_T_grid(model, u, ys, horizon)
        ratios = np.abs(tx - ty) / tv
        max_ratio[horizon] = float(ratios.max()) if len(ratios) else 0.0
    return LipschitzProbeReport(
        gamma_u=u.gamma,
        sup_norm_u=u.sup_norm,
        max_ratio=max_ratio,
        one_step_bound=u.sup_norm + 2.0 * u.gamma,
        uniform_bound=3.0 * u.gamma,
    )
