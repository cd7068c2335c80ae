"""Contraction certificates for products of nonnegative kernels.

A kernel whose positive entries fill an exact rectangle of rows and columns
contracts the projective geometry of densities it acts on: the worst
cross-ratio of its entries yields a factor ``(kappa - 1) / (kappa + 1)`` per
application, and a product of such kernels merges any two starts at the rate
``2 * prod (kappa_m - 1) / (kappa_m + 1)`` in total variation.

On top of that sit the model-level checkers: an eventually-subrectangular
product witness, the rank-one-closure probe for normalized stepping products,
the block-positivity certificate for the density tensor, and the derived
uniform-likelihood/contraction constants with their sampled verification.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    AmbiguousSupport,
    BudgetExceeded,
    CertificateInvalid,
    DegenerateProduct,
    DivisionByZeroMass,
    FilterlabError,
    HypothesisViolated,
    KappaBelowOne,
    NonpositiveEntry,
)
from .model import DensityVector, HmmModel


def _positive_mask(kernel: np.ndarray, zero_tol: float) -> np.ndarray:
    kernel = np.asarray(kernel, dtype=float)
    if zero_tol > 0.0:
        ambiguous = (kernel > 0.0) & (kernel < zero_tol)
        if ambiguous.any():
            i, j = np.argwhere(ambiguous)[0]
            raise AmbiguousSupport(
                f"entry ({i},{j})={kernel[i, j]!r} lies strictly between 0 "
                f"and the support tolerance {zero_tol!r}"
            )
        return kernel >= zero_tol
    return kernel > 0.0


@dataclass(frozen=True)
class RectSupport:
    """Row and column index sets on which a kernel is strictly positive."""

    rows: tuple
    cols: tuple

    def masks(self, shape) -> tuple[np.ndarray, np.ndarray]:
        f = np.zeros(shape[0], dtype=bool)
        g = np.zeros(shape[1], dtype=bool)
        f[list(self.rows)] = True
        g[list(self.cols)] = True
        return f, g


def rectangular_support(kernel, zero_tol: float = 0.0) -> RectSupport | None:
    """The support rectangle of a kernel, or None if the support is not one.

    Entries strictly between zero and a positive ``zero_tol`` raise rather
    than being coerced either way.
    """
    pos = _positive_mask(kernel, zero_tol)
    rows = np.nonzero(pos.any(axis=1))[0]
    cols = np.nonzero(pos.any(axis=0))[0]
    if len(rows) == 0 or len(cols) == 0:
        return None
    if not pos[np.ix_(rows, cols)].all():
        return None
    return RectSupport(tuple(int(r) for r in rows), tuple(int(c) for c in cols))


def is_subrectangular(kernel, zero_tol: float = 0.0) -> bool:
    """Positivity at (i1,j1) and (i2,j2) forces it at (i1,j2) and (i2,j1).

    Equivalent to the positive set being an exact rectangle; the zero kernel
    satisfies the implication vacuously.
    """
    pos = _positive_mask(kernel, zero_tol)
    if not pos.any():
        return True
    return rectangular_support(kernel, zero_tol) is not None


def cross_ratio_kappa(kernel, rows=None, cols=None, max_dense: int = 2_000_000
                      ) -> float:
    """Square root of the worst entry cross-ratio on the support rectangle.

    Exhaustive over all index quadruples when the intermediate array stays
    small, otherwise via the equivalent column-pair ratio reduction; both
    compute the exact maximum.
    """
    kernel = np.asarray(kernel, dtype=float)
    if rows is None or cols is None:
        sup = rectangular_support(kernel)
        if sup is None:
            raise NonpositiveEntry("kernel has no rectangular support; pass rows/cols")
        rows = sup.rows if rows is None else rows
        cols = sup.cols if cols is None else cols
    block = kernel[np.ix_(list(rows), list(cols))]
    if np.any(block <= 0):
        i, j = np.argwhere(block <= 0)[0]
        raise NonpositiveEntry(
            f"kernel entry at support position ({i},{j}) is not positive"
        )
    nf, ng = block.shape
    if (nf * ng) ** 2 <= max_dense:
        cr = np.einsum("ac,bd->abcd", block, block) / np.einsum(
            "bc,ad->abcd", block, block
        )
        return float(np.sqrt(cr.max()))
    # max over (t1,t2) of (max_s k(s,t1)/k(s,t2)) / (min_s k(s,t1)/k(s,t2))
    worst = 1.0
    for t2 in range(ng):
        ratios = block / block[:, t2][:, None]
        worst = max(worst, float((ratios.max(axis=0) / ratios.min(axis=0)).max()))
    return float(np.sqrt(worst))


def hopf_bound(kappas) -> float:
    """Total-variation merge bound 2 * prod (kappa_m - 1)/(kappa_m + 1)."""
    kappas = np.asarray(kappas, dtype=float)
    if np.any(kappas < 1.0):
        raise KappaBelowOne(f"cross-ratio coefficients must be >= 1, got {kappas}")
    return float(2.0 * np.prod((kappas - 1.0) / (kappas + 1.0)))


@dataclass
class HopfCheck:
    """Both sides of the projective contraction estimate for one product."""

    achieved: float
    bound: float
    kappas: tuple
    supports: tuple

    @property
    def ok(self) -> bool:
        return self.achieved <= self.bound + 1e-12


def verify_hopf(kernels, x, y, zero_tol: float = 0.0) -> HopfCheck:
    """Evaluate the contraction estimate on a concrete kernel product.

    ``x`` and ``y`` are nonnegative mass row-vectors.  Hypotheses checked:
    every factor has rectangular support, both starts charge the first row
    set, and the product keeps positive mass from each first-row state.
    Raises :class:`HypothesisViolated` naming the failing hypothesis, and
    :class:`FilterlabError` if the (proved) estimate were ever exceeded.
    """
    kernels = [np.asarray(k, dtype=float) for k in kernels]
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    supports = []
    kappas = []
    for m, k in enumerate(kernels):
        sup = rectangular_support(k, zero_tol)
        if sup is None:
            raise HypothesisViolated(f"kernel {m} does not have rectangular support")
        supports.append(sup)
        kappas.append(cross_ratio_kappa(k, sup.rows, sup.cols))
    f1 = list(supports[0].rows)
    if x[f1].sum() <= 0.0:
        raise HypothesisViolated("x carries no mass on the first row set")
    if y[f1].sum() <= 0.0:
        raise HypothesisViolated("y carries no mass on the first row set")
    product = kernels[0]
    for k in kernels[1:]:
        product = product @ k
    row_mass = product[f1].sum(axis=1)
    if np.any(row_mass <= 0.0):
        bad = f1[int(np.argmin(row_mass))]
        raise HypothesisViolated(
            f"product loses all mass from first-row state {bad}"
        )
    xp = x @ product
    yp = y @ product
    achieved = float(np.abs(xp / xp.sum() - yp / yp.sum()).sum())
    bound = hopf_bound(kappas)
    check = HopfCheck(achieved=achieved, bound=bound,
                      kappas=tuple(kappas), supports=tuple(supports))
    if not check.ok:
        raise FilterlabError(
            f"contraction estimate violated: achieved {achieved!r} > bound {bound!r}"
        )
    return check


def birkhoff_osc_step(kernel, u, v, rows=None, cols=None) -> tuple[float, float]:
    """One-step oscillation contraction of the ratio of two kernel integrals.

    Returns ``(osc_F(v1/u1), factor * osc_G(v/u))`` where ``u1 = K u``,
    ``v1 = K v`` and ``factor = (kappa - 1)/(kappa + 1)``.  Raises on a
    vanishing denominator and if the inequality between the two sides fails.
    """
    kernel = np.asarray(kernel, dtype=float)
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if rows is None or cols is None:
        sup = rectangular_support(kernel)
        if sup is None:
            raise NonpositiveEntry("kernel has no rectangular support; pass rows/cols")
        rows = rows if rows is not None else sup.rows
        cols = cols if cols is not None else sup.cols
    rows = list(rows)
    cols = list(cols)
    if np.any(u[cols] <= 0.0):
        raise DivisionByZeroMass("u vanishes on the column set; v/u unbounded")
    u1 = kernel @ u
    v1 = kernel @ v
    if np.any(u1[rows] <= 0.0):
        raise DivisionByZeroMass("kernel integral of u vanishes on the row set")
    ratio1 = v1[rows] / u1[rows]
    ratio0 = v[cols] / u[cols]
    kappa = cross_ratio_kappa(kernel, rows, cols)
    lhs = float(ratio1.max() - ratio1.min())
    rhs = float((kappa - 1.0) / (kappa + 1.0) * (ratio0.max() - ratio0.min()))
    if lhs > rhs + 1e-12:
        raise FilterlabError(
            f"oscillation step violated: {lhs!r} > {rhs!r}"
        )
    return lhs, rhs


# ---------------------------------------------------------------------------
# model-level condition checkers


def check_condition_A(model: HmmModel, max_len: int,
                      budget: int = 10**6):
    """Shortest observation sequence whose stepping product is subrectangular.

    Breadth-first in length then lexicographic observation order, so the
    returned witness is minimal and deterministic.  ``None`` means no witness
    up to ``max_len`` exists, which is inconclusive rather than a refutation.
    """
    queue = deque()
    for a in range(model.n_obs):
        queue.append(((a,), model.stepping_matrices[a]))
    explored = 0
    while queue:
        seq, product = queue.popleft()
        explored += 1
        if explored > budget:
            raise BudgetExceeded(f"explored {explored} sequences, budget {budget}")
        if product.max() > 0.0 and is_subrectangular(product):
            return tuple(model.obs.cells[a] for a in seq)
        if len(seq) < max_len:
            for a in range(model.n_obs):
                child = product @ model.stepping_matrices[a]
                if child.max() > 0.0:
                    queue.append((seq + (a,), child))
    return None


@dataclass
class KrReport:
    """Rank-one approach of normalized stepping products along a sequence.

    ``ratios[k]`` is the second-to-first singular value ratio of the
    normalized product of the first ``k + 1`` stepping kernels.  The verdict
    is convergence evidence with a fitted geometric rate, never a proof of
    membership in the closure.
    """

    sequence: tuple
    ratios: np.ndarray
    verdict: bool
    rate: float | None
    rate_residual: float | None
    tol: float


def _sigma_ratio(product: np.ndarray) -> float:
    s = np.linalg.svd(product / product.max(), compute_uv=False)
    if s[0] <= 0.0:
        raise DegenerateProduct("stepping product vanished")
    return float(s[1] / s[0]) if len(s) > 1 else 0.0


def check_condition_KR(model: HmmModel, seq=None, depth: int | None = None,
                       tol: float = 1e-8, sustain: int = 3) -> KrReport:
    """Probe whether normalized stepping products approach a rank-one kernel.

    Either follow a given observation sequence or search greedily (smallest
    singular-value ratio, ties to the lexicographically first observation) up
    to ``depth``.  Verdict requires the ratio to stay below ``tol`` for
    ``sustain`` consecutive lengths.
    """
    if (seq is None) == (depth is None):
        raise ValueError("pass exactly one of seq or depth")
    ratios = []
    chosen = []
    if seq is not None:
        product = None
        for a in seq:
            step = model.stepping_matrix(a)
            product = step if product is None else product @ step
            if product.max() <= 0.0:
                raise DegenerateProduct(f"product vanished at observation {a!r}")
            product = product / product.max()
            chosen.append(a)
            ratios.append(_sigma_ratio(product))
    else:
        product = None
        for _ in range(depth):
            best = None
            for a in range(model.n_obs):
                step = model.stepping_matrices[a]
                cand = step if product is None else product @ step
                if cand.max() <= 0.0:
                    continue
                cand = cand / cand.max()
                r = _sigma_ratio(cand)
                if best is None or r < best[0]:
                    best = (r, a, cand)
            if best is None:
                raise DegenerateProduct("every one-step extension vanished")
            r, a, product = best
            chosen.append(model.obs.cells[a])
            ratios.append(r)
    ratios = np.asarray(ratios)
    below = ratios < tol
    verdict = any(below[k:k + sustain].all()
                  for k in range(max(0, len(ratios) - sustain + 1)))
    rate = residual = None
    positive = ratios > 0
    tail = np.nonzero(positive)[0]
    tail = tail[tail >= len(ratios) // 2]
    if len(tail) >= 2:
        ns = tail.astype(float)
        logs = np.log(ratios[tail])
        coeffs, res, *_ = np.polyfit(ns, logs, 1, full=True)
        rate = float(np.exp(coeffs[0]))
        residual = float(res[0]) if len(res) else 0.0
    return KrReport(sequence=tuple(chosen), ratios=ratios, verdict=bool(verdict),
                    rate=rate, rate_residual=residual, tol=tol)


@dataclass
class ConditionViolation:
    """First failed clause of a block-positivity check, with indices."""

    clause: str
    message: str
    details: dict = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return False


@dataclass
class PCertificate:
    """Block-positivity certificate for the density tensor.

    On rows ``F0``, each observation in ``B0`` reaches exactly the columns
    ``F1(a)`` inside ``F0``, with density values pinched between ``d0`` and
    ``D0`` and landing sets of lambda-mass at least ``beta0``.
    """

    F0: tuple
    B0: tuple
    d0: float
    D0: float
    beta0: float
    F1: dict
    pi_F0: float

    @property
    def ok(self) -> bool:
        return True

    @property
    def kappa(self) -> float:
        return self.D0 / self.d0

    def to_json(self) -> str:
        return json.dumps({
            "F0": list(self.F0), "B0": list(self.B0),
            "d0": self.d0, "D0": self.D0, "beta0": self.beta0,
            "F1": {str(a): list(v) for a, v in self.F1.items()},
            "pi_F0": self.pi_F0, "kappa": self.kappa,
        })


def check_condition_P(model: HmmModel, pi: DensityVector, F0, B0):
    """Verify the block-positivity hypotheses for candidate sets F0 and B0.

    Returns a :class:`PCertificate` or a :class:`ConditionViolation`
    describing the first failed clause; violations are data, not errors.
    """
    f0 = F0 if isinstance(F0, np.ndarray) else model.states.mask(F0)
    b0 = B0 if isinstance(B0, np.ndarray) else model.obs.mask(B0)
    f0_cells = tuple(c for c, m in zip(model.states.cells, f0) if m)
    b0_cells = tuple(c for c, m in zip(model.obs.cells, b0) if m)
    pi_f0 = pi.mass_of(f0)
    if pi_f0 <= 0.0:
        return ConditionViolation("1", "stationary mass of F0 is zero",
                                  {"F0": f0_cells})
    if not b0.any() or model.obs.tau_weights[b0].sum() <= 0.0:
        return ConditionViolation("2", "tau mass of B0 is zero", {"B0": b0_cells})
    lam = model.states.lambda_weights
    d0 = np.inf
    D0 = 0.0
    beta0 = np.inf
    f1_map = {}
    for a_idx in np.nonzero(b0)[0]:
        a = model.obs.cells[a_idx]
        block = model.m[f0][:, :, a_idx]
        f1 = block.max(axis=0) > 0.0
        if not f1.any():
            return ConditionViolation(
                "3b", f"observation {a!r} reaches no state from F0", {"obs": a}
            )
        outside = f1 & ~f0
        if outside.any():
            t = model.states.cells[int(np.nonzero(outside)[0][0])]
            return ConditionViolation(
                "3a", f"landing set of {a!r} leaves F0 at state {t!r}",
                {"obs": a, "state": t},
            )
        sub = block[:, f1]
        if np.any(sub <= 0.0):
            s_pos, t_pos = np.argwhere(sub <= 0.0)[0]
            s = f0_cells[int(s_pos)]
            t = tuple(np.array(model.states.cells, dtype=object)[f1])[int(t_pos)]
            return ConditionViolation(
                "3c", f"density vanishes at ({s!r},{t!r},{a!r}) inside F0 x F1",
                {"obs": a, "from": s, "to": t},
            )
        # zero block on F0 x (F0 \ F1(a)) holds by construction of F1(a)
        d0 = min(d0, float(sub.min()))
        D0 = max(D0, float(sub.max()))
        beta0 = min(beta0, float(lam[f1].sum()))
        f1_map[a] = tuple(c for c, m in zip(model.states.cells, f1) if m)
    return PCertificate(F0=f0_cells, B0=b0_cells, d0=d0, D0=D0,
                        beta0=beta0, F1=f1_map, pi_F0=pi_f0)


@dataclass
class E1Verification:
    """Sampled check of the derived uniform-likelihood / closeness constants."""

    n_pairs: int
    n_sequences: int
    exhaustive_sequences: bool
    g_violations: int
    h_violations: int
    min_g: float
    max_tv: float

    @property
    def ok(self) -> bool:
        return self.g_violations == 0 and self.h_violations == 0


@dataclass
class E1Certificate:
    """Constants certifying coupled closeness at level rho.

    ``N`` steps of observations drawn from ``B0`` pull any two densities that
    hold mass ``threshold`` on ``F0`` within ``rho`` of each other, each such
    observation block having likelihood at least ``eta``; ``xi`` lower-bounds
    the mass any barycenter-pi measure puts on that set of densities.
    """

    rho: float
    N: int
    kappa: float
    xi: float
    beta: float
    eta: float
    F0: tuple
    B0: tuple
    threshold: float
    verification: E1Verification | None = None

    @property
    def alpha(self) -> float:
        """Coupled-mass lower bound xi^2 * beta * eta."""
        return self.xi**2 * self.beta * self.eta

    def to_json(self) -> str:
        payload = {
            "rho": self.rho, "N": self.N, "kappa": self.kappa,
            "xi": self.xi, "beta": self.beta, "eta": self.eta,
            "alpha": self.alpha,
            "F0": list(self.F0), "B0": list(self.B0),
            "threshold": self.threshold,
        }
        if self.verification is not None:
            v = self.verification
            payload["verification"] = {
                "n_pairs": v.n_pairs, "n_sequences": v.n_sequences,
                "exhaustive_sequences": v.exhaustive_sequences,
                "g_violations": v.g_violations, "h_violations": v.h_violations,
                "min_g": v.min_g, "max_tv": v.max_tv,
            }
        return json.dumps(payload)


def _sample_threshold_densities(rng, model, f0_mask, threshold, count):
    """Random masses with at least ``threshold`` on F0, threshold cases included."""
    k = model.n_states
    idx_f0 = np.nonzero(f0_mask)[0]
    out = np.zeros((count, k))
    others = np.nonzero(~f0_mask)[0]
    for i in range(count):
        inner = np.zeros(k)
        inner[idx_f0] = rng.dirichlet(np.ones(len(idx_f0)))
        style = i % 3
        if style == 0 and len(others):
            # exactly at the threshold: worst admissible starts
            rest = np.zeros(k)
            rest[others] = rng.dirichlet(np.ones(len(others)))
            out[i] = threshold * inner + (1.0 - threshold) * rest
        elif style == 1:
            out[i] = inner
        else:
            rest = rng.dirichlet(np.ones(k))
            out[i] = threshold * inner + (1.0 - threshold) * rest
    return out


def e1_constants(model: HmmModel, pi: DensityVector, cert: PCertificate,
                 rho: float, sample_pairs: int = 1000,
                 sequence_budget: int = 10**4, seed: int = 0) -> E1Certificate:
    """Derive the closeness constants from a block-positivity certificate.

    ``N`` is the smallest horizon at which the contraction factor
    ``(kappa-1)/(kappa+1)`` beats ``rho``; the likelihood floor ``eta`` and
    the mass bounds ``xi``, ``beta`` follow from the certificate.  A sampled
    verifier then evaluates the claimed inequalities on random density pairs
    holding the threshold mass on F0 and on observation blocks from B0.
    """
    if not 0.0 < rho <= 2.0:
        raise ValueError("rho must lie in (0, 2]")
    revalidated = check_condition_P(model, pi, cert.F0, cert.B0)
    if not revalidated.ok:
        raise CertificateInvalid(
            f"certificate no longer validates: {revalidated.message}"
        )
    for name in ("d0", "D0", "beta0"):
        if abs(getattr(revalidated, name) - getattr(cert, name)) > 1e-12:
            raise CertificateInvalid(f"certificate constant {name} is stale")
    kappa = cert.kappa
    factor = (kappa - 1.0) / (kappa + 1.0)
    n = 1
    while 2.0 * factor**n >= rho:
        n += 1
        if n > 10**6:
            raise FilterlabError("contraction horizon exceeds 1e6 steps")
    xi = cert.pi_F0 / 2.0
    tau_b0 = float(model.obs.tau_weights[model.obs.mask(cert.B0)].sum())
    beta = tau_b0**n
    eta = xi * cert.d0**n * cert.beta0**n

    rng = np.random.default_rng(seed)
    f0_mask = model.states.mask(cert.F0)
    threshold = xi
    b0_idx = [model.obs.index(a) for a in cert.B0]
    n_seq_total = len(b0_idx) ** n
    exhaustive = n_seq_total <= sequence_budget
    if exhaustive:
        sequences = list(itertools.product(b0_idx, repeat=n))
    else:
        sequences = [tuple(rng.choice(b0_idx, size=n)) for _ in range(1000)]
    xs = _sample_threshold_densities(rng, model, f0_mask, threshold, sample_pairs)
    ys = _sample_threshold_densities(rng, model, f0_mask, threshold, sample_pairs)
    g_viol = h_viol = 0
    min_g = np.inf
    max_tv = 0.0
    for seq in sequences:
        product = model.stepping_matrices[seq[0]]
        for a in seq[1:]:
            product = product @ model.stepping_matrices[a]
        gx = xs @ product
        gy = ys @ product
        sx = gx.sum(axis=1)
        sy = gy.sum(axis=1)
        min_g = min(min_g, float(sx.min()), float(sy.min()))
        g_viol += int((sx < eta - 1e-12).sum() + (sy < eta - 1e-12).sum())
        ok = (sx > 0) & (sy > 0)
        tv = np.abs(gx[ok] / sx[ok, None] - gy[ok] / sy[ok, None]).sum(axis=1)
        if len(tv):
            max_tv = max(max_tv, float(tv.max()))
            h_viol += int((tv >= rho).sum())
    verification = E1Verification(
        n_pairs=sample_pairs, n_sequences=len(sequences),
        exhaustive_sequences=exhaustive, g_violations=g_viol,
        h_violations=h_viol, min_g=float(min_g), max_tv=max_tv,
    )
    return E1Certificate(rho=rho, N=n, kappa=kappa, xi=xi, beta=beta, eta=eta,
                         F0=cert.F0, B0=cert.B0, threshold=threshold,
                         verification=verification)
