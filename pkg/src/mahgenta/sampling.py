"""Sampling machinery for event spaces past exact enumeration.

Higher-order block Gibbs resamples whole interaction subsets from their
exact conditionals (the conditional of a block needs only the tensors that
touch it, so no normalizer is required). On top of the kernel sit empirical
marginal estimation, annealed importance sampling for the log-partition,
and persistent-chain stochastic fitting.

All draws flow through a single numpy Generator in a fixed order, so equal
seeds give bit-identical streams.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import (
    ProbTensor,
    Shape,
    VarSubset,
    center_fibers_values,
    sum_onto,
)
from .errors import CapacityError, DomainError, StepSizeError
from .loglinear import ThetaModel, _target_arrays, model_distribution
from .seeding import substream

__all__ = [
    "ChainState",
    "GibbsKernel",
    "block_gibbs_sweep",
    "draw_samples",
    "estimate_eta",
    "AisEstimate",
    "ais_log_partition",
    "stochastic_fit",
    "exact_block_kernel",
]

DEFAULT_BLOCK_CAP = 4096


@dataclass
class ChainState:
    """One sampler state: a full assignment plus its seeded generator."""

    assignment: tuple[int, ...]
    rng: np.random.Generator

    @classmethod
    def uniform(cls, shape: Shape, seed: int) -> "ChainState":
        rng = substream(seed, "gibbs")
        assignment = tuple(int(rng.integers(c)) for c in shape)
        return cls(assignment, rng)


class _BlockPlan:
    """Index bookkeeping for resampling one block across many chains."""

    def __init__(self, model: ThetaModel, block: VarSubset, block_cap: int):
        cards = model.shape.restrict(block)
        m = math.prod(cards)
        if m > block_cap:
            raise CapacityError(
                f"block {block} enumerates {m} joint values, over the block cap {block_cap}"
            )
        self.block = block
        self.m = m
        grids = np.meshgrid(*[np.arange(c) for c in cards], indexing="ij")
        self.cfgs = np.stack([g.reshape(-1) for g in grids], axis=1)  # (m, |S|)
        self.write_axes = list(block.axes())
        # one spec per touching tensor: for each of its axes, either a column
        # of the block grid or a column of the chain states
        self.terms = []
        for t in model.collection.nonempty():
            if not any(k in block for k in t):
                continue
            spec = []
            for k in t:
                if k in block:
                    spec.append(("grid", block.position_of(k)))
                else:
                    spec.append(("state", k - 1))
            self.terms.append((t, tuple(spec), len(t) >= 2))


class GibbsKernel:
    """Batched block-Gibbs transition targeting a model distribution.

    Blocks default to the model's interaction subsets in insertion order,
    smallest order first, with singleton blocks appended for any variable no
    interaction covers (those conditionals are exact too, and without them
    such variables would never move).

    `hi_scale` multiplies every tensor of order two and higher, which
    realizes the geometric annealing path used by AIS.
    """

    def __init__(self, model: ThetaModel, blocks: list[VarSubset] | None = None,
                 block_cap: int = DEFAULT_BLOCK_CAP):
        self.model = model
        self.shape = model.shape
        if blocks is None:
            blocks = sorted(model.collection.nonempty(), key=lambda s: len(s))
            covered = {k for s in blocks for k in s}
            blocks += [VarSubset((k,)) for k in range(1, model.shape.d + 1)
                       if k not in covered]
        if not blocks:
            blocks = [VarSubset((k,)) for k in range(1, model.shape.d + 1)]
        self.plans = [_BlockPlan(model, b, block_cap) for b in blocks]

    def sweep(self, states: np.ndarray, rng: np.random.Generator,
              hi_scale: float = 1.0) -> None:
        """Advance all chains by one full pass over the block schedule (in place)."""
        for plan in self.plans:
            self._move(states, plan, rng, hi_scale)

    def _move(self, states: np.ndarray, plan: _BlockPlan, rng: np.random.Generator,
              hi_scale: float) -> None:
        n = states.shape[0]
        energies = np.zeros((n, plan.m))
        params = self.model.params
        for t, spec, is_higher in plan.terms:
            idx = tuple(
                plan.cfgs[:, col][None, :] if kind == "grid" else states[:, col][:, None]
                for kind, col in spec
            )
            vals = params[t][idx]
            if is_higher and hi_scale != 1.0:
                energies += hi_scale * vals
            else:
                energies += vals
        energies -= energies.max(axis=1, keepdims=True)
        np.exp(energies, out=energies)
        energies /= energies.sum(axis=1, keepdims=True)
        u = rng.random((n, 1))
        choice = (np.cumsum(energies, axis=1) < u).sum(axis=1)
        np.minimum(choice, plan.m - 1, out=choice)
        states[:, plan.write_axes] = plan.cfgs[choice]


def block_gibbs_sweep(model: ThetaModel, state: ChainState,
                      blocks: list[VarSubset],
                      block_cap: int = DEFAULT_BLOCK_CAP) -> ChainState:
    """One sweep of exact conditional block moves over `blocks`, in order.

    Every block must belong to the model's collection and enumerate at most
    `block_cap` joint values. Each move redraws the block from its exact
    conditional, so the model distribution is stationary for the sweep.
    """
    if len(state.assignment) != model.shape.d:
        raise DomainError("chain state has the wrong number of coordinates")
    for code, card in zip(state.assignment, model.shape):
        if not 0 <= code < card:
            raise DomainError(f"chain state assignment {state.assignment} is out of bounds")
    for b in blocks:
        if b not in model.collection or len(b) == 0:
            raise DomainError(f"block {b} is not a non-empty member of the model collection")
    kernel = GibbsKernel(model, blocks=list(blocks), block_cap=block_cap)
    states = np.array([state.assignment], dtype=np.int64)
    kernel.sweep(states, state.rng)
    return ChainState(tuple(int(c) for c in states[0]), state.rng)


def draw_samples(model: ThetaModel, n: int, seed: int = 0, burn_in: int = 100,
                 n_chains: int = 64, block_cap: int = DEFAULT_BLOCK_CAP) -> np.ndarray:
    """Post-burn-in Gibbs samples as an (n, d) matrix of category codes."""
    if n < 0:
        raise DomainError("sample count must be non-negative")
    rng = substream(seed, "gibbs")
    n_chains = max(1, min(n_chains, max(n, 1)))
    states = np.stack(
        [rng.integers(c, size=n_chains) for c in model.shape], axis=1
    ).astype(np.int64)
    kernel = GibbsKernel(model, block_cap=block_cap)
    for _ in range(burn_in):
        kernel.sweep(states, rng)
    if n == 0:
        return np.zeros((0, model.shape.d), dtype=np.int64)
    collected = []
    have = 0
    while have < n:
        kernel.sweep(states, rng)
        collected.append(states.copy())
        have += n_chains
    return np.concatenate(collected, axis=0)[:n]


def estimate_eta(samples, s: VarSubset, shape: Shape) -> ProbTensor:
    """Empirical frequency tensor of the samples' projection onto `s`."""
    rows = np.asarray(samples, dtype=np.int64)
    if rows.size == 0:
        raise DomainError("cannot estimate marginals from an empty sample list")
    if rows.ndim != 2 or rows.shape[1] != shape.d:
        raise DomainError(f"samples must be (n, {shape.d}), got {rows.shape}")
    if len(s) == 0:
        return ProbTensor(s, np.asarray(1.0))
    cards = shape.restrict(s)
    flat = np.ravel_multi_index(tuple(rows[:, k - 1] for k in s), cards)
    counts = np.bincount(flat, minlength=math.prod(cards)).reshape(cards)
    return ProbTensor(s, counts / len(rows))


@dataclass(frozen=True)
class AisEstimate:
    """Annealed-importance-sampling estimate of the log-partition."""

    log_z: float
    stderr: float
    n_chains: int
    n_temps: int
    schedule: tuple[float, ...]
    ess: float
    reliable: bool

    def __post_init__(self):
        b = self.schedule
        if len(b) < 2 or b[0] != 0.0 or b[-1] != 1.0 or any(
            x >= y for x, y in zip(b, b[1:])
        ):
            raise DomainError("the schedule must increase strictly from 0 to 1")
        if self.stderr < 0:
            raise DomainError("stderr must be non-negative")

    def to_json_dict(self) -> dict:
        return {
            "format_version": 1,
            "log_z": self.log_z,
            "stderr": self.stderr,
            "n_chains": self.n_chains,
            "n_temps": self.n_temps,
            "ess": self.ess,
            "reliable": self.reliable,
            "schedule": list(self.schedule),
        }


def _make_schedule(n_temps: int, kind: str) -> np.ndarray:
    if n_temps < 2:
        raise DomainError("AIS needs at least two temperatures")
    if kind == "uniform":
        return np.linspace(0.0, 1.0, n_temps)
    if kind == "geometric":
        return np.concatenate([[0.0], np.geomspace(1e-3, 1.0, n_temps - 1)])
    raise DomainError(f"unknown schedule {kind!r}; expected 'uniform' or 'geometric'")


def _higher_order_energy(model: ThetaModel, states: np.ndarray) -> np.ndarray:
    out = np.zeros(states.shape[0])
    for s, th in model.params.items():
        if len(s) >= 2:
            out += th[tuple(states[:, k - 1] for k in s)]
    return out


def _sample_from_singletons(model: ThetaModel, n: int,
                            rng: np.random.Generator) -> np.ndarray:
    states = np.empty((n, model.shape.d), dtype=np.int64)
    for k, card in enumerate(model.shape, start=1):
        th = model.params.get(VarSubset((k,)), np.zeros(card))
        probs = np.exp(th - th.max())
        probs /= probs.sum()
        cum = np.cumsum(probs)
        states[:, k - 1] = np.minimum(np.searchsorted(cum, rng.random(n)), card - 1)
    return states


def ais_log_partition(model: ThetaModel, n_chains: int = 256, n_temps: int = 200,
                      sweeps_per_temp: int = 1, seed: int = 0,
                      schedule: str = "uniform",
                      block_cap: int = DEFAULT_BLOCK_CAP) -> AisEstimate:
    """Estimate log Z along a geometric path from the singleton base model.

    The base keeps the model's own one-variable tensors (its partition
    function factorizes exactly); every higher-order tensor is scaled by the
    inverse temperature. Importance log-weights accumulate across
    temperatures; the estimate combines the exact base value with the
    log-mean of the final weights. An effective sample size below 2 marks
    the estimate unreliable rather than hiding the degeneracy.
    """
    if n_chains < 2:
        raise DomainError("AIS needs at least two chains for an error estimate")
    betas = _make_schedule(n_temps, schedule)
    rng = substream(seed, "ais")
    log_z_base = 0.0
    for k, card in enumerate(model.shape, start=1):
        th = model.params.get(VarSubset((k,)), np.zeros(card))
        log_z_base += float(logsumexp(th))
    states = _sample_from_singletons(model, n_chains, rng)
    kernel = GibbsKernel(model, block_cap=block_cap)
    log_w = np.zeros(n_chains)
    for j in range(1, len(betas)):
        log_w += (betas[j] - betas[j - 1]) * _higher_order_energy(model, states)
        for _ in range(sweeps_per_temp):
            kernel.sweep(states, rng, hi_scale=float(betas[j]))
    shift = float(log_w.max())
    a = np.exp(log_w - shift)
    mean_a = float(a.mean())
    log_z = log_z_base + shift + math.log(mean_a)
    stderr = float(a.std(ddof=1)) / (math.sqrt(n_chains) * mean_a)
    ess = float(a.sum()) ** 2 / float((a * a).sum())
    return AisEstimate(
        log_z=log_z,
        stderr=stderr,
        n_chains=n_chains,
        n_temps=n_temps,
        schedule=tuple(float(b) for b in betas),
        ess=ess,
        reliable=ess >= 2.0,
    )


def stochastic_fit(model: ThetaModel, data_eta, lr: float = 0.5, epochs: int = 10,
                   n_chains: int = 256, sweeps_per_epoch: int = 1, seed: int = 0,
                   init_rows: np.ndarray | None = None,
                   block_cap: int = DEFAULT_BLOCK_CAP,
                   divergence_patience: int = 5) -> ThetaModel:
    """Persistent-chain gradient fitting for event spaces over the cap.

    Chains persist across epochs; each epoch advances them, estimates the
    model marginals empirically, and applies centered gradient updates. A
    smoothed negative-log-likelihood proxy (tracking the partition function
    by reweighting the chains through each update) feeds the same divergence
    detector as exact fitting. The returned model's log-normalizer is stale.
    """
    if lr < 0:
        raise DomainError(f"learning rate must be non-negative, got {lr}")
    targets = _target_arrays(data_eta, model.collection)
    rng = substream(seed, "gibbs")
    if init_rows is not None:
        init_rows = np.asarray(init_rows, dtype=np.int64)
        picks = rng.integers(0, len(init_rows), size=n_chains)
        states = init_rows[picks].copy()
    else:
        states = _sample_from_singletons(model, n_chains, rng)
    work = ThetaModel(model.shape, model.collection,
                      {s: a.copy() for s, a in model.params.items()})
    kernel = GibbsKernel(work, block_cap=block_cap)
    log_z_track = 0.0
    ema = None
    bad = 0
    subsets = list(work.collection.nonempty())
    for _ in range(epochs):
        for _ in range(sweeps_per_epoch):
            kernel.sweep(states, rng)
        grads = {}
        for s in subsets:
            eta_hat = estimate_eta(states, s, work.shape).values
            grads[s] = center_fibers_values(eta_hat - targets[s])
        # reweight the chains through the update to track the normalizer
        delta_e = np.zeros(n_chains)
        for s in subsets:
            delta_e -= lr * grads[s][tuple(states[:, k - 1] for k in s)]
        log_z_track += float(logsumexp(delta_e)) - math.log(n_chains)
        inner = 0.0
        for s in subsets:
            work.params[s] = center_fibers_values(work.params[s] - lr * grads[s])
            inner += float((work.params[s] * targets[s]).sum())
        proxy = log_z_track - inner
        new_ema = proxy if ema is None else 0.9 * ema + 0.1 * proxy
        if ema is not None and new_ema > ema + 1e-12:
            bad += 1
            if bad >= divergence_patience:
                raise StepSizeError(
                    f"the smoothed NLL proxy rose for {bad} consecutive epochs at lr={lr}"
                )
        else:
            bad = 0
        ema = new_ema
    out = ThetaModel(model.shape, model.collection, dict(work.params))
    out.log_z, out.log_z_state = None, "stale"
    return out


def exact_block_kernel(model: ThetaModel, p: ProbTensor, block: VarSubset) -> ProbTensor:
    """Exactly propagate `p` through one block move (enumeration oracle).

    The move replaces the block's coordinates by a draw from the model
    conditional: ``p'(x) = q(x_S | x_-S) p^{-S}(x_-S)``. Used to verify that
    the model distribution is a fixed point.
    """
    full = p.subset
    rest = block.complement(model.shape)
    q = model_distribution(model).values
    d = model.shape.d
    view = tuple(
        model.shape.cardinalities[k] if (k + 1) in rest else 1 for k in range(d)
    )
    q_rest = sum_onto(q, full, rest).reshape(view)
    p_rest = sum_onto(p.values, full, rest).reshape(view)
    cond = q / np.where(q_rest > 0, q_rest, 1.0)
    return ProbTensor(full, cond * p_rest)
