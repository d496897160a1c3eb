"""Deploying learned mappings: a source expert drives the target domain through
G (target state -> source state) and H (source action -> target action).

Every rollout helper seeds episode i from (seed, purpose, i), so transfer,
oracle and random-policy rollouts of the same seed start from identical
target states.
"""

import logging
from typing import Callable, Dict, List, NamedTuple, Optional, Sequence

import numpy as np

from core.diffcore import Tensor, no_grad
from core.envs import DomainPair, Reacher
from core.errors import UnsupportedMetricError, UsageError
from core.mappings import MappingSet, build_mapping_set
from core.seeding import derive_rng
from schemas.config import Method
from schemas.results import (
    GAP_MARKER,
    AblationReport,
    AblationRow,
    AlignmentCurve,
    CompoundingCurve,
    EpisodeReturn,
    SizeSweepRow,
    SuiteCell,
    SuiteReport,
    TransferResult,
)

logger = logging.getLogger(__name__)

RESET_PURPOSE = "eval/reset"
BASELINE_COLUMNS = ("oracle", "random")


class EpisodeTrace(NamedTuple):
    total: float
    alignment: Optional[np.ndarray]
    clipped_steps: int


def _translate_state(G, y: np.ndarray) -> np.ndarray:
    return G(Tensor(y[None, :])).data[0]


def _translate_action(H, x: np.ndarray, a: np.ndarray, mode: str, noise_rng) -> np.ndarray:
    g = H(Tensor(x[None, :]), Tensor(a[None, :]))
    mean = g.mean.data[0]
    if mode == "mean":
        return mean
    return mean + noise_rng.standard_normal(mean.shape) * g.std()[0]


def _transfer_episode(pair: DomainPair, G, H, expert, horizon: int, seed: int, episode: int,
                      mode: str, track_alignment: bool) -> EpisodeTrace:
    target = pair.target
    state = target.reset(derive_rng(seed, RESET_PURPOSE, episode))
    noise_rng = derive_rng(seed, "eval/noise", episode)
    errors = np.zeros(horizon) if track_alignment else None
    total, clipped = 0.0, 0
    with no_grad():
        for t in range(horizon):
            x = _translate_state(G, state.vector)
            if track_alignment:
                errors[t] = np.abs(target.shared_coords(state.vector) - pair.source.shared_coords(x)).sum()
            u = _translate_action(H, x, expert(x), mode, noise_rng)
            result = target.step(state, u)
            total += result.reward
            clipped += int(result.clipped)
            state = result.state
            if result.done:
                break
    return EpisodeTrace(total, errors, clipped)


def _check_horizon(pair: DomainPair, horizon: Optional[int]) -> int:
    horizon = horizon or pair.target.spec.horizon
    if horizon < 1 or horizon > pair.target.spec.horizon:
        raise UsageError(f"horizon must lie in [1, {pair.target.spec.horizon}], got {horizon}")
    return horizon


def transfer_rollout(
    pair: DomainPair,
    G,
    H,
    expert: Optional[Callable] = None,
    horizon: Optional[int] = None,
    episodes: int = 10,
    seed: int = 0,
    mode: str = "mean",
    method: str = "transfer",
) -> TransferResult:
    """Run the source expert in the target domain through G and H."""
    if mode not in ("mean", "sample"):
        raise UsageError(f"mode must be mean or sample, got {mode!r}")
    if G.in_dim != pair.target.spec.state_dim or G.out_dim != pair.source.spec.state_dim:
        raise UsageError(f"G maps {G.in_dim} -> {G.out_dim}, the pair needs {pair.target.spec.state_dim} -> {pair.source.spec.state_dim}")
    if H.out_dim != pair.target.spec.action_dim:
        raise UsageError(f"H produces {H.out_dim} actions, the target takes {pair.target.spec.action_dim}")
    horizon = _check_horizon(pair, horizon)
    expert = expert or pair.source.expert_action
    traces = [_transfer_episode(pair, G, H, expert, horizon, seed, ep, mode, False) for ep in range(episodes)]
    return TransferResult(
        pair=pair.name,
        method=method,
        episodes=episodes,
        returns=[EpisodeReturn(seed=seed, episode=ep, value=tr.total) for ep, tr in enumerate(traces)],
        clipped_steps=sum(tr.clipped_steps for tr in traces),
    )


def _native_rollout(pair: DomainPair, policy_factory, horizon, episodes, seed, method) -> TransferResult:
    target = pair.target
    horizon = _check_horizon(pair, horizon)
    returns = []
    for ep in range(episodes):
        state = target.reset(derive_rng(seed, RESET_PURPOSE, ep))
        policy = policy_factory(ep)
        total = 0.0
        for _ in range(horizon):
            result = target.step(state, policy(state.vector))
            total += result.reward
            state = result.state
            if result.done:
                break
        returns.append(EpisodeReturn(seed=seed, episode=ep, value=total))
    return TransferResult(pair=pair.name, method=method, episodes=episodes, returns=returns)


def oracle_rollout(pair: DomainPair, horizon: Optional[int] = None, episodes: int = 10, seed: int = 0) -> TransferResult:
    """The target's own scripted expert, from the same initial states."""
    return _native_rollout(pair, lambda ep: pair.target.expert_action, horizon, episodes, seed, "oracle")


def random_policy_rollout(pair: DomainPair, horizon: Optional[int] = None, episodes: int = 10, seed: int = 0) -> TransferResult:
    """Uniform random target actions, from the same initial states."""

    def factory(ep):
        rng = derive_rng(seed, "eval/random_policy", ep)
        return lambda vector: pair.target.random_action(rng)

    return _native_rollout(pair, factory, horizon, episodes, seed, "random_policy")


def random_mapping_set(pair: DomainPair, seed: int, hidden: int = 64) -> MappingSet:
    """Untrained maps: the "random" column of the suite."""
    return build_mapping_set(pair, Method.ECC, derive_rng(seed, "maps/random"), hidden)


def normalized_score(value: float, random_value: float, oracle_value: float) -> float:
    """(R - R_random) / (R_oracle - R_random); 1 is oracle level, 0 is random level."""
    span = oracle_value - random_value
    if span == 0:
        raise UsageError("oracle and random-policy returns coincide; the score is undefined")
    return (value - random_value) / span


# ----------------------------
# Error curves
# ----------------------------
def running_mean(values: np.ndarray) -> np.ndarray:
    values = np.asarray(values, dtype=np.float64)
    return np.cumsum(values) / np.arange(1, values.size + 1)


def centered_moving_average(values: np.ndarray, window: int = 11) -> np.ndarray:
    """Centered window average; the window shrinks at the edges so the length is kept."""
    values = np.asarray(values, dtype=np.float64)
    half = window // 2
    padded = np.concatenate([[0.0], np.cumsum(values)])
    index = np.arange(values.size)
    lo = np.maximum(index - half, 0)
    hi = np.minimum(index + half + 1, values.size)
    return (padded[hi] - padded[lo]) / (hi - lo)


def alignment_error_curve(
    pair: DomainPair,
    G,
    H,
    expert: Optional[Callable] = None,
    horizon: Optional[int] = None,
    episodes: int = 10,
    seed: int = 0,
    window: int = 11,
    method: str = "transfer",
) -> AlignmentCurve:
    """‖shared(y_t) - shared(G(y_t))‖₁ along transfer rollouts: episode mean, running mean, smoothing."""
    if not pair.has_shared_coords:
        raise UnsupportedMetricError(f"{pair.name} has no shared coordinates; evaluate it by return only")
    horizon = _check_horizon(pair, horizon)
    expert = expert or pair.source.expert_action
    traces = [_transfer_episode(pair, G, H, expert, horizon, seed, ep, "mean", True) for ep in range(episodes)]
    per_step = np.mean([tr.alignment for tr in traces], axis=0)
    curve = running_mean(per_step)
    return AlignmentCurve(
        pair=pair.name,
        method=method,
        seed=seed,
        window=window,
        running_mean=curve.tolist(),
        smoothed=centered_moving_average(curve, window).tolist(),
        extension=isinstance(pair.target, Reacher),
    )


def compounding_error_curve(
    pair: DomainPair,
    maps: MappingSet,
    forward_tgt,
    horizon: Optional[int] = None,
    episodes: int = 10,
    seed: int = 0,
    method: str = "transfer",
) -> CompoundingCurve:
    """‖F(x_t) - ŷ_t‖₁ with ŷ_0 = F(x_0), ŷ_t = T_Y(ŷ_{t-1}, H(x_{t-1}, a_{t-1})) along source expert runs."""
    source = pair.source
    horizon = horizon or source.spec.horizon
    totals = np.zeros(horizon)
    with no_grad():
        for ep in range(episodes):
            state = source.reset(derive_rng(seed, "eval/compounding", ep))
            predicted = maps.F(Tensor(state.vector[None, :])).data
            for t in range(horizon):
                x = state.vector[None, :]
                totals[t] += np.abs(maps.F(Tensor(x)).data - predicted).sum()
                a = source.expert_action(state.vector)
                u = maps.H(Tensor(x), Tensor(a[None, :])).mean.data
                predicted = forward_tgt(Tensor(predicted), Tensor(u)).data
                state = source.step(state, a).state
    return CompoundingCurve(pair=pair.name, method=method, seed=seed, errors=(totals / episodes).tolist())


# ----------------------------
# Report tables
# ----------------------------
def format_cell(values: Sequence[float]) -> str:
    """mean±std with two decimals, population std."""
    values = np.asarray(values, dtype=np.float64)
    return f"{values.mean():.2f}±{values.std():.2f}"


class SuiteOutcome(NamedTuple):
    report: SuiteReport
    results: Dict[str, TransferResult]


def _cell(method: str, result: Optional[TransferResult], missing: List[int], random_policy: float, oracle: float) -> SuiteCell:
    if result is None:
        return SuiteCell(method=method, cell=GAP_MARKER, missing_seeds=missing)
    median = float(np.median(list(result.seed_means().values())))
    try:
        normalized = normalized_score(median, random_policy, oracle)
    except UsageError:
        normalized = None
    return SuiteCell(
        method=method,
        cell=GAP_MARKER if missing else format_cell(result.values),
        mean=result.mean,
        std=result.std,
        median=median,
        normalized=normalized,
        missing_seeds=missing,
    )


def evaluate_suite(
    pair: DomainPair,
    methods: Sequence[str],
    seeds: Sequence[int],
    episodes: int,
    loader: Callable[[str, int], Optional[MappingSet]],
    horizon: Optional[int] = None,
    mode: str = "mean",
    hidden: int = 64,
) -> SuiteOutcome:
    """Table over oracle, random and every requested method; a missing snapshot yields a gap."""
    results: Dict[str, TransferResult] = {}
    missing: Dict[str, List[int]] = {}
    per_column: Dict[str, List[TransferResult]] = {}

    def add(column, result):
        per_column.setdefault(column, []).append(result)

    policy_runs = []
    for seed in seeds:
        add("oracle", oracle_rollout(pair, horizon, episodes, seed))
        policy_runs.append(random_policy_rollout(pair, horizon, episodes, seed))
        noise = random_mapping_set(pair, seed, hidden)
        add("random", transfer_rollout(pair, noise.G, noise.H, None, horizon, episodes, seed, mode, "random"))
        for method in methods:
            maps = loader(method, seed)
            if maps is None:
                logger.warning(f"⚠️ No snapshot for {method} seed {seed} on {pair.name}")
                missing.setdefault(method, []).append(seed)
                continue
            add(method, transfer_rollout(pair, maps.G, maps.H, None, horizon, episodes, seed, mode, method))

    for column, runs in per_column.items():
        results[column] = TransferResult.merge(runs)
    random_policy = TransferResult.merge(policy_runs)
    results["random_policy"] = random_policy
    oracle_median = float(np.median(list(results["oracle"].seed_means().values())))
    random_median = float(np.median(list(random_policy.seed_means().values())))

    cells = [
        _cell(column, results.get(column), missing.get(column, []), random_median, oracle_median)
        for column in (*BASELINE_COLUMNS, *methods)
    ]
    return SuiteOutcome(SuiteReport(pair=pair.name, cells=cells), results)


def dataset_size_sweep(
    pair: DomainPair,
    sizes: Sequence[int],
    seeds: Sequence[int],
    train_fn: Callable[[int, int], MappingSet],
    episodes: int = 10,
    horizon: Optional[int] = None,
    mode: str = "mean",
) -> List[SizeSweepRow]:
    """Transferred return per dataset size; `train_fn(n_traj, seed)` runs the whole pipeline."""
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise UsageError(f"sizes must be strictly ascending, got {list(sizes)}")
    rows = []
    for n_traj in sizes:
        runs = []
        for seed in seeds:
            maps = train_fn(n_traj, seed)
            runs.append(transfer_rollout(pair, maps.G, maps.H, None, horizon, episodes, seed, mode, "ecc"))
        merged = TransferResult.merge(runs)
        rows.append(
            SizeSweepRow(
                n_traj=n_traj,
                cell=format_cell(merged.values),
                mean=merged.mean,
                std=merged.std,
                median=float(np.median(list(merged.seed_means().values()))),
            )
        )
        logger.info(f"📈 {pair.name} with {n_traj} trajectories: {rows[-1].cell}")
    return rows


def ablate_symmetry(
    pair: DomainPair,
    seeds: Sequence[int],
    loader: Callable[[str, int], Optional[MappingSet]],
    episodes: int = 10,
    horizon: Optional[int] = None,
    mode: str = "mean",
) -> AblationReport:
    """Paired per-seed comparison of ecc against ecc_nosym on identical evaluation seeds."""
    rows, values = [], {"ecc": [], "ecc_nosym": []}
    for seed in seeds:
        row = AblationRow(seed=seed)
        for method in values:
            maps = loader(method, seed)
            if maps is None:
                logger.warning(f"⚠️ No snapshot for {method} seed {seed} on {pair.name}")
                continue
            result = transfer_rollout(pair, maps.G, maps.H, None, horizon, episodes, seed, mode, method)
            setattr(row, method, result.mean)
            values[method].extend(result.values)
        rows.append(row)
    differences = [r.difference for r in rows if r.difference is not None]
    return AblationReport(
        pair=pair.name,
        rows=rows,
        median_difference=float(np.median(differences)) if differences else None,
        std_ecc=float(np.std(values["ecc"])) if values["ecc"] else None,
        std_ecc_nosym=float(np.std(values["ecc_nosym"])) if values["ecc_nosym"] else None,
    )
