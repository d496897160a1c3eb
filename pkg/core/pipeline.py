"""On-disk layout and the collect -> dynamics -> mappings chain shared by the commands."""

import hashlib
import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Optional, Tuple

from core.background_tasks import run_scheduler
from core.baselines import train_cyclegan_baseline, train_dcc_baseline
from core.datasets import Dataset, collect_random, load_dataset, save_dataset, split_by_trajectory
from core.envs import DomainPair, export_ground_truth, make_domain_pair
from core.errors import MissingInputError
from core.invdyn import (
    load_forward_dynamics,
    load_inverse_dynamics,
    save_dynamics,
    train_forward_dynamics,
    train_inverse_dynamics,
)
from core.mappings import MappingSet, load_mapping_set, save_mapping_set, train_mappings
from core.reports import write_dynamics_curve, write_resolved_config
from schemas.config import DynamicsConfig, Method, RunConfig

logger = logging.getLogger(__name__)

DOMAINS = ("source", "target")


@dataclass(frozen=True)
class RunPaths:
    root: Path

    def data_dir(self, pair: str) -> Path:
        return self.root / "data" / pair

    def dataset(self, pair: str, domain: str) -> Path:
        return self.data_dir(pair) / f"{domain}.jsonl"

    def models_dir(self, pair: str) -> Path:
        return self.root / "models" / pair

    def invdyn(self, pair: str, domain: str) -> Path:
        return self.models_dir(pair) / f"invdyn_{domain}.bin"

    def invdyn_curve(self, pair: str, domain: str) -> Path:
        return self.models_dir(pair) / f"invdyn_{domain}_curve.csv"

    def forward(self, pair: str) -> Path:
        return self.models_dir(pair) / "forward_target.bin"

    def forward_curve(self, pair: str) -> Path:
        return self.models_dir(pair) / "forward_target_curve.csv"

    @staticmethod
    def digest(snapshot: Path) -> Path:
        return snapshot.with_suffix(".digest")

    def maps(self, pair: str, method: str, seed: int) -> Path:
        return self.models_dir(pair) / f"{Method(method).value}_seed{seed}.bin"

    def phase_log(self, pair: str, method: str, seed: int) -> Path:
        return self.models_dir(pair) / f"{Method(method).value}_seed{seed}_phases.csv"

    def reports_dir(self, pair: str) -> Path:
        return self.root / "reports" / pair

    def sweep_root(self, pair: str, n_traj: int) -> "RunPaths":
        return RunPaths(self.root / "sweeps" / pair / f"n{n_traj}")


class Dynamics(NamedTuple):
    invdyn_source: object
    invdyn_target: object
    forward_target: Optional[object]


class TrainedRun(NamedTuple):
    method: Method
    seed: int
    maps: MappingSet
    snapshot: Path
    phase_log: Path
    final_loss: Optional[float]


def config_digest(config: RunConfig) -> str:
    return hashlib.sha256("\n".join(config.resolved_lines()).encode("utf-8")).hexdigest()


def dynamics_digest(dataset: Dataset, dyn_config: DynamicsConfig) -> str:
    """Fingerprint of what a dynamics snapshot was trained from: header, transitions and settings."""
    digest = hashlib.sha256()
    provenance = {"dataset": dataset.header.model_dump(mode="json"), "dynamics": dyn_config.model_dump(mode="json")}
    digest.update(json.dumps(provenance, sort_keys=True).encode("utf-8"))
    for column in (dataset.states, dataset.actions, dataset.next_states):
        digest.update(column.tobytes())
    return digest.hexdigest()


def _reusable(path: Path, digest: str) -> bool:
    if not path.exists():
        return False
    sidecar = RunPaths.digest(path)
    if sidecar.exists() and sidecar.read_text(encoding="utf-8").strip() == digest:
        return True
    logger.warning(f"🔁 {path} was trained on different data or settings; retraining")
    return False


def _save_with_digest(model, path: Path, digest: str) -> None:
    save_dynamics(model, path)
    RunPaths.digest(path).write_text(digest + "\n", encoding="utf-8")


# ----------------------------
# 📌 DATA
# ----------------------------
def collect_datasets(config: RunConfig, paths: RunPaths, n_traj: Optional[int] = None) -> Tuple[Dataset, Dataset]:
    pair = make_domain_pair(config.pair, config.seed)
    n_traj = n_traj or config.n_traj
    datasets = []
    for domain in DOMAINS:
        dataset = collect_random(pair.env(domain), n_traj, config.horizon, config.seed, domain, pair.name)
        save_dataset(dataset, paths.dataset(pair.name, domain))
        datasets.append(dataset)
    if pair.ground_truth is not None:
        export_ground_truth(pair, paths.data_dir(pair.name) / "ground_truth")
    write_resolved_config(paths.data_dir(pair.name), config)
    return tuple(datasets)


def load_datasets(config: RunConfig, paths: RunPaths) -> Tuple[Dataset, Dataset]:
    datasets = []
    for domain in DOMAINS:
        path = paths.dataset(config.pair, domain)
        if not path.exists():
            raise MissingInputError(
                f"no {domain} dataset at {path}; run `collect --pair {config.pair}` first"
            )
        datasets.append(load_dataset(path))
    return tuple(datasets)


# ----------------------------
# 📌 DYNAMICS
# ----------------------------
def train_dynamics(config: RunConfig, paths: RunPaths, datasets: Tuple[Dataset, Dataset], need_forward: bool) -> Dynamics:
    """Train both inverse models and, when asked, the target forward model.

    A snapshot is reused only when its digest sidecar matches the dataset and
    settings it would be trained from now.
    """
    pair = make_domain_pair(config.pair)
    dyn_config = config.dynamics_config()

    def inverse_job(dataset: Dataset):
        angle_dims = pair.env(dataset.domain).spec.angle_dims

        def job():
            path = paths.invdyn(pair.name, dataset.domain)
            digest = dynamics_digest(dataset, dyn_config)
            if _reusable(path, digest):
                logger.info(f"♻️ Reusing {path}")
                return load_inverse_dynamics(
                    path, dataset.header.state_dim, dataset.header.action_dim, config.hidden, dataset.domain, angle_dims
                )
            fit = train_inverse_dynamics(dataset, dyn_config, angle_dims=angle_dims)
            _save_with_digest(fit.model, path, digest)
            write_dynamics_curve(paths.invdyn_curve(pair.name, dataset.domain), fit.curve)
            return fit.model

        return job

    jobs = [inverse_job(d) for d in datasets]
    labels = [f"inverse dynamics ({d.domain})" for d in datasets]
    target = datasets[1]
    if need_forward:
        angle_dims = pair.target.spec.angle_dims

        def forward_job():
            path = paths.forward(pair.name)
            digest = dynamics_digest(target, dyn_config)
            if _reusable(path, digest):
                logger.info(f"♻️ Reusing {path}")
                return load_forward_dynamics(
                    path, target.header.state_dim, target.header.action_dim, config.hidden, angle_dims=angle_dims
                )
            fit = train_forward_dynamics(target, dyn_config, angle_dims=angle_dims)
            _save_with_digest(fit.model, path, digest)
            write_dynamics_curve(paths.forward_curve(pair.name), fit.curve)
            return fit.model

        jobs.append(forward_job)
        labels.append("forward dynamics (target)")
    models = run_scheduler.run_sync(jobs, labels)
    write_resolved_config(paths.models_dir(pair.name), config)
    return Dynamics(models[0], models[1], models[2] if need_forward else None)


def load_dynamics(config: RunConfig, paths: RunPaths, need_forward: bool = False) -> Dynamics:
    pair = make_domain_pair(config.pair)
    models = []
    for domain in DOMAINS:
        path = paths.invdyn(pair.name, domain)
        if not path.exists():
            raise MissingInputError(f"no inverse dynamics at {path}; run `train-invdyn --pair {pair.name}` first")
        spec = pair.env(domain).spec
        models.append(load_inverse_dynamics(path, spec.state_dim, spec.action_dim, config.hidden, domain, spec.angle_dims))
    forward = None
    if need_forward:
        path = paths.forward(pair.name)
        if not path.exists():
            raise MissingInputError(f"no forward dynamics at {path}; run `train-invdyn --pair {pair.name} --method dcc` first")
        forward = _load_forward(config, pair, path)
    return Dynamics(models[0], models[1], forward)


def _load_forward(config: RunConfig, pair: DomainPair, path: Path):
    spec = pair.target.spec
    return load_forward_dynamics(path, spec.state_dim, spec.action_dim, config.hidden, angle_dims=spec.angle_dims)


def optional_forward(config: RunConfig, paths: RunPaths):
    """The target forward model if one was trained for this pair."""
    path = paths.forward(config.pair)
    if not path.exists():
        return None
    return _load_forward(config, make_domain_pair(config.pair), path)


# ----------------------------
# 📌 MAPPINGS
# ----------------------------
def train_method(
    config: RunConfig,
    paths: RunPaths,
    datasets: Tuple[Dataset, Dataset],
    dynamics: Dynamics,
    method: Method,
    seed: int,
) -> TrainedRun:
    """Train one (method, seed) on the training splits and write its snapshot and log."""
    pair = make_domain_pair(config.pair, seed)
    train_config = config.train_config(seed, method)
    train_split = tuple(split_by_trajectory(d, config.heldout_fraction)[0] for d in datasets)
    if method in (Method.ECC, Method.ECC_NOSYM):
        outcome = train_mappings(pair, train_split, (dynamics.invdyn_source, dynamics.invdyn_target), train_config)
    elif method is Method.DCC:
        outcome = train_dcc_baseline(pair, train_split, dynamics.forward_target, train_config)
    else:
        outcome = train_cyclegan_baseline(pair, train_split, train_config)
    snapshot = paths.maps(pair.name, method, seed)
    save_mapping_set(outcome.maps, snapshot)
    phase_log = outcome.log.write_csv(paths.phase_log(pair.name, method, seed))
    final = outcome.log.last("loss_cyc")
    return TrainedRun(method, seed, outcome.maps, snapshot, phase_log, final)


def load_trained(paths: RunPaths, pair: DomainPair, method: str, seed: int, hidden: int = 64,
                 snapshot: Optional[Path] = None) -> Optional[MappingSet]:
    """Snapshot of (method, seed), or None when it was never trained."""
    path = Path(snapshot) if snapshot else paths.maps(pair.name, method, seed)
    if not path.exists():
        return None
    return load_mapping_set(path, pair, Method(method), hidden)


def run_training_pipeline(config: RunConfig, paths: RunPaths, methods, seeds) -> list:
    """Dynamics once, then every (method, seed) fanned out over the run scheduler."""
    datasets = load_datasets(config, paths)
    need_forward = any(Method(m).needs_forward_model for m in methods)
    dynamics = train_dynamics(config, paths, datasets, need_forward)
    jobs, labels = [], []
    for method in methods:
        for seed in seeds:
            jobs.append(lambda m=Method(method), s=seed: train_method(config, paths, datasets, dynamics, m, s))
            labels.append(f"{Method(method).value} seed {seed}")
    runs = run_scheduler.run_sync(jobs, labels)
    write_resolved_config(paths.models_dir(config.pair), config)
    return runs


def sweep_train_fn(config: RunConfig, paths: RunPaths):
    """`train_fn(n_traj, seed)` for the size sweep; each size lives in its own directory."""
    prepared = {}

    def train_fn(n_traj: int, seed: int) -> MappingSet:
        sweep_paths = paths.sweep_root(config.pair, n_traj)
        sized = config.model_copy(update={"n_traj": n_traj, "output_root": sweep_paths.root})
        if n_traj not in prepared:
            prepared.clear()
            datasets = collect_datasets(sized, sweep_paths)
            prepared[n_traj] = (datasets, train_dynamics(sized, sweep_paths, datasets, need_forward=False))
        datasets, dynamics = prepared[n_traj]
        return train_method(sized, sweep_paths, datasets, dynamics, Method.ECC, seed).maps

    return train_fn
