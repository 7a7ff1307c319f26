"""Training and evaluation of the paired visual/audio networks.

Modes:

* ``baseline_ctc`` -- each network trains alone on its own CTC target with
  the identity concept-to-channel coding.
* ``original`` -- each network's target is the other modality's CTC target
  carried over by DTW.
* ``pooled`` -- on shared concept channels the own and carried-over targets
  are combined by elementwise max; other channels keep the own target.
  With ``pool_gate="timestep"`` (the default) a frame is pooled only when its
  own target is dominated by a shared channel or blank.

Both cross-modal modes learn their coding through the concept vectors.
"""

from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import align, binding, ctc, fusion, metrics
from .datagen import DatasetConfig, MultimodalSample, generate_dataset
from .lstm import LstmParams, TrainConfig, apply_momentum_sgd, init_params, lstm_backward, lstm_forward
from .numerics import Rng, derive_seed, read_tensor, write_tensor

log = logging.getLogger(__name__)

MODES = ("baseline_ctc", "original", "pooled")
MODALITIES = ("visual", "audio")
CHECKPOINT_VERSION = 1


class ConfigError(ValueError):
    pass


class CheckpointError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    mode: str = "pooled"
    train: TrainConfig = field(default_factory=TrainConfig)
    epochs: int = 15
    seed: int = 0
    calibration_size: int = 200
    eval_repeats: int = 5
    eval_fraction: float = 0.5
    checkpoint_every: int = 1
    # "channel": pool every frame on shared channels; "timestep": only frames
    # whose own target is dominated by a shared channel
    pool_gate: str = "timestep"
    # carry the other modality's target into this network's coding before
    # fusion (concept s: channel perm_other[s] -> perm_own[s])
    recode_targets: bool = False

    def __post_init__(self):
        if isinstance(self.train, dict):
            self.train = _from_dict(TrainConfig, self.train, "train.")
        if self.mode not in MODES:
            raise ConfigError(f"mode: unknown value {self.mode!r}")
        if self.epochs < 0:
            raise ConfigError("epochs: must be >= 0")
        if self.eval_repeats < 1:
            raise ConfigError("eval_repeats: must be >= 1")
        if not 0 < self.eval_fraction <= 1:
            raise ConfigError("eval_fraction: must lie in (0, 1]")
        if self.pool_gate not in fusion.GATES:
            raise ConfigError(f"pool_gate: unknown value {self.pool_gate!r}")
        if self.calibration_size < 1:
            raise ConfigError("calibration_size: must be >= 1")

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return _from_dict(cls, d)

    def to_dict(self) -> dict:
        return asdict(self)


def _from_dict(cls, d, prefix=""):
    known = {f.name for f in fields(cls)}
    unknown = sorted(set(d) - known)
    if unknown:
        raise ConfigError(f"{prefix}{unknown[0]}: unknown config key")
    try:
        return cls(**d)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"{prefix}{exc}") from exc


@dataclass
class ModalityState:
    params: LstmParams
    velocity: LstmParams
    gamma: np.ndarray
    perm: np.ndarray  # assignment used at the previous step

    def copy(self) -> "ModalityState":
        return ModalityState(self.params.copy(), self.velocity.copy(),
                             self.gamma.copy(), self.perm.copy())


@dataclass
class States:
    visual: ModalityState
    audio: ModalityState
    step: int = 0
    epoch: int = 0
    skipped: int = 0

    def __getitem__(self, name) -> ModalityState:
        return getattr(self, name)

    @property
    def n_concepts(self) -> int:
        return self.visual.gamma.shape[0]

    def copy(self) -> "States":
        return States(self.visual.copy(), self.audio.copy(), self.step, self.epoch, self.skipped)


def init_states(cfg: ExperimentConfig, n_v: int, n_a: int, C: int) -> States:
    rng = Rng(derive_seed(cfg.seed, "init"))
    out = {}
    for name, n, H in (("visual", n_v, cfg.train.hidden_size_visual),
                       ("audio", n_a, cfg.train.hidden_size_audio)):
        p = init_params(rng.spawn(f"lstm_{name}"), n, H, C)
        out[name] = ModalityState(p, p.zeros_like(), binding.init_concept_vectors(C),
                                  np.arange(C))
    return States(out["visual"], out["audio"])


@dataclass
class StepResult:
    """Everything one step computes before any parameter changes."""

    z: dict
    caches: dict
    perms: dict
    labels: dict
    targets: dict  # own CTC targets
    deltas: dict
    path: list | None = None
    nll: dict = field(default_factory=dict)


def compute_step(sample: MultimodalSample, states: States, mode: str,
                 recode: bool = False, gate: str = "timestep") -> StepResult:
    """Forward pass, coding, CTC targets, alignment and deltas for one sample.

    Raises ``ctc.CtcInfeasibleError`` when a transcript cannot fit its frames.
    """
    C = states.n_concepts
    x = {"visual": sample.x_v, "audio": sample.x_a}
    transcripts = {"visual": sample.transcript_v, "audio": sample.transcript_a}
    z, caches, perms, labels, targets, nll = {}, {}, {}, {}, {}, {}
    for m in MODALITIES:
        z[m], caches[m] = lstm_forward(states[m].params, x[m])
        if mode == "baseline_ctc":
            perms[m] = np.arange(C)
        else:
            evidence = binding.concept_evidence(z[m], states[m].gamma)
            perms[m] = binding.row_column_elimination(evidence)
        labels[m] = binding.relabel_transcript(transcripts[m], perms[m])
        lattice = ctc.ctc_lattice(z[m], labels[m])
        targets[m] = ctc.ctc_target(lattice, z[m])
        nll[m] = -lattice.log_prob

    if mode == "baseline_ctc":
        deltas = {m: ctc.ctc_delta(z[m], targets[m]) for m in MODALITIES}
        return StepResult(z, caches, perms, labels, targets, deltas, None, nll)

    _, path = align.dtw(z["visual"], z["audio"])
    T1, T2 = len(z["visual"]), len(z["audio"])
    src = {"visual": targets["audio"], "audio": targets["visual"]}
    if recode:
        src = {"visual": fusion.recode_channels(src["visual"], perms["audio"], perms["visual"]),
               "audio": fusion.recode_channels(src["audio"], perms["visual"], perms["audio"])}
    warped = {
        "visual": align.warp_targets(src["visual"], path, T1, "a2v"),
        "audio": align.warp_targets(src["audio"], path, T2, "v2a"),
    }
    deltas = {}
    for m in MODALITIES:
        mask = fusion.shared_channel_mask(sample.transcript_v, sample.transcript_a, perms[m], C)
        deltas[m] = fusion.multimodal_delta(z[m], targets[m], warped[m], mask, mode, gate)
    return StepResult(z, caches, perms, labels, targets, deltas, path, nll)


def train_step(sample: MultimodalSample, states: States, cfg: ExperimentConfig) -> dict:
    """One online update of both networks (and their concept vectors).

    Mutates ``states`` and returns the diagnostics record for the step.
    """
    tc = cfg.train
    record = {"step": states.step, "mode": cfg.mode, "id": sample.id}
    try:
        res = compute_step(sample, states, cfg.mode, cfg.recode_targets, cfg.pool_gate)
    except ctc.CtcInfeasibleError as exc:
        log.warning("skipping %s: %s", sample.id, exc)
        states.skipped += 1
        states.step += 1
        record.update(skipped=True, loss_v=None, loss_a=None,
                      assignment_churn_v=None, assignment_churn_a=None)
        return record

    for m, tag in (("visual", "v"), ("audio", "a")):
        st = states[m]
        delta = res.deltas[m]
        record[f"loss_{tag}"] = float((delta ** 2).sum(axis=1).mean())
        record[f"nll_{tag}"] = float(res.nll[m])
        record[f"assignment_churn_{tag}"] = float(np.mean(res.perms[m] != st.perm))
        grads = lstm_backward(st.params, res.caches[m], delta)
        apply_momentum_sgd(st.params, grads, st.velocity, tc.learning_rate, tc.momentum)
        if cfg.mode != "baseline_ctc":
            st.gamma = binding.update_concept_vectors(st.gamma, res.z[m], res.perms[m],
                                                      tc.concept_learning_rate)
        st.perm = res.perms[m]
    record["skipped"] = False
    states.step += 1
    return record


def epoch_order(seed: int, epoch: int, n: int) -> np.ndarray:
    return Rng(derive_seed(seed, f"epoch/{epoch}")).permutation(n)


def train(cfg: ExperimentConfig, samples, states: States, on_step=None, on_epoch=None) -> States:
    """Run epochs ``states.epoch .. cfg.epochs - 1`` over ``samples``."""
    while states.epoch < cfg.epochs:
        for idx in epoch_order(cfg.seed, states.epoch, len(samples)):
            record = train_step(samples[idx], states, cfg)
            record["epoch"] = states.epoch
            if on_step is not None:
                on_step(record)
        states.epoch += 1
        if on_epoch is not None:
            on_epoch(states)
    return states


# --- evaluation -------------------------------------------------------------


def eval_assignment(samples, state: ModalityState, modality: str, mode: str) -> np.ndarray:
    """Global coding for decoding: elimination over evidence averaged over
    ``samples`` (identity in baseline mode)."""
    C = state.gamma.shape[0]
    if mode == "baseline_ctc":
        return np.arange(C)
    total = np.zeros((C, C))
    for s in samples:
        x = s.x_v if modality == "visual" else s.x_a
        z, _ = lstm_forward(state.params, x)
        total += binding.concept_evidence(z, state.gamma)
    return binding.row_column_elimination(total / max(1, len(samples)))


def calibration_batch(samples, cfg: ExperimentConfig):
    order = Rng(derive_seed(cfg.seed, "calibration")).permutation(len(samples))
    return [samples[i] for i in order[:cfg.calibration_size]]


def make_decoder(states: States, perms: dict):
    inv = {m: binding.inverse_assignment(perms[m]) for m in MODALITIES}

    def decode(sample):
        out = []
        for m, x in (("visual", sample.x_v), ("audio", sample.x_a)):
            z, _ = lstm_forward(states[m].params, x)
            out.append([int(inv[m][c]) for c in ctc.best_path_decode(z)])
        return out[0], out[1]

    return decode


def evaluate(samples, states: States, cfg: ExperimentConfig, calibration=None,
             decoder=None, perms=None) -> metrics.EvalReport:
    """Decode ``samples`` and score them, repeated over random subsets."""
    if perms is None:
        calib = calibration if calibration is not None else samples
        calib = calibration_batch(calib, cfg)
        perms = {m: eval_assignment(calib, states[m], m, cfg.mode) for m in MODALITIES}
    if decoder is None:
        decoder = make_decoder(states, perms)
    scores = []
    for s in samples:
        out_v, out_a = decoder(s)
        scores.append(metrics.score_sample(out_v, out_a, s.transcript_v, s.transcript_a,
                                           s.missing))
    consistency = metrics.binding_consistency(perms["visual"], perms["audio"])
    rng = Rng(derive_seed(cfg.seed, "eval"))
    return metrics.build_report(scores, consistency, rng, cfg.eval_repeats, cfg.eval_fraction)


# --- checkpoints ------------------------------------------------------------


def _save_params(directory: Path, params: LstmParams) -> None:
    directory.mkdir(parents=True, exist_ok=True)
    for d in ("fwd", "rev"):
        dr = getattr(params, d)
        for gate in ("i", "f", "o", "c"):
            write_tensor(directory / f"{d}.W_x{gate}.mmt", dr.gate("x", gate))
            write_tensor(directory / f"{d}.W_h{gate}.mmt", dr.gate("h", gate))
            write_tensor(directory / f"{d}.b_{gate}.mmt", dr.gate("b", gate)[None, :])
    write_tensor(directory / "W_hz.mmt", params.W_hz)
    write_tensor(directory / "b_z.mmt", params.b_z[None, :])


def _load_params(directory: Path) -> LstmParams:
    arrays = {}
    for d in ("fwd", "rev"):
        for kind, stem in (("Wx", "W_x"), ("Wh", "W_h"), ("b", "b_")):
            blocks = [read_tensor(directory / f"{d}.{stem}{g}.mmt") for g in "ifoc"]
            arrays[f"{d}.{kind}"] = np.vstack(blocks) if kind != "b" else np.concatenate(
                [b.ravel() for b in blocks])
    arrays["W_hz"] = read_tensor(directory / "W_hz.mmt")
    arrays["b_z"] = read_tensor(directory / "b_z.mmt").ravel()
    params = LstmParams.from_arrays(arrays)
    params.check()
    return params


def save_checkpoint(path, states: States, cfg: ExperimentConfig, extra: dict | None = None) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    for m in MODALITIES:
        st = states[m]
        _save_params(path / f"params_{m}", st.params)
        _save_params(path / f"velocity_{m}", st.velocity)
        write_tensor(path / f"concepts_{m}.mmt", st.gamma)
    (path / "binding.json").write_text(json.dumps(
        {m: states[m].perm.tolist() for m in MODALITIES}, sort_keys=True) + "\n")
    meta = {
        "version": CHECKPOINT_VERSION,
        "epoch": states.epoch, "step": states.step, "skipped": states.skipped,
        "seed": cfg.seed, "mode": cfg.mode,
        "dims": {m: {"n": states[m].params.n_inputs, "hidden": states[m].params.hidden}
                 for m in MODALITIES},
        "concepts": states.n_concepts,
        "config": cfg.to_dict(),
    }
    if extra:
        meta.update(extra)
    (path / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return path


def load_checkpoint(path) -> tuple[States, ExperimentConfig, dict]:
    path = Path(path)
    try:
        meta = json.loads((path / "meta.json").read_text())
        if meta.get("version") != CHECKPOINT_VERSION:
            raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
        perms = json.loads((path / "binding.json").read_text())
        sts = {}
        for m in MODALITIES:
            params = _load_params(path / f"params_{m}")
            velocity = _load_params(path / f"velocity_{m}")
            gamma = read_tensor(path / f"concepts_{m}.mmt")
            C = meta["concepts"]
            if (params.n_outputs != C + 1 or gamma.shape != (C, C)
                    or params.n_inputs != meta["dims"][m]["n"]
                    or params.hidden != meta["dims"][m]["hidden"]):
                raise CheckpointError(f"{m}: stored shapes disagree with meta.json")
            sts[m] = ModalityState(params, velocity, gamma, np.array(perms[m], dtype=np.int64))
    except CheckpointError:
        raise
    except (OSError, KeyError, ValueError) as exc:
        raise CheckpointError(f"unreadable checkpoint {path}: {exc}") from exc
    states = States(sts["visual"], sts["audio"], meta["step"], meta["epoch"], meta["skipped"])
    return states, ExperimentConfig.from_dict(meta["config"]), meta


def check_compatible(states: States, samples) -> None:
    """Raise ``CheckpointError`` if the samples do not fit the networks."""
    if not samples:
        return
    s = samples[0]
    if s.x_v.shape[1] != states.visual.params.n_inputs or s.x_a.shape[1] != states.audio.params.n_inputs:
        raise CheckpointError("feature dimensions do not match the checkpoint")
    top = max(max(s.transcript_v + s.transcript_a, default=0) for s in samples)
    if top >= states.n_concepts:
        raise CheckpointError("dataset vocabulary exceeds the checkpoint's concepts")


# --- sweeps -----------------------------------------------------------------

SWEEP_HEADER = ("mode", "scenario", "missing", "aacc_mean", "aacc_std", "ler_v", "ler_a")


def run_experiment(data_cfg: DatasetConfig, cfg: ExperimentConfig, dataset=None):
    """Train from scratch on a generated dataset and evaluate on its test split."""
    splits = dataset if dataset is not None else generate_dataset(data_cfg)[0]
    train_set, test_set = splits["train"], splits["test"]
    states = init_states(cfg, train_set[0].x_v.shape[1], train_set[0].x_a.shape[1],
                         data_cfg.vocab_size)
    train(cfg, train_set, states)
    return states, evaluate(test_set, states, cfg, calibration=train_set)


def run_sweep(data_cfg: DatasetConfig, cfg: ExperimentConfig, missing_counts,
              scenario: str, modes=("original", "pooled"), on_row=None) -> list[dict]:
    """From-scratch training per missing count and mode; one row each."""
    if scenario not in ("visual_full", "audio_full"):
        raise ConfigError("scenario: sweeps need visual_full or audio_full")
    rows = []
    for missing in missing_counts:
        dcfg = replace(data_cfg, scenario=scenario, fixed_missing=int(missing))
        dataset = generate_dataset(dcfg)[0]
        for mode in modes:
            _, report = run_experiment(dcfg, replace(cfg, mode=mode), dataset)
            row = {"mode": mode, "scenario": scenario, "missing": int(missing),
                   "aacc_mean": report.aacc, "aacc_std": report.aacc_std,
                   "ler_v": report.ler_visual, "ler_a": report.ler_audio}
            rows.append(row)
            if on_row is not None:
                on_row(row)
    return rows
