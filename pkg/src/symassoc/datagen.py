"""Synthetic paired visual/audio sequences over a shared concept vocabulary.

Visual input is a horizontal strip of per-concept binary glyphs read one
column per timestep (32 features per column). Audio input is a
concatenation of per-concept smooth feature trajectories, distorted per
speaker and stretched in time. Both modalities carry subsequences of a
common base sequence, so relative order is preserved while some elements
are missing from one or both sides.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .numerics import Rng, derive_seed, read_tensor, write_tensor

SCENARIOS = ("both", "visual_full", "audio_full")
SPLITS = ("train", "test")
SEPARATOR_COLUMNS = 2

SPANISH_CONCEPTS = (
    "oso", "bote", "botella", "bol", "caja", "carro", "gato", "queso",
    "cigarrillo", "gaseosa", "bebida", "pato", "cara", "comida", "hamburguesa",
    "higiene", "liquido", "loción", "cebolla", "pimentón", "pera", "redondo",
    "sanduche", "cuchara", "té", "teléfono", "tomate", "florero", "vehículo",
    "madera",
)


class DataConfigError(ValueError):
    pass


@dataclass
class DatasetConfig:
    vocab_size: int = 30
    base_len: int = 10
    scenario: str = "both"
    fixed_missing: int | None = None
    max_drop: int = 5
    n_train: int = 2000
    n_test: int = 500
    glyph_width: int = 8
    visual_dim: int = 32
    audio_dim: int = 16
    audio_len_min: int = 10
    audio_len_max: int = 20
    visual_noise: float = 0.1
    audio_noise: float = 0.1
    speakers: int = 12
    train_speakers: int = 9
    speaker_distortion: float = 0.1
    duration_warp: float = 0.2
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        if self.scenario not in SCENARIOS:
            raise DataConfigError(f"scenario: unknown value {self.scenario!r}")
        if not 2 <= self.vocab_size <= len(SPANISH_CONCEPTS):
            raise DataConfigError(f"vocab_size: must lie in 2..{len(SPANISH_CONCEPTS)}")
        if self.base_len < 1:
            raise DataConfigError("base_len: must be >= 1")
        if self.scenario != "both":
            if self.fixed_missing is None:
                raise DataConfigError("fixed_missing: required for one-sided scenarios")
            if not 0 <= self.fixed_missing < self.base_len:
                raise DataConfigError(f"fixed_missing: must lie in 0..{self.base_len - 1}")
        if self.max_drop < 0:
            raise DataConfigError("max_drop: must be >= 0")
        if not 0 < self.train_speakers < self.speakers:
            raise DataConfigError("train_speakers: must leave at least one test speaker")
        if not 2 <= self.audio_len_min <= self.audio_len_max:
            raise DataConfigError("audio_len_min/audio_len_max: invalid range")
        if self.n_train < 0 or self.n_test < 0:
            raise DataConfigError("n_train/n_test: must be >= 0")
        if not 0 <= self.duration_warp < 1:
            raise DataConfigError("duration_warp: must lie in [0, 1)")

    @classmethod
    def from_dict(cls, d: dict) -> "DatasetConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(d) - known)
        if unknown:
            raise DataConfigError(f"{unknown[0]}: unknown config key")
        return cls(**d)

    def to_dict(self) -> dict:
        return asdict(self)


def vocabulary(C: int) -> list[str]:
    if not 2 <= C <= len(SPANISH_CONCEPTS):
        raise DataConfigError(f"vocab_size: must lie in 2..{len(SPANISH_CONCEPTS)}")
    return list(SPANISH_CONCEPTS[:C])


@dataclass
class ConceptPrototypes:
    glyphs: list  # per concept: glyph_width x visual_dim binary array
    trajectories: list  # per concept: L x audio_dim
    speaker_scale: np.ndarray  # speakers x audio_dim
    speaker_offset: np.ndarray  # speakers x audio_dim


@dataclass
class MultimodalSample:
    x_v: np.ndarray
    x_a: np.ndarray
    transcript_v: list
    transcript_a: list
    base: list = field(default_factory=list)
    scenario: str = "both"
    id: str = ""

    @property
    def shared(self) -> list[int]:
        return sorted(set(self.transcript_v) & set(self.transcript_a))

    @property
    def missing(self) -> int:
        return 2 * len(self.base) - len(self.transcript_v) - len(self.transcript_a)


def make_prototypes(rng: Rng, cfg: DatasetConfig) -> ConceptPrototypes:
    glyphs, seen = [], set()
    g_rng = rng.spawn("glyphs")
    for _ in range(cfg.vocab_size):
        while True:
            g = (g_rng.random((cfg.glyph_width, cfg.visual_dim)) < 0.5).astype(np.float64)
            key = g.tobytes()
            if key not in seen:
                seen.add(key)
                glyphs.append(g)
                break

    a_rng = rng.spawn("trajectories")
    n_basis = 4
    trajectories = []
    for _ in range(cfg.vocab_size):
        L = a_rng.integers(cfg.audio_len_min, cfg.audio_len_max + 1)
        t = np.linspace(0.0, 1.0, L)
        basis = np.cos(np.pi * np.outer(t, np.arange(n_basis)))  # L x K
        coef = a_rng.normal((n_basis, cfg.audio_dim)) / (1.0 + np.arange(n_basis))[:, None]
        envelope = np.sqrt(np.sin(np.pi * (np.arange(L) + 0.5) / L))
        trajectories.append((basis @ coef) * envelope[:, None])

    s_rng = rng.spawn("speakers")
    d = cfg.speaker_distortion
    scale = 1.0 + s_rng.uniform(-d, d, size=(cfg.speakers, cfg.audio_dim))
    offset = d * s_rng.normal((cfg.speakers, cfg.audio_dim))
    return ConceptPrototypes(glyphs, trajectories, scale, offset)


def is_subsequence(short, long) -> bool:
    it = iter(long)
    return all(any(x == y for y in it) for x in short)


def _drop(rng: Rng, base: list, k: int) -> list:
    gone = set(rng.choice(len(base), k).tolist()) if k else set()
    return [s for i, s in enumerate(base) if i not in gone]


def gen_semantic_pair(rng: Rng, C: int, base_len: int = 10, scenario: str = "both",
                      fixed_missing: int | None = None, max_drop: int = 5):
    """Draw a base sequence and the two modality transcripts.

    Returns ``(base, S_v, S_a)``; both transcripts are order-preserving
    subsequences of ``base`` and share at least one concept.
    """
    if scenario not in SCENARIOS:
        raise DataConfigError(f"scenario: unknown value {scenario!r}")
    if base_len < 1:
        raise DataConfigError("base_len: must be >= 1")
    if scenario != "both" and (fixed_missing is None or not 0 <= fixed_missing < base_len):
        raise DataConfigError(f"fixed_missing: must lie in 0..{base_len - 1}")
    base = rng.integers(0, C, size=base_len).tolist()
    top = min(max_drop, base_len - 1)
    while True:
        if scenario == "both":
            S_v = _drop(rng, base, rng.integers(0, top + 1))
            S_a = _drop(rng, base, rng.integers(0, top + 1))
        elif scenario == "visual_full":
            S_v, S_a = list(base), _drop(rng, base, fixed_missing)
        else:
            S_v, S_a = _drop(rng, base, fixed_missing), list(base)
        if set(S_v) & set(S_a):
            return base, S_v, S_a


def render_visual(rng: Rng, transcript, protos: ConceptPrototypes,
                  noise_sigma: float = 0.1) -> np.ndarray:
    """Glyph columns with two blank columns before, between and after."""
    n = protos.glyphs[0].shape[1]
    gap = np.zeros((SEPARATOR_COLUMNS, n))
    parts = [gap]
    for s in transcript:
        parts += [protos.glyphs[s], gap]
    x = np.vstack(parts)
    if noise_sigma > 0:
        x = x + noise_sigma * rng.normal(x.shape)
    return x


def speaker_pool(split: str, speakers: int = 12, train_speakers: int = 9) -> list[int]:
    if split == "train":
        return list(range(train_speakers))
    if split == "test":
        return list(range(train_speakers, speakers))
    raise ValueError(f"unknown split {split!r}")


def render_word(trajectory, scale, offset, stretch: float) -> np.ndarray:
    L = trajectory.shape[0]
    new_len = max(2, int(round(L * stretch)))
    src = np.linspace(0.0, L - 1, new_len)
    grid = np.arange(L)
    warped = np.column_stack([np.interp(src, grid, trajectory[:, d])
                              for d in range(trajectory.shape[1])])
    return warped * scale + offset


def render_audio(rng: Rng, transcript, protos: ConceptPrototypes, speakers,
                 noise_sigma: float = 0.1, duration_warp: float = 0.2) -> np.ndarray:
    """Concatenate one spoken variant per concept, each from a random speaker
    in ``speakers``, with its duration stretched by up to ``duration_warp``."""
    words = []
    for s in transcript:
        spk = speakers[rng.integers(0, len(speakers))]
        stretch = 1.0 + (rng.uniform(-duration_warp, duration_warp) if duration_warp else 0.0)
        words.append(render_word(protos.trajectories[s], protos.speaker_scale[spk],
                                 protos.speaker_offset[spk], stretch))
    x = np.vstack(words)
    if noise_sigma > 0:
        x = x + noise_sigma * rng.normal(x.shape)
    return x


def generate_split(cfg: DatasetConfig, split: str, protos: ConceptPrototypes | None = None):
    """Raw (unnormalized) samples for one split; pure in ``(cfg, split)``."""
    if protos is None:
        protos = make_prototypes(Rng(cfg.seed).spawn("prototypes"), cfg)
    count = cfg.n_train if split == "train" else cfg.n_test
    pool = speaker_pool(split, cfg.speakers, cfg.train_speakers)
    samples = []
    for idx in range(count):
        rng = Rng(derive_seed(cfg.seed, f"{split}/{idx}"))
        base, S_v, S_a = gen_semantic_pair(rng.spawn("semantic"), cfg.vocab_size, cfg.base_len,
                                           cfg.scenario, cfg.fixed_missing, cfg.max_drop)
        x_v = render_visual(rng.spawn("visual"), S_v, protos, cfg.visual_noise)
        x_a = render_audio(rng.spawn("audio"), S_a, protos, pool, cfg.audio_noise,
                           cfg.duration_warp)
        samples.append(MultimodalSample(x_v, x_a, S_v, S_a, base, cfg.scenario,
                                        f"{split}-{idx:06d}"))
    return samples


def feature_stats(samples) -> dict:
    xv = np.vstack([s.x_v for s in samples])
    xa = np.vstack([s.x_a for s in samples])
    std_v, std_a = xv.std(axis=0), xa.std(axis=0)
    # constant features keep unit scale
    std_v[std_v == 0] = 1.0
    std_a[std_a == 0] = 1.0
    return {"mean_v": xv.mean(axis=0).tolist(), "std_v": std_v.tolist(),
            "mean_a": xa.mean(axis=0).tolist(), "std_a": std_a.tolist()}


def normalize(samples, stats: dict) -> None:
    mv, sv = np.array(stats["mean_v"]), np.array(stats["std_v"])
    ma, sa = np.array(stats["mean_a"]), np.array(stats["std_a"])
    for s in samples:
        s.x_v = (s.x_v - mv) / sv
        s.x_a = (s.x_a - ma) / sa


def generate_dataset(cfg: DatasetConfig) -> tuple[dict, dict]:
    """In-memory dataset: ``({"train": [...], "test": [...]}, stats)``, normalized
    with statistics of the training features."""
    protos = make_prototypes(Rng(cfg.seed).spawn("prototypes"), cfg)
    splits = {split: generate_split(cfg, split, protos) for split in SPLITS}
    stats = feature_stats(splits["train"] or splits["test"])
    for samples in splits.values():
        normalize(samples, stats)
    return splits, stats


def _dump(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def build_dataset(cfg: DatasetConfig, out_dir) -> Path:
    """Write tensors, ``manifest.jsonl``, ``stats.json`` and ``config.json``."""
    out = Path(out_dir)
    splits, stats = generate_dataset(cfg)
    (out / "visual").mkdir(parents=True, exist_ok=True)
    (out / "audio").mkdir(parents=True, exist_ok=True)
    lines = []
    for split in SPLITS:
        for idx, s in enumerate(splits[split]):
            vpath, apath = f"visual/{s.id}.mmt", f"audio/{s.id}.mmt"
            write_tensor(out / vpath, s.x_v)
            write_tensor(out / apath, s.x_a)
            lines.append(_dump({
                "id": s.id, "split": split, "scenario": s.scenario,
                "visual_path": vpath, "audio_path": apath,
                "transcript_v": s.transcript_v, "transcript_a": s.transcript_a,
                "base": s.base, "shared": s.shared,
                "seed": derive_seed(cfg.seed, f"{split}/{idx}"),
            }))
    (out / "manifest.jsonl").write_text("\n".join(lines) + "\n", encoding="utf-8")
    (out / "stats.json").write_text(_dump(stats) + "\n", encoding="utf-8")
    (out / "config.json").write_text(_dump(cfg.to_dict()) + "\n", encoding="utf-8")
    return out


def read_manifest(data_dir) -> list[dict]:
    path = Path(data_dir) / "manifest.jsonl"
    return [json.loads(line) for line in path.read_text(encoding="utf-8").splitlines() if line]


def load_split(data_dir, split: str) -> list[MultimodalSample]:
    data_dir = Path(data_dir)
    out = []
    for rec in read_manifest(data_dir):
        if rec["split"] != split:
            continue
        out.append(MultimodalSample(
            read_tensor(data_dir / rec["visual_path"]), read_tensor(data_dir / rec["audio_path"]),
            list(rec["transcript_v"]), list(rec["transcript_a"]), list(rec["base"]),
            rec["scenario"], rec["id"]))
    return out


def load_config(data_dir) -> DatasetConfig:
    d = json.loads((Path(data_dir) / "config.json").read_text(encoding="utf-8"))
    return DatasetConfig.from_dict(d)
