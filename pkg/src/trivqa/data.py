"""Datasets: synthetic generation, the file format, splits, normalization.

A sample is one case: a visual feature vector v_raw (d_v), one question
feature vector per attribute (K x d_q), the K answer labels, and an
optional binary diagnosis.

Synthetic construction: every (attribute, class) pair owns a fixed
orthonormal prototype direction in visual space; v_raw is the sum of
the prototypes selected by the answer tuple, scaled by class_sep, plus
isotropic gaussian noise. A question vector is its attribute's fixed
prototype plus noise plus a class trace of the answer (hint_strength,
pointing at a random class with probability 1 - hint_reliability), the
way real phrasing reflects the finding it asks about. Answers stay
marginally uniform per attribute; answer_coupling ties them through a
shared latent severity. The diagnosis is positive iff a strict majority
of attributes take class 0, so attribute learning provably helps
diagnosis.

On-disk format, bit-exact:
  manifest.json   schema, dims, per-sample records with byte offsets
  features.bin    magic "TRIVQA1\\0", then d_v, d_q, K, n as u64 LE,
                  then per sample: v_raw, q_raw_1..q_raw_K as f64 LE
"""

from __future__ import annotations

import json
import struct
import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataFormatError
from .model import AttributeSchema

MAGIC = b"TRIVQA1\x00"
HEADER = struct.Struct("<8sQQQQ")


@dataclass(frozen=True)
class Sample:
    id: str
    center: str
    v_raw: np.ndarray
    q_raw: np.ndarray
    answers: np.ndarray
    diagnosis: int | None


@dataclass
class Dataset:
    schema: AttributeSchema
    samples: list[Sample]
    d_v: int
    d_q: int

    def __post_init__(self):
        self.validate()

    def __len__(self):
        return len(self.samples)

    def validate(self):
        k = len(self.schema)
        cards = np.asarray(self.schema.cardinalities)
        seen = set()
        for idx, s in enumerate(self.samples):
            if s.id in seen:
                raise DataFormatError(f"duplicate sample id {s.id!r} at record {idx}")
            seen.add(s.id)
            if s.v_raw.shape != (self.d_v,):
                raise DataFormatError(
                    f"record {idx} ({s.id}): v_raw shape {s.v_raw.shape} != ({self.d_v},)"
                )
            if s.q_raw.shape != (k, self.d_q):
                raise DataFormatError(
                    f"record {idx} ({s.id}): q_raw shape {s.q_raw.shape} != ({k}, {self.d_q})"
                )
            if s.answers.shape != (k,):
                raise DataFormatError(
                    f"record {idx} ({s.id}): answers shape {s.answers.shape} != ({k},)"
                )
            if np.any(s.answers < 0) or np.any(s.answers >= cards):
                raise DataFormatError(
                    f"record {idx} ({s.id}): answers {s.answers.tolist()} out of range"
                )
            if not (np.all(np.isfinite(s.v_raw)) and np.all(np.isfinite(s.q_raw))):
                raise DataFormatError(f"record {idx} ({s.id}): non-finite features")
            if s.diagnosis not in (None, 0, 1):
                raise DataFormatError(
                    f"record {idx} ({s.id}): diagnosis {s.diagnosis!r} not in {{0,1}}"
                )

    # dense views used by training/eval
    def v_matrix(self) -> np.ndarray:
        return np.stack([s.v_raw for s in self.samples])

    def q_tensor(self) -> np.ndarray:
        return np.stack([s.q_raw for s in self.samples])

    def answers_matrix(self) -> np.ndarray:
        return np.stack([s.answers for s in self.samples])

    def diagnosis_vector(self) -> np.ndarray:
        """Diagnosis labels with -1 where absent."""
        return np.asarray(
            [(-1 if s.diagnosis is None else int(s.diagnosis)) for s in self.samples],
            dtype=np.int64,
        )

    def ids(self) -> list[str]:
        return [s.id for s in self.samples]


@dataclass(frozen=True)
class SynthConfig:
    schema: AttributeSchema = field(default_factory=AttributeSchema.default)
    n: int = 3000
    d_v: int = 24
    d_q: int = 8
    noise_sigma: float = 0.25
    class_sep: float = 1.0
    answer_coupling: float = 0.95
    hint_strength: float = 1.0
    hint_reliability: float = 0.75
    n_centers: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.n < 1:
            raise ConfigError(f"dataset.n must be >= 1, got {self.n}")
        total_classes = sum(self.schema.cardinalities)
        if self.d_v < total_classes:
            raise ConfigError(
                f"dataset.d_v={self.d_v} too small for {total_classes} orthonormal "
                f"class prototypes; need d_v >= {total_classes}"
            )
        if self.d_q < len(self.schema):
            raise ConfigError(
                f"dataset.d_q={self.d_q} too small for {len(self.schema)} orthonormal "
                f"question prototypes"
            )
        if not (np.isfinite(self.noise_sigma) and self.noise_sigma >= 0.0):
            raise ConfigError(
                f"dataset.noise_sigma must be finite and >= 0, got {self.noise_sigma}"
            )
        if not (np.isfinite(self.class_sep) and self.class_sep > 0.0):
            raise ConfigError(
                f"dataset.class_sep must be finite and > 0, got {self.class_sep}"
            )
        if not (
            np.isfinite(self.answer_coupling) and 0.0 <= self.answer_coupling < 1.0
        ):
            raise ConfigError(
                f"dataset.answer_coupling must lie in [0, 1), got "
                f"{self.answer_coupling}"
            )
        if not (np.isfinite(self.hint_strength) and self.hint_strength >= 0.0):
            raise ConfigError(
                f"dataset.hint_strength must be finite and >= 0, got "
                f"{self.hint_strength}"
            )
        if not (
            np.isfinite(self.hint_reliability)
            and 0.0 <= self.hint_reliability <= 1.0
        ):
            raise ConfigError(
                f"dataset.hint_reliability must lie in [0, 1], got "
                f"{self.hint_reliability}"
            )
        if self.n_centers < 1:
            raise ConfigError(f"dataset.n_centers must be >= 1, got {self.n_centers}")


def _orthonormal_rows(rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
    m = rng.standard_normal((dim, count))
    q, r = np.linalg.qr(m)
    # fix the QR sign ambiguity so the basis is a pure function of the draws
    signs = np.sign(np.diag(r))
    signs[signs == 0.0] = 1.0
    return (q * signs).T.copy()


def synth_prototypes(
    cfg: SynthConfig,
) -> tuple[list[np.ndarray], np.ndarray, list[np.ndarray]]:
    """The fixed prototype directions: per-(attribute, class) visual rows,
    per-attribute question rows, and per-(attribute, class) question-space
    trace rows (unit norm, used for the hint component). Pure function of
    cfg.seed."""
    rng = np.random.default_rng([cfg.seed, 0])
    cards = cfg.schema.cardinalities
    flat = _orthonormal_rows(rng, sum(cards), cfg.d_v)
    v_protos, start = [], 0
    for c in cards:
        v_protos.append(flat[start : start + c])
        start += c
    q_protos = _orthonormal_rows(rng, len(cards), cfg.d_q)
    q_traces = []
    for c in cards:
        rows = rng.standard_normal((c, cfg.d_q))
        q_traces.append(rows / np.linalg.norm(rows, axis=1, keepdims=True))
    return v_protos, q_protos, q_traces


def synth_diagnosis(answers: np.ndarray) -> np.ndarray:
    """Positive iff class 0 answers form a strict majority of attributes."""
    k = answers.shape[1]
    return ((answers == 0).sum(axis=1) > k / 2).astype(np.int64)


def synth_generate(cfg: SynthConfig) -> Dataset:
    v_protos, q_protos, q_traces = synth_prototypes(cfg)
    rng = np.random.default_rng([cfg.seed, 1])
    k = len(cfg.schema)
    cards = cfg.schema.cardinalities
    # Answers are marginally uniform per attribute. answer_coupling ties
    # attributes through a shared latent severity, the way co-occurring
    # findings behave on a real tumor: with probability coupling an
    # attribute reads its class off the latent, otherwise independently.
    latent = rng.random(size=cfg.n)
    coupled = rng.random(size=(cfg.n, k)) < cfg.answer_coupling
    answers = np.column_stack(
        [
            np.where(
                coupled[:, i],
                (latent * c).astype(np.int64),
                rng.integers(0, c, size=cfg.n),
            )
            for i, c in enumerate(cards)
        ]
    ).astype(np.int64)
    centers = rng.integers(0, cfg.n_centers, size=cfg.n)
    v = np.zeros((cfg.n, cfg.d_v))
    for i in range(k):
        v += v_protos[i][answers[:, i]] * cfg.class_sep
    v += rng.normal(0.0, cfg.noise_sigma, size=(cfg.n, cfg.d_v))
    q = np.broadcast_to(q_protos, (cfg.n, k, cfg.d_q)) + rng.normal(
        0.0, cfg.noise_sigma, size=(cfg.n, k, cfg.d_q)
    )
    if cfg.hint_strength > 0.0:
        # A question about a finding is phrased with the finding in view, so
        # its wording carries a trace of the answer. hint_reliability < 1
        # keeps that trace imperfect: with probability 1 - reliability the
        # trace points at a random class instead of the true one.
        hint_on = rng.random(size=(cfg.n, k)) < cfg.hint_reliability
        for i, c in enumerate(cards):
            hinted = np.where(
                hint_on[:, i], answers[:, i], rng.integers(0, c, size=cfg.n)
            )
            q[:, i, :] += cfg.hint_strength * q_traces[i][hinted]
    diag = synth_diagnosis(answers)
    samples = [
        Sample(
            id=f"s{idx:06d}",
            center=f"c{centers[idx]}",
            v_raw=np.ascontiguousarray(v[idx]),
            q_raw=np.ascontiguousarray(q[idx]),
            answers=np.ascontiguousarray(answers[idx]),
            diagnosis=int(diag[idx]),
        )
        for idx in range(cfg.n)
    ]
    return Dataset(cfg.schema, samples, cfg.d_v, cfg.d_q)


# ---------------------------------------------------------------------------
# split


def split(ds: Dataset, test_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Center-stratified split preserving diagnosis proportions.

    Within every (center, diagnosis) stratum, round(fraction * size)
    samples go to test. Seed-deterministic; both halves keep the
    original dataset order.
    """
    if not (0.0 < test_fraction < 1.0):
        raise ConfigError(
            f"split.test_fraction must lie in (0, 1), got {test_fraction}"
        )
    strata: dict[tuple, list[int]] = {}
    for idx, s in enumerate(ds.samples):
        key = (s.center, -1 if s.diagnosis is None else int(s.diagnosis))
        strata.setdefault(key, []).append(idx)
    rng = np.random.default_rng([seed, 2])
    test_idx: list[int] = []
    for key in sorted(strata):
        idxs = strata[key]
        n_test = int(np.floor(test_fraction * len(idxs) + 0.5))
        if n_test < 1 or n_test >= len(idxs):
            center, diag = key
            raise ConfigError(
                f"stratum (center={center}, diagnosis={diag}) has {len(idxs)} "
                f"samples, too few to take a {test_fraction} test fraction"
            )
        perm = rng.permutation(len(idxs))
        test_idx.extend(idxs[j] for j in perm[:n_test])
    test_set = set(test_idx)
    train_samples = [s for i, s in enumerate(ds.samples) if i not in test_set]
    test_samples = [s for i, s in enumerate(ds.samples) if i in test_set]
    return (
        Dataset(ds.schema, train_samples, ds.d_v, ds.d_q),
        Dataset(ds.schema, test_samples, ds.d_v, ds.d_q),
    )


# ---------------------------------------------------------------------------
# file format


def save_features(ds: Dataset, manifest_path, features_name: str = "features.bin"):
    """Write manifest.json + features.bin beside it. Returns manifest path."""
    from pathlib import Path

    manifest_path = Path(manifest_path)
    manifest_path.parent.mkdir(parents=True, exist_ok=True)
    bin_path = manifest_path.parent / features_name
    k = len(ds.schema)
    per_sample = (ds.d_v + k * ds.d_q) * 8
    records = []
    with open(bin_path, "wb") as fh:
        fh.write(HEADER.pack(MAGIC, ds.d_v, ds.d_q, k, len(ds.samples)))
        offset = HEADER.size
        for s in ds.samples:
            fh.write(s.v_raw.astype("<f8").tobytes())
            fh.write(s.q_raw.astype("<f8").tobytes())
            records.append(
                {
                    "id": s.id,
                    "center": s.center,
                    "answers": [int(a) for a in s.answers],
                    "diagnosis": s.diagnosis,
                    "offset": offset,
                }
            )
            offset += per_sample
    manifest = {
        "format": "TRIVQA1",
        "d_v": ds.d_v,
        "d_q": ds.d_q,
        "schema": ds.schema.to_json(),
        "features_file": features_name,
        "samples": records,
    }
    with open(manifest_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return manifest_path


def load_features(manifest_path) -> Dataset:
    from pathlib import Path

    manifest_path = Path(manifest_path)
    try:
        with open(manifest_path) as fh:
            manifest = json.load(fh)
    except FileNotFoundError as exc:
        raise DataFormatError(f"manifest not found: {manifest_path}") from exc
    except json.JSONDecodeError as exc:
        raise DataFormatError(f"manifest {manifest_path} is not valid JSON: {exc}") from exc
    for key in ("format", "d_v", "d_q", "schema", "features_file", "samples"):
        if key not in manifest:
            raise DataFormatError(f"manifest {manifest_path} lacks the {key!r} field")
    if manifest["format"] != "TRIVQA1":
        raise DataFormatError(
            f"manifest {manifest_path} declares format {manifest['format']!r}, "
            f"expected 'TRIVQA1'"
        )
    try:
        schema = AttributeSchema.from_json(manifest["schema"])
    except ConfigError as exc:
        raise DataFormatError(f"manifest {manifest_path}: {exc.message}") from exc
    d_v, d_q = int(manifest["d_v"]), int(manifest["d_q"])
    k = len(schema)
    bin_path = manifest_path.parent / manifest["features_file"]
    try:
        blob = bin_path.read_bytes()
    except FileNotFoundError as exc:
        raise DataFormatError(f"feature file not found: {bin_path}") from exc
    if len(blob) < HEADER.size:
        raise DataFormatError(f"feature file {bin_path} is truncated (no header)")
    magic, h_dv, h_dq, h_k, h_n = HEADER.unpack_from(blob, 0)
    if magic != MAGIC:
        raise DataFormatError(f"feature file {bin_path} has wrong magic {magic!r}")
    records = manifest["samples"]
    if (h_dv, h_dq, h_k, h_n) != (d_v, d_q, k, len(records)):
        raise DataFormatError(
            f"feature file {bin_path} header (d_v={h_dv}, d_q={h_dq}, K={h_k}, "
            f"n={h_n}) disagrees with manifest (d_v={d_v}, d_q={d_q}, K={k}, "
            f"n={len(records)})"
        )
    per_sample = (d_v + k * d_q) * 8
    expect = HEADER.size + h_n * per_sample
    if len(blob) != expect:
        raise DataFormatError(
            f"feature file {bin_path} is {len(blob)} bytes, expected {expect}"
        )
    samples = []
    for idx, rec in enumerate(records):
        for field_name in ("id", "center", "answers", "offset"):
            if field_name not in rec:
                raise DataFormatError(
                    f"manifest {manifest_path} record {idx} lacks {field_name!r}"
                )
        offset = int(rec["offset"])
        if offset != HEADER.size + idx * per_sample:
            raise DataFormatError(
                f"manifest {manifest_path} record {idx} ({rec['id']}) has offset "
                f"{offset}, expected {HEADER.size + idx * per_sample}"
            )
        flat = np.frombuffer(
            blob, dtype="<f8", count=d_v + k * d_q, offset=offset
        ).astype(np.float64)
        diagnosis = rec.get("diagnosis")
        samples.append(
            Sample(
                id=str(rec["id"]),
                center=str(rec["center"]),
                v_raw=np.ascontiguousarray(flat[:d_v]),
                q_raw=np.ascontiguousarray(flat[d_v:].reshape(k, d_q)),
                answers=np.asarray(rec["answers"], dtype=np.int64),
                diagnosis=None if diagnosis is None else int(diagnosis),
            )
        )
    return Dataset(schema, samples, d_v, d_q)


# ---------------------------------------------------------------------------
# normalization


@dataclass
class NormStats:
    v_mean: np.ndarray
    v_std: np.ndarray
    q_mean: np.ndarray
    q_std: np.ndarray


def feature_stats(ds: Dataset) -> NormStats:
    """Per-dimension mean/std. Compute on the training split only;
    zero-variance dimensions clamp to std 1 with a warning."""
    v = ds.v_matrix()
    q = ds.q_tensor()
    v_mean, v_var = v.mean(axis=0), v.var(axis=0)
    # question stats pool all attributes: the per-attribute offsets are
    # signal (they identify the question), not nuisance to subtract
    q_flat = q.reshape(-1, ds.d_q)
    q_mean, q_var = q_flat.mean(axis=0), q_flat.var(axis=0)
    clamped = int((v_var <= 1e-24).sum() + (q_var <= 1e-24).sum())
    if clamped:
        warnings.warn(
            f"{clamped} feature dimensions have zero variance; clamping to 1",
            stacklevel=2,
        )
    v_var = np.where(v_var <= 1e-24, 1.0, v_var)
    q_var = np.where(q_var <= 1e-24, 1.0, q_var)
    return NormStats(v_mean, np.sqrt(v_var), q_mean, np.sqrt(q_var))


def normalize(ds: Dataset, stats: NormStats) -> Dataset:
    if stats.v_mean.shape != (ds.d_v,) or stats.q_mean.shape != (ds.d_q,):
        raise ConfigError(
            f"normalization stats shapes {stats.v_mean.shape}/{stats.q_mean.shape} "
            f"do not match dataset dims ({ds.d_v},)/({ds.d_q},)"
        )
    samples = [
        replace(
            s,
            v_raw=np.ascontiguousarray((s.v_raw - stats.v_mean) / stats.v_std),
            q_raw=np.ascontiguousarray((s.q_raw - stats.q_mean) / stats.q_std),
        )
        for s in ds.samples
    ]
    return Dataset(ds.schema, samples, ds.d_v, ds.d_q)
