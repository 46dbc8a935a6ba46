"""Multimodal instances, manifest I/O, label-overlap similarity, prompts,
query/gallery splits and a synthetic Gaussian-centroid generator."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import ArtifactIOError, DataError, InputError

PROMPT_TEMPLATE = "An image of {}"


@dataclass(frozen=True)
class Instance:
    id: str
    image_feat: np.ndarray
    text_feat: np.ndarray
    labels: frozenset[int]
    label_prompt_feat: np.ndarray | None = None

    def __eq__(self, other):
        if not isinstance(other, Instance):
            return NotImplemented
        return (
            self.id == other.id
            and self.labels == other.labels
            and np.array_equal(self.image_feat, other.image_feat)
            and np.array_equal(self.text_feat, other.text_feat)
            and (
                (self.label_prompt_feat is None and other.label_prompt_feat is None)
                or (
                    self.label_prompt_feat is not None
                    and other.label_prompt_feat is not None
                    and np.array_equal(self.label_prompt_feat, other.label_prompt_feat)
                )
            )
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass
class Dataset:
    instances: list[Instance]
    label_names: list[str]
    d_v: int
    d_t: int
    d_y: int | None = None
    _index: dict[str, int] = field(default_factory=dict, init=False, repr=False, compare=False)

    def __post_init__(self):
        self._index = {}
        for inst in self.instances:
            if inst.id in self._index:
                raise DataError("duplicate instance id", instance_id=inst.id)
            self._index[inst.id] = len(self._index)
            validate_instance(inst, self.d_v, self.d_t, self.K, self.d_y)

    @property
    def K(self) -> int:
        return len(self.label_names)

    @property
    def N(self) -> int:
        return len(self.instances)

    @property
    def ids(self) -> list[str]:
        return [inst.id for inst in self.instances]

    def __len__(self):
        return len(self.instances)

    def index_of(self, ids: Iterable[str]) -> np.ndarray:
        try:
            return np.array([self._index[i] for i in ids], dtype=np.int64)
        except KeyError as exc:
            raise DataError(f"unknown instance id {exc.args[0]!r}") from None

    def subset(self, ids: Iterable[str]) -> list[Instance]:
        return [self.instances[k] for k in self.index_of(ids)]

    def image_matrix(self, ids: Iterable[str] | None = None) -> np.ndarray:
        insts = self.instances if ids is None else self.subset(ids)
        return np.stack([i.image_feat for i in insts]) if insts else np.zeros((0, self.d_v))

    def text_matrix(self, ids: Iterable[str] | None = None) -> np.ndarray:
        insts = self.instances if ids is None else self.subset(ids)
        return np.stack([i.text_feat for i in insts]) if insts else np.zeros((0, self.d_t))

    def label_matrix(self, ids: Iterable[str] | None = None) -> np.ndarray:
        insts = self.instances if ids is None else self.subset(ids)
        return multihot(insts, self.K)

    def label_input_matrix(self, ids: Iterable[str] | None = None, mode: str = "multihot") -> np.ndarray:
        insts = self.instances if ids is None else self.subset(ids)
        return np.stack([label_input_vector(i, self.K, mode) for i in insts])

    def __eq__(self, other):
        if not isinstance(other, Dataset):
            return NotImplemented
        return (
            self.label_names == other.label_names
            and (self.d_v, self.d_t, self.d_y) == (other.d_v, other.d_t, other.d_y)
            and self.instances == other.instances
        )


def validate_instance(inst: Instance, d_v: int, d_t: int, K: int, d_y: int | None = None, line: int | None = None):
    if not inst.labels:
        raise DataError("empty label set", instance_id=inst.id, line=line)
    bad = [y for y in inst.labels if not 0 <= y < K]
    if bad:
        raise DataError(f"label id(s) {sorted(bad)} outside [0, {K})", instance_id=inst.id, line=line)
    for name, vec, dim in (("image_feat", inst.image_feat, d_v), ("text_feat", inst.text_feat, d_t)):
        if vec.shape != (dim,):
            raise DataError(f"{name} has length {vec.shape[-1] if vec.ndim else 0}, header declares {dim}", instance_id=inst.id, line=line)
        if not np.all(np.isfinite(vec)):
            raise DataError(f"{name} contains non-finite values", instance_id=inst.id, line=line)
    if inst.label_prompt_feat is not None:
        if d_y is None or inst.label_prompt_feat.shape != (d_y,):
            raise DataError(f"label_prompt_feat length does not match d_y={d_y}", instance_id=inst.id, line=line)
        if not np.all(np.isfinite(inst.label_prompt_feat)):
            raise DataError("label_prompt_feat contains non-finite values", instance_id=inst.id, line=line)


def make_instance(id, image_feat, text_feat, labels, label_prompt_feat=None) -> Instance:
    return Instance(
        str(id),
        np.asarray(image_feat, dtype=np.float64),
        np.asarray(text_feat, dtype=np.float64),
        frozenset(int(y) for y in labels),
        None if label_prompt_feat is None else np.asarray(label_prompt_feat, dtype=np.float64),
    )


# ---------------------------------------------------------------- manifest


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    """Header line then one JSON record per instance (JSON Lines)."""
    header = {
        "header": {
            "d_v": dataset.d_v,
            "d_t": dataset.d_t,
            "d_y": dataset.d_y,
            "K": dataset.K,
            "label_names": list(dataset.label_names),
        }
    }
    lines = [json.dumps(header)]
    for inst in dataset.instances:
        rec = {
            "id": inst.id,
            "image_feat": inst.image_feat.tolist(),
            "text_feat": inst.text_feat.tolist(),
            "label_ids": sorted(inst.labels),
        }
        if inst.label_prompt_feat is not None:
            rec["label_prompt_feat"] = inst.label_prompt_feat.tolist()
        lines.append(json.dumps(rec))
    try:
        Path(path).write_text("\n".join(lines) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write manifest {path}: {exc}") from exc


def load_dataset(path: str | Path) -> Dataset:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read manifest {path}: {exc}") from exc

    header = None
    instances: list[Instance] = []
    seen: set[str] = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError as exc:
            raise DataError(f"malformed record: {exc.msg}", line=lineno) from None
        if not isinstance(rec, dict):
            raise DataError("record is not an object", line=lineno)
        if header is None:
            if "header" not in rec:
                raise DataError("first record must be the header", line=lineno)
            header = _parse_header(rec["header"], lineno)
            continue
        rid = rec.get("id")
        try:
            inst = make_instance(
                rid,
                rec["image_feat"],
                rec["text_feat"],
                rec["label_ids"],
                rec.get("label_prompt_feat"),
            )
        except KeyError as exc:
            raise DataError(f"missing field {exc.args[0]!r}", instance_id=rid, line=lineno) from None
        except (TypeError, ValueError) as exc:
            raise DataError(f"malformed record: {exc}", instance_id=rid, line=lineno) from None
        if rid is None:
            raise DataError("missing field 'id'", line=lineno)
        if inst.image_feat.ndim != 1 or inst.text_feat.ndim != 1:
            raise DataError("feature vectors must be flat lists", instance_id=rid, line=lineno)
        validate_instance(inst, header["d_v"], header["d_t"], header["K"], header["d_y"], line=lineno)
        if inst.id in seen:
            raise DataError("duplicate instance id", instance_id=rid, line=lineno)
        seen.add(inst.id)
        instances.append(inst)
    if header is None:
        raise DataError("manifest is empty")
    return Dataset(instances, header["label_names"], header["d_v"], header["d_t"], header["d_y"])


def _parse_header(h, lineno):
    try:
        d_v, d_t, K = int(h["d_v"]), int(h["d_t"]), int(h["K"])
        d_y = None if h.get("d_y") is None else int(h["d_y"])
        names = [str(n) for n in h["label_names"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"malformed header: {exc}", line=lineno) from None
    if min(d_v, d_t, K) < 1 or (d_y is not None and d_y < 1):
        raise DataError("header dimensions must be positive", line=lineno)
    if len(names) != K:
        raise DataError(f"header lists {len(names)} label names for K={K}", line=lineno)
    return {"d_v": d_v, "d_t": d_t, "d_y": d_y, "K": K, "label_names": names}


# ---------------------------------------------------------------- similarity


def multihot(instances: Sequence[Instance], K: int | None = None) -> np.ndarray:
    if K is None:
        K = 1 + max((max(i.labels) for i in instances), default=-1)
    Y = np.zeros((len(instances), K), dtype=np.float64)
    for r, inst in enumerate(instances):
        Y[r, sorted(inst.labels)] = 1.0
    return Y


def similarity_from_labels(Y_rows: np.ndarray, Y_cols: np.ndarray) -> np.ndarray:
    """S_ij = 1 iff the multi-hot rows share a label."""
    return ((Y_rows @ Y_cols.T) > 0).astype(np.float64)


def build_similarity(rows: Sequence[Instance], cols: Sequence[Instance], off_diagonal: bool = False) -> np.ndarray:
    """Label-overlap matrix. ``off_diagonal=True`` zeroes the self-pairs; it
    only makes sense when rows and cols are the same list."""
    K = 1 + max((max(i.labels) for i in [*rows, *cols]), default=-1)
    S = similarity_from_labels(multihot(rows, K), multihot(cols, K))
    if off_diagonal:
        if [i.id for i in rows] != [i.id for i in cols]:
            raise InputError("off-diagonal view needs identical row and column instances")
        np.fill_diagonal(S, 0.0)
    return S


# ---------------------------------------------------------------- prompts / label input


def make_prompts(label_names: Sequence[str], mode: str = "prompt") -> list[str]:
    if mode not in ("prompt", "raw"):
        raise InputError(f"prompt mode must be 'prompt' or 'raw', got {mode!r}")
    out = []
    for name in label_names:
        if not isinstance(name, str) or not name.strip():
            raise InputError("label names must be nonempty strings")
        out.append(PROMPT_TEMPLATE.format(name) if mode == "prompt" else name)
    return out


def write_prompts(label_names: Sequence[str], path: str | Path, mode: str = "prompt") -> None:
    lines = make_prompts(label_names, mode)
    try:
        Path(path).write_text("".join(p + "\n" for p in lines))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write prompts {path}: {exc}") from exc


def label_input_vector(instance: Instance, K: int, mode: str = "multihot") -> np.ndarray:
    if mode == "multihot":
        v = np.zeros(K, dtype=np.float64)
        v[sorted(instance.labels)] = 1.0
        return v
    if mode == "prompt_feat":
        if instance.label_prompt_feat is None:
            raise DataError("no label_prompt_feat stored", instance_id=instance.id)
        return instance.label_prompt_feat
    raise InputError(f"label input mode must be 'multihot' or 'prompt_feat', got {mode!r}")


# ---------------------------------------------------------------- splits


@dataclass(frozen=True)
class SplitSpec:
    query: tuple[str, ...]
    train: tuple[str, ...]
    gallery: tuple[str, ...]
    seed: int
    fold: int | None = None

    def to_dict(self) -> dict:
        return {"query": list(self.query), "train": list(self.train), "gallery": list(self.gallery), "seed": self.seed, "fold": self.fold}

    @classmethod
    def from_dict(cls, d: dict) -> "SplitSpec":
        return cls(tuple(d["query"]), tuple(d["train"]), tuple(d["gallery"]), int(d["seed"]), d.get("fold"))

    def describe(self) -> dict:
        return {"n_query": len(self.query), "n_train": len(self.train), "n_gallery": len(self.gallery), "seed": self.seed, "fold": self.fold}


def check_split(dataset: Dataset, split: SplitSpec) -> None:
    q, t, g = set(split.query), set(split.train), set(split.gallery)
    if len(q) != len(split.query) or len(t) != len(split.train) or len(g) != len(split.gallery):
        raise DataError("split contains duplicate ids")
    if q & g:
        raise DataError("query and gallery overlap")
    if not t <= g:
        raise DataError("train set is not contained in the gallery")
    if q | g != set(dataset.ids):
        raise DataError("query and gallery do not cover the dataset")


def split_query_gallery(dataset: Dataset, n_query: int, n_train: int, seed: int) -> SplitSpec:
    N = dataset.N
    if n_query < 0 or n_train < 0 or n_query + 1 > N or n_train > N - n_query:
        raise InputError(f"cannot take {n_query} query and {n_train} train items from N={N}")
    perm = np.random.default_rng(seed).permutation(N)
    ids = dataset.ids
    query = tuple(ids[k] for k in perm[:n_query])
    gallery = tuple(ids[k] for k in perm[n_query:])
    return SplitSpec(query, gallery[:n_train], gallery, seed)


def split_five_fold(dataset: Dataset, old_split: SplitSpec, fold: int, seed: int) -> SplitSpec:
    """Fold ``fold`` of the old train set becomes the query; the old query
    and the other four parts become the train set; everything except the new
    query is the gallery."""
    if not 0 <= fold < 5:
        raise InputError(f"fold must be in [0, 5), got {fold}")
    if len(old_split.train) < 5:
        raise InputError("train set needs at least 5 items for five folds")
    perm = np.random.default_rng(seed).permutation(len(old_split.train))
    parts = np.array_split(perm, 5)
    train = old_split.train
    query = tuple(train[k] for k in parts[fold])
    rest = tuple(train[k] for p, part in enumerate(parts) if p != fold for k in part)
    qset = set(query)
    gallery = tuple(i for i in dataset.ids if i not in qset)
    return SplitSpec(query, tuple(old_split.query) + rest, gallery, seed, fold)


# ---------------------------------------------------------------- synthetic data


def gen_synthetic(
    K: int = 3,
    per_label: int = 100,
    d_v: int = 32,
    d_t: int = 32,
    noise_sigma: float = 0.3,
    multilabel_prob: float = 0.0,
    seed: int = 0,
) -> Dataset:
    """One N(0, I) centroid per label per modality; instances of primary
    label k are centroid_k + N(0, noise_sigma^2 I). Multi-label instances use
    the mean centroid of their labels."""
    if K < 2:
        raise InputError("need at least 2 labels")
    if per_label < 1 or d_v < 1 or d_t < 1:
        raise InputError("per_label and feature dims must be positive")
    if noise_sigma < 0 or not 0.0 <= multilabel_prob <= 1.0:
        raise InputError("noise_sigma must be >= 0 and multilabel_prob in [0, 1]")
    rng = np.random.default_rng(seed)
    cv = rng.standard_normal((K, d_v))
    ct = rng.standard_normal((K, d_t))
    instances = []
    n = 0
    for k in range(K):
        for _ in range(per_label):
            labels = [k]
            if rng.random() < multilabel_prob:
                extra = int(rng.integers(K - 1))
                labels.append(extra if extra < k else extra + 1)
            img = cv[labels].mean(axis=0) + noise_sigma * rng.standard_normal(d_v)
            txt = ct[labels].mean(axis=0) + noise_sigma * rng.standard_normal(d_t)
            instances.append(make_instance(f"s{n:06d}", img, txt, labels))
            n += 1
    return Dataset(instances, [f"label{k}" for k in range(K)], d_v, d_t)
