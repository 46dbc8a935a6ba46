"""JSON checkpoints for the teacher, student and label-anchored runs.

Floats are written with ``repr`` precision by the json module, so a save /
load cycle reproduces every parameter bit-exactly.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .config import RunConfig
from .errors import ArtifactIOError, ConfigError, DataError
from .nn import EncoderParams
from .student import LabelAnchoredState, StudentState
from .teacher import TeacherState

FORMAT_VERSION = 1


def file_digest(path: str | Path) -> str:
    try:
        return hashlib.sha256(Path(path).read_bytes()).hexdigest()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read {path}: {exc}") from exc


def _write(path, payload: dict) -> None:
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        Path(path).write_text(json.dumps(payload, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write checkpoint {path}: {exc}") from exc


def _read(path, kind: str) -> dict:
    try:
        payload = json.loads(Path(path).read_text())
    except OSError as exc:
        raise ArtifactIOError(f"cannot read checkpoint {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise DataError(f"checkpoint {path} is not valid JSON: {exc.msg}") from None
    if payload.get("kind") != kind:
        raise DataError(f"{path} holds a {payload.get('kind')!r} checkpoint, expected {kind!r}")
    if payload.get("format") != FORMAT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format {payload.get('format')!r}")
    return payload


def _codes(rows) -> np.ndarray:
    return np.array(rows, dtype=np.int8).reshape(len(rows), -1)


def save_teacher(state: TeacherState, path: str | Path) -> str:
    _write(
        path,
        {
            "kind": "teacher",
            "format": FORMAT_VERSION,
            "code_length": state.code_length,
            "alpha": state.alpha,
            "image_params": state.image_params.to_dict(),
            "label_params": state.label_params.to_dict(),
            "codes": state.codes.tolist(),
            "loss_history": list(state.loss_history),
            "train_ids": list(state.train_ids),
            "seed": state.config.seed if state.config else None,
            "config": state.config.to_dict() if state.config else None,
        },
    )
    return file_digest(path)


def load_teacher(path: str | Path) -> TeacherState:
    p = _read(path, "teacher")
    return TeacherState(
        EncoderParams.from_dict(p["image_params"]),
        EncoderParams.from_dict(p["label_params"]),
        _codes(p["codes"]),
        float(p["alpha"]),
        int(p["code_length"]),
        [float(x) for x in p["loss_history"]],
        tuple(p["train_ids"]),
        RunConfig.from_dict(p["config"]) if p.get("config") else None,
    )


def save_student(state: StudentState, path: str | Path, teacher_path: str | Path) -> str:
    """The teacher reference stores both the checkpoint's path and its file
    digest; loading refuses a teacher file whose digest has changed."""
    _write(
        path,
        {
            "kind": "student",
            "format": FORMAT_VERSION,
            "beta": state.beta,
            "text_params": state.text_params.to_dict(),
            "codes": state.codes.tolist(),
            "loss_history": list(state.loss_history),
            "train_ids": list(state.train_ids),
            "teacher": {
                "path": str(teacher_path),
                "digest": file_digest(teacher_path),
                "image_params_digest": state.image_params.digest(),
            },
            "seed": state.config.seed if state.config else None,
            "config": state.config.to_dict() if state.config else None,
        },
    )
    return file_digest(path)


def load_student(path: str | Path, teacher_path: str | Path | None = None) -> tuple[StudentState, TeacherState]:
    p = _read(path, "student")
    ref = p["teacher"]
    teacher_path = Path(teacher_path) if teacher_path is not None else Path(ref["path"])
    if not teacher_path.is_absolute() and not teacher_path.exists():
        teacher_path = Path(path).parent / teacher_path
    digest = file_digest(teacher_path)
    if digest != ref["digest"]:
        raise ConfigError(f"teacher checkpoint {teacher_path} digest {digest[:12]} != recorded {ref['digest'][:12]}")
    teacher = load_teacher(teacher_path)
    state = StudentState(
        EncoderParams.from_dict(p["text_params"]),
        teacher.image_params,
        _codes(p["codes"]),
        float(p["beta"]),
        [float(x) for x in p["loss_history"]],
        teacher.image_params.digest(),
        tuple(p["train_ids"]),
        RunConfig.from_dict(p["config"]) if p.get("config") else None,
    )
    return state, teacher


def save_label_anchored(state: LabelAnchoredState, path: str | Path) -> str:
    _write(
        path,
        {
            "kind": "label_anchored",
            "format": FORMAT_VERSION,
            "image_params": state.image_params.to_dict(),
            "text_params": state.text_params.to_dict(),
            "label_params": state.label_params.to_dict(),
            "label_codes": state.label_codes.tolist(),
            "stage1_history": list(state.stage1_history),
            "stage2_history": list(state.stage2_history),
            "frozen_label_digest": state.frozen_label_digest,
            "train_ids": list(state.train_ids),
            "seed": state.config.seed if state.config else None,
            "config": state.config.to_dict() if state.config else None,
        },
    )
    return file_digest(path)


def load_label_anchored(path: str | Path) -> LabelAnchoredState:
    p = _read(path, "label_anchored")
    return LabelAnchoredState(
        EncoderParams.from_dict(p["image_params"]),
        EncoderParams.from_dict(p["text_params"]),
        EncoderParams.from_dict(p["label_params"]),
        _codes(p["label_codes"]),
        [float(x) for x in p["stage1_history"]],
        [float(x) for x in p["stage2_history"]],
        tuple(p["train_ids"]),
        RunConfig.from_dict(p["config"]) if p.get("config") else None,
        p.get("frozen_label_digest", ""),
    )


def save_split(split, path: str | Path) -> None:
    _write(path, {"kind": "split", "format": FORMAT_VERSION, **split.to_dict()})


def load_split(path: str | Path):
    from .data import SplitSpec

    p = _read(path, "split")
    return SplitSpec.from_dict(p)
