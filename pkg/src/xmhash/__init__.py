"""Two-stage teacher/student cross-modal hashing over precomputed features.

Stage one aligns an image head with a label head in a shared Hamming space;
stage two fits a text head to the frozen image head. Retrieval is evaluated
by Hamming ranking (MAP, precision-recall).
"""

__version__ = "0.1.0"

from .config import RunConfig
from .data import Dataset, Instance, SplitSpec, gen_synthetic, load_dataset, save_dataset
from .errors import ConfigError, DataError, InputError, NumericError, XMHashError
from .retrieval import EvalReport, evaluate
from .student import train_label_anchored, train_student
from .teacher import train_teacher

__all__ = [
    "RunConfig",
    "Dataset",
    "Instance",
    "SplitSpec",
    "gen_synthetic",
    "load_dataset",
    "save_dataset",
    "ConfigError",
    "DataError",
    "InputError",
    "NumericError",
    "XMHashError",
    "EvalReport",
    "evaluate",
    "train_teacher",
    "train_student",
    "train_label_anchored",
]
