from .dataset import Dataset, ingest, split
from .features import FeatureSet, extract_features, load_features, reduce_features, save_features
from .images import augment16, mirror, preprocess, read_ppm, write_ppm
from .metrics import EvalResult, evaluate
from .toy import make_toy

__all__ = [
    "Dataset", "ingest", "split",
    "FeatureSet", "extract_features", "load_features", "reduce_features", "save_features",
    "augment16", "mirror", "preprocess", "read_ppm", "write_ppm",
    "EvalResult", "evaluate", "make_toy",
]
