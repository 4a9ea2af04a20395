from dataclasses import dataclass

import numpy as np

from ..errors import IndexOutOfRange, ShapeMismatch


@dataclass(frozen=True)
class EvalResult:
    overall_accuracy: float
    per_class_accuracy: np.ndarray  # NaN for classes absent from the truth
    confusion: np.ndarray  # rows = truth, columns = prediction

    @property
    def num_classes(self):
        return self.confusion.shape[0]


def evaluate(predictions, truth, num_classes):
    pred = np.asarray(predictions, dtype=np.int64).ravel()
    true = np.asarray(truth, dtype=np.int64).ravel()
    if pred.shape != true.shape:
        raise ShapeMismatch(f"{pred.size} predictions for {true.size} labels")
    if pred.size == 0:
        raise ShapeMismatch("nothing to evaluate")
    for name, arr in (("prediction", pred), ("truth", true)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise IndexOutOfRange(f"{name} label outside [0, {num_classes})")
    confusion = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(confusion, (true, pred), 1)
    support = confusion.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        per_class = np.where(support > 0, np.diag(confusion) / support, np.nan)
    return EvalResult(float(np.trace(confusion) / pred.size), per_class, confusion)
