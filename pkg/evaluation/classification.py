import warnings

import numpy as np

from engine.errors import ContractError


def mean_class_accuracy(predictions, labels, n_classes=None) -> float:
    """
    Per-class accuracy averaged over classes. Classes without samples are
    left out of the average, with a warning.
    """
    predictions = np.asarray(predictions, dtype=np.int64).reshape(-1)
    labels = np.asarray(labels, dtype=np.int64).reshape(-1)
    if predictions.shape != labels.shape:
        raise ContractError(f"{predictions.size} predictions for {labels.size} labels")
    if labels.size == 0:
        raise ContractError("mean class accuracy needs at least one labelled sample")
    n_classes = int(labels.max()) + 1 if n_classes is None else int(n_classes)

    accuracies = []
    empty = []
    for k in range(n_classes):
        mask = labels == k
        if not mask.any():
            empty.append(k)
            continue
        accuracies.append(np.mean(predictions[mask] == k))
    if empty:
        warnings.warn(f"classes without samples excluded from mean class accuracy: {empty}", RuntimeWarning)
    return float(np.mean(accuracies))


def sample_accuracy(predictions, labels) -> float:
    predictions = np.asarray(predictions).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    return float(np.mean(predictions == labels))
