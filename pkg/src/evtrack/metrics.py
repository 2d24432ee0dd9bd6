"""Root-aligned, palm-normalized PCK curves and their AUC.

Both joint sets are translated so their wrist joints coincide; errors are
measured in units of the ground-truth wrist-to-middle-MCP distance. The
root joint anchors the alignment and is not scored.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError

NUM_JOINTS = 21
ROOT_INDEX = 0  # wrist
PALM_INDEX = 9  # middle-finger MCP


@dataclass
class JointSet:
    """21 joints in 2 or 3 coordinates, with optional visibility flags."""

    joints: np.ndarray
    visibility: np.ndarray | None = None

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape[0] != NUM_JOINTS or self.joints.ndim != 2:
            raise ParameterError(f"expected ({NUM_JOINTS}, D) joints, got {self.joints.shape}")
        if self.visibility is not None:
            self.visibility = np.asarray(self.visibility, dtype=bool).reshape(NUM_JOINTS)


@dataclass
class PckCurve:
    thresholds: np.ndarray
    values: np.ndarray
    skipped_pairs: int = 0

    def __post_init__(self):
        self.thresholds = np.asarray(self.thresholds, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.thresholds.shape != self.values.shape:
            raise ParameterError("thresholds and values must align")


def default_thresholds(steps: int = 100, tau_max: float = 1.0) -> np.ndarray:
    return np.linspace(0.0, tau_max, steps)


def pck_curve(
    preds,
    gts,
    thresholds=None,
    root_index: int = ROOT_INDEX,
    palm_index: int = PALM_INDEX,
) -> PckCurve:
    """Fraction of joints within tau palm lengths, per threshold.

    Pairs whose ground-truth palm length is zero are skipped and counted
    in skipped_pairs. Correctness is averaged over all visible non-root
    joints of all remaining pairs.
    """
    if thresholds is None:
        thresholds = default_thresholds()
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if len(preds) != len(gts):
        raise ParameterError(f"{len(preds)} predictions vs {len(gts)} ground truths")
    correct = np.zeros(thresholds.size, dtype=np.int64)
    total = 0
    skipped = 0
    for pred, gt in zip(preds, gts):
        if pred.joints.shape != gt.joints.shape:
            raise ParameterError("prediction/ground-truth dimensionality mismatch")
        palm = np.linalg.norm(gt.joints[palm_index] - gt.joints[root_index])
        if palm == 0.0:
            skipped += 1
            continue
        aligned_pred = pred.joints - pred.joints[root_index]
        aligned_gt = gt.joints - gt.joints[root_index]
        errors = np.linalg.norm(aligned_pred - aligned_gt, axis=1) / palm
        mask = np.ones(NUM_JOINTS, dtype=bool)
        mask[root_index] = False
        if gt.visibility is not None:
            mask &= gt.visibility
        errors = errors[mask]
        total += errors.size
        correct += (errors[None, :] <= thresholds[:, None]).sum(axis=1)
    values = correct / total if total else np.zeros_like(thresholds)
    return PckCurve(thresholds, values, skipped_pairs=skipped)


def auc(curve: PckCurve, tau_max: float = 1.0) -> float:
    """Trapezoidal area under the curve on [0, tau_max], normalized."""
    t, v = curve.thresholds, curve.values
    if t.size < 2:
        raise ParameterError("need at least two thresholds")
    if t[0] > 0.0 or t[-1] < tau_max - 1e-12:
        raise ParameterError(f"thresholds must cover [0, {tau_max}]")
    keep = t <= tau_max + 1e-12
    t, v = t[keep], v[keep]
    area = float(np.sum((t[1:] - t[:-1]) * (v[1:] + v[:-1]) * 0.5))
    return area / tau_max


def load_joint_file(path) -> list[JointSet]:
    """Text format: one sample per line, 21*D comma-separated reals."""
    sets = []
    with open(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            vals = np.array([float(v) for v in line.split(",")], dtype=np.float64)
            if vals.size % NUM_JOINTS:
                raise DataError(
                    f"expected a multiple of {NUM_JOINTS} values, got {vals.size}",
                    line_no,
                )
            dim = vals.size // NUM_JOINTS
            if dim not in (2, 3):
                raise DataError(f"joints must be 2-d or 3-d, got {dim}-d", line_no)
            sets.append(JointSet(vals.reshape(NUM_JOINTS, dim)))
    return sets


def save_joint_file(path, sets):
    with open(path, "w") as fh:
        for js in sets:
            fh.write(",".join(repr(float(v)) for v in js.joints.reshape(-1)) + "\n")
