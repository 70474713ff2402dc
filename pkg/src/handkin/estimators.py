"""scikit-learn style wrappers around the pipeline and the coupling baseline.

Rows of ``X`` are sensor frames; columns are raw counts in the order given
by the fitted ``channels_`` attribute.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .calibration import Alignment
from .evaluation import JOINTS, BendProfile, CouplingConfig, baseline_estimate
from .pipeline import Pipeline, SensorFrame


class KinematicPostureEstimator(TransformerMixin, BaseEstimator):
    """Raw glove counts to hand joint angles.

    ``fit`` registers the glove to the hand from frames recorded while the
    wearer holds ``calibration_posture`` (the straight hand by default);
    ``transform`` estimates one posture per row, warm-starting each row
    from the previous one.

    Parameters
    ----------
    glove, hand : KinematicModel
    calibration : SensorCalibration
    ik_config : IkConfig, optional
        Defaults to the pipeline's estimation settings.
    calibration_posture : mapping, optional
        Hand joint state held during the calibration frames.
    finger : str
        Finger whose tip registers the two models.
    """

    def __init__(self, glove, hand, calibration, ik_config=None, calibration_posture=None, finger="index"):
        self.glove = glove
        self.hand = hand
        self.calibration = calibration
        self.ik_config = ik_config
        self.calibration_posture = calibration_posture
        self.finger = finger

    def _pipeline(self, alignment=None):
        kw = {} if self.ik_config is None else {"ik_config": self.ik_config}
        return Pipeline(self.glove, self.hand, self.calibration, alignment or Alignment(), **kw)

    def fit(self, X, y=None):
        pipe = self._pipeline()
        channels = [c for f in pipe.fingers for c in pipe.glove_channels(f)]
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != len(channels):
            raise ValueError(f"expected {len(channels)} channel columns, got {X.shape[1]}")
        posture = self.calibration_posture or self.hand.zero_state()
        # averaging counts first keeps a single registration per fit
        frame = SensorFrame(0.0, {c: int(round(v)) for c, v in zip(channels, X.mean(axis=0))})
        alignment = pipe.calibrate_alignment(frame, posture, self.finger)
        self.channels_ = channels
        self.alignment_ = alignment
        self.pipeline_ = self._pipeline(alignment)
        self.joint_names_ = [
            j for f in pipe.fingers for j in self.hand.revolute_names if j.startswith(f"{f}_")
        ]
        self.n_features_in_ = len(channels)
        return self

    def transform(self, X):
        check_is_fitted(self, "pipeline_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != self.n_features_in_:
            raise ValueError(f"expected {self.n_features_in_} channel columns, got {X.shape[1]}")
        frames = [SensorFrame(float(i), {c: int(round(v)) for c, v in zip(self.channels_, row)})
                  for i, row in enumerate(X)]
        results = self.pipeline_.process_stream(frames)
        self.diagnostics_ = [diag for _, _, diag in results]
        return np.array([[q[j] for j in self.joint_names_] for _, q, _ in results]).reshape(len(X), -1)


class CouplingBaseline(BaseEstimator):
    """Single bend channel to (MCP, PIP, DIP) along a fixed grasp trajectory.

    ``fit`` takes bend-channel counts with ``y`` equal to 0 for readings at
    full extension and 1 for readings at the power grasp.
    """

    def __init__(self, coupling=None):
        self.coupling = coupling

    def fit(self, X, y):
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 1:
            raise ValueError("the baseline reads exactly one bend channel")
        y = np.asarray(y)
        if y.shape != (X.shape[0],) or not set(np.unique(y)) <= {0, 1} or len(np.unique(y)) != 2:
            raise ValueError("y must label each row 0 (extension) or 1 (grasp), with both present")
        self.profile_ = BendProfile(
            "bend",
            int(round(X[y == 0, 0].mean())),
            int(round(X[y == 1, 0].mean())),
        )
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "profile_")
        X = check_array(X, dtype=np.float64)
        if X.shape[1] != 1:
            raise ValueError("the baseline reads exactly one bend channel")
        cfg = self.coupling or CouplingConfig()
        return np.array([baseline_estimate(self.profile_.alpha(v), cfg) for v in X[:, 0]]).reshape(-1, len(JOINTS))

