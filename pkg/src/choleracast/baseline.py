"""Ordinary least squares on standardized columns, the linear comparison model."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, NonFiniteInput

RIDGE_JITTER = 1e-8


@dataclass
class LinearModel:
    intercept: float
    weights: np.ndarray        # per standardized column
    mean: np.ndarray
    scale: np.ndarray

    def predict(self, X) -> np.ndarray:
        return predict_linear(self, X)

    @property
    def coef(self) -> np.ndarray:
        """Slopes in original feature units."""
        return self.weights / self.scale

    def to_dict(self) -> dict:
        return {"intercept": float(self.intercept), "weights": self.weights.tolist(),
                "mean": self.mean.tolist(), "scale": self.scale.tolist()}

    @classmethod
    def from_dict(cls, d) -> "LinearModel":
        return cls(float(d["intercept"]), np.array(d["weights"], dtype=float),
                   np.array(d["mean"], dtype=float), np.array(d["scale"], dtype=float))


def fit_ols(X, y) -> LinearModel:
    """Least squares with a tiny ridge term so rank-deficient designs stay solvable.

    Columns are centred and scaled by their training std (1 for constant
    columns); the intercept is then the training mean of y.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not match y {y.shape}")
    if X.shape[0] < 1:
        raise ValueError("fit_ols needs at least one row")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise NonFiniteInput("X and y must be finite")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0] = 1.0
    Z = (X - mean) / scale
    ybar = float(y.mean())
    A = Z.T @ Z + RIDGE_JITTER * np.eye(Z.shape[1])
    w = np.linalg.solve(A, Z.T @ (y - ybar)) if Z.shape[1] else np.zeros(0)
    return LinearModel(ybar, w, mean, scale)


def predict_linear(model: LinearModel, X) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2 or X.shape[1] != model.weights.shape[0]:
        raise DimensionMismatch(f"model expects {model.weights.shape[0]} columns, got {X.shape}")
    return model.intercept + ((X - model.mean) / model.scale) @ model.weights
