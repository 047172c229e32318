"""Domain types for the latent-class mixture and outcome models.

A :class:`MixtureSpec` describes the distribution of a covariate vector
``X = (X_1, ..., X_pmax)``: a latent class ``Z`` with values ``1..K`` is drawn
from ``weights``, and given ``Z = z`` the coordinates are independent with
``X_i ~ family(means[i, z], variances[i, z])``. An :class:`OutcomeSpec` adds
the linear outcome ``Y = sum_i coefficients[i] * X_i + class_offsets[Z] + eps``
with Gaussian noise. :class:`LabeledDataset` carries realized samples together
with true and/or substitute class labels.

The regression target for coordinate ``i`` is

    beta_i = E[Cov[X_i, Y | Z]] / E[Var[X_i | Z]],

which for the linear outcome model above equals ``coefficients[i]`` and, in the
heterogeneous-slope case, a conditional-variance-weighted mean of per-class
slopes (see :func:`population_beta_heterogeneous`).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ._validation import as_labels, readonly, readonly_int
from .exceptions import (
    DimensionMismatch,
    InvalidArgument,
    MissingLabels,
    ZeroConditionalVariance,
)

FAMILIES = ("gaussian", "laplace", "uniform")

#: Tolerance on |sum(weights) - 1|; weights are never silently renormalized.
WEIGHT_SUM_TOL = 1e-12


@dataclass(frozen=True)
class MixtureSpec:
    """Parameters of a K-class conditionally independent mixture.

    Attributes
    ----------
    n_classes : number of latent classes K.
    weights : length-K class probabilities, strictly positive, summing to 1.
    means : (p_max, K) array; ``means[i, z-1]`` is the mean of X_i in class z.
    variances : (p_max, K) array of strictly positive conditional variances.
    family : conditional distribution of X_i given Z, one of
        ``gaussian | laplace | uniform``, parameterized by mean and variance
        (laplace scale ``b = sqrt(var / 2)``; uniform endpoints
        ``mean -/+ sqrt(3 var)``).
    """

    n_classes: int
    weights: np.ndarray
    means: np.ndarray
    variances: np.ndarray
    family: str = "gaussian"

    def __post_init__(self):
        object.__setattr__(self, "weights", readonly(self.weights))
        object.__setattr__(self, "means", readonly(self.means))
        object.__setattr__(self, "variances", readonly(self.variances))
        if self.means.ndim != 2 or self.variances.ndim != 2:
            raise DimensionMismatch("means and variances must be 2-d (p_max, K)")
        if self.means.shape != self.variances.shape:
            raise DimensionMismatch(
                f"means shape {self.means.shape} != variances shape "
                f"{self.variances.shape}"
            )
        if self.weights.ndim != 1:
            raise DimensionMismatch("weights must be 1-d")

    @property
    def p_max(self) -> int:
        return self.means.shape[0]

    @property
    def sigma2_min(self) -> float:
        return float(self.variances.min())

    @property
    def sigma2_max(self) -> float:
        return float(self.variances.max())

    def validate(self) -> list[str]:
        return validate_spec(self)

    def renormalized(self) -> "MixtureSpec":
        """Copy with weights rescaled to sum one; never applied silently."""
        return MixtureSpec(
            self.n_classes,
            self.weights / self.weights.sum(),
            self.means,
            self.variances,
            self.family,
        )


@dataclass(frozen=True)
class OutcomeSpec:
    """Linear outcome model paired with a :class:`MixtureSpec`.

    ``Y = sum_i coefficients[i] X_i + class_offsets[Z] + noise_sd * N(0, 1)``.
    """

    coefficients: np.ndarray
    class_offsets: np.ndarray
    noise_sd: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "coefficients", readonly(self.coefficients))
        object.__setattr__(self, "class_offsets", readonly(self.class_offsets))
        if self.coefficients.ndim != 1 or self.class_offsets.ndim != 1:
            raise DimensionMismatch("coefficients and class_offsets must be 1-d")
        if not self.noise_sd > 0:
            raise InvalidArgument(f"noise_sd must be > 0, got {self.noise_sd}")

    def check_against(self, spec: MixtureSpec) -> None:
        if self.coefficients.shape[0] != spec.p_max:
            raise DimensionMismatch(
                f"coefficients length {self.coefficients.shape[0]} != "
                f"p_max {spec.p_max}"
            )
        if self.class_offsets.shape[0] != spec.n_classes:
            raise DimensionMismatch(
                f"class_offsets length {self.class_offsets.shape[0]} != "
                f"K {spec.n_classes}"
            )


@dataclass(frozen=True)
class LabeledDataset:
    """An n x p covariate matrix with optional outcomes and labels.

    Labels are 1-based integers in ``{1, ..., n_classes}``. ``z_true`` exists
    only in simulation; ``z_sub`` is filled in by recovery.
    """

    X: np.ndarray
    y: Optional[np.ndarray] = None
    z_true: Optional[np.ndarray] = None
    z_sub: Optional[np.ndarray] = None
    n_classes: Optional[int] = None

    def __post_init__(self):
        X = readonly(self.X)
        if X.ndim != 2:
            raise DimensionMismatch("X must be 2-d")
        if not np.all(np.isfinite(X)):
            raise InvalidArgument("X contains NaN or Inf entries")
        object.__setattr__(self, "X", X)
        n = X.shape[0]
        if self.y is not None:
            y = readonly(self.y)
            if y.shape != (n,):
                raise DimensionMismatch(f"y has shape {y.shape}, expected ({n},)")
            if not np.all(np.isfinite(y)):
                raise InvalidArgument("y contains NaN or Inf entries")
            object.__setattr__(self, "y", y)
        K = self.n_classes
        for name in ("z_true", "z_sub"):
            z = getattr(self, name)
            if z is not None:
                if K is None:
                    raise InvalidArgument("n_classes required when labels present")
                object.__setattr__(
                    self, name, readonly_int(as_labels(z, K, name, length=n))
                )

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def require_z_true(self) -> np.ndarray:
        if self.z_true is None:
            raise MissingLabels("dataset has no true labels")
        return self.z_true

    def with_outcomes(self, y) -> "LabeledDataset":
        return LabeledDataset(self.X, y, self.z_true, self.z_sub, self.n_classes)

    def with_substitutes(self, z_sub) -> "LabeledDataset":
        return LabeledDataset(self.X, self.y, self.z_true, z_sub, self.n_classes)

    def restrict(self, n: Optional[int] = None, p: Optional[int] = None):
        """Leading n x p sub-dataset; used by sweeps that share one draw."""
        n = self.n if n is None else n
        p = self.p if p is None else p
        if n > self.n or p > self.p:
            raise InvalidArgument("restrict cannot grow the dataset")
        return LabeledDataset(
            self.X[:n, :p],
            None if self.y is None else self.y[:n],
            None if self.z_true is None else self.z_true[:n],
            None if self.z_sub is None else self.z_sub[:n],
            self.n_classes,
        )


def validate_spec(spec: MixtureSpec) -> list[str]:
    """Check every MixtureSpec invariant; return one message per violation.

    An empty list means every invariant holds. Violations are data, not errors:
    this function never raises on bad parameter values.
    """
    violations = []
    if spec.n_classes < 1:
        violations.append(f"K must be >= 1, got {spec.n_classes}")
    if spec.p_max < 1:
        violations.append(f"p_max must be >= 1, got {spec.p_max}")
    if spec.weights.shape[0] != spec.n_classes:
        violations.append(
            f"weights length {spec.weights.shape[0]} != K {spec.n_classes}"
        )
    if spec.means.shape[1] != spec.n_classes:
        violations.append(
            f"means have {spec.means.shape[1]} columns, expected K "
            f"{spec.n_classes}"
        )
    if not np.all(np.isfinite(spec.weights)):
        violations.append("weights contain NaN or Inf entries")
    if not np.all(np.isfinite(spec.means)):
        violations.append("means contain NaN or Inf entries")
    if not np.all(np.isfinite(spec.variances)):
        violations.append("variances contain NaN or Inf entries")
    if np.any(spec.weights <= 0):
        violations.append("weights must be strictly positive")
    if abs(spec.weights.sum() - 1.0) > WEIGHT_SUM_TOL:
        violations.append(
            f"weights sum != 1 (got {spec.weights.sum()!r}, "
            f"tolerance {WEIGHT_SUM_TOL})"
        )
    if np.any(spec.variances <= 0):
        violations.append("variance not positive: all variances must be > 0")
    if spec.family not in FAMILIES:
        violations.append(f"unknown family {spec.family!r}; expected {FAMILIES}")
    return violations


def population_beta(spec: MixtureSpec, outcome: OutcomeSpec) -> np.ndarray:
    """Target coefficients beta_i for the homogeneous linear outcome model.

    With ``Y = sum_i beta_i X_i + offset(Z) + noise`` the x-coefficient of the
    conditional mean of Y given (X_i, Z) does not depend on Z, so the adjusted
    regression target for every coordinate equals the simulation coefficient.
    """
    outcome.check_against(spec)
    return outcome.coefficients.copy()


def population_beta_heterogeneous(weights, variances, slopes) -> float:
    """Target beta_i when the per-class slope depends on the class.

    Computes ``sum_z pi_z w(z) slope(z)`` with weights
    ``w(z) = var(z) / sum_v pi_v var(v)``: the conditional-variance-weighted
    mean of the class slopes. The binary-covariate case is the special case
    ``var(z) = q(z) (1 - q(z))`` for success probabilities q(z).
    """
    weights = np.asarray(weights, dtype=float)
    variances = np.asarray(variances, dtype=float)
    slopes = np.asarray(slopes, dtype=float)
    if not weights.shape == variances.shape == slopes.shape:
        raise DimensionMismatch("weights, variances, slopes must share shape")
    denom = float(weights @ variances)
    if denom <= 0:
        raise ZeroConditionalVariance(
            "mixture-averaged conditional variance must be positive"
        )
    return float(np.sum(weights * (variances / denom) * slopes))


# --- JSON round trip ---------------------------------------------------------

_MODEL_KEYS_MIXTURE = ("K", "weights", "means", "variances", "family")
_MODEL_KEYS_OUTCOME = ("coefficients", "class_offsets", "noise_sd")


def model_to_json(spec: MixtureSpec, outcome: Optional[OutcomeSpec] = None) -> str:
    """Serialize a mixture (and optionally its outcome model) to JSON.

    Matrices are written row-major as nested lists of shape (p_max, K).
    """
    doc = {
        "K": spec.n_classes,
        "weights": spec.weights.tolist(),
        "means": spec.means.tolist(),
        "variances": spec.variances.tolist(),
        "family": spec.family,
    }
    if outcome is not None:
        doc["coefficients"] = outcome.coefficients.tolist()
        doc["class_offsets"] = outcome.class_offsets.tolist()
        doc["noise_sd"] = outcome.noise_sd
    return json.dumps(doc, indent=2)


def model_from_json(text: str):
    """Parse :func:`model_to_json` output.

    Returns ``(MixtureSpec, OutcomeSpec | None)``. Unknown keys are rejected;
    the outcome keys must be present all together or not at all.
    """
    doc = json.loads(text)
    if not isinstance(doc, dict):
        raise InvalidArgument("model document must be a JSON object")
    known = set(_MODEL_KEYS_MIXTURE) | set(_MODEL_KEYS_OUTCOME)
    unknown = set(doc) - known
    if unknown:
        raise InvalidArgument(f"unknown keys in model document: {sorted(unknown)}")
    missing = [k for k in _MODEL_KEYS_MIXTURE if k not in doc]
    if missing:
        raise InvalidArgument(f"missing mixture keys: {missing}")
    spec = MixtureSpec(
        n_classes=int(doc["K"]),
        weights=np.asarray(doc["weights"], dtype=float),
        means=np.asarray(doc["means"], dtype=float),
        variances=np.asarray(doc["variances"], dtype=float),
        family=str(doc["family"]),
    )
    outcome_present = [k for k in _MODEL_KEYS_OUTCOME if k in doc]
    if not outcome_present:
        return spec, None
    if len(outcome_present) != len(_MODEL_KEYS_OUTCOME):
        raise InvalidArgument(
            "outcome keys must appear together; got only "
            f"{outcome_present}"
        )
    outcome = OutcomeSpec(
        coefficients=np.asarray(doc["coefficients"], dtype=float),
        class_offsets=np.asarray(doc["class_offsets"], dtype=float),
        noise_sd=float(doc["noise_sd"]),
    )
    return spec, outcome
