"""Seeded generation of the synthetic mixture and outcome designs.

Randomness flows through :class:`SimSeed`, a (base_seed, stream_id) pair that
is mapped to a counter-based Philox generator via ``SeedSequence``. Distinct
pairs give statistically independent streams, identical pairs reproduce the
same bytes, and streams can be handed to concurrent workers without shared
state. Sweep harnesses derive one stream per (replication, purpose) cell.

The default design draws per-class per-coordinate means uniformly from
(-mu_scale, mu_scale), uses unit variances, uniform class weights and a
Gaussian conditional family; `laplace` and `uniform` families are matched to
the same mean/variance parameterization.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from ._validation import positive_int
from .exceptions import DimensionMismatch, InvalidArgument
from .model import LabeledDataset, MixtureSpec, OutcomeSpec, validate_spec


@dataclass(frozen=True)
class SimSeed:
    """Reproducible stream identifier: (base_seed, stream_id)."""

    base_seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        seq = np.random.SeedSequence(self.base_seed, spawn_key=(self.stream_id,))
        return np.random.Generator(np.random.Philox(seq))

    def stream(self, offset: int) -> "SimSeed":
        """Derived stream for a sub-purpose; offsets must be unique per caller."""
        return SimSeed(self.base_seed, self.stream_id + offset)


def _require_valid(spec: MixtureSpec) -> None:
    violations = validate_spec(spec)
    if violations:
        raise InvalidArgument("invalid mixture spec: " + "; ".join(violations))


def draw_mixture_spec(
    K: int,
    p_max: int,
    mu_scale: float,
    seed: SimSeed,
    family: str = "gaussian",
) -> MixtureSpec:
    """Draw the standard design: uniform(-1, 1) means scaled by mu_scale.

    Variances are all 1, class weights are uniform 1/K.
    """
    K = positive_int(K, "K")
    p_max = positive_int(p_max, "p_max")
    if not mu_scale > 0:
        raise InvalidArgument(f"mu_scale must be > 0, got {mu_scale}")
    rng = seed.generator()
    means = mu_scale * rng.uniform(-1.0, 1.0, size=(p_max, K))
    return MixtureSpec(
        n_classes=K,
        weights=np.full(K, 1.0 / K),
        means=means,
        variances=np.ones((p_max, K)),
        family=family,
    )


def draw_outcome_spec(
    spec: MixtureSpec,
    gamma_scale: float,
    seed: SimSeed,
    noise_sd: float = 1.0,
) -> OutcomeSpec:
    """Draw uniform(-1, 1) coefficients; class offsets are gamma_scale * z."""
    rng = seed.generator()
    coefficients = rng.uniform(-1.0, 1.0, size=spec.p_max)
    offsets = gamma_scale * np.arange(1, spec.n_classes + 1, dtype=float)
    return OutcomeSpec(coefficients, offsets, noise_sd)


def simulate_covariates(
    spec: MixtureSpec, n: int, p: int, seed: SimSeed
) -> LabeledDataset:
    """Draw n samples of the first p coordinates together with true labels.

    Labels are drawn first, then the whole covariate block, so a fixed seed
    reproduces the output bit for bit. Coordinates are conditionally
    independent given the label by construction.
    """
    _require_valid(spec)
    n = positive_int(n, "n")
    p = positive_int(p, "p")
    if p > spec.p_max:
        raise InvalidArgument(f"p={p} exceeds spec p_max={spec.p_max}")
    rng = seed.generator()
    z = rng.choice(spec.n_classes, size=n, p=spec.weights) + 1
    M = spec.means[:p, z - 1].T
    S = np.sqrt(spec.variances[:p, z - 1]).T
    if spec.family == "gaussian":
        X = M + S * rng.standard_normal((n, p))
    elif spec.family == "laplace":
        # scale b = sqrt(var/2) gives variance 2 b^2 = var
        X = M + rng.laplace(0.0, 1.0, size=(n, p)) * (S / np.sqrt(2.0))
    elif spec.family == "uniform":
        # endpoints mean +/- sqrt(3 var) give the requested variance
        X = M + rng.uniform(-1.0, 1.0, size=(n, p)) * (np.sqrt(3.0) * S)
    else:  # pragma: no cover - validate_spec rejects unknown families
        raise InvalidArgument(f"unknown family {spec.family!r}")
    return LabeledDataset(X, z_true=z, n_classes=spec.n_classes)


def simulate_outcomes(
    data: LabeledDataset,
    spec: MixtureSpec,
    outcome: OutcomeSpec,
    seed: SimSeed,
) -> LabeledDataset:
    """Attach outcomes y = X beta + offset(z) + noise to a simulated dataset.

    The outcome uses the coefficients of every simulated coordinate, so the
    dataset must carry all p_max columns even if estimation later sees fewer.
    """
    outcome.check_against(spec)
    z = data.require_z_true()
    if data.p != spec.p_max:
        raise DimensionMismatch(
            f"dataset has p={data.p} columns but the outcome model needs all "
            f"p_max={spec.p_max}"
        )
    rng = seed.generator()
    eps = outcome.noise_sd * rng.standard_normal(data.n)
    y = data.X @ outcome.coefficients + outcome.class_offsets[z - 1] + eps
    return data.with_outcomes(y)


# --- dataset serialization ---------------------------------------------------


def dataset_to_csv(data: LabeledDataset) -> str:
    """CSV with header x1..xp[,y][,z_true][,z_sub]; floats use repr round trip."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    header = [f"x{i}" for i in range(1, data.p + 1)]
    if data.y is not None:
        header.append("y")
    if data.z_true is not None:
        header.append("z_true")
    if data.z_sub is not None:
        header.append("z_sub")
    writer.writerow(header)
    for k in range(data.n):
        row = [repr(float(v)) for v in data.X[k]]
        if data.y is not None:
            row.append(repr(float(data.y[k])))
        if data.z_true is not None:
            row.append(int(data.z_true[k]))
        if data.z_sub is not None:
            row.append(int(data.z_sub[k]))
        writer.writerow(row)
    return buf.getvalue()


def dataset_from_csv(text: str, n_classes=None) -> LabeledDataset:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    p = sum(1 for name in header if name.startswith("x"))
    cols = {name: j for j, name in enumerate(header)}
    rows = [row for row in reader if row]
    X = np.array([[float(r[j]) for j in range(p)] for r in rows])
    y = z_true = z_sub = None
    if "y" in cols:
        y = np.array([float(r[cols["y"]]) for r in rows])
    if "z_true" in cols:
        z_true = np.array([int(r[cols["z_true"]]) for r in rows])
    if "z_sub" in cols:
        z_sub = np.array([int(r[cols["z_sub"]]) for r in rows])
    if n_classes is None and (z_true is not None or z_sub is not None):
        n_classes = max(
            int(z_true.max()) if z_true is not None else 0,
            int(z_sub.max()) if z_sub is not None else 0,
        )
    return LabeledDataset(X, y, z_true, z_sub, n_classes)


def save_dataset_npz(path, data: LabeledDataset) -> None:
    """Compact binary cache of a dataset (numpy .npz)."""
    arrays = {"X": data.X}
    if data.y is not None:
        arrays["y"] = data.y
    if data.z_true is not None:
        arrays["z_true"] = data.z_true
    if data.z_sub is not None:
        arrays["z_sub"] = data.z_sub
    if data.n_classes is not None:
        arrays["n_classes"] = np.array(data.n_classes)
    np.savez_compressed(path, **arrays)


def load_dataset_npz(path) -> LabeledDataset:
    with np.load(path) as f:
        return LabeledDataset(
            f["X"],
            f["y"] if "y" in f else None,
            f["z_true"] if "z_true" in f else None,
            f["z_sub"] if "z_sub" in f else None,
            int(f["n_classes"]) if "n_classes" in f else None,
        )
