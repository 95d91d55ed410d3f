"""Probability measures on a finite group: convolution, Haar, stabilizers, sampling.

Measures are dense double-precision weight vectors. Convolution is the
plain O(n^2) sum, which doubles as its own brute-force oracle at desk scale.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import GroupMismatch, InvalidSpec, NotClosedAtTolerance
from .groups import FiniteGroup, Subgroup, same_group, subgroup

WEIGHT_SUM_TOL = 1e-12

# Post-convergence checks (stabilizer membership, idempotence) distinguish
# numerical noise from genuine asymmetry at this default.
STABILIZER_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class Measure:
    """A probability vector over the elements of a finite group."""

    group: FiniteGroup
    weights: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (self.group.order,):
            raise InvalidSpec(
                f"expected {self.group.order} weights, got shape {w.shape}"
            )
        if w.min() < -WEIGHT_SUM_TOL:
            raise InvalidSpec(f"negative weight {w.min():g}")
        w = np.maximum(w, 0.0)
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise InvalidSpec(f"weights sum to {total!r}, expected 1")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    def __repr__(self) -> str:
        return f"Measure({np.array2string(self.weights, precision=4)})"


def _require_same_group(mu: Measure, nu: Measure) -> None:
    if not same_group(mu.group, nu.group):
        raise GroupMismatch("measures live on different groups")


def delta(group: FiniteGroup, g: int) -> Measure:
    """Point mass at g."""
    w = np.zeros(group.order)
    w[g] = 1.0
    return Measure(group, w)


def haar(group: FiniteGroup) -> Measure:
    """Normalized uniform measure on the whole group."""
    return Measure(group, np.full(group.order, 1.0 / group.order))


def haar_subgroup(group: FiniteGroup, H: Subgroup) -> Measure:
    """Normalized uniform measure on the subgroup H, zero elsewhere."""
    w = np.zeros(group.order)
    w[list(H.members)] = 1.0 / H.order
    return Measure(group, w)


def convolve(mu: Measure, nu: Measure) -> Measure:
    """Law of X*Y for independent X ~ mu, Y ~ nu: out(g) = sum_a mu(a) nu(a^-1 g).

    Renormalizes when floating-point drift exceeds the weight-sum tolerance,
    so long chains stay on the simplex.
    """
    _require_same_group(mu, nu)
    g = mu.group
    # rows[a, x] = nu(a^-1 x)
    rows = nu.weights[g.mul[g.inv, :]]
    out = mu.weights @ rows
    total = out.sum()
    if abs(total - 1.0) > WEIGHT_SUM_TOL:
        out = out / total
    return Measure(g, out)


def translate_right(mu: Measure, g: int) -> Measure:
    """mu * delta_g; a permutation of the weights."""
    grp = mu.group
    return Measure(grp, mu.weights[grp.mul[:, grp.inv[g]]])


def translate_left(g: int, mu: Measure) -> Measure:
    """delta_g * mu; a permutation of the weights."""
    grp = mu.group
    return Measure(grp, mu.weights[grp.mul[grp.inv[g], :]])


def tv_distance(mu: Measure, nu: Measure) -> float:
    """Total variation distance, in [0, 1]."""
    _require_same_group(mu, nu)
    return 0.5 * float(np.abs(mu.weights - nu.weights).sum())


def all_right_translates(mu: Measure) -> np.ndarray:
    """Matrix whose column g is the weight vector of mu * delta_g."""
    grp = mu.group
    return mu.weights[grp.mul[:, grp.inv]]


def right_stabilizer(mu: Measure, tol: float = STABILIZER_TOL) -> Subgroup:
    """All h with tv(mu * delta_h, mu) <= tol, verified to form a subgroup.

    Raises :class:`NotClosedAtTolerance` when the near-invariant set is not
    closed under the group product, which signals that tol straddles a
    near-symmetry of mu.
    """
    grp = mu.group
    translates = all_right_translates(mu)
    dists = 0.5 * np.abs(translates - mu.weights[:, None]).sum(axis=0)
    members = [h for h in range(grp.order) if dists[h] <= tol]
    mset = set(members)
    for a in members:
        for b in members:
            p = int(grp.mul[a, b])
            if p not in mset:
                raise NotClosedAtTolerance((a, b), p, tol)
    return subgroup(grp, members)


def is_haar_idempotent(mu: Measure, tol: float = STABILIZER_TOL) -> Optional[Subgroup]:
    """The subgroup H with mu = omega_H if mu is a Haar idempotent, else None."""
    grp = mu.group
    support = [g for g in range(grp.order) if mu.weights[g] > tol]
    try:
        H = subgroup(grp, support)
    except Exception:
        return None
    if tv_distance(mu, haar_subgroup(grp, H)) > tol:
        return None
    if tv_distance(convolve(mu, mu), mu) > tol:
        return None
    return H


def sample(mu: Measure, rng: np.random.Generator, size: Optional[int] = None):
    """Inverse-CDF sampling over element index order; deterministic given rng state."""
    cum = np.cumsum(mu.weights)
    cum[-1] = max(cum[-1], 1.0)
    if size is None:
        return int(np.searchsorted(cum, rng.random(), side="right"))
    u = rng.random(size)
    return np.searchsorted(cum, u, side="right").astype(np.int64)


def measure_from_spec(group: FiniteGroup, obj: dict) -> Measure:
    """Build a measure from its JSON spec.

    Kinds: {"kind":"delta","at":g} | {"kind":"haar"} |
    {"kind":"haar_subgroup","members":[...]} | {"kind":"weights","w":[...]}.
    """
    if not isinstance(obj, dict) or "kind" not in obj:
        raise InvalidSpec("measure spec must be an object with a 'kind' field")
    kind = obj["kind"]
    if kind == "delta":
        if "at" not in obj:
            raise InvalidSpec("delta measure spec requires an 'at' field")
        g = int(obj["at"])
        if not 0 <= g < group.order:
            raise InvalidSpec(f"delta location {g} out of range [0, {group.order})")
        return delta(group, g)
    if kind == "haar":
        return haar(group)
    if kind == "haar_subgroup":
        if "members" not in obj:
            raise InvalidSpec("haar_subgroup measure spec requires a 'members' field")
        return haar_subgroup(group, subgroup(group, obj["members"]))
    if kind == "weights":
        if "w" not in obj:
            raise InvalidSpec("weights measure spec requires a 'w' field")
        return Measure(group, np.asarray(obj["w"], dtype=np.float64))
    raise InvalidSpec(f"unknown measure spec kind {kind!r}")
