"""Limits of backward convolution products and the trichotomy classifier.

The engine deepens the product nu_l = mu_0 * mu_-1 * ... * mu_l one factor
at a time and watches the *shape* of nu_l, i.e. its equivalence class under
right translation. Shapes always converge on a finite group; once they hold
still for a confirmation span the product is certified, a deterministic
gauge turns the final shape into the limit law lambda_0, and the centering
elements alpha_l are read off as alignment witnesses. The subgroup H is the
right stabilizer of lambda_0; H = G, H = {e} and anything in between are
the three classification cases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import BadRange, InvalidSpec, NoConvergenceAtDepth
from .groups import (
    FiniteGroup,
    Subgroup,
    conjugate_subgroup,
    group_from_spec,
    normal_closure,
    same_group,
)
from .measures import (
    Measure,
    all_right_translates,
    convolve,
    haar_subgroup,
    measure_from_spec,
    right_stabilizer,
    translate_left,
    translate_right,
    tv_distance,
)

DEFAULT_EPS_SHAPE = 1e-9
DEFAULT_MAX_DEPTH = 4096
DEFAULT_K_MIN = -8
DEFAULT_CONFIRM_SPAN = 25
DEFAULT_STABILIZER_TOL = 1e-6
SUPPORT_TOL = 1e-12

GAUGE_MAX_WEIGHT = "max-weight"
GAUGE_MIN_SUPPORT = "min-support"


@dataclass(frozen=True)
class NoiseLaw:
    """A noise sequence (mu_k : k <= 0), finitely specified.

    ``prefix[i]`` is the measure at k = -i. Positions below the prefix take
    the tail measure ``tail[(-k - len(prefix)) % len(tail)]``; a constant
    tail is a period-1 periodic one.
    """

    group: FiniteGroup
    prefix: tuple[Measure, ...]
    tail: tuple[Measure, ...]
    tail_kind: str = "constant"

    def __post_init__(self):
        if not self.tail:
            raise InvalidSpec("noise tail must be non-empty")
        if self.tail_kind not in ("constant", "periodic"):
            raise InvalidSpec(f"unknown tail kind {self.tail_kind!r}")
        if self.tail_kind == "constant" and len(self.tail) != 1:
            raise InvalidSpec("constant tail must hold exactly one measure")
        for mu in (*self.prefix, *self.tail):
            if not same_group(mu.group, self.group):
                raise InvalidSpec("all noise measures must live on the noise group")

    def measure_at(self, k: int) -> Measure:
        if k > 0:
            raise BadRange(f"noise index must be <= 0, got {k}")
        i = -k
        if i < len(self.prefix):
            return self.prefix[i]
        return self.tail[(i - len(self.prefix)) % len(self.tail)]


def constant_noise(mu: Measure) -> NoiseLaw:
    return NoiseLaw(group=mu.group, prefix=(), tail=(mu,), tail_kind="constant")


def noise_from_spec(obj: dict) -> NoiseLaw:
    """Build a noise law from its JSON spec.

    Shape: {"group": <group spec>, "prefix": [<measure spec>...],
    "tail": {"kind": "constant", "mu": ...} | {"kind": "periodic", "mus": [...]}}.
    """
    if not isinstance(obj, dict) or "group" not in obj or "tail" not in obj:
        raise InvalidSpec("noise spec must be an object with 'group' and 'tail' fields")
    group = group_from_spec(obj["group"])
    prefix = tuple(measure_from_spec(group, m) for m in obj.get("prefix", []))
    tail_obj = obj["tail"]
    if not isinstance(tail_obj, dict) or "kind" not in tail_obj:
        raise InvalidSpec("noise tail spec must be an object with a 'kind' field")
    if tail_obj["kind"] == "constant":
        if "mu" not in tail_obj:
            raise InvalidSpec("constant tail spec requires a 'mu' field")
        tail = (measure_from_spec(group, tail_obj["mu"]),)
        kind = "constant"
    elif tail_obj["kind"] == "periodic":
        mus = tail_obj.get("mus")
        if not mus:
            raise InvalidSpec("periodic tail spec requires a non-empty 'mus' list")
        tail = tuple(measure_from_spec(group, m) for m in mus)
        kind = "periodic"
    else:
        raise InvalidSpec(f"unknown tail kind {tail_obj['kind']!r}")
    return NoiseLaw(group=group, prefix=prefix, tail=tail, tail_kind=kind)


@dataclass(frozen=True)
class LimitResult:
    """Output of :func:`compute_limit`.

    ``lambdas`` maps k in [k_min, 0] to the limit law at k; ``alphas`` maps
    every computed depth l in [-deepest_depth, 0] to its centering element.
    ``case`` is 'A' iff the subgroup is everything, 'B' iff it is trivial,
    'C' otherwise.
    """

    group: FiniteGroup
    lambdas: dict[int, Measure]
    alphas: dict[int, int]
    subgroup: Subgroup
    case: str
    depth_used: int
    deepest_depth: int
    k_min: int
    residuals: dict[str, float]
    shape_history: tuple[tuple[int, float], ...]

    @property
    def lambda0(self) -> Measure:
        return self.lambdas[0]

    def to_json_dict(self) -> dict:
        return {
            "case": self.case,
            "subgroup": {
                "members": list(self.subgroup.members),
                "labels": [self.group.label(g) for g in self.subgroup.members],
                "order": self.subgroup.order,
            },
            "depth_used": self.depth_used,
            "deepest_depth": self.deepest_depth,
            "k_min": self.k_min,
            "residuals": dict(self.residuals),
            "alphas": {str(l): int(a) for l, a in sorted(self.alphas.items())},
            "lambdas": {
                str(k): [float(x) for x in mu.weights]
                for k, mu in sorted(self.lambdas.items())
            },
        }


def partial_product(noise: NoiseLaw, k: int, l: int) -> Measure:
    """The backward product mu_k * mu_{k-1} * ... * mu_l."""
    if k > 0 or l > 0 or k < l:
        raise BadRange(f"need l <= k <= 0, got k={k}, l={l}")
    acc = noise.measure_at(k)
    for j in range(k - 1, l - 1, -1):
        acc = convolve(acc, noise.measure_at(j))
    return acc


def shape_distance(mu: Measure, nu: Measure) -> tuple[float, int]:
    """min_g tv(mu * delta_g, nu) and the smallest g achieving it."""
    translates = all_right_translates(mu)
    dists = 0.5 * np.abs(translates - nu.weights[:, None]).sum(axis=0)
    g = int(np.argmin(dists))
    return float(dists[g]), g


def _gauge_align(nu: Measure, gauge: str) -> tuple[Measure, int]:
    """Deterministic representative of nu's right-translation class.

    max-weight: the (first) maximal-weight element goes to the smallest
    possible index. min-support: index 0 must carry positive weight.
    Ties break by lexicographic weight vector, then by the translation index.
    """
    translates = all_right_translates(nu)
    best_key = None
    best_g = 0
    for g in range(nu.group.order):
        w = translates[:, g]
        if gauge == GAUGE_MAX_WEIGHT:
            primary = int(np.argmax(w))
        elif gauge == GAUGE_MIN_SUPPORT:
            primary = 0 if w[0] > SUPPORT_TOL else 1
        else:
            raise InvalidSpec(f"unknown gauge {gauge!r}")
        key = (primary, tuple(w), g)
        if best_key is None or key < best_key:
            best_key = key
            best_g = g
    return translate_right(nu, best_g), best_g


def _deepen_products(
    noise: NoiseLaw,
    eps_shape: float,
    max_depth: int,
    confirm_span: int,
) -> tuple[list[Measure], int, list[tuple[int, float]]]:
    """Deepen nu_l until the shape holds still for confirm_span steps.

    Returns the products nu_0..nu_L (index i holds depth -i), the certified
    depth L (< 0) and the (l, shape distance) history.
    """
    nus = [noise.measure_at(0)]
    history: list[tuple[int, float]] = []
    streak = 0
    l = 0
    while True:
        l -= 1
        if -l > max_depth:
            raise NoConvergenceAtDepth(max_depth, history)
        nxt = convolve(nus[-1], noise.measure_at(l))
        sd, _ = shape_distance(nxt, nus[-1])
        nus.append(nxt)
        history.append((l, sd))
        streak = streak + 1 if sd < eps_shape else 0
        if streak >= confirm_span:
            return nus, l, history


def _extend_products(noise: NoiseLaw, nus: list[Measure], depth: int) -> None:
    """Grow the nu_l list in place until it reaches the given (positive) depth."""
    while len(nus) - 1 < depth:
        l = -len(nus)
        nus.append(convolve(nus[-1], noise.measure_at(l)))


def compute_limit(
    noise: NoiseLaw,
    *,
    eps_shape: float = DEFAULT_EPS_SHAPE,
    max_depth: int = DEFAULT_MAX_DEPTH,
    k_min: int = DEFAULT_K_MIN,
    confirm_span: int = DEFAULT_CONFIRM_SPAN,
    stabilizer_tol: float = DEFAULT_STABILIZER_TOL,
    gauge: str = GAUGE_MAX_WEIGHT,
) -> LimitResult:
    """Compute the limit laws, centering sequence, subgroup and case for a noise law.

    Raises :class:`NoConvergenceAtDepth` when the shape sequence does not
    certify within max_depth; the error carries the oscillation diagnostics.
    """
    if eps_shape <= 0:
        raise InvalidSpec("eps_shape must be positive")
    if k_min > 0:
        raise InvalidSpec("k_min must be <= 0")

    nus, l_cert, history = _deepen_products(noise, eps_shape, max_depth, confirm_span)
    depth_used = -l_cert

    # The reported quantities come from a deeper anchor depth M so that the
    # haar-check below can estimate lambda_{L-1} from a much deeper restart.
    extension = max(depth_used, 2 * confirm_span)
    deepest = depth_used + extension
    deepest = max(deepest, -k_min + confirm_span)
    _extend_products(noise, nus, deepest)
    m_idx = -deepest  # anchor depth M as a (negative) noise index

    lambda0, alpha_m = _gauge_align(nus[deepest], gauge)

    alphas: dict[int, int] = {}
    for i in range(deepest + 1):
        _, w = shape_distance(nus[i], lambda0)
        alphas[-i] = w
    alphas[m_idx] = alpha_m  # exact by construction of the gauge

    # sigma_j = mu_{j,M}; lambdas over the window are its alpha_M-translates.
    sigma: dict[int, Measure] = {m_idx: noise.measure_at(m_idx)}
    for j in range(m_idx + 1, 1):
        sigma[j] = convolve(noise.measure_at(j), sigma[j - 1])
    lambdas = {k: translate_right(sigma[k], alpha_m) for k in range(k_min, 1)}

    H = right_stabilizer(lambda0, stabilizer_tol)
    case = _case_of(noise.group, H)

    conv_eq = 0.0
    for k in range(k_min, 1):
        lam_prev = translate_right(sigma[k - 1], alpha_m)
        conv_eq = max(conv_eq, tv_distance(lambdas[k], convolve(noise.measure_at(k), lam_prev)))

    shape_stab = max(d for _, d in history[-confirm_span:])

    lam_deep_prev = translate_right(sigma[l_cert - 1], alpha_m)
    omega_h = haar_subgroup(noise.group, H)
    alpha_l = alphas[l_cert]
    haar_check = tv_distance(
        translate_left(int(noise.group.inv[alpha_l]), lam_deep_prev), omega_h
    )

    return LimitResult(
        group=noise.group,
        lambdas=lambdas,
        alphas=alphas,
        subgroup=H,
        case=case,
        depth_used=depth_used,
        deepest_depth=deepest,
        k_min=k_min,
        residuals={
            "shape_stabilization": float(shape_stab),
            "conv_eq": float(conv_eq),
            "haar_check": float(haar_check),
        },
        shape_history=tuple(history),
    )


def _case_of(group: FiniteGroup, H: Subgroup) -> str:
    if H.order == group.order:
        return "A"
    if H.order == 1:
        return "B"
    return "C"


def classify_trichotomy(result: LimitResult) -> str:
    """'A' iff H is the whole group, 'B' iff trivial, 'C' otherwise."""
    return _case_of(result.group, result.subgroup)


def strong_subgroup(group: FiniteGroup, H_mu: Subgroup) -> Subgroup:
    """Smallest normal subgroup containing H_mu."""
    return normal_closure(group, H_mu)


def extend_centerings(noise: NoiseLaw, result: LimitResult, depth: int) -> dict[int, int]:
    """Centering elements alpha_l for every l in [-depth, 0].

    Recomputes the product chain and aligns each level to the result's
    lambda_0, so values agree with ``result.alphas`` where both exist.
    """
    if depth <= result.deepest_depth:
        return {l: a for l, a in result.alphas.items() if -l <= depth}
    nus = [noise.measure_at(0)]
    _extend_products(noise, nus, depth)
    out = {}
    for i in range(depth + 1):
        _, w = shape_distance(nus[i], result.lambda0)
        out[-i] = w
    return out


@dataclass(frozen=True)
class ConjugacyCheck:
    ok: bool
    witness: int
    shape_gap: float
    subgroups_match: bool


def verify_conjugacy_uniqueness(
    noise: NoiseLaw,
    *,
    eps_shape: float = DEFAULT_EPS_SHAPE,
    max_depth: int = DEFAULT_MAX_DEPTH,
) -> ConjugacyCheck:
    """Check that two independent gauge conventions agree up to conjugation.

    Runs the engine twice (max-weight anchor with the default confirmation
    span, min-support anchor with a longer one) and finds g with
    tv(lambda~_0, lambda_0 * delta_g) <= 10 eps_shape and
    g^{-1} H g = H~.
    """
    res1 = compute_limit(
        noise, eps_shape=eps_shape, max_depth=max_depth, gauge=GAUGE_MAX_WEIGHT
    )
    res2 = compute_limit(
        noise, eps_shape=eps_shape, max_depth=max_depth,
        gauge=GAUGE_MIN_SUPPORT, confirm_span=40,
    )
    gap, witness = shape_distance(res1.lambda0, res2.lambda0)
    conj = conjugate_subgroup(res1.subgroup, witness)
    match = conj.members == res2.subgroup.members
    ok = gap <= 10 * eps_shape and match
    return ConjugacyCheck(ok=ok, witness=witness, shape_gap=gap, subgroups_match=match)
