"""Sampling and decomposing solutions of the recursion eta_k = xi_k eta_{k-1}.

Three constructions: the uniform solution (Haar initial state pushed
forward), the extremal solution (noise-measurable coset part phi_k times an
independent uniform subgroup factor U_k), and mixtures eta_k = eta0_k V for
an independent V. Any path factors back into (phi_k, U_k, V) with exact
reconstruction; almost-sure coset limits are replaced by a finite-depth
stabilization check that compares the full window depth against half depth
and refuses rather than guessing.

Ensembles are generated in fixed-size chunks, each chunk on its own RNG
stream keyed by (seed, purpose, chunk), so results are identical for any
thread count; CONV_LIMIT_THREADS caps the worker pool.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .errors import CosetNotStabilized, GridMismatch, InvalidSpec
from .groups import (
    CosetSpace,
    FiniteGroup,
    Section,
    Subgroup,
    default_section,
    left_cosets,
    same_group,
)
from .limits import LimitResult, NoiseLaw, extend_centerings
from .measures import Measure, sample

CHUNK_SIZE = 4096

_PURPOSE_XI = 0
_PURPOSE_INIT = 1
_PURPOSE_U0 = 2
_PURPOSE_V = 3


def _stream(seed: int, purpose: int, chunk: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), purpose, chunk]))


def _max_workers() -> int:
    raw = os.environ.get("CONV_LIMIT_THREADS", "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def _chunks(n_paths: int) -> list[tuple[int, int, int]]:
    """(chunk_index, start, size) triples; chunking is independent of threads."""
    out = []
    start = 0
    idx = 0
    while start < n_paths:
        size = min(CHUNK_SIZE, n_paths - start)
        out.append((idx, start, size))
        start += size
        idx += 1
    return out


def _run_chunks(n_paths: int, worker: Callable[[int, int, int], None]) -> None:
    chunks = _chunks(n_paths)
    workers = _max_workers()
    if workers == 1 or len(chunks) == 1:
        for idx, start, size in chunks:
            worker(idx, start, size)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(worker, idx, start, size) for idx, start, size in chunks]
        for f in futures:
            f.result()


def _draw(mu: Measure, rng: np.random.Generator, size: int) -> np.ndarray:
    return sample(mu, rng, size=size)


@dataclass(frozen=True)
class SolutionPath:
    """One sampled path: eta on [k_min, 0], its driving noise, and bookkeeping."""

    group: FiniteGroup
    eta: dict[int, int]
    xi: dict[int, int]
    kind: str
    meta: dict = field(default_factory=dict)

    @property
    def k_min(self) -> int:
        return min(self.eta)

    @property
    def xi_k_min(self) -> int:
        return min(self.xi)

    def satisfies_recursion(self) -> bool:
        mul = self.group.mul
        return all(
            self.eta[k] == int(mul[self.xi[k], self.eta[k - 1]])
            for k in range(self.k_min + 1, 1)
        )


@dataclass(frozen=True)
class Decomposition:
    """Factors eta_k = phi_k * U_k * V over the window of phi."""

    phi: dict[int, int]
    U: dict[int, int]
    V: int
    subgroup: Subgroup
    section: Section

    @property
    def k_min(self) -> int:
        return min(self.phi)

    def reconstructs(self, path: SolutionPath) -> bool:
        mul = path.group.mul
        return all(
            path.eta[k] == int(mul[self.phi[k], mul[self.U[k], self.V]])
            for k in self.phi
        )


@dataclass(frozen=True)
class Ensemble:
    """Vectorized bundle of paths sharing one noise law and construction."""

    group: FiniteGroup
    kind: str
    seed: int
    depth: int
    k_min: int
    xi: np.ndarray   # (n_paths, depth + 1), column i holds k = -depth + i
    eta: np.ndarray  # (n_paths, -k_min + 1), column i holds k = k_min + i
    phi: Optional[np.ndarray] = None
    U: Optional[np.ndarray] = None
    V: Optional[np.ndarray] = None
    subgroup: Optional[Subgroup] = None
    section: Optional[Section] = None

    @property
    def n_paths(self) -> int:
        return self.xi.shape[0]

    def xi_col(self, k: int) -> np.ndarray:
        return self.xi[:, k + self.depth]

    def eta_col(self, k: int) -> np.ndarray:
        return self.eta[:, k - self.k_min]

    def phi_col(self, k: int) -> np.ndarray:
        assert self.phi is not None
        return self.phi[:, k - self.k_min]

    def u_col(self, k: int) -> np.ndarray:
        assert self.U is not None
        return self.U[:, k - self.k_min]

    def path(self, i: int) -> SolutionPath:
        eta = {self.k_min + j: int(x) for j, x in enumerate(self.eta[i])}
        xi = {-self.depth + j: int(x) for j, x in enumerate(self.xi[i])}
        return SolutionPath(
            group=self.group, eta=eta, xi=xi, kind=self.kind,
            meta={"seed": self.seed, "depth": self.depth, "path_index": i},
        )

    def decomposition(self, i: int) -> Decomposition:
        assert self.phi is not None and self.U is not None
        assert self.subgroup is not None and self.section is not None
        phi = {self.k_min + j: int(x) for j, x in enumerate(self.phi[i])}
        u = {self.k_min + j: int(x) for j, x in enumerate(self.U[i])}
        v = int(self.V[i]) if self.V is not None else self.group.identity
        return Decomposition(phi=phi, U=u, V=v, subgroup=self.subgroup, section=self.section)

    def to_records(self) -> list[dict]:
        out = []
        for i in range(self.n_paths):
            rec: dict = {
                "path_id": i,
                "k_min": self.k_min,
                "xi_k_min": -self.depth,
                "eta": [int(x) for x in self.eta[i]],
                "xi": [int(x) for x in self.xi[i]],
            }
            if self.phi is not None:
                rec["phi"] = [int(x) for x in self.phi[i]]
            if self.U is not None:
                rec["U"] = [int(x) for x in self.U[i]]
            rec["V"] = int(self.V[i]) if self.V is not None else None
            out.append(rec)
        return out


def _check_recursion(group: FiniteGroup, xi: np.ndarray, eta: np.ndarray,
                     depth: int, k_min: int) -> None:
    mul = group.mul
    for k in range(k_min + 1, 1):
        lhs = eta[:, k - k_min]
        rhs = mul[xi[:, k + depth], eta[:, k - 1 - k_min]]
        if not np.array_equal(lhs, rhs):
            raise AssertionError("defining recursion violated; internal error")


def sample_noise(noise: NoiseLaw, depth: int, rng: np.random.Generator) -> dict[int, int]:
    """Independent draws xi_k ~ mu_k for k = -depth..0, drawn shallow-first."""
    return {k: int(_draw(noise.measure_at(k), rng, 1)[0]) for k in range(0, -depth - 1, -1)}


def _sample_noise_block(noise: NoiseLaw, depth: int, rng: np.random.Generator,
                        size: int) -> np.ndarray:
    xi = np.empty((size, depth + 1), dtype=np.int64)
    for k in range(0, -depth - 1, -1):
        xi[:, k + depth] = _draw(noise.measure_at(k), rng, size)
    return xi


def uniform_ensemble(noise: NoiseLaw, depth: int, n_paths: int, seed: int) -> Ensemble:
    """Paths started from an independent Haar state one step below the window."""
    group = noise.group
    from .measures import haar

    omega = haar(group)
    xi = np.empty((n_paths, depth + 1), dtype=np.int64)
    eta = np.empty((n_paths, depth + 1), dtype=np.int64)
    mul = group.mul

    def worker(idx: int, start: int, size: int) -> None:
        rng_xi = _stream(seed, _PURPOSE_XI, idx)
        rng_init = _stream(seed, _PURPOSE_INIT, idx)
        block_xi = _sample_noise_block(noise, depth, rng_xi, size)
        state = _draw(omega, rng_init, size)
        block_eta = np.empty_like(block_xi)
        for i in range(depth + 1):
            state = mul[block_xi[:, i], state]
            block_eta[:, i] = state
        xi[start:start + size] = block_xi
        eta[start:start + size] = block_eta

    _run_chunks(n_paths, worker)
    _check_recursion(group, xi, eta, depth, -depth)
    return Ensemble(group=group, kind="uniform", seed=seed, depth=depth,
                    k_min=-depth, xi=xi, eta=eta)


def uniform_solution(noise: NoiseLaw, depth: int, rng: np.random.Generator) -> SolutionPath:
    """A single uniform-solution path on the window [-depth, 0]."""
    from .measures import haar

    group = noise.group
    xi = sample_noise(noise, depth, rng)
    state = int(_draw(haar(group), rng, 1)[0])
    eta: dict[int, int] = {}
    for k in range(-depth, 1):
        state = int(group.mul[xi[k], state])
        eta[k] = state
    return SolutionPath(group=group, eta=eta, xi=xi, kind="uniform",
                        meta={"depth": depth})


def _phi_cosets(
    group: FiniteGroup,
    space: CosetSpace,
    alphas: dict[int, int],
    xi: np.ndarray,
    depth: int,
    k_min: int,
) -> np.ndarray:
    """Coset ids of the centered backward products, with a half-depth check.

    Computes xi_{k,-depth} alpha_{-depth} H for each window k and compares
    against the same coset rebuilt from depth/2 only; disagreement means the
    finite depth has not reached the almost-sure limit and raises
    :class:`CosetNotStabilized`.
    """
    half = depth // 2
    if half < -k_min + 1:
        raise InvalidSpec(
            f"depth {depth} too shallow for window k_min={k_min}; "
            "the half-depth check needs depth/2 below the window"
        )
    mul = group.mul
    inv = group.inv
    n_paths = xi.shape[0]
    w = -k_min + 1

    prod = xi[:, 0].copy()  # xi_{-depth,-depth}
    prod_at_half_mark = None
    window_prod = np.empty((n_paths, w), dtype=np.int64)
    for k in range(-depth, 1):
        if k > -depth:
            prod = mul[xi[:, k + depth], prod]
        if k == -half - 1:
            prod_at_half_mark = prod.copy()  # xi_{-half-1,-depth}
        if k >= k_min:
            window_prod[:, k - k_min] = prod

    a_full = int(alphas[-depth])
    a_half = int(alphas[-half])
    cos_full = space.coset_of[mul[window_prod, a_full]]
    assert prod_at_half_mark is not None
    # xi_{k,-half} = xi_{k,-depth} * (xi_{-half-1,-depth})^{-1}
    half_prod = mul[window_prod, inv[prod_at_half_mark][:, None]]
    cos_half = space.coset_of[mul[half_prod, a_half]]

    disagree = cos_full != cos_half
    if disagree.any():
        bad_paths = np.flatnonzero(disagree.any(axis=1))
        i = int(bad_paths[0])
        j = int(np.flatnonzero(disagree[i])[0])
        raise CosetNotStabilized(
            f"coset of the centered product at k={k_min + j} differs between "
            f"depth {depth} (coset {int(cos_full[i, j])}) and depth {half} "
            f"(coset {int(cos_half[i, j])}) on path {i} "
            f"({int(bad_paths.size)} of {n_paths} paths affected); increase the depth"
        )
    return cos_full


def _extremal_from_xi(
    group: FiniteGroup,
    space: CosetSpace,
    section: Section,
    alphas: dict[int, int],
    xi: np.ndarray,
    depth: int,
    k_min: int,
    u0: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(eta, phi, U) arrays for the extremal construction from given noise."""
    mul = group.mul
    inv = group.inv
    reps = np.array(section.representative, dtype=np.int64)

    cosets = _phi_cosets(group, space, alphas, xi, depth, k_min)
    phi = reps[cosets]

    w = -k_min + 1
    n_paths = xi.shape[0]
    q = np.full(n_paths, group.identity, dtype=np.int64)  # xi_{0,k+1}, empty at k=0
    qs = np.empty((n_paths, w), dtype=np.int64)
    qs[:, w - 1] = q
    for k in range(0, k_min, -1):
        q = mul[q, xi[:, k + depth]]
        qs[:, k - 1 - k_min] = q

    phi0 = phi[:, w - 1]
    # U_k = phi_k^{-1} * (xi_{0,k+1})^{-1} * phi_0 * U_0
    target = mul[phi0, u0]
    U = mul[inv[phi], mul[inv[qs], target[:, None]]]
    eta = mul[phi, U]

    id_coset = int(space.coset_of[group.identity])
    if not (space.coset_of[U] == id_coset).all():
        raise CosetNotStabilized("subgroup factor left H; internal gauge error")
    _check_recursion(group, xi, eta, depth, k_min)
    return eta, phi, U


def _require_extremal_inputs(noise: NoiseLaw, limitres: LimitResult, depth: int) -> None:
    if not same_group(noise.group, limitres.group):
        raise InvalidSpec("limit result computed for a different group")
    if depth < 2 * limitres.depth_used:
        raise InvalidSpec(
            f"depth {depth} is below 2 * depth_used = {2 * limitres.depth_used}"
        )


def extremal_ensemble(
    noise: NoiseLaw,
    limitres: LimitResult,
    depth: int,
    n_paths: int,
    seed: int,
    *,
    k_min: Optional[int] = None,
    u0: Optional[int] = None,
) -> Ensemble:
    """Extremal paths eta0_k = phi_k U_k with U_0 uniform on H (or pinned)."""
    _require_extremal_inputs(noise, limitres, depth)
    group = noise.group
    k_min = limitres.k_min if k_min is None else k_min
    H = limitres.subgroup
    space = left_cosets(group, H)
    section = default_section(space)
    alphas = extend_centerings(noise, limitres, depth)
    members = np.array(H.members, dtype=np.int64)

    w = -k_min + 1
    xi = np.empty((n_paths, depth + 1), dtype=np.int64)
    eta = np.empty((n_paths, w), dtype=np.int64)
    phi = np.empty((n_paths, w), dtype=np.int64)
    U = np.empty((n_paths, w), dtype=np.int64)

    def worker(idx: int, start: int, size: int) -> None:
        rng_xi = _stream(seed, _PURPOSE_XI, idx)
        rng_u0 = _stream(seed, _PURPOSE_U0, idx)
        block_xi = _sample_noise_block(noise, depth, rng_xi, size)
        if u0 is None:
            block_u0 = members[rng_u0.integers(0, members.size, size=size)]
        else:
            block_u0 = np.full(size, int(u0), dtype=np.int64)
        be, bp, bu = _extremal_from_xi(
            group, space, section, alphas, block_xi, depth, k_min, block_u0
        )
        xi[start:start + size] = block_xi
        eta[start:start + size] = be
        phi[start:start + size] = bp
        U[start:start + size] = bu

    _run_chunks(n_paths, worker)
    return Ensemble(group=group, kind="extremal", seed=seed, depth=depth, k_min=k_min,
                    xi=xi, eta=eta, phi=phi, U=U, V=None, subgroup=H, section=section)


def extremal_solution(
    noise: NoiseLaw,
    limitres: LimitResult,
    depth: int,
    rng: np.random.Generator,
    u0: Optional[int] = None,
    *,
    k_min: Optional[int] = None,
) -> tuple[SolutionPath, Decomposition]:
    """One extremal path plus its (phi, U, V=e) factorization."""
    _require_extremal_inputs(noise, limitres, depth)
    group = noise.group
    k_min = limitres.k_min if k_min is None else k_min
    H = limitres.subgroup
    space = left_cosets(group, H)
    section = default_section(space)
    alphas = extend_centerings(noise, limitres, depth)

    xi_map = sample_noise(noise, depth, rng)
    if u0 is None:
        u0_val = int(H.members[int(rng.integers(0, H.order))])
    else:
        if u0 not in H:
            raise InvalidSpec(f"u0={u0} is not a member of H")
        u0_val = int(u0)
    xi = np.array([[xi_map[k] for k in range(-depth, 1)]], dtype=np.int64)
    eta, phi, U = _extremal_from_xi(
        group, space, section, alphas, xi, depth, k_min,
        np.array([u0_val], dtype=np.int64),
    )
    path = SolutionPath(
        group=group,
        eta={k_min + j: int(x) for j, x in enumerate(eta[0])},
        xi=xi_map,
        kind="extremal",
        meta={"depth": depth, "u0": u0_val},
    )
    dec = Decomposition(
        phi={k_min + j: int(x) for j, x in enumerate(phi[0])},
        U={k_min + j: int(x) for j, x in enumerate(U[0])},
        V=group.identity,
        subgroup=H,
        section=section,
    )
    return path, dec


def general_ensemble(extremal: Ensemble, v_law: Measure, seed: int) -> Ensemble:
    """Mixture paths eta_k = eta0_k V with V ~ v_law independent per path."""
    if extremal.kind != "extremal":
        raise InvalidSpec("general_ensemble needs an extremal ensemble")
    if not same_group(extremal.group, v_law.group):
        raise InvalidSpec("V law lives on a different group")
    group = extremal.group
    n_paths = extremal.n_paths
    V = np.empty(n_paths, dtype=np.int64)

    def worker(idx: int, start: int, size: int) -> None:
        rng_v = _stream(seed, _PURPOSE_V, idx)
        V[start:start + size] = _draw(v_law, rng_v, size)

    _run_chunks(n_paths, worker)
    eta = group.mul[extremal.eta, V[:, None]]
    _check_recursion(group, extremal.xi, eta, extremal.depth, extremal.k_min)
    return Ensemble(group=group, kind="mixture", seed=seed, depth=extremal.depth,
                    k_min=extremal.k_min, xi=extremal.xi, eta=eta,
                    phi=extremal.phi, U=extremal.U, V=V,
                    subgroup=extremal.subgroup, section=extremal.section)


def general_solution(
    path: SolutionPath,
    dec: Decomposition,
    v_law: Measure,
    rng: np.random.Generator,
) -> tuple[SolutionPath, Decomposition]:
    """One mixture path eta_k = eta0_k V from an extremal path and a V law."""
    group = path.group
    v = int(_draw(v_law, rng, 1)[0])
    eta = {k: int(group.mul[x, v]) for k, x in path.eta.items()}
    new_path = SolutionPath(group=group, eta=eta, xi=dict(path.xi), kind="mixture",
                            meta={**path.meta, "v": v})
    new_dec = Decomposition(phi=dict(dec.phi), U=dict(dec.U), V=v,
                            subgroup=dec.subgroup, section=dec.section)
    return new_path, new_dec


def _decompose_core(
    group: FiniteGroup,
    H: Subgroup,
    space: CosetSpace,
    section: Section,
    alphas: dict[int, int],
    xi: np.ndarray,
    depth: int,
    eta: np.ndarray,
    k_min: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Recover (phi, U, V) from paths; exact reconstruction or an error."""
    mul = group.mul
    inv = group.inv
    reps = np.array(section.representative, dtype=np.int64)

    cosets = _phi_cosets(group, space, alphas, xi, depth, k_min)
    phi = reps[cosets]

    w = -k_min + 1
    quarter = max(1, w // 4)
    # remote-past coset eta_l^{-1} phi_l H over the deepest quarter of the window
    v_cosets = space.coset_of[mul[inv[eta[:, :quarter]], phi[:, :quarter]]]
    if not (v_cosets == v_cosets[:, :1]).all():
        i = int(np.flatnonzero((v_cosets != v_cosets[:, :1]).any(axis=1))[0])
        raise CosetNotStabilized(
            f"remote-past coset varies over the deepest quarter of the window "
            f"on path {i}: {v_cosets[i].tolist()}; increase the window depth"
        )
    V = inv[reps[v_cosets[:, 0]]]

    x = mul[eta, inv[V][:, None]]
    U = mul[inv[reps[space.coset_of[x]]], x]

    recon = mul[phi, mul[U, V[:, None]]]
    if not np.array_equal(recon, eta):
        bad = int((recon != eta).any(axis=1).sum())
        raise CosetNotStabilized(
            f"reconstruction failed on {bad} of {eta.shape[0]} paths; "
            "the noise-limit coset has not stabilized at this depth"
        )
    id_coset = int(space.coset_of[group.identity])
    if not (space.coset_of[U] == id_coset).all():
        raise CosetNotStabilized("recovered subgroup factor left H")
    return phi, U, V


def decompose_ensemble(
    ens: Ensemble,
    limitres: LimitResult,
    section: Optional[Section] = None,
    noise: Optional[NoiseLaw] = None,
    k_min: Optional[int] = None,
) -> tuple[Ensemble, dict]:
    """Factor every path of an ensemble; returns the annotated ensemble and an audit.

    ``k_min`` restricts the factorization to a shallower report window; the
    default uses the ensemble's full window, which for uniform-solution
    ensembles is too deep for the half-depth stabilization check.
    """
    group = ens.group
    H = limitres.subgroup
    space = left_cosets(group, H)
    if section is None:
        section = default_section(space)
    elif section.space.subgroup.members != H.members:
        raise InvalidSpec("section built for a different subgroup")
    if k_min is None:
        k_min = ens.k_min
    if k_min < ens.k_min:
        raise InvalidSpec(f"report window {k_min} exceeds the ensemble window {ens.k_min}")
    if noise is not None:
        alphas = extend_centerings(noise, limitres, ens.depth)
    else:
        alphas = limitres.alphas
        if -ens.depth not in alphas or -(ens.depth // 2) not in alphas:
            raise InvalidSpec(
                "limit result does not carry centerings deep enough; pass the noise law"
            )
    eta = ens.eta[:, k_min - ens.k_min:]
    phi, U, V = _decompose_core(
        group, H, space, section, alphas, ens.xi, ens.depth, eta, k_min
    )
    out = Ensemble(group=group, kind=ens.kind, seed=ens.seed, depth=ens.depth,
                   k_min=k_min, xi=ens.xi, eta=eta,
                   phi=phi, U=U, V=V, subgroup=H, section=section)
    audit = {
        "n_paths": ens.n_paths,
        "exact_reconstruction": ens.n_paths,
        "u_in_subgroup": True,
        "window": [k_min, 0],
        "depth": ens.depth,
    }
    return out, audit


def decompose_path(
    path: SolutionPath,
    limitres: LimitResult,
    section: Optional[Section] = None,
    noise: Optional[NoiseLaw] = None,
    k_min: Optional[int] = None,
) -> Decomposition:
    """Factor one path as eta_k = phi_k U_k V under the given section."""
    group = path.group
    H = limitres.subgroup
    space = left_cosets(group, H)
    if section is None:
        section = default_section(space)
    depth = -path.xi_k_min
    if noise is not None:
        alphas = extend_centerings(noise, limitres, depth)
    else:
        alphas = limitres.alphas
        if -depth not in alphas or -(depth // 2) not in alphas:
            raise InvalidSpec(
                "limit result does not carry centerings deep enough; pass the noise law"
            )
    if k_min is None:
        k_min = path.k_min
    if k_min < path.k_min:
        raise InvalidSpec(f"report window {k_min} exceeds the path window {path.k_min}")
    xi = np.array([[path.xi[k] for k in range(-depth, 1)]], dtype=np.int64)
    eta = np.array([[path.eta[k] for k in range(k_min, 1)]], dtype=np.int64)
    phi, U, V = _decompose_core(
        group, H, space, section, alphas, xi, depth, eta, k_min
    )
    return Decomposition(
        phi={k_min + j: int(x) for j, x in enumerate(phi[0])},
        U={k_min + j: int(x) for j, x in enumerate(U[0])},
        V=int(V[0]),
        subgroup=H,
        section=section,
    )


def _require_cyclic(group: FiniteGroup) -> int:
    n = group.order
    idx = np.arange(n)
    if not np.array_equal(group.mul, (idx[:, None] + idx[None, :]) % n):
        raise GridMismatch("torus decomposition needs the additive cyclic group Z_n")
    return n


def torus_decompose(
    path: SolutionPath,
    p_mu: int,
    limitres: LimitResult,
    noise: Optional[NoiseLaw] = None,
) -> Decomposition:
    """Factor a path on the cyclic grid by integer/fractional-part arithmetic.

    Uses the fractional-part section x -> (x mod n/p) on the grid, which is
    exactly the minimal-index section of the cyclic subgroup of order p, and
    the same remote-past gauge as :func:`decompose_path`, so both engines
    return identical factors path by path.
    """
    group = path.group
    n = _require_cyclic(group)
    if p_mu < 0:
        raise GridMismatch(f"p must be nonnegative, got {p_mu}")
    h_order = n if p_mu == 0 else p_mu
    if n % h_order != 0:
        raise GridMismatch(f"grid size {n} is not divisible by p = {p_mu}")
    q = n // h_order  # coset modulus: the section is x -> x mod q

    depth = -path.xi_k_min
    half = depth // 2
    k_min = path.k_min
    if half < -k_min + 1:
        raise InvalidSpec(
            f"depth {depth} too shallow for window k_min={k_min}; "
            "the half-depth check needs depth/2 below the window"
        )
    if noise is not None:
        alphas = extend_centerings(noise, limitres, depth)
    else:
        alphas = limitres.alphas
        if -depth not in alphas or -half not in alphas:
            raise InvalidSpec(
                "limit result does not carry centerings deep enough; pass the noise law"
            )

    xi = np.array([path.xi[k] for k in range(-depth, 1)], dtype=np.int64)
    suffix = np.cumsum(xi) % n  # suffix[i] = sum of xi_j for j in [-depth, -depth+i]
    a_full = int(alphas[-depth])
    a_half = int(alphas[-half])

    phi: dict[int, int] = {}
    for k in range(k_min, 1):
        s_full = int(suffix[k + depth])
        s_half = (s_full - int(suffix[-half - 1 + depth])) % n
        p_full = (s_full + a_full) % q
        p_half = (s_half + a_half) % q
        if p_full != p_half:
            raise CosetNotStabilized(
                f"fractional part at k={k} differs between depth {depth} "
                f"({p_full}) and depth {half} ({p_half}); increase the depth"
            )
        phi[k] = p_full

    w = -k_min + 1
    quarter = max(1, w // 4)
    v_candidates = {
        (-((phi[k] - path.eta[k]) % q)) % n for k in range(k_min, k_min + quarter)
    }
    if len(v_candidates) != 1:
        raise CosetNotStabilized(
            f"remote-past fractional part varies over the deepest quarter: "
            f"{sorted(v_candidates)}; increase the window depth"
        )
    V = v_candidates.pop()

    U = {k: ((path.eta[k] - V) % n) // q * q for k in range(k_min, 1)}
    for k in range(k_min, 1):
        if (phi[k] + U[k] + V) % n != path.eta[k]:
            raise CosetNotStabilized(f"grid reconstruction failed at k={k}")

    from .groups import subgroup as make_subgroup

    H = make_subgroup(group, [j * q for j in range(h_order)])
    space = left_cosets(group, H)
    return Decomposition(phi=phi, U=U, V=V, subgroup=H, section=default_section(space))
