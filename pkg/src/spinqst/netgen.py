"""Spin-network construction, partitioning and file I/O.

Couplings are angular frequencies in units of the coupling at one lattice
constant (``1/d**3`` with ``d = 1``), so times come out in inverse-coupling
units. The diagonal of a coupling matrix holds on-site energy shifts.
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Optional, Sequence

import numpy as np

from .errors import (
    CannotNormalizeError,
    DisconnectedEndsError,
    EmptyBulkError,
    EndCouplingWarning,
    NetworkIOError,
    ValidationError,
)

# Carbon atoms per nm^3 in diamond (1.76e23 cm^-3).
DIAMOND_SITE_DENSITY_NM3 = 176.0
DIAMOND_LATTICE_CONSTANT_NM = 0.3567


def make_rng(seed: int) -> np.random.Generator:
    """PCG64 generator; the single source of randomness for every builder."""
    return np.random.Generator(np.random.PCG64(int(seed)))


@dataclass(frozen=True, eq=False)
class SpinNetwork:
    """Symmetric coupling matrix with a designated (source, target) end pair."""

    couplings: np.ndarray
    ends: tuple[int, int]
    positions: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        A = np.array(self.couplings, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValidationError(f"couplings must be square, got shape {A.shape}")
        if not np.array_equal(A, A.T):
            raise ValidationError("couplings must be exactly symmetric")
        n = A.shape[0]
        s, t = (int(e) for e in self.ends)
        if s == t or not (0 <= s < n and 0 <= t < n):
            raise ValidationError(f"invalid ends {self.ends} for n={n}")
        A.setflags(write=False)
        object.__setattr__(self, "couplings", A)
        object.__setattr__(self, "ends", (s, t))
        if self.positions is not None:
            P = np.array(self.positions, dtype=float).reshape(-1, 3)
            if P.shape[0] != n:
                raise ValidationError("positions must have one row per node")
            P.setflags(write=False)
            object.__setattr__(self, "positions", P)

    @property
    def n(self) -> int:
        return self.couplings.shape[0]

    @property
    def source(self) -> int:
        return self.ends[0]

    @property
    def target(self) -> int:
        return self.ends[1]

    def with_ends(self, source: int, target: int) -> "SpinNetwork":
        return replace(self, ends=(source, target))


def _symmetric_from_upper(n: int, upper: np.ndarray) -> np.ndarray:
    A = np.zeros((n, n))
    iu = np.triu_indices(n, 1)
    A[iu] = upper
    return A + A.T


def _check_size(n: int) -> int:
    n = int(n)
    if n < 3:
        raise ValidationError(f"network needs at least 3 nodes, got {n}")
    return n


def build_random_uniform(n: int, seed: int) -> SpinNetwork:
    """All-to-all network with i.i.d. uniform [0, 1] couplings and zero diagonal."""
    n = _check_size(n)
    rng = make_rng(seed)
    upper = rng.random(n * (n - 1) // 2)
    A = _symmetric_from_upper(n, upper)
    meta = {"builder": "uniform", "params": {"n": n}, "seed": int(seed)}
    return SpinNetwork(A, (0, n - 1), meta=meta)


def build_random_dipolar_chain(n: int, d: float = 1.0, seed: int = 0) -> SpinNetwork:
    """Chain with all-range couplings ``u / (h d)**3``, ``h = |i - j|``, ``u ~ U[0, 1]``."""
    n = _check_size(n)
    if not d > 0:
        raise ValidationError(f"lattice constant must be positive, got {d}")
    rng = make_rng(seed)
    iu = np.triu_indices(n, 1)
    h = (iu[1] - iu[0]).astype(float)
    upper = rng.random(len(h)) / (h * d) ** 3
    A = _symmetric_from_upper(n, upper)
    positions = np.zeros((n, 3))
    positions[:, 0] = np.arange(n) * d
    meta = {"builder": "dipolar", "params": {"n": n, "d": float(d)}, "seed": int(seed)}
    return SpinNetwork(A, (0, n - 1), positions=positions, meta=meta)


def honeycomb_positions(rows: int, cols: int, d: float = 1.0) -> np.ndarray:
    """Vertices of a ``rows x cols`` patch of hexagons with bond length ``d``.

    Hexagons are pointy-topped and stacked in offset rows, so a single cell
    gives the 6-ring. Vertices are sorted by (x, y).
    """
    if rows < 1 or cols < 1:
        raise ValidationError("honeycomb needs rows, cols >= 1")
    angles = np.deg2rad(30.0 + 60.0 * np.arange(6))
    ring = np.stack([np.cos(angles), np.sin(angles)], axis=1)
    pts = {}
    for r in range(rows):
        for c in range(cols):
            cx = math.sqrt(3.0) * (c + 0.5 * (r % 2))
            cy = 1.5 * r
            for vx, vy in ring:
                x, y = cx + vx, cy + vy
                pts[(round(x, 6), round(y, 6))] = (x, y)
    xy = np.array(sorted(pts.values(), key=lambda p: (round(p[0], 6), round(p[1], 6))))
    return np.column_stack([xy * d, np.zeros(len(xy))])


def build_honeycomb(rows: int, cols: int, d: float = 1.0) -> SpinNetwork:
    """Honeycomb patch with nearest-neighbour couplings ``1/d**3`` only."""
    if not d > 0:
        raise ValidationError(f"bond length must be positive, got {d}")
    pos = honeycomb_positions(rows, cols, d)
    n = len(pos)
    r = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
    nn = np.abs(r - d) < 1e-6 * d
    A = np.where(nn, 1.0 / d**3, 0.0)
    A = np.maximum(A, A.T)
    meta = {"builder": "honeycomb", "params": {"rows": int(rows), "cols": int(cols), "d": float(d)}}
    return SpinNetwork(A, (0, n - 1), positions=pos, meta=meta)


def apply_vacancies(net: SpinNetwork, p: float, seed: int) -> SpinNetwork:
    """Delete each non-end node independently with probability ``p``."""
    if not 0.0 <= p < 1.0:
        raise ValidationError(f"vacancy probability must lie in [0, 1), got {p}")
    rng = make_rng(seed)
    removed = rng.random(net.n) < p
    removed[list(net.ends)] = False
    keep = np.flatnonzero(~removed)
    remap = {int(old): new for new, old in enumerate(keep)}
    A = net.couplings[np.ix_(keep, keep)]
    pos = None if net.positions is None else net.positions[keep]
    meta = dict(net.meta)
    meta["vacancies"] = {"p": float(p), "seed": int(seed)}
    ends = (remap[net.source], remap[net.target])
    return SpinNetwork(A, ends, positions=pos, meta=meta)


def _dipolar_matrix(pos: np.ndarray, angular: bool) -> np.ndarray:
    diff = pos[:, None, :] - pos[None, :, :]
    r = np.linalg.norm(diff, axis=-1)
    np.fill_diagonal(r, np.inf)
    A = 1.0 / r**3
    if angular:
        cos2 = (diff[..., 2] / r) ** 2
        A = A * (1.0 - 3.0 * cos2)
    np.fill_diagonal(A, 0.0)
    return (A + A.T) / 2.0


def p1_count_mean(box_nm: Sequence[float], density_ppm: float) -> float:
    """Expected number of P1 centres in a box (nm) at a given concentration."""
    return density_ppm * 1e-6 * DIAMOND_SITE_DENSITY_NM3 * float(np.prod(box_nm))


def default_p1_box(density_ppm: float, nv_separation: float, mean_bulk: float = 20.0) -> tuple:
    """Box elongated along x that holds both NVs and ``mean_bulk`` P1s on average.

    The long side is 1.5 times the NV separation; the cross-section is
    square and sized to the requested mean count.
    """
    length = 1.5 * nv_separation
    volume = mean_bulk / (density_ppm * 1e-6 * DIAMOND_SITE_DENSITY_NM3)
    side = math.sqrt(volume / length)
    return (length, side, side)


def build_p1_nv(
    box: Sequence[float],
    density_ppm: float,
    nv_separation: float,
    seed: int,
    *,
    min_distance: float = 1.0,
    angular: bool = False,
    allow_empty: bool = False,
) -> SpinNetwork:
    """Random P1 bath between two NV end spins.

    ``box`` and ``nv_separation`` are in nm. Node positions are stored in
    diamond lattice constants and couplings are ``1/r**3`` in those units.
    The P1 count is Poisson distributed; P1 positions are uniform in the
    box, redrawn if closer than ``min_distance`` lattice constants to any
    other spin. The source NV is node 0 and the target NV the last node.
    """
    box = np.asarray(box, dtype=float)
    if box.shape != (3,) or np.any(box <= 0):
        raise ValidationError("box must be three positive lengths")
    if density_ppm < 0:
        raise ValidationError("density must be non-negative")
    axis = int(np.argmax(box))
    if not 0 < nv_separation < box[axis]:
        raise ValidationError("NV separation must be positive and fit in the box")
    rng = make_rng(seed)
    count = int(rng.poisson(p1_count_mean(box, density_ppm)))
    if count == 0 and not allow_empty:
        raise EmptyBulkError("no P1 centres sampled; retry with another seed")

    a = DIAMOND_LATTICE_CONSTANT_NM
    centre = box / 2.0
    nv = np.tile(centre, (2, 1))
    nv[0, axis] -= nv_separation / 2.0
    nv[1, axis] += nv_separation / 2.0
    nv = nv / a
    p1 = rng.random((count, 3)) * box / a
    for _ in range(1000):
        pos = np.vstack([nv[:1], p1, nv[1:]])
        r = np.linalg.norm(pos[:, None, :] - pos[None, :, :], axis=-1)
        np.fill_diagonal(r, np.inf)
        bad = np.flatnonzero(r[1:-1].min(axis=1) < min_distance)
        if len(bad) == 0:
            break
        p1[bad[:1]] = rng.random((1, 3)) * box / a
    else:
        raise ValidationError("could not place P1 centres with the requested minimum distance")

    A = _dipolar_matrix(pos, angular)
    meta = {
        "builder": "p1nv",
        "params": {
            "box": [float(b) for b in box],
            "density_ppm": float(density_ppm),
            "nv_separation": float(nv_separation),
            "min_distance": float(min_distance),
            "angular": bool(angular),
        },
        "seed": int(seed),
    }
    return SpinNetwork(A, (0, count + 1), positions=pos, meta=meta)


def set_end_shifts(net: SpinNetwork, w1: float, wN: float) -> SpinNetwork:
    """Return a copy with the end-node diagonal entries overwritten by ``w1``, ``wN``."""
    A = np.array(net.couplings)
    A[net.source, net.source] = w1
    A[net.target, net.target] = wN
    return replace(net, couplings=A)


@dataclass(frozen=True, eq=False)
class PartitionedNetwork:
    """``A = beta * embed(bulk) + epsilon * end_coupling`` with unit Frobenius blocks.

    ``bulk`` is indexed by ``bulk_index`` (original node order);
    ``end_coupling`` lives in the original ``n x n`` node space.
    """

    bulk: np.ndarray
    end_coupling: np.ndarray
    beta: float
    epsilon: float
    ends: tuple[int, int]
    bulk_index: tuple[int, ...]
    removed_end_coupling: float = 0.0
    warnings: tuple[str, ...] = ()

    @property
    def gamma(self) -> float:
        return self.beta / self.epsilon

    @property
    def n(self) -> int:
        return self.end_coupling.shape[0]

    def embedded_bulk(self) -> np.ndarray:
        B = np.zeros((self.n, self.n))
        idx = np.asarray(self.bulk_index)
        B[np.ix_(idx, idx)] = self.bulk
        return B

    def matrix(self) -> np.ndarray:
        A = self.beta * self.embedded_bulk() + self.epsilon * self.end_coupling
        return (A + A.T) / 2.0

    def to_network(self, **meta) -> SpinNetwork:
        return SpinNetwork(self.matrix(), self.ends, meta=dict(meta))

    def with_gamma(self, gamma: float) -> "PartitionedNetwork":
        """Rescale the end block so that ``beta / epsilon == gamma``."""
        if not gamma > 0:
            raise ValidationError(f"gamma must be positive, got {gamma}")
        return replace(self, epsilon=self.beta / gamma)

    def with_end_diagonal(self, w1: float, wN: float) -> "PartitionedNetwork":
        """Set the physical end on-site shifts, keeping ``epsilon`` fixed.

        The end block loses its unit norm; ``beta``/``epsilon`` remain the
        scales of the unshifted network, which is what the reductions use.
        """
        Ae = np.array(self.end_coupling)
        s, t = self.ends
        Ae[s, s] = w1 / self.epsilon
        Ae[t, t] = wN / self.epsilon
        return replace(self, end_coupling=Ae)


def partition(net: SpinNetwork) -> PartitionedNetwork:
    """Split a network into a normalized bulk block and normalized end block.

    Any direct source-target coupling is dropped (the reductions assume it
    vanishes) and reported through ``warnings`` and an ``EndCouplingWarning``.
    """
    n = net.n
    if n < 3:
        raise EmptyBulkError("partition needs at least one bulk node")
    s, t = net.ends
    bulk_index = tuple(i for i in range(n) if i not in (s, t))
    idx = np.asarray(bulk_index)
    A = net.couplings
    B = A[np.ix_(idx, idx)]
    E = np.zeros((n, n))
    for e in (s, t):
        E[e, idx] = A[e, idx]
        E[idx, e] = A[idx, e]
        E[e, e] = A[e, e]
    removed = float(A[s, t])
    notes = []
    if removed != 0.0:
        msg = f"direct end-end coupling {removed!r} dropped"
        notes.append(msg)
        warnings.warn(msg, EndCouplingWarning, stacklevel=2)

    beta = float(np.linalg.norm(B))
    epsilon = float(np.linalg.norm(E))
    if epsilon == 0.0:
        raise DisconnectedEndsError("ends have no coupling to the bulk")
    if beta == 0.0:
        if len(bulk_index) > 1:
            raise CannotNormalizeError("bulk block is identically zero")
        Bn = np.zeros_like(B)
    else:
        Bn = B / beta
    return PartitionedNetwork(
        bulk=Bn,
        end_coupling=E / epsilon,
        beta=beta,
        epsilon=epsilon,
        ends=(s, t),
        bulk_index=bulk_index,
        removed_end_coupling=removed,
        warnings=tuple(notes),
    )


# --- builder specs -----------------------------------------------------------

BUILDER_KINDS = ("uniform", "dipolar", "honeycomb", "p1nv")


@dataclass(frozen=True)
class BuilderSpec:
    """A builder name plus its parameters; ``build(seed)`` makes one realization.

    A ``vacancy`` probability, if non-zero, is applied after building with
    the same seed.
    """

    kind: str
    params: dict = field(default_factory=dict)
    vacancy: float = 0.0

    def __post_init__(self):
        if self.kind not in BUILDER_KINDS:
            raise ValidationError(f"unknown builder kind {self.kind!r}")

    def build(self, seed: int) -> SpinNetwork:
        p = self.params
        if self.kind == "uniform":
            net = build_random_uniform(p["n"], seed)
        elif self.kind == "dipolar":
            net = build_random_dipolar_chain(p["n"], p.get("d", 1.0), seed)
        elif self.kind == "honeycomb":
            net = build_honeycomb(p["rows"], p["cols"], p.get("d", 1.0))
        else:
            box = p.get("box") or default_p1_box(p["density_ppm"], p["nv_separation"], p.get("mean_bulk", 20.0))
            net = build_p1_nv(
                box,
                p["density_ppm"],
                p["nv_separation"],
                seed,
                min_distance=p.get("min_distance", 1.0),
                angular=p.get("angular", False),
            )
        if self.vacancy:
            net = apply_vacancies(net, self.vacancy, seed)
        return net


# --- JSON file format --------------------------------------------------------


def network_to_dict(net: SpinNetwork) -> dict[str, Any]:
    A = net.couplings
    n = net.n
    entries: list[list] = []
    for i in range(n):
        for j in range(i + 1, n):
            if A[i, j] != 0.0:
                entries.append([i, j, float(A[i, j])])
    for i in range(n):
        if A[i, i] != 0.0:
            entries.append(["diag", i, float(A[i, i])])
    out: dict[str, Any] = {"n": n, "ends": list(net.ends), "couplings": entries}
    if net.positions is not None:
        out["positions"] = [[float(x) for x in row] for row in net.positions]
    out["meta"] = net.meta
    return out


def network_from_dict(data: dict[str, Any]) -> SpinNetwork:
    try:
        n = int(data["n"])
        A = np.zeros((n, n))
        for entry in data["couplings"]:
            if entry[0] == "diag":
                A[int(entry[1]), int(entry[1])] = float(entry[2])
            else:
                i, j, v = int(entry[0]), int(entry[1]), float(entry[2])
                if not i < j:
                    raise ValidationError(f"coupling entry {entry} is not upper-triangular")
                A[i, j] = A[j, i] = v
        ends = tuple(int(e) for e in data["ends"])
    except (KeyError, TypeError, IndexError) as exc:
        raise ValidationError(f"malformed network document: {exc}") from exc
    return SpinNetwork(A, ends, positions=data.get("positions"), meta=data.get("meta", {}))


def save_network(net: SpinNetwork, path) -> None:
    # json writes floats with repr(), i.e. round-trip exact (up to 17 digits)
    text = json.dumps(network_to_dict(net), indent=1, sort_keys=False)
    try:
        Path(path).write_text(text + "\n")
    except OSError as exc:
        raise NetworkIOError(str(exc)) from exc


def load_network(path) -> SpinNetwork:
    try:
        data = json.loads(Path(path).read_text())
    except OSError as exc:
        raise NetworkIOError(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: not valid JSON ({exc})") from exc
    return network_from_dict(data)
