"""Pipeline orchestration: preprocess once, then search seed counts.

A decomposition run is deterministic given (model, plan, seed).  The
expensive per-model work — symmetry detection, orientation, grid build,
cell classification and measures — happens once in :func:`prepare_model`;
every search iteration reuses it with a fresh ownership array.

The search itself is a two-loop sweep: the outer loop walks the number of
seed blocks ``p`` down from ``printers_available``, the inner loop retries
each ``p`` with ``sample_tries`` different RNG seeds
(``seed_base + 1000 * p + try_index``).  Lower ``p`` leaves more spare
printers for patching uncovered voids, so late iterations trade
parallelism for robustness.  The best valid iteration wins: smallest
parallel print score, then fewest printers used, then smallest aggregate
time.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, asdict

import numpy as np

from .blocks import (GrowthState, ObjectiveParams, fits_printer,
                     grow_blocks, print_score, select_seed_blocks)
from .clip import clip_halfspace, clip_surface_to_box, clip_to_box, cut_by_plane
from .errors import InsufficientBoundaryCells, NoValidDecomposition
from .grid import CellClass, CellMeasures, Grid, build_grid, measure_cells
from .mesh import TriangleMesh, aabb_of, measure, triangle_areas
from .preprocess import (SYMMETRY_THRESHOLD, Pose, SymmetryPlane,
                         find_best_symmetry_plane, optimize_orientation)
from .resolve import get_discrete_empty_regions

logger = logging.getLogger(__name__)

FIT_EPS = 1e-9


@dataclass(frozen=True)
class PrinterProfile:
    """Build volume and kinematics of the (identical) printers."""

    volume_x: float = 250.0   # mm
    volume_y: float = 250.0
    volume_z: float = 250.0
    speed_shell: float = 20.0   # mm/s
    speed_infill: float = 20.0  # mm/s
    line_width: float = 0.4     # mm
    layer_height: float = 0.25  # mm

    @property
    def dims(self) -> tuple[float, float, float]:
        return (self.volume_x, self.volume_y, self.volume_z)


@dataclass(frozen=True)
class RunPlan:
    """Everything about a decomposition run except the mesh and printer."""

    printers_available: int = 4
    granularity: str = "very_fine"
    sample_tries: int = 3
    seed_base: int = 0
    min_printers: int = 1
    infill_fraction: float = 0.05
    overhang_tolerance_deg: float = 1.0
    overhang_weight: float = 1.0
    proximity_floor: float = 1.0
    symmetry_threshold: float = SYMMETRY_THRESHOLD
    skip_symmetry_cut: bool = False


def objective_of(plan: RunPlan, profile: PrinterProfile) -> ObjectiveParams:
    return ObjectiveParams(
        speed_infill=profile.speed_infill,
        speed_shell=profile.speed_shell,
        infill_fraction=plan.infill_fraction,
        overhang_tolerance_deg=plan.overhang_tolerance_deg,
        printer_dims=profile.dims,
        overhang_weight=plan.overhang_weight,
        proximity_floor=plan.proximity_floor,
    )


def estimate_time(volume: float, surface_area: float, profile: PrinterProfile,
                  infill_fraction: float = 0.05) -> float:
    """Print time in seconds: infill deposition plus shell tracing."""
    infill = (infill_fraction * volume) / (
        profile.line_width * profile.layer_height * profile.speed_infill)
    shell = (profile.line_width * surface_area) / (
        profile.line_width * profile.layer_height * profile.speed_shell)
    return infill + shell


# ---------------------------------------------------------------------------
# results


@dataclass
class PartResult:
    mesh: TriangleMesh
    volume: float
    surface_area: float     # of the capped, printable part
    shell_area: float       # share of the original model surface (cap-free)
    print_score: float
    time_s: float
    source: str  # "block" or "void"
    piece: int = 0          # which prepared piece the part was carved from
    cell_lo: tuple[int, int, int] | None = None  # grid cell range, blocks/voids only
    cell_hi: tuple[int, int, int] | None = None  # inclusive


@dataclass
class Decomposition:
    parts: list[PartResult]
    algorithm: str
    printers_available: int
    seed_blocks: int
    seed: int
    valid: bool
    reason: str
    parallel_score: float
    parallel_time_s: float
    aggregate_time_s: float
    symmetry_error: float
    symmetry_cut: bool

    @property
    def printers_used(self) -> int:
        return len(self.parts)


@dataclass
class RunRecord:
    """One metaheuristic iteration, ready for a jsonl log."""

    seed_blocks: int
    try_index: int
    seed: int
    valid: bool
    parts: int
    parallel_score: float
    parallel_time_s: float
    aggregate_time_s: float
    reason: str
    wall_clock_s: float = 0.0

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------------------
# preparation


@dataclass
class PreparedPiece:
    mesh: TriangleMesh          # capped, oriented, watertight
    shell: TriangleMesh         # its share of the original surface, oriented
    pose: Pose
    grid: Grid
    measures: CellMeasures
    volume: float


@dataclass
class PreparedModel:
    pieces: list[PreparedPiece]
    plane: SymmetryPlane
    cut: bool


def prepare_model(mesh: TriangleMesh, plan: RunPlan,
                  profile: PrinterProfile) -> PreparedModel:
    """Symmetry-cut (maybe), orient, and grid each piece once."""
    plane = find_best_symmetry_plane(mesh)
    raw: list[TriangleMesh] = [mesh]
    shells: list[TriangleMesh] = [mesh]
    cut = False
    if (not plan.skip_symmetry_cut and plan.printers_available >= 2
            and plane.error_score <= plan.symmetry_threshold):
        positive, negative = cut_by_plane(mesh, plane.normal, plane.offset)
        if not positive.is_empty and not negative.is_empty:
            raw = [positive, negative]
            shells = _split_shell(mesh, plane.normal, plane.offset)
            cut = True
            logger.info("symmetry cut accepted (error %.4g)", plane.error_score)
        else:
            logger.warning("symmetry plane cut off nothing; skipping the cut")
    pieces = []
    for i, (piece, shell) in enumerate(zip(raw, shells)):
        piece.name = f"{mesh.name}_half{i}" if cut else mesh.name
        oriented, pose = optimize_orientation(
            piece, symmetry=plane,
            overhang_tolerance_deg=plan.overhang_tolerance_deg)
        grid = build_grid(oriented, plan.granularity)
        measures = measure_cells(grid, oriented, plan.overhang_tolerance_deg)
        pieces.append(PreparedPiece(oriented, pose.apply(shell), pose, grid,
                                    measures, measure(oriented).volume))
    return PreparedModel(pieces, plane, cut)


def _split_shell(shell: TriangleMesh, normal, offset: float) -> list[TriangleMesh]:
    """Split an open surface by a plane, without caps, half-open like
    cut_by_plane so the two sides never share a coplanar triangle."""
    positive = clip_halfspace(shell, -np.asarray(normal), -float(offset),
                              keep_coplanar=False, cap=False)
    negative = clip_halfspace(shell, np.asarray(normal), float(offset),
                              keep_coplanar=True, cap=False)
    return [positive, negative]


def _shell_area_in_box(shell: TriangleMesh, box) -> float:
    """Area of the cap-free surface owned by one part box."""
    pieces, _ = clip_surface_to_box(shell, box)
    if len(pieces) == 0:
        return 0.0
    cross = np.cross(pieces[:, 1] - pieces[:, 0], pieces[:, 2] - pieces[:, 0])
    return float(0.5 * np.linalg.norm(cross, axis=1).sum())


def _fresh_grid(grid: Grid) -> Grid:
    """Share classification/surface arrays but reset ownership."""
    return Grid(origin=grid.origin, cell_size=grid.cell_size, dims=grid.dims,
                classification=grid.classification,
                owner=np.full(grid.dims, -1, dtype=np.int32),
                surface_count=grid.surface_count)


def _proportional_share(total: int, v_first: float, v_second: float) -> int:
    """Round total * v1/(v1+v2) to the nearest int, clamped to [1, total-1]."""
    share = int(np.floor(total * v_first / max(v_first + v_second, 1e-300) + 0.5))
    return min(max(share, 1), total - 1)


def _uncovered_cells(grid: Grid, regions) -> tuple[int, int]:
    """(boundary, internal) cells neither owned nor inside a carved region."""
    mask = np.zeros(grid.dims, dtype=bool)
    for lo, hi in regions:
        sl = tuple(slice(int(a), int(b) + 1) for a, b in zip(lo, hi))
        mask[sl] = True
    free = (grid.owner < 0) & ~mask
    b = int((free & (grid.classification == CellClass.BOUNDARY)).sum())
    i = int((free & (grid.classification == CellClass.INTERNAL)).sum())
    return b, i


# ---------------------------------------------------------------------------
# one iteration


def run_decomposition(prepared: PreparedModel, plan: RunPlan,
                      profile: PrinterProfile, seed_blocks: int,
                      seed: int) -> Decomposition:
    """Grow seed_blocks boxes over the prepared model with one RNG seed."""
    params = objective_of(plan, profile)
    total_printers = plan.printers_available
    pieces = prepared.pieces
    if len(pieces) == 2:
        v1, v2 = pieces[0].volume, pieces[1].volume
        if seed_blocks < 2:
            raise ValueError("a symmetry-cut model needs at least 2 seed blocks")
        first = _proportional_share(seed_blocks, v1, v2)
        growth_split = [first, seed_blocks - first]
        first_budget = _proportional_share(total_printers, v1, v2)
        budget_split = [first_budget, total_printers - first_budget]
    else:
        growth_split = [seed_blocks]
        budget_split = [total_printers]

    parts: list[PartResult] = []
    reason = ""
    for index, (piece, k, budget) in enumerate(zip(pieces, growth_split,
                                                   budget_split)):
        grid = _fresh_grid(piece.grid)
        try:
            blocks = select_seed_blocks(grid, piece.mesh, k,
                                        rng_seed=seed * 2 + index)
        except InsufficientBoundaryCells as exc:
            reason = f"piece {index}: {exc}"
            break
        state = GrowthState(grid, piece.measures, blocks, params)
        grow_blocks(state)
        free = max(0, budget - len(blocks))
        regions = get_discrete_empty_regions(grid, free, params.printer_dims)
        left_b, left_i = _uncovered_cells(grid, regions)
        if left_b or left_i:
            reason = (f"piece {index}: {left_b} boundary / {left_i} internal "
                      "cells uncovered")
            break
        for b in blocks:
            box = grid.box_of_range(b.lo, b.hi)
            clipped = clip_to_box(piece.mesh, box, mode="volumetric").mesh
            if clipped.is_empty:
                continue
            clipped.name = f"{piece.mesh.name}_b{b.id}"
            parts.append(_score_part(clipped, "block", plan, profile, params,
                                     _shell_area_in_box(piece.shell, box),
                                     piece=index,
                                     cell_lo=tuple(int(x) for x in b.lo),
                                     cell_hi=tuple(int(x) for x in b.hi)))
        for r, (lo, hi) in enumerate(regions):
            box = grid.box_of_range(lo, hi)
            clipped = clip_to_box(piece.mesh, box, mode="volumetric").mesh
            if clipped.is_empty:
                continue
            clipped.name = f"{piece.mesh.name}_v{r}"
            parts.append(_score_part(clipped, "void", plan, profile, params,
                                     _shell_area_in_box(piece.shell, box),
                                     piece=index,
                                     cell_lo=tuple(int(x) for x in lo),
                                     cell_hi=tuple(int(x) for x in hi)))

    valid = not reason
    if valid and len(parts) == 0:
        valid, reason = False, "no parts produced"
    if valid and len(parts) > total_printers:
        valid, reason = False, f"{len(parts)} parts exceed {total_printers} printers"
    if valid:
        for part in parts:
            extent = aabb_of(part.mesh).extent
            if not fits_printer(extent, profile.dims):
                valid, reason = False, f"part {part.mesh.name} exceeds the printer"
                break

    if parts:
        parallel_score = max(p.print_score for p in parts)
        parallel_time = max(p.time_s for p in parts)
        aggregate_time = sum(p.time_s for p in parts)
    else:
        parallel_score = parallel_time = aggregate_time = float("nan")
    return Decomposition(parts=parts, algorithm="parallelobox",
                         printers_available=total_printers,
                         seed_blocks=seed_blocks, seed=seed, valid=valid,
                         reason=reason, parallel_score=parallel_score,
                         parallel_time_s=parallel_time,
                         aggregate_time_s=aggregate_time,
                         symmetry_error=prepared.plane.error_score,
                         symmetry_cut=prepared.cut)


def _score_part(mesh: TriangleMesh, source: str, plan: RunPlan,
                profile: PrinterProfile, params: ObjectiveParams,
                shell_area: float, piece: int = 0,
                cell_lo: tuple[int, int, int] | None = None,
                cell_hi: tuple[int, int, int] | None = None) -> PartResult:
    mm = measure(mesh)
    return PartResult(
        mesh=mesh, volume=mm.volume, surface_area=mm.surface_area,
        shell_area=shell_area,
        print_score=print_score(mm.volume, mm.surface_area, params),
        time_s=estimate_time(mm.volume, mm.surface_area, profile,
                             plan.infill_fraction),
        source=source, piece=piece, cell_lo=cell_lo, cell_hi=cell_hi)


# ---------------------------------------------------------------------------
# search


def _beats(challenger: Decomposition, incumbent: Decomposition | None) -> bool:
    if incumbent is None:
        return True
    a = (challenger.parallel_score, challenger.printers_used,
         challenger.aggregate_time_s)
    b = (incumbent.parallel_score, incumbent.printers_used,
         incumbent.aggregate_time_s)
    return a < b


def run_metaheuristic(mesh: TriangleMesh, plan: RunPlan,
                      profile: PrinterProfile,
                      records: list[RunRecord] | None = None) -> Decomposition:
    """Sweep seed-block counts and retries; return the best valid result.

    Raises NoValidDecomposition when every iteration fails.
    """
    prepared = prepare_model(mesh, plan, profile)
    floor = max(plan.min_printers, len(prepared.pieces), 1)
    best: Decomposition | None = None
    attempts = 0
    for p in range(plan.printers_available, floor - 1, -1):
        for t in range(1, plan.sample_tries + 1):
            seed = plan.seed_base + 1000 * p + t
            tick = time.perf_counter()
            result = run_decomposition(prepared, plan, profile, p, seed)
            attempts += 1
            if records is not None:
                records.append(RunRecord(
                    seed_blocks=p, try_index=t, seed=seed, valid=result.valid,
                    parts=result.printers_used,
                    parallel_score=result.parallel_score,
                    parallel_time_s=result.parallel_time_s,
                    aggregate_time_s=result.aggregate_time_s,
                    reason=result.reason,
                    wall_clock_s=time.perf_counter() - tick))
            logger.debug("p=%d t=%d seed=%d valid=%s score=%.6g (%s)",
                         p, t, seed, result.valid, result.parallel_score,
                         result.reason or "ok")
            if result.valid and _beats(result, best):
                best = result
    if best is None:
        raise NoValidDecomposition(
            f"no valid decomposition for {mesh.name or 'mesh'!r} "
            f"in {attempts} iterations with {plan.printers_available} printers")
    return best


# ---------------------------------------------------------------------------
# comparison baseline


def recursive_symmetry_baseline(mesh: TriangleMesh, plan: RunPlan,
                                profile: PrinterProfile,
                                max_rounds: int = 10) -> Decomposition:
    """Halve every part at its best mirror plane until the count reaches the
    largest power of two <= printers_available and everything fits."""
    params = objective_of(plan, profile)
    plane = find_best_symmetry_plane(mesh)
    oriented, _pose = optimize_orientation(
        mesh, symmetry=plane,
        overhang_tolerance_deg=plan.overhang_tolerance_deg)
    oriented.name = mesh.name
    target = 1
    while target * 2 <= plan.printers_available:
        target *= 2

    pieces = [(oriented, oriented)]  # (printable mesh, cap-free shell)
    for _ in range(max_rounds):
        if len(pieces) >= target and all(
                fits_printer(aabb_of(m).extent, profile.dims)
                for m, _ in pieces):
            break
        cut_any = False
        nxt: list[tuple[TriangleMesh, TriangleMesh]] = []
        for m, shell in pieces:
            best = find_best_symmetry_plane(m)
            positive, negative = cut_by_plane(m, best.normal, best.offset)
            if positive.is_empty or negative.is_empty:
                nxt.append((m, shell))
                continue
            positive.name = f"{m.name}a"
            negative.name = f"{m.name}b"
            shells = _split_shell(shell, best.normal, best.offset)
            nxt.extend([(positive, shells[0]), (negative, shells[1])])
            cut_any = True
        pieces = nxt
        if not cut_any:
            break

    parts = [_score_part(m, "block", plan, profile, params,
                         float(triangle_areas(shell).sum()), piece=i)
             for i, (m, shell) in enumerate(pieces)]
    valid = (len(parts) <= plan.printers_available
             and all(fits_printer(aabb_of(p.mesh).extent, profile.dims)
                     for p in parts))
    reason = "" if valid else "baseline parts exceed the printer or budget"
    return Decomposition(parts=parts, algorithm="symmetry",
                         printers_available=plan.printers_available,
                         seed_blocks=0, seed=plan.seed_base, valid=valid,
                         reason=reason,
                         parallel_score=max(p.print_score for p in parts),
                         parallel_time_s=max(p.time_s for p in parts),
                         aggregate_time_s=sum(p.time_s for p in parts),
                         symmetry_error=plane.error_score,
                         symmetry_cut=len(parts) > 1)
