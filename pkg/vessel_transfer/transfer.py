"""
Selective transfer of source-domain training images.

The loop alternates feature learning and transfer. Each round trains the
network, maps every image into the latent space of the dimensionality-reduced
layer, clusters the image latents with pinned picture-level seeds, and lets
every source image's patches vote for target-friendly clusters. Accepted
source images with masks join the next round's training set.

A binned mutual-information estimate of the latent space against the input
and the vessel labels is available as a diagnostic (``ib_report``); it never
feeds training.
"""

import dataclasses
import enum
import logging
import os
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from . import drunet
from .drunet import Model, NetworkSpec, TrainConfig
from .errors import ConfigurationError, SelectionError, ShapeError
from .imgio import Domain, GrayImage, PictureLabel, SampleRecord
from .patchwork import PatchGrid, extract, plan_grid, sample_training_patches

logger = logging.getLogger(__name__)

FRIENDLY_CLUSTER = 0
HOSTILE_CLUSTER = 1


class TransferMode(str, enum.Enum):
    """How source images join training after round 1."""

    SELECTIVE = "selective"
    UNION = "union"
    NONE = "none"


@dataclasses.dataclass(frozen=True, eq=False)
class ImageLatent:
    """
    Latent summary of one image.

    Attributes:
        sample_id (str): Registry id
        domain (Domain): target or source
        z (ndarray): Mean of ``patches`` over the prediction grid
        patches (ndarray): ``[n_patches, latent_dim]`` per-patch latents
        dataset_name (str): Dataset the image came from
        picture_label (PictureLabel, optional): similar / dissimilar, sources only
        has_mask (bool): Whether the image can join training
    """

    sample_id: str
    domain: Domain
    z: np.ndarray
    patches: np.ndarray
    dataset_name: str = ""
    picture_label: Optional[PictureLabel] = None
    has_mask: bool = False

    def __post_init__(self):
        patches = np.atleast_2d(np.asarray(self.patches, dtype=np.float64))
        z = np.asarray(self.z, dtype=np.float64)
        if patches.shape[0] < 1:
            raise ShapeError(f"latent of {self.sample_id!r} built from no patches")
        if z.ndim != 1 or patches.shape[1] != z.shape[0]:
            raise ShapeError(f"latent of {self.sample_id!r}: z {z.shape}, patches {patches.shape}")
        if not (np.all(np.isfinite(z)) and np.all(np.isfinite(patches))):
            raise ShapeError(f"latent of {self.sample_id!r} is not finite")
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "patches", patches)
        object.__setattr__(self, "domain", Domain(self.domain))

    @classmethod
    def from_vector(cls, sample_id: str, domain: Domain, z, **kwargs) -> "ImageLatent":
        """An image whose only patch latent is ``z``."""
        z = np.asarray(z, dtype=np.float64)
        return cls(sample_id, domain, z, z[None, :], **kwargs)


@dataclasses.dataclass(frozen=True, eq=False)
class ClusterModel:
    """
    Result of ``seeded_kmeans``.

    Attributes:
        k (int): Cluster count
        centroids (ndarray): ``[k, d]``
        assignments (dict): sample_id -> cluster
        seeds (dict): sample_id -> pinned cluster
        objective (float): Sum of squared distances to assigned centroids
        iterations (int): Assign/update iterations run
        objective_history (list): Objective after every iteration
    """

    k: int
    centroids: np.ndarray
    assignments: Dict[str, int]
    seeds: Dict[str, int]
    objective: float
    iterations: int = 0
    objective_history: Tuple[float, ...] = ()

    def nearest(self, points: np.ndarray) -> np.ndarray:
        """Nearest centroid of each row of ``points`` (lowest index on ties)."""
        return _squared_distances(np.atleast_2d(points), self.centroids).argmin(axis=1)


@dataclasses.dataclass(frozen=True)
class SelectionRecord:
    sample_id: str
    dataset_name: str
    vote_fraction: float
    mean_distance_to_target: float
    accepted: bool
    has_mask: bool = True


@dataclasses.dataclass(frozen=True)
class DatasetSummary:
    dataset_name: str
    sources: int
    accepted: int
    mean_vote: float


@dataclasses.dataclass(frozen=True)
class SelectionResult:
    """Per-source transfer decisions, ``records`` in ranking order."""

    records: Tuple[SelectionRecord, ...] = ()
    threshold: float = 0.5

    @property
    def ranking(self) -> List[str]:
        return [r.sample_id for r in self.records]

    def accepted_ids(self) -> List[str]:
        return [r.sample_id for r in self.records if r.accepted]

    def record(self, sample_id: str) -> SelectionRecord:
        for r in self.records:
            if r.sample_id == sample_id:
                return r
        raise KeyError(sample_id)

    def by_dataset(self) -> List[DatasetSummary]:
        """Accepted counts and mean vote per source dataset, sorted by name."""
        grouped: Dict[str, List[SelectionRecord]] = {}
        for r in self.records:
            grouped.setdefault(r.dataset_name, []).append(r)
        return [
            DatasetSummary(
                dataset_name=name,
                sources=len(rows),
                accepted=sum(r.accepted for r in rows),
                mean_vote=float(np.mean([r.vote_fraction for r in rows])),
            )
            for name, rows in sorted(grouped.items())
        ]


@dataclasses.dataclass(frozen=True)
class IbReport:
    """Binned information-bottleneck terms, in bits."""

    i_xz: float
    i_zy: float
    h_y: float
    lam: float
    lagrangian: float


@dataclasses.dataclass(frozen=True)
class TransferConfig:
    """
    Settings of the transfer stage.

    Attributes:
        mode (TransferMode): selective, union or none
        clusters (int): K-Means cluster count (clamped to the number of images)
        max_iter (int): K-Means iteration cap
        tol (float): Centroid-shift convergence tolerance
        vote_threshold (float): Minimum vote fraction for acceptance
        stride (int, optional): Latent grid stride, default half a patch
    """

    mode: TransferMode = TransferMode.SELECTIVE
    clusters: int = 4
    max_iter: int = 100
    tol: float = 1e-6
    vote_threshold: float = 0.5
    stride: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", TransferMode(self.mode))
        if self.clusters < 2:
            raise ConfigurationError(f"clusters must be >= 2, got {self.clusters}")
        if self.max_iter < 1:
            raise ConfigurationError(f"max_iter must be >= 1, got {self.max_iter}")
        if not 0.0 <= self.vote_threshold <= 1.0:
            raise ConfigurationError(f"vote threshold must lie in [0, 1], got {self.vote_threshold}")


@dataclasses.dataclass(eq=False)
class LoopResult:
    """
    Outcome of ``two_stage_loop``.

    Attributes:
        model (Model): Network after the last round
        selections (list): SelectionResult used by each round (round 1 is empty)
        histories (list): Per-round epoch loss histories
        final_selection (SelectionResult): Selection computed with the final model
    """

    model: Model
    selections: List[SelectionResult]
    histories: List[List[float]]
    final_selection: SelectionResult


# --- latents ---------------------------------------------------------------


def image_latent(
    model: Model,
    img: GrayImage,
    grid: PatchGrid,
    sample_id: str = "",
    domain: Domain = Domain.TARGET,
    **kwargs,
) -> ImageLatent:
    """Mean of ``extract_latent`` over every patch of ``grid``."""
    if len(grid) == 0:
        raise ShapeError("empty patch grid")
    if grid.patch != model.spec.patch:
        raise ShapeError(f"grid patch {grid.patch} does not match network patch {model.spec.patch}")
    patches = np.stack([drunet.extract_latent(model, p) for p in extract(img, grid).patches])
    return ImageLatent(sample_id, domain, patches.mean(axis=0), patches, **kwargs)


def record_latents(model: Model, records: Sequence[SampleRecord], stride: Optional[int] = None) -> List[ImageLatent]:
    """Image latents of registry samples, one grid per image size."""
    patch = model.spec.patch
    latents = []
    for rec in records:
        grid = plan_grid(rec.image.width, rec.image.height, patch, stride or max(1, patch // 2))
        latents.append(
            image_latent(
                model,
                rec.image,
                grid,
                sample_id=rec.id,
                domain=rec.domain,
                dataset_name=rec.dataset_name,
                picture_label=rec.picture_label,
                has_mask=rec.mask is not None,
            )
        )
    return latents


# --- clustering ------------------------------------------------------------


def _squared_distances(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def _farthest_point(data: np.ndarray, chosen: List[np.ndarray], rng: np.random.Generator) -> np.ndarray:
    if not chosen:
        return data[rng.integers(len(data))]
    nearest = _squared_distances(data, np.stack(chosen)).min(axis=1)
    return data[int(nearest.argmax())]


def seed_assignments(latents: Sequence[ImageLatent]) -> Dict[str, int]:
    """
    Picture-level seeds: targets and ``similar`` sources go to cluster 0,
    ``dissimilar`` sources to cluster 1, unlabeled sources stay free.
    """
    seeds = {}
    for lat in latents:
        if lat.domain is Domain.TARGET or lat.picture_label is PictureLabel.SIMILAR:
            seeds[lat.sample_id] = FRIENDLY_CLUSTER
        elif lat.picture_label is PictureLabel.DISSIMILAR:
            seeds[lat.sample_id] = HOSTILE_CLUSTER
    return seeds


def seeded_kmeans(
    latents: Sequence[ImageLatent],
    seeds: Mapping[str, int],
    k: int,
    max_iter: int = 100,
    tol: float = 1e-6,
    seed: int = 0,
) -> ClusterModel:
    """
    Constrained K-Means over image latents.

    Centroids start at the mean of each label's seeded samples; labels without
    seeds take farthest-point picks from the unseeded data (the first pick is
    drawn from a generator seeded by ``seed``). Seeded samples stay pinned to
    their clusters; free samples move to their nearest centroid. A cluster
    that loses all members keeps its centroid. Iteration stops once no
    centroid moves by ``tol`` or more.

    Raises:
        ConfigurationError: ``k < 2``, ``k`` above the sample count, a seed
            label outside ``[0, k)``, a seed for an unknown id, or duplicate ids.
    """
    if not latents:
        raise ConfigurationError("no latents to cluster")
    if k < 2:
        raise ConfigurationError(f"k must be >= 2, got {k}")
    if max_iter < 1:
        raise ConfigurationError(f"max_iter must be >= 1, got {max_iter}")
    if k > len(latents):
        raise ConfigurationError(f"k = {k} exceeds the {len(latents)} samples")
    ids = [lat.sample_id for lat in latents]
    if len(set(ids)) != len(ids):
        raise ConfigurationError("duplicate sample ids among latents")
    unknown = set(seeds) - set(ids)
    if unknown:
        raise ConfigurationError(f"seeds name unknown samples: {sorted(unknown)}")
    for sid, label in seeds.items():
        if not 0 <= label < k:
            raise ConfigurationError(f"seed label {label} of {sid!r} is outside [0, {k})")

    data = np.stack([lat.z for lat in latents])
    pinned = np.array([seeds.get(sid, -1) for sid in ids])
    free = pinned < 0
    rng = np.random.default_rng(seed)

    centroids: List[Optional[np.ndarray]] = [None] * k
    for label in range(k):
        members = data[pinned == label]
        if len(members):
            centroids[label] = members.mean(axis=0)
    pool = data[free] if np.any(free) else data
    for label in range(k):
        if centroids[label] is None:
            centroids[label] = _farthest_point(pool, [c for c in centroids if c is not None], rng)
    centers = np.stack(centroids)

    history = []
    iterations = 0
    assign = pinned.copy()
    for iterations in range(1, max_iter + 1):
        assign = np.where(free, _squared_distances(data, centers).argmin(axis=1), pinned)
        updated = centers.copy()
        for label in range(k):
            members = data[assign == label]
            if len(members):
                updated[label] = members.mean(axis=0)
            else:
                logger.warning("cluster %d is empty; keeping its centroid", label)
        shift = float(np.sqrt(((updated - centers) ** 2).sum(axis=1)).max())
        centers = updated
        objective = float(((data - centers[assign]) ** 2).sum())
        history.append(objective)
        logger.debug("k-means iteration %d objective %.6g shift %.3g", iterations, objective, shift)
        if shift < tol:
            break

    return ClusterModel(
        k=k,
        centroids=centers,
        assignments={sid: int(a) for sid, a in zip(ids, assign)},
        seeds=dict(seeds),
        objective=history[-1],
        iterations=iterations,
        objective_history=tuple(history),
    )


# --- selection -------------------------------------------------------------


def _target_mean(latents: Sequence[ImageLatent]) -> Optional[np.ndarray]:
    targets = [lat.z for lat in latents if lat.domain is Domain.TARGET]
    return np.mean(targets, axis=0) if targets else None


def friendly_clusters(clusters: ClusterModel, latents: Sequence[ImageLatent], seed_labels: Optional[Mapping[str, PictureLabel]] = None) -> np.ndarray:
    """
    Boolean ``[k]``: target-friendly clusters.

    A cluster with seeded members is friendly when target or ``similar``
    samples are a strict majority of them. A cluster without seeded members
    follows the nearest seeded centroid, friendly against hostile (exact ties
    are hostile). When no seeded cluster is hostile, the unseeded cluster
    farthest from every friendly one stands in as the hostile reference.
    Nothing is friendly unless some seeded cluster is.

    Raises:
        SelectionError: no cluster has a seeded member.
    """
    by_id = {lat.sample_id: lat for lat in latents}
    labels = dict(seed_labels or {})
    friendly = np.zeros(clusters.k, dtype=int)
    hostile = np.zeros(clusters.k, dtype=int)
    for sid in clusters.seeds:
        lat = by_id[sid]
        label = labels.get(sid, lat.picture_label)
        cluster = clusters.assignments[sid]
        if lat.domain is Domain.TARGET or label is PictureLabel.SIMILAR:
            friendly[cluster] += 1
        else:
            hostile[cluster] += 1
    seeded = (friendly + hostile) > 0
    if not np.any(seeded):
        raise SelectionError(
            "no cluster has a seeded member; add picture-level similar/dissimilar "
            "labels to the manifest or include target images"
        )
    result = friendly > hostile
    unseeded = np.flatnonzero(~seeded)
    if not np.any(result) or not len(unseeded):
        return result

    centroids = np.asarray(clusters.centroids, dtype=np.float64)
    friendly_refs = centroids[result]
    hostile_ids = np.flatnonzero(seeded & ~result)
    if not len(hostile_ids):
        spread = _squared_distances(centroids[unseeded], friendly_refs).min(axis=1)
        hostile_ids = unseeded[[int(spread.argmax())]]
    hostile_refs = centroids[hostile_ids]
    for c in unseeded:
        if c in hostile_ids:
            continue
        to_friendly = _squared_distances(centroids[c][None, :], friendly_refs).min()
        to_hostile = _squared_distances(centroids[c][None, :], hostile_refs).min()
        result[c] = to_friendly < to_hostile
    logger.debug("friendly clusters %s (seeded %s)", np.flatnonzero(result).tolist(), np.flatnonzero(seeded).tolist())
    return result


def vote_select(
    clusters: ClusterModel,
    latents: Sequence[ImageLatent],
    threshold: float = 0.5,
    seed_labels: Optional[Mapping[str, PictureLabel]] = None,
) -> SelectionResult:
    """
    Per-source vote: the fraction of its patch latents whose nearest centroid
    is target-friendly. Sources with ``vote_fraction >= threshold`` are
    accepted. Records are ranked by vote (descending), distance of the image
    latent to the target mean (ascending), then sample id.
    """
    if not 0.0 <= threshold <= 1.0:
        raise ConfigurationError(f"vote threshold must lie in [0, 1], got {threshold}")
    friendly = friendly_clusters(clusters, latents, seed_labels)
    target_mean = _target_mean(latents)

    records = []
    for lat in latents:
        if lat.domain is not Domain.SOURCE:
            continue
        vote = float(friendly[clusters.nearest(lat.patches)].mean())
        distance = float(np.linalg.norm(lat.z - target_mean)) if target_mean is not None else float("inf")
        records.append(
            SelectionRecord(lat.sample_id, lat.dataset_name, vote, distance, vote >= threshold, lat.has_mask)
        )
    records.sort(key=lambda r: (-r.vote_fraction, r.mean_distance_to_target, r.sample_id))
    return SelectionResult(tuple(records), threshold)


def nearest_source(target_latents: Sequence[ImageLatent], source_latents: Sequence[ImageLatent]) -> Tuple[int, float]:
    """
    Index of the source latent closest to the mean target latent.

    Returns:
        tuple: (index into ``source_latents``, Euclidean distance); exact ties
        go to the lexicographically smallest sample id.
    """
    if not target_latents or not source_latents:
        raise ConfigurationError("nearest_source needs target and source latents")
    center = np.mean([lat.z for lat in target_latents], axis=0)
    distances = np.array([np.linalg.norm(lat.z - center) for lat in source_latents])
    best = distances.min()
    candidates = [i for i in range(len(source_latents)) if distances[i] == best]
    index = min(candidates, key=lambda i: source_latents[i].sample_id)
    return index, float(best)


def select_sources(
    model: Model,
    targets: Sequence[SampleRecord],
    sources: Sequence[SampleRecord],
    cfg: TransferConfig,
    seed: int = 0,
) -> Tuple[SelectionResult, Optional[ClusterModel]]:
    """Latents, clustering and voting for one transfer decision."""
    if not sources:
        return SelectionResult((), cfg.vote_threshold), None
    if cfg.mode is not TransferMode.SELECTIVE:
        accept = cfg.mode is TransferMode.UNION
        records = tuple(
            SelectionRecord(s.id, s.dataset_name, float(accept), float("nan"), accept, s.mask is not None)
            for s in sorted(sources, key=lambda s: s.id)
        )
        return SelectionResult(records, cfg.vote_threshold), None

    latents = record_latents(model, list(targets) + list(sources), cfg.stride)
    k = min(cfg.clusters, len(latents))
    clusters = seeded_kmeans(latents, seed_assignments(latents), k, cfg.max_iter, cfg.tol, seed)
    selection = vote_select(clusters, latents, cfg.vote_threshold)
    logger.info(
        "Selected %d of %d source images (k=%d, objective %.4g)",
        len(selection.accepted_ids()),
        len(sources),
        k,
        clusters.objective,
    )
    for summary in selection.by_dataset():
        logger.info(
            "  %s: %d/%d accepted, mean vote %.3f",
            summary.dataset_name,
            summary.accepted,
            summary.sources,
            summary.mean_vote,
        )
    return selection, clusters


def training_pairs(records: Sequence[SampleRecord], patch: int, cfg: TrainConfig, seed: Optional[int] = None):
    """Random training patches of masked records (``cfg.seed`` unless ``seed`` is given)."""
    masked = [r for r in records if r.mask is not None]
    return sample_training_patches(
        [r.image for r in masked],
        [r.mask for r in masked],
        patch,
        cfg.patches_per_image,
        seed=cfg.seed if seed is None else seed,
    )


def two_stage_loop(
    targets: Sequence[SampleRecord],
    sources: Sequence[SampleRecord],
    spec: NetworkSpec,
    train_cfg: TrainConfig,
    rounds: int = 2,
    transfer_cfg: TransferConfig = TransferConfig(),
    model: Optional[Model] = None,
) -> LoopResult:
    """
    Alternate feature learning and transfer for ``rounds`` rounds.

    Round 1 trains on the target images only. Every later round selects
    sources with the current model and continues training on the target
    images plus the accepted sources that carry masks. Round ``r`` samples
    patches and shuffles with seed ``train_cfg.seed + r - 1``.
    """
    if rounds < 1:
        raise ConfigurationError(f"rounds must be >= 1, got {rounds}")
    if not targets:
        raise ConfigurationError("no target images to train on")
    model = model if model is not None else drunet.build(spec)
    by_id = {s.id: s for s in sources}

    selections: List[SelectionResult] = []
    histories: List[List[float]] = []
    for round_no in range(1, rounds + 1):
        cfg = dataclasses.replace(train_cfg, seed=train_cfg.seed + round_no - 1)
        if round_no == 1:
            selection = SelectionResult((), transfer_cfg.vote_threshold)
        else:
            selection, _ = select_sources(model, targets, sources, transfer_cfg, cfg.seed)
        accepted = [by_id[sid] for sid in selection.accepted_ids()]
        unmasked = [s.id for s in accepted if s.mask is None]
        if unmasked:
            logger.warning("Accepted sources without masks are not trained on: %s", ", ".join(unmasked))
        members = list(targets) + [s for s in accepted if s.mask is not None]
        logger.info(
            "Round %d/%d: training on %d target + %d source images",
            round_no,
            rounds,
            len(targets),
            len(members) - len(targets),
        )
        model, history = drunet.train(model, training_pairs(members, spec.patch, cfg), cfg)
        selections.append(selection)
        histories.append(history)

    final_selection, _ = select_sources(model, targets, sources, transfer_cfg, train_cfg.seed + rounds)
    return LoopResult(model, selections, histories, final_selection)


# --- selection files -------------------------------------------------------

_TSV_COLUMNS = ("sample_id", "vote_fraction", "distance", "accepted")


def write_selection(selection: SelectionResult, path: str) -> None:
    """``# threshold=.. accepted=.. total=..`` summary, a column header, then one line per source."""
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        f.write(
            f"# threshold={selection.threshold!r} "
            f"accepted={len(selection.accepted_ids())} total={len(selection.records)}\n"
        )
        f.write("\t".join(_TSV_COLUMNS) + "\n")
        for r in selection.records:
            f.write(
                f"{r.sample_id}\t{r.vote_fraction!r}\t{r.mean_distance_to_target!r}\t"
                f"{'true' if r.accepted else 'false'}\n"
            )


def read_selection(path: str) -> SelectionResult:
    """Read a file written by ``write_selection`` (dataset names are not stored)."""
    threshold = 0.5
    records = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.rstrip("\n")
            if line.startswith("#"):
                for token in line[1:].split():
                    key, _, value = token.partition("=")
                    if key == "threshold":
                        threshold = float(value)
                continue
            if not line or line.split("\t")[0] == _TSV_COLUMNS[0]:
                continue
            fields = line.split("\t")
            if len(fields) != len(_TSV_COLUMNS):
                raise ConfigurationError(f"{path}:{lineno}: expected {len(_TSV_COLUMNS)} fields")
            records.append(
                SelectionRecord(fields[0], "", float(fields[1]), float(fields[2]), fields[3] == "true")
            )
    return SelectionResult(tuple(records), threshold)


# --- mutual information ----------------------------------------------------


def _bin_index(values: np.ndarray, bins: int) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.int64)
    index = np.floor((values - lo) / (hi - lo) * bins).astype(np.int64)
    return np.clip(index, 0, bins - 1)


def _check_bins(n: int, bins: int) -> None:
    if bins < 2:
        raise ConfigurationError(f"bins must be >= 2, got {bins}")
    if n < bins:
        raise ConfigurationError(f"{n} samples are fewer than {bins} bins")


def binned_entropy(x: Sequence[float], bins: int) -> float:
    """Entropy in bits of ``x`` over ``bins`` equal-width bins."""
    values = np.asarray(x, dtype=np.float64).ravel()
    _check_bins(values.size, bins)
    p = np.bincount(_bin_index(values, bins), minlength=bins) / values.size
    p = p[p > 0]
    return float(max(0.0, -np.sum(p * np.log2(p))))


def binned_mi(x: Sequence[float], y: Sequence[float], bins: int) -> float:
    """
    Mutual information in bits from an equal-width ``bins x bins`` histogram.

    Each variable is binned over its own ``[min, max]``; a constant variable
    falls into a single bin. Empty cells contribute nothing.
    """
    xs = np.asarray(x, dtype=np.float64).ravel()
    ys = np.asarray(y, dtype=np.float64).ravel()
    if xs.size != ys.size:
        raise ShapeError(f"binned_mi needs equal lengths, got {xs.size} and {ys.size}")
    _check_bins(xs.size, bins)
    ix, iy = _bin_index(xs, bins), _bin_index(ys, bins)
    joint = np.bincount(ix * bins + iy, minlength=bins * bins).reshape(bins, bins) / xs.size
    px = joint.sum(axis=1)
    py = joint.sum(axis=0)
    nz = joint > 0
    ratio = joint[nz] / (px[:, None] * py[None, :])[nz]
    return float(max(0.0, np.sum(joint[nz] * np.log2(ratio))))


def ib_report(latents, inputs, labels, lam: float = 1.0, bins: int = 16) -> IbReport:
    """
    Information-bottleneck terms of a latent sample.

    Args:
        latents: ``[n, d]`` per-patch latents
        inputs: ``[n]`` per-patch input summaries (mean pixel value)
        labels: ``[n]`` per-patch task labels (vessel fraction)
        lam: Trade-off weight
        bins: Histogram bins per variable

    ``i_xz`` and ``i_zy`` average ``binned_mi`` over latent dimensions;
    ``h_y`` stands in for ``I(x; y)`` and the Lagrangian is
    ``i_xz + lam * (h_y - i_zy)``.
    """
    z = np.atleast_2d(np.asarray(latents, dtype=np.float64))
    x = np.asarray(inputs, dtype=np.float64).ravel()
    y = np.asarray(labels, dtype=np.float64).ravel()
    if not (z.shape[0] == x.size == y.size):
        raise ShapeError(f"{z.shape[0]} latents, {x.size} inputs and {y.size} labels")
    if lam < 0:
        raise ConfigurationError(f"lambda must be >= 0, got {lam}")
    i_xz = float(np.mean([binned_mi(x, z[:, j], bins) for j in range(z.shape[1])]))
    i_zy = float(np.mean([binned_mi(z[:, j], y, bins) for j in range(z.shape[1])]))
    h_y = binned_entropy(y, bins)
    return IbReport(i_xz, i_zy, h_y, lam, i_xz + lam * (h_y - i_zy))


def ib_report_for_model(model: Model, pairs: Sequence[Tuple[np.ndarray, np.ndarray]], lam: float = 1.0, bins: int = 16) -> IbReport:
    """``ib_report`` over ``(patch, mask)`` pairs pushed through ``model``."""
    latents = np.stack([drunet.extract_latent(model, patch) for patch, _ in pairs])
    inputs = [float(np.mean(patch)) for patch, _ in pairs]
    labels = [float(np.mean(mask)) for _, mask in pairs]
    return ib_report(latents, inputs, labels, lam, bins)
