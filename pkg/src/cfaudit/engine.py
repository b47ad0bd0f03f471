"""Constrained genetic search for counterfactual instances.

Given a black-box predictor f and an input x, the engine evolves a
population inside the constrained feature space and returns the k closest
feasible candidates whose prediction differs from f(x) (or equals a
requested target class). Feasibility is a hard constraint: infeasible
individuals never enter the population.

One generation is: truncation selection of the top half by fitness,
uniform crossover over random survivor pairs, per-feature mutation,
feasibility filtering with rejection-sampled replacements, and elitism.
All randomness flows through a single seeded generator, so a run is a
pure function of (inputs, config, seed) for a deterministic predictor.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .dataset import DatasetStats
from .distance import (
    DEFAULT_SSIM_WINDOW,
    SSIM_EPS,
    mixed_distance,
    mixed_distance_batch,
    norm_scale,
    ssim_batch,
)
from .distance import fitness as fitness_fn
from .errors import ConstraintError, DistanceError, InfeasibleSpaceError, TimeBudgetError
from .schema import CONTINUOUS, FeatureSchema, FeatureSpec

POPULATION_FLOOR = 100
POPULATION_CAP = 30_000

# rank value assigned to image candidates whose SSIM is too small for a
# well-defined distance; keeps them strictly worse than any valid one
_INVALID_RANK_BASE = 1e9


@dataclass(frozen=True)
class Constraints:
    """Per-request tightening of the search space.

    `ranges` narrows continuous bounds, `allowed` narrows category sets,
    `muted` freezes features at the input value. Schema-immutable
    features are always treated as muted in addition to this set.
    """

    ranges: dict = field(default_factory=dict)
    allowed: dict = field(default_factory=dict)
    muted: frozenset = frozenset()
    target_class: str | None = None
    k: int = 1

    def validate(self, schema: FeatureSchema) -> None:
        errors = []
        for name, bounds in self.ranges.items():
            try:
                spec = schema.feature(name)
            except Exception:
                errors.append((name, "unknown feature"))
                continue
            if not spec.is_continuous:
                errors.append((name, "range constraint on a categorical feature"))
                continue
            lo, hi = bounds
            if lo > hi:
                errors.append((name, f"empty range [{lo}, {hi}]"))
            elif lo < spec.min or hi > spec.max:
                errors.append(
                    (name, f"range [{lo}, {hi}] outside schema bounds [{spec.min}, {spec.max}]")
                )
        for name, cats in self.allowed.items():
            try:
                spec = schema.feature(name)
            except Exception:
                errors.append((name, "unknown feature"))
                continue
            if spec.is_continuous:
                errors.append((name, "category constraint on a continuous feature"))
                continue
            if not cats:
                errors.append((name, "empty allowed-category set"))
            else:
                unknown = [c for c in cats if c not in spec.categories]
                if unknown:
                    errors.append((name, f"categories {unknown} not in schema"))
        for name in self.muted:
            try:
                schema.feature(name)
            except Exception:
                errors.append((name, "unknown feature"))
        if self.target_class is not None and self.target_class not in schema.classes:
            errors.append(("target_class", f"{self.target_class!r} not among classes"))
        if self.k < 1:
            errors.append(("k", "k must be a positive integer"))
        if errors:
            raise ConstraintError(errors)

    def effective_muted(self, schema: FeatureSchema) -> frozenset:
        immutable = {spec.name for spec in schema.features if not spec.mutable}
        return frozenset(self.muted | immutable)


def constraints_from_dict(schema: FeatureSchema, obj: dict, base: Constraints | None = None) -> Constraints:
    """Build (or patch) constraints from their JSON form.

    Feature entries look like {"range": [lo, hi]}, {"allowed": [...]} or
    {"mute": true}; the reserved keys "target_class" and "k" set the
    request defaults. With `base` given, unmentioned features keep their
    existing overrides (PATCH semantics).
    """
    base = base or Constraints()
    ranges = dict(base.ranges)
    allowed = dict(base.allowed)
    muted = set(base.muted)
    target = base.target_class
    k = base.k

    if not isinstance(obj, dict):
        raise ConstraintError([("*", "constraints must be a JSON object")])
    errors = []
    for name, patch in obj.items():
        if name == "target_class":
            target = None if patch is None else str(patch)
            continue
        if name == "k":
            try:
                k = int(patch)
            except (TypeError, ValueError):
                errors.append(("k", f"not an integer: {patch!r}"))
            continue
        if not isinstance(patch, dict):
            errors.append((name, f"expected an object, got {patch!r}"))
            continue
        unknown_keys = set(patch) - {"range", "allowed", "mute"}
        if unknown_keys:
            errors.append((name, f"unknown constraint key(s) {sorted(unknown_keys)}"))
            continue
        if "range" in patch:
            r = patch["range"]
            if not (isinstance(r, (list, tuple)) and len(r) == 2):
                errors.append((name, f"range must be [lo, hi], got {r!r}"))
            else:
                ranges[name] = (float(r[0]), float(r[1]))
        if "allowed" in patch:
            a = patch["allowed"]
            if not isinstance(a, (list, tuple)):
                errors.append((name, f"allowed must be a list, got {a!r}"))
            else:
                allowed[name] = tuple(str(v) for v in a)
        if "mute" in patch:
            if patch["mute"]:
                muted.add(name)
            else:
                muted.discard(name)
    if errors:
        raise ConstraintError(errors)
    merged = Constraints(
        ranges=ranges, allowed=allowed, muted=frozenset(muted), target_class=target, k=k
    )
    merged.validate(schema)
    return merged


def constraints_to_dict(constraints: Constraints) -> dict:
    out: dict = {}
    for name, (lo, hi) in sorted(constraints.ranges.items()):
        out.setdefault(name, {})["range"] = [lo, hi]
    for name, cats in sorted(constraints.allowed.items()):
        out.setdefault(name, {})["allowed"] = list(cats)
    for name in sorted(constraints.muted):
        out.setdefault(name, {})["mute"] = True
    if constraints.target_class is not None:
        out["target_class"] = constraints.target_class
    out["k"] = constraints.k
    return out


@dataclass(frozen=True)
class GAConfig:
    """Knobs of the evolutionary search.

    `population_size=None` resolves to n^2 with a floor of 100 and a cap
    of 30,000 (n = number of features). `sparsify` enables the greedy
    revert pass that sets features back to the input value whenever doing
    so keeps the candidate feasible and no farther away.
    """

    population_size: int | None = None
    generations: int = 300
    p_m: float = 0.2
    p_c: float = 0.5
    elite_count: int = 1
    mutation_scale: float = 0.1
    seed: int = 0
    init_attempts_factor: int = 100
    sparsify: bool = True

    def __post_init__(self):
        if not (0.0 <= self.p_m <= 1.0 and 0.0 <= self.p_c <= 1.0):
            raise ValueError("p_m and p_c must lie in [0, 1]")
        if self.generations < 1:
            raise ValueError("generations must be positive")
        if self.elite_count < 0:
            raise ValueError("elite_count must be non-negative")
        if self.population_size is not None:
            if self.population_size < 1:
                raise ValueError("population_size must be positive")
            if self.elite_count >= self.population_size:
                raise ValueError("elite_count must be smaller than the population")
        if self.mutation_scale <= 0.0:
            raise ValueError("mutation_scale must be positive")
        if self.init_attempts_factor < 1:
            raise ValueError("init_attempts_factor must be at least 1")

    def resolve_population(self, n_features: int) -> int:
        if self.population_size is not None:
            return self.population_size
        return min(max(n_features * n_features, POPULATION_FLOOR), POPULATION_CAP)


@dataclass(frozen=True)
class ImageMetric:
    """Selects SSIM-based distance; instances are flat pixel vectors."""

    height: int
    width: int
    window: int = DEFAULT_SSIM_WINDOW

    def __post_init__(self):
        if self.window <= 0 or self.window % 2 == 0:
            raise ValueError("ssim window must be an odd positive integer")
        if self.window > min(self.height, self.width):
            raise ValueError("ssim window exceeds image size")


@dataclass(frozen=True)
class Counterfactual:
    values: tuple
    distance: float
    fitness: float
    predicted_class: str
    changed: tuple  # of (feature_index, before, after)

    def changed_indices(self) -> frozenset:
        return frozenset(idx for idx, _, _ in self.changed)


@dataclass
class CounterfactualResult:
    input_values: tuple
    input_class: str
    counterfactuals: list
    warnings: list
    best_fitness_per_generation: list
    generations_run: int
    init_attempts: int


def result_to_dict(result: CounterfactualResult, schema: FeatureSchema) -> dict:
    cfs = []
    for cf in result.counterfactuals:
        cfs.append(
            {
                "values": list(cf.values),
                "distance": cf.distance,
                "fitness": cf.fitness,
                "class": cf.predicted_class,
                "changed": [
                    {
                        "feature": schema.features[idx].name,
                        "from": before,
                        "to": after,
                    }
                    for idx, before, after in cf.changed
                ],
            }
        )
    return {
        "input": list(result.input_values),
        "input_class": result.input_class,
        "counterfactuals": cfs,
        "warnings": list(result.warnings),
    }


def pixel_schema(height: int, width: int, classes) -> FeatureSchema:
    """Schema treating every pixel of a height x width image as a feature."""
    digits = len(str(height * width - 1))
    features = tuple(
        FeatureSpec(name=f"px{idx:0{digits}d}", kind=CONTINUOUS, min=0.0, max=1.0)
        for idx in range(height * width)
    )
    return FeatureSchema(features=features, target_name="label", classes=tuple(classes))


def derive_seed(master_seed: int, index: int) -> int:
    """Stable per-item seed for audits that generate many counterfactuals."""
    ss = np.random.SeedSequence((int(master_seed) & 0xFFFFFFFFFFFFFFFF, int(index)))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class _SearchSpace:
    """Encoded view of the constrained feature space around one input.

    Continuous features stay raw floats; categorical features become
    integer codes into the schema's category list. Muted features (the
    explicit set plus schema-immutables) are pinned to the input value.
    """

    def __init__(self, schema: FeatureSchema, x: tuple, constraints: Constraints):
        self.schema = schema
        self.n = schema.n
        self.muted_names = constraints.effective_muted(schema)
        self.cont_mask = np.array([f.is_continuous for f in schema.features])
        self.muted_mask = np.array([f.name in self.muted_names for f in schema.features])

        self.lo = np.zeros(self.n)
        self.hi = np.zeros(self.n)
        self.allowed_codes: list = [None] * self.n
        self.x_enc = np.zeros(self.n)
        for i, (spec, xv) in enumerate(zip(schema.features, x)):
            if spec.is_continuous:
                lo, hi = constraints.ranges.get(spec.name, (spec.min, spec.max))
                self.lo[i], self.hi[i] = lo, hi
                self.x_enc[i] = xv
                if spec.name in self.muted_names:
                    # mute wins over any range override: W_i = {x_i}
                    self.lo[i] = self.hi[i] = xv
            else:
                cats = constraints.allowed.get(spec.name, spec.categories)
                codes = np.array([spec.categories.index(c) for c in cats])
                code_x = spec.categories.index(xv)
                self.x_enc[i] = code_x
                if spec.name in self.muted_names:
                    codes = np.array([code_x])
                self.allowed_codes[i] = codes

        self.sigma = np.zeros(self.n)
        mutable_sets = 0
        for i, spec in enumerate(schema.features):
            if spec.is_continuous:
                self.sigma[i] = self.hi[i] - self.lo[i]
                if self.hi[i] > self.lo[i]:
                    mutable_sets += 1
            else:
                if len(self.allowed_codes[i]) > 1:
                    mutable_sets += 1
        self.only_input = mutable_sets == 0 and self._space_is_input_only()

    def _space_is_input_only(self) -> bool:
        for i, spec in enumerate(self.schema.features):
            if spec.is_continuous:
                if self.lo[i] != self.x_enc[i] or self.hi[i] != self.x_enc[i]:
                    return False
            else:
                codes = self.allowed_codes[i]
                if len(codes) != 1 or codes[0] != self.x_enc[i]:
                    return False
        return True

    def sample(self, rng: np.random.Generator, count: int) -> np.ndarray:
        out = np.empty((count, self.n))
        for i, spec in enumerate(self.schema.features):
            if self.muted_mask[i]:
                out[:, i] = self.x_enc[i]
            elif spec.is_continuous:
                out[:, i] = rng.uniform(self.lo[i], self.hi[i], count)
            else:
                codes = self.allowed_codes[i]
                out[:, i] = codes[rng.integers(0, len(codes), count)]
        return out

    def crossover_mutate(self, rng, survivors: np.ndarray, count: int, config: GAConfig) -> np.ndarray:
        s = survivors.shape[0]
        first = survivors[rng.integers(0, s, count)]
        second = survivors[rng.integers(0, s, count)]
        do_cx = rng.random(count) < config.p_c
        swap = rng.random((count, self.n)) < 0.5
        children = np.where((do_cx[:, None] & swap), second, first)

        do_mut = rng.random(count) < config.p_m
        feature_mask = rng.random((count, self.n)) < (1.0 / self.n)
        feature_mask &= do_mut[:, None]
        feature_mask[:, self.muted_mask] = False
        for i, spec in enumerate(self.schema.features):
            if self.muted_mask[i]:
                continue
            if spec.is_continuous:
                noise = rng.standard_normal(count) * (config.mutation_scale * self.sigma[i])
                mutated = np.clip(children[:, i] + noise, self.lo[i], self.hi[i])
                children[:, i] = np.where(feature_mask[:, i], mutated, children[:, i])
            else:
                codes = self.allowed_codes[i]
                draws = codes[rng.integers(0, len(codes), count)]
                children[:, i] = np.where(feature_mask[:, i], draws, children[:, i])
        return children

    def decode_row(self, row: np.ndarray) -> tuple:
        values = []
        for i, spec in enumerate(self.schema.features):
            if spec.is_continuous:
                values.append(float(row[i]))
            else:
                values.append(spec.categories[int(row[i])])
        return tuple(values)

    def decode(self, enc: np.ndarray) -> list:
        return [self.decode_row(row) for row in enc]

    def value_allowed(self, i: int, enc_value: float) -> bool:
        spec = self.schema.features[i]
        if spec.is_continuous:
            return self.lo[i] <= enc_value <= self.hi[i]
        return enc_value in self.allowed_codes[i]


class _MixedMetric:
    def __init__(self, schema: FeatureSchema, stats: DatasetStats, space: _SearchSpace):
        self.schema = schema
        self.stats = stats
        self.space = space
        scales = np.zeros(schema.n)
        for i, spec in enumerate(schema.features):
            if spec.is_continuous:
                scales[i] = norm_scale(stats.mads[spec.name], stats.ranges[spec.name])
        self.scales = scales

    def rank(self, enc: np.ndarray) -> np.ndarray:
        return mixed_distance_batch(self.space.x_enc, enc, self.space.cont_mask, self.scales)

    def final_distance(self, x_values: tuple, c_values: tuple) -> float:
        return mixed_distance(x_values, c_values, self.schema, self.stats)


class _SsimMetric:
    def __init__(self, x_enc: np.ndarray, image: ImageMetric):
        self.image = image
        self.x_img = x_enc.reshape(image.height, image.width)

    def rank(self, enc: np.ndarray) -> np.ndarray:
        imgs = enc.reshape(-1, self.image.height, self.image.width)
        s = ssim_batch(self.x_img, imgs, self.image.window)
        return np.where(s > SSIM_EPS, 1.0 / np.maximum(s, SSIM_EPS), _INVALID_RANK_BASE + (1.0 - s))

    def final_distance(self, x_values: tuple, c_values: tuple) -> float:
        h, w = self.image.height, self.image.width
        a = np.asarray(x_values, dtype=float).reshape(h, w)
        b = np.asarray(c_values, dtype=float).reshape(h, w)
        s = float(ssim_batch(a, b[np.newaxis], self.image.window)[0])
        if s <= SSIM_EPS:
            raise DistanceError(f"SSIM {s:.3g} too small for a defined distance")
        return 1.0 / s


class SearchProblem:
    """Binds an input instance, predictor, metric, and constraints."""

    def __init__(self, x, f, schema: FeatureSchema, stats: DatasetStats | None = None,
                 constraints: Constraints | None = None, image: ImageMetric | None = None):
        self.schema = schema
        self.x = schema.validate_instance(x)
        self.constraints = constraints or Constraints()
        self.constraints.validate(schema)
        self.f = f
        self.input_class = f.predict_batch([self.x])[0]
        if self.constraints.target_class is not None and self.constraints.target_class == self.input_class:
            raise ConstraintError(
                [("target_class", f"target equals the model's prediction {self.input_class!r} for this input")]
            )
        self.space = _SearchSpace(schema, self.x, self.constraints)
        if image is not None:
            if schema.n != image.height * image.width:
                raise ConstraintError(
                    [("*", f"schema has {schema.n} features; image needs {image.height * image.width}")]
                )
            self.metric = _SsimMetric(self.space.x_enc, image)
        else:
            if stats is None:
                raise ValueError("tabular search needs dataset stats for the mixed distance")
            self.metric = _MixedMetric(schema, stats, self.space)

    def feasible(self, enc: np.ndarray) -> np.ndarray:
        labels = self.f.predict_batch(self.space.decode(enc))
        target = self.constraints.target_class
        if target is not None:
            return np.array([lab == target for lab in labels])
        return np.array([lab != self.input_class for lab in labels])


@dataclass
class Population:
    problem: SearchProblem
    config: GAConfig
    enc: np.ndarray
    rank: np.ndarray
    warnings: list
    attempts: int

    @property
    def size(self) -> int:
        return self.enc.shape[0]

    def best_fitness(self) -> float:
        return 1.0 / float(self.rank.min())


def initialize_population(x, f, schema, stats=None, constraints=None, config=None,
                          rng=None, image=None, deadline=None) -> Population:
    """Rejection-sample a feasible starting population.

    Raises InfeasibleSpaceError when not a single feasible individual
    turns up within init_attempts_factor * population_size samples.
    """
    config = config or GAConfig()
    problem = x if isinstance(x, SearchProblem) else SearchProblem(x, f, schema, stats, constraints, image)
    if rng is None:
        rng = np.random.default_rng(config.seed)
    return _initialize(problem, config, rng, deadline)


def _initialize(problem: SearchProblem, config: GAConfig, rng, deadline=None) -> Population:
    size = config.resolve_population(problem.schema.n)
    if config.elite_count >= size:
        raise ValueError("elite_count must be smaller than the resolved population size")
    if problem.space.only_input:
        raise InfeasibleSpaceError(
            "search space contains only the input instance (every feature is fixed)",
            attempts=0,
        )
    max_attempts = config.init_attempts_factor * size
    kept = []
    found = 0
    attempts = 0
    warnings = []
    while found < size and attempts < max_attempts:
        chunk = min(size, max_attempts - attempts)
        candidates = problem.space.sample(rng, chunk)
        attempts += chunk
        mask = problem.feasible(candidates)
        if mask.any():
            kept.append(candidates[mask])
            found += int(mask.sum())
        if deadline is not None and time.monotonic() > deadline:
            if found == 0:
                raise TimeBudgetError(
                    f"time budget exhausted during initialization after {attempts} samples"
                )
            warnings.append("budget_exhausted")
            break
    if found == 0:
        raise InfeasibleSpaceError(
            f"no feasible individual found in {attempts} samples; "
            "the constrained space may not contain the requested class",
            attempts=attempts,
        )
    enc = np.concatenate(kept, axis=0)[:size]
    if enc.shape[0] < size and "budget_exhausted" not in warnings:
        warnings.append(
            f"sparse_feasible_space: initialized {enc.shape[0]} of {size} individuals"
        )
    rank = problem.metric.rank(enc)
    return Population(problem=problem, config=config, enc=enc, rank=rank,
                      warnings=warnings, attempts=attempts)


def evolve(population: Population, rng: np.random.Generator) -> Population:
    """Advance one generation; the best individual never regresses."""
    problem = population.problem
    config = population.config
    m = population.size
    order = np.argsort(population.rank, kind="stable")
    elite_count = min(config.elite_count, m)
    elites = population.enc[order[:elite_count]]
    survivors = population.enc[order[: max(1, m // 2)]]

    needed = m - elite_count
    accepted = []
    got = 0
    warnings = list(population.warnings)
    if needed > 0:
        children = problem.space.crossover_mutate(rng, survivors, needed, config)
        mask = problem.feasible(children)
        if mask.any():
            accepted.append(children[mask][:needed])
            got = int(mask.sum())

        # top up discarded infeasible slots with fresh rejection samples
        missing = needed - got
        refill_budget = config.init_attempts_factor * max(missing, 1)
        spent = 0
        while got < needed and spent < refill_budget:
            chunk = min(max(missing, 1), refill_budget - spent)
            fresh = problem.space.sample(rng, chunk)
            spent += chunk
            mask = problem.feasible(fresh)
            if mask.any():
                take = fresh[mask][: needed - got]
                accepted.append(take)
                got += take.shape[0]
        if got < needed:
            warnings.append("population_collapse: offspring resampling exhausted")

    if got > 0:
        enc = np.concatenate([elites] + accepted, axis=0)
    else:
        enc = np.concatenate([elites, survivors], axis=0)[:m]
    rank = problem.metric.rank(enc)
    return Population(problem=problem, config=config, enc=enc, rank=rank,
                      warnings=warnings, attempts=population.attempts)


def _sparsify(problem: SearchProblem, row: np.ndarray, rank_value: float) -> tuple[np.ndarray, float]:
    """Greedily revert changed features back to the input value.

    A revert is kept when the candidate stays feasible and gets no
    farther from the input. Features are visited in decreasing order of
    their share of the current rank value, so the biggest detours are
    undone first.
    """
    space = problem.space
    current = row.copy()
    current_rank = rank_value
    changed = [i for i in range(space.n) if current[i] != space.x_enc[i]]
    if isinstance(problem.metric, _MixedMetric):
        scales = problem.metric.scales

        def contribution(i):
            if space.cont_mask[i]:
                return abs(current[i] - space.x_enc[i]) / scales[i] if scales[i] > 0 else 0.0
            return 1.0

    else:
        def contribution(i):
            return abs(current[i] - space.x_enc[i])

    changed.sort(key=lambda i: (-contribution(i), i))
    for i in changed:
        if not space.value_allowed(i, space.x_enc[i]):
            continue
        trial = current.copy()
        trial[i] = space.x_enc[i]
        if not problem.feasible(trial[np.newaxis])[0]:
            continue
        trial_rank = float(problem.metric.rank(trial[np.newaxis])[0])
        if trial_rank <= current_rank:
            current = trial
            current_rank = trial_rank
    return current, current_rank


def _build_counterfactual(problem: SearchProblem, row: np.ndarray, label: str) -> Counterfactual:
    values = problem.space.decode_row(row)
    distance = problem.metric.final_distance(problem.x, values)
    changed = tuple(
        (i, problem.x[i], values[i])
        for i in range(problem.schema.n)
        if values[i] != problem.x[i]
    )
    return Counterfactual(
        values=values,
        distance=distance,
        fitness=fitness_fn(distance),
        predicted_class=label,
        changed=changed,
    )


def generate_counterfactuals(x, f, schema: FeatureSchema, stats: DatasetStats | None = None,
                             constraints: Constraints | None = None, config: GAConfig | None = None,
                             image: ImageMetric | None = None,
                             time_budget_s: float | None = None) -> CounterfactualResult:
    """Run the full search and return the k best diverse counterfactuals.

    Diversity means pairwise-distinct sets of changed feature indices; if
    the final population cannot supply k such candidates, the result
    carries a shortfall warning. With a time budget, the search stops
    early and reports best-so-far rather than failing (it only errors if
    no feasible individual was found before the budget ran out).
    """
    config = config or GAConfig()
    constraints = constraints or Constraints()
    problem = SearchProblem(x, f, schema, stats, constraints, image)
    rng = np.random.default_rng(config.seed)
    deadline = time.monotonic() + time_budget_s if time_budget_s is not None else None

    population = _initialize(problem, config, rng, deadline)
    best_trace = [population.best_fitness()]
    generations_run = 0
    for _ in range(config.generations):
        if deadline is not None and time.monotonic() > deadline:
            if "budget_exhausted" not in population.warnings:
                population.warnings.append("budget_exhausted")
            break
        population = evolve(population, rng)
        best_trace.append(population.best_fitness())
        generations_run += 1

    k = constraints.k
    order = np.argsort(population.rank, kind="stable")
    scan_cap = min(population.size, max(256, 16 * k))
    selected: list[Counterfactual] = []
    selected_sets: list[frozenset] = []
    seen_rows: set[bytes] = set()
    warnings = list(population.warnings)

    for idx in order[:scan_cap]:
        if len(selected) == k:
            break
        row = population.enc[idx]
        key = row.tobytes()
        if key in seen_rows:
            continue
        seen_rows.add(key)
        rank_value = float(population.rank[idx])
        if rank_value >= _INVALID_RANK_BASE:
            continue  # image candidate with undefined distance
        if config.sparsify:
            row, rank_value = _sparsify(problem, row, rank_value)
        label = f.predict_batch([problem.space.decode_row(row)])[0]
        target = constraints.target_class
        valid = label == target if target is not None else label != problem.input_class
        if not valid:
            warnings.append("dropped a candidate that failed re-verification")
            continue
        cf = _build_counterfactual(problem, row, label)
        if cf.changed_indices() in selected_sets:
            continue
        changed_names = {problem.schema.features[i].name for i in cf.changed_indices()}
        if changed_names & problem.space.muted_names:
            raise AssertionError("engine bug: a muted feature was altered")
        selected.append(cf)
        selected_sets.append(cf.changed_indices())

    if len(selected) < k:
        warnings.append(f"diversity shortfall: found {len(selected)} of {k} requested")
    selected.sort(key=lambda cf: -cf.fitness)

    return CounterfactualResult(
        input_values=problem.x,
        input_class=problem.input_class,
        counterfactuals=selected,
        warnings=warnings,
        best_fitness_per_generation=best_trace,
        generations_run=generations_run,
        init_attempts=population.attempts,
    )


def fitness_of(x, c, schema: FeatureSchema, stats: DatasetStats) -> float:
    """Fitness of candidate c for input x under the mixed distance."""
    d = mixed_distance(x, c, schema, stats)
    return fitness_fn(d)
