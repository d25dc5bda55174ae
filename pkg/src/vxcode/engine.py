"""Greedy patch insertion and deletion with grouped steps.

Insertion starts from an empty (all-masked) image and repeatedly adds the
patch group that maximizes the detection reward; deletion starts from the
original image and removes the group that minimizes it. With group size >= 2
a step first scores every remaining patch individually, keeps the top-scoring
pool, and enumerates all group combinations within the pool; grouped steps
run only until a configured fraction of the patches has been identified,
after which selection falls back to one patch per step.

Each run produces an ExplanationTrace recording the selected patches, the
reward after every step, and the per-step detector-call counts. The
predicted call count for a configuration is available separately via
``evaluation_budget`` and matches the instrumented counts exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations
from math import comb

import numpy as np

from .detector import DetectorHandle, mask_apply
from .geometry import PatchGrid
from .reward import RewardSpec, evaluate_reward

MODE_INSERTION = "insertion"
MODE_DELETION = "deletion"
TIE_BREAK_LOWEST_INDEX = "lowest-index"

TRACE_HEADER = "vxcode-trace v1"


@dataclass(frozen=True)
class EngineConfig:
    """Greedy run parameters.

    group_size: patches selected jointly per step (r in configs).
    select_top: width of the individually-scored pool that grouped steps
        enumerate combinations from (L in configs).
    gamma: fraction of the patches that may be identified by grouped steps
        before falling back to single-patch selection; the grouped branch is
        active while the selected count is <= gamma * n (inclusive).
    tie_break: deterministic argmax/argmin tie rule; the only supported rule
        prefers the lowest patch index (lexicographically smallest group).
    """

    mode: str
    reward: RewardSpec
    group_size: int = 1
    select_top: int = 30
    gamma: float = 0.1
    tie_break: str = TIE_BREAK_LOWEST_INDEX

    def __post_init__(self) -> None:
        if self.mode not in (MODE_INSERTION, MODE_DELETION):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.group_size < 1:
            raise ValueError("group_size must be at least 1")
        if self.select_top < 1:
            raise ValueError("select_top must be at least 1")
        if self.group_size >= 2 and self.select_top < self.group_size:
            raise ValueError("select_top must be at least group_size")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.tie_break != TIE_BREAK_LOWEST_INDEX:
            raise ValueError(f"unsupported tie_break {self.tie_break!r}")


@dataclass(frozen=True)
class TraceStep:
    """One greedy step: the selected patch group, the reward after the step,
    and how many detector calls the step consumed."""

    index: int
    selected: tuple[int, ...]
    reward: float
    evaluations: int


@dataclass
class ExplanationTrace:
    """Complete record of one greedy run.

    ``baseline`` is the reward before any step (empty image for insertion,
    full image for deletion; one detector call). When the candidate set does
    not cover the grid, the remaining patches are appended after the loop in
    ascending index order and the reward is re-evaluated once at the final
    full/empty point (``final_reward``). ``valid`` is False on traces rescued
    from an aborted run.
    """

    mode: str
    grid: PatchGrid
    candidates: tuple[int, ...]
    baseline: float
    steps: tuple[TraceStep, ...]
    appended: tuple[int, ...] = ()
    final_reward: float | None = None
    valid: bool = True

    def patch_order(self) -> tuple[int, ...]:
        """All patches in identification order (step groups flattened, then
        appended non-candidates)."""
        order: list[int] = []
        for step in self.steps:
            order.extend(step.selected)
        order.extend(self.appended)
        return tuple(order)

    def step_evaluations(self) -> int:
        """Detector calls consumed by the greedy loop itself."""
        return sum(step.evaluations for step in self.steps)

    def total_evaluations(self) -> int:
        """All detector calls of the run: baseline + loop + appended endpoint."""
        return 1 + self.step_evaluations() + (1 if self.appended else 0)

    def last_reward(self) -> float:
        if self.final_reward is not None:
            return self.final_reward
        if self.steps:
            return self.steps[-1].reward
        return self.baseline

    def to_text(self) -> str:
        lines = [
            TRACE_HEADER,
            f"mode {self.mode}",
            f"image {self.grid.image_w} {self.grid.image_h}",
            f"grid {self.grid.d_h} {self.grid.d_w}",
            "candidates " + ",".join(str(i) for i in self.candidates),
            f"baseline {self.baseline!r}",
        ]
        for step in self.steps:
            sel = ",".join(str(i) for i in step.selected)
            lines.append(
                f"step {step.index} patches={sel} reward={step.reward!r} evals={step.evaluations}"
            )
        if self.appended:
            app = ",".join(str(i) for i in self.appended)
            lines.append(f"appended patches={app} reward={self.final_reward!r} evals=1")
        lines.append("end")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ExplanationTrace":
        lines = [ln for ln in text.splitlines() if ln.strip()]
        if not lines or lines[0] != TRACE_HEADER:
            raise ValueError("not a trace file")
        if lines[-1] != "end":
            raise ValueError("truncated trace file")
        fields: dict[str, str] = {}
        steps: list[TraceStep] = []
        appended: tuple[int, ...] = ()
        final_reward: float | None = None
        for line in lines[1:-1]:
            key, _, rest = line.partition(" ")
            if key == "step":
                idx_str, *pairs = rest.split(" ")
                kv = dict(p.split("=", 1) for p in pairs)
                steps.append(
                    TraceStep(
                        index=int(idx_str),
                        selected=_parse_indices(kv["patches"]),
                        reward=float(kv["reward"]),
                        evaluations=int(kv["evals"]),
                    )
                )
            elif key == "appended":
                kv = dict(p.split("=", 1) for p in rest.split(" "))
                appended = _parse_indices(kv["patches"])
                final_reward = float(kv["reward"])
            else:
                fields[key] = rest
        try:
            image_w, image_h = (int(v) for v in fields["image"].split())
            d_h, d_w = (int(v) for v in fields["grid"].split())
            trace = cls(
                mode=fields["mode"],
                grid=PatchGrid(image_w=image_w, image_h=image_h, d_h=d_h, d_w=d_w),
                candidates=_parse_indices(fields["candidates"]),
                baseline=float(fields["baseline"]),
                steps=tuple(steps),
                appended=appended,
                final_reward=final_reward,
            )
        except KeyError as exc:
            raise ValueError(f"trace file missing field {exc}") from exc
        return trace


def _parse_indices(text: str) -> tuple[int, ...]:
    if not text:
        return ()
    return tuple(int(v) for v in text.split(","))


class EngineError(RuntimeError):
    """Detector failure mid-run; carries the partial trace flagged invalid."""

    def __init__(self, message: str, trace: ExplanationTrace) -> None:
        super().__init__(message)
        self.trace = trace


def select_top(scores: dict[int, float], width: int) -> tuple[int, ...]:
    """The ``width`` highest-scoring patch indices, as an ascending tuple.

    Ties resolve toward the lower index; if fewer than ``width`` patches are
    scored, all of them are returned.
    """
    if width < 1:
        raise ValueError("width must be at least 1")
    ranked = sorted(scores, key=lambda idx: (-scores[idx], idx))
    return tuple(sorted(ranked[:width]))


def evaluation_budget(n_patches: int, group_size: int, select_top_width: int, gamma: float) -> int:
    """Predicted detector-call count of the greedy loop for a configuration.

    Grouped steps cost one call per remaining patch (the scoring pass) plus
    one per combination in the pool; single-patch steps cost one call per
    remaining patch. The run's baseline call and the appended-endpoint call
    for restricted candidate sets are not part of the loop and are excluded.
    """
    if n_patches < 1:
        raise ValueError("n_patches must be at least 1")
    remaining = n_patches
    selected = 0
    total = 0
    while remaining:
        step_size = min(group_size, remaining)
        if step_size >= 2 and selected <= gamma * n_patches:
            total += remaining + comb(min(select_top_width, remaining), step_size)
            selected += step_size
            remaining -= step_size
        else:
            total += remaining
            selected += 1
            remaining -= 1
    return total


class _MaskedRewardFn:
    """Reward of the image with exactly the given patches kept."""

    def __init__(self, detector: DetectorHandle, image: np.ndarray, grid: PatchGrid,
                 reward: RewardSpec) -> None:
        self._detector = detector
        self._image = image
        self._grid = grid
        self._reward = reward

    def __call__(self, keep) -> float:
        masked = mask_apply(self._image, self._grid, keep)
        return evaluate_reward(self._detector.detect(masked), self._reward)


def insert_run(detector: DetectorHandle, image: np.ndarray, grid: PatchGrid,
               candidates, config: EngineConfig) -> ExplanationTrace:
    """Greedy patch insertion over the candidate set."""
    if config.mode != MODE_INSERTION:
        raise ValueError("config.mode must be 'insertion' for insert_run")
    return _greedy_run(detector, image, grid, candidates, config)


def delete_run(detector: DetectorHandle, image: np.ndarray, grid: PatchGrid,
               candidates, config: EngineConfig) -> ExplanationTrace:
    """Greedy patch deletion over the candidate set."""
    if config.mode != MODE_DELETION:
        raise ValueError("config.mode must be 'deletion' for delete_run")
    return _greedy_run(detector, image, grid, candidates, config)


def run_explanation(detector: DetectorHandle, image: np.ndarray, grid: PatchGrid,
                    candidates, config: EngineConfig) -> ExplanationTrace:
    """Dispatch to insertion or deletion based on the config mode."""
    if config.mode == MODE_INSERTION:
        return insert_run(detector, image, grid, candidates, config)
    return delete_run(detector, image, grid, candidates, config)


def _greedy_run(detector: DetectorHandle, image: np.ndarray, grid: PatchGrid,
                candidates, config: EngineConfig) -> ExplanationTrace:
    candidates = tuple(sorted(int(c) for c in candidates))
    if not candidates:
        raise ValueError("candidate set must be nonempty")
    if len(set(candidates)) != len(candidates):
        raise ValueError("candidate set contains duplicates")
    if candidates[0] < 0 or candidates[-1] >= grid.n:
        raise ValueError("candidate indices outside the grid")

    insertion = config.mode == MODE_INSERTION
    reward_of = _MaskedRewardFn(detector, image, grid, config.reward)
    all_patches = frozenset(range(grid.n))

    if insertion:
        def eval_selected(sel: list[int]) -> float:
            return reward_of(sel)
    else:
        def eval_selected(sel: list[int]) -> float:
            return reward_of(sorted(all_patches.difference(sel)))

    n_game = len(candidates)
    better = (lambda a, b: a > b) if insertion else (lambda a, b: a < b)

    baseline = float("nan")
    selected: list[int] = []
    remaining = list(candidates)
    steps: list[TraceStep] = []

    def partial_trace() -> ExplanationTrace:
        return ExplanationTrace(
            mode=config.mode, grid=grid, candidates=candidates, baseline=baseline,
            steps=tuple(steps), valid=False,
        )

    try:
        baseline = eval_selected([])
        step_index = 0
        while remaining:
            step_index += 1
            step_size = min(config.group_size, len(remaining))
            grouped = step_size >= 2 and len(selected) <= config.gamma * n_game
            evaluations = 0
            if grouped:
                # Scoring pass: one call per remaining patch. For deletion the
                # pool ranks by how much removing the patch hurts, i.e. by the
                # negated remaining reward.
                scores: dict[int, float] = {}
                for b in remaining:
                    value = eval_selected(selected + [b])
                    evaluations += 1
                    scores[b] = value if insertion else -value
                pool = select_top(scores, config.select_top)
                best_group: tuple[int, ...] | None = None
                best_value = 0.0
                # Pool is ascending, so combinations arrive in lexicographic
                # order and strict comparison keeps the smallest tied group.
                for group in combinations(pool, step_size):
                    value = eval_selected(selected + list(group))
                    evaluations += 1
                    if best_group is None or better(value, best_value):
                        best_group, best_value = group, value
                chosen, chosen_value = best_group, best_value
            else:
                best_patch: int | None = None
                best_value = 0.0
                for b in remaining:
                    value = eval_selected(selected + [b])
                    evaluations += 1
                    if best_patch is None or better(value, best_value):
                        best_patch, best_value = b, value
                chosen, chosen_value = (best_patch,), best_value
            selected.extend(chosen)
            chosen_set = set(chosen)
            remaining = [b for b in remaining if b not in chosen_set]
            steps.append(
                TraceStep(index=step_index, selected=tuple(sorted(chosen)),
                          reward=chosen_value, evaluations=evaluations)
            )

        appended = tuple(sorted(all_patches.difference(candidates)))
        final_reward = None
        if appended:
            final_reward = eval_selected(selected + list(appended))
    except Exception as exc:  # black-box detector: any failure aborts the run
        raise EngineError(f"detector failed during greedy run: {exc}", partial_trace()) from exc

    return ExplanationTrace(
        mode=config.mode, grid=grid, candidates=candidates, baseline=baseline,
        steps=tuple(steps), appended=appended, final_reward=final_reward,
    )
