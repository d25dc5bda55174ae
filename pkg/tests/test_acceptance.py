"""Acceptance suite: one test per release criterion, each printing a PASS
line (run with ``pytest tests/test_acceptance.py -v -s``).

Everything is exact-oracle or property based: random games have all subset
values known, so greedy selections, decomposition identities, and detector
call counts can be checked against independent enumeration. Tolerances are
fixed here and nowhere else.
"""

import math
import time
from itertools import combinations

import numpy as np
import pytest

from conftest import additive_setup, class_reward, game_setup, line_grid

from vxcode.cli import main
from vxcode.detector import AdditiveDetector, to_float_image
from vxcode.engine import (
    EngineConfig,
    MODE_DELETION,
    MODE_INSERTION,
    ExplanationTrace,
    TraceStep,
    delete_run,
    evaluation_budget,
    insert_run,
)
from vxcode.geometry import BBox, PatchGrid
from vxcode.heatmap import build_heatmap
from vxcode.metrics import (
    Curve,
    auc,
    energy_pointing_game,
    perturbation_curve,
    pointing_game,
)
from vxcode.oracle import (
    GameSpec,
    absence_shapley,
    additive_game,
    deletion_decomposition_residual,
    insertion_decomposition_residual,
    random_game,
    shapley_exact,
)
from vxcode.rng import SplitMix64
from vxcode.synth import scene_image

IDENTITY_TOLERANCE = 1e-12
AXIOM_TOLERANCE = 1e-10


def report(name):
    print(f"\nACCEPTANCE PASS: {name}")


def test_oracle_identity_suite():
    """Decomposition residuals vanish on 1000 random games (n <= 8) in < 60 s."""
    started = time.monotonic()
    rng = SplitMix64(2024)
    worst = 0.0
    for trial in range(1000):
        n = rng.randint(2, 8)
        game = random_game(n, seed=rng.next_u64())
        players = list(range(n))
        rng.shuffle(players)
        cases = []
        # first-step grouped forms (r = 2 and, where possible, r = 3)
        for r in (2, 3):
            if n >= r:
                cases.append(((), players[:r]))
        # later-step forms for r = 1 and r = 2, with a random prior
        for r in (1, 2):
            if n >= r + 1:
                prior_size = rng.randint(1, n - r)
                cases.append((players[:prior_size], players[prior_size : prior_size + r]))
        for prior, group in cases:
            worst = max(worst, insertion_decomposition_residual(game, prior, group))
            worst = max(worst, deletion_decomposition_residual(game, prior, group))
            assert worst < IDENTITY_TOLERANCE
    elapsed = time.monotonic() - started
    assert elapsed < 60.0, f"identity suite took {elapsed:.1f}s"
    report(
        f"oracle identity suite (1000 games, max residual {worst:.2e}, {elapsed:.1f}s)"
    )


def test_shapley_axioms():
    """Efficiency, symmetry, dummy, and additive recovery at 1e-10 on 200 games."""
    rng = SplitMix64(4096)
    for trial in range(200):
        n = rng.randint(2, 10)
        game = random_game(n, seed=rng.next_u64())

        # efficiency: the values distribute the grand-coalition surplus
        total = math.fsum(shapley_exact(game, i) for i in range(n))
        expected = game.value_mask(game.full_mask) - game.value_mask(0)
        assert abs(total - expected) < AXIOM_TOLERANCE

        # symmetry: averaging over a swap makes players 0 and 1 exchangeable
        def symmetrized(subset):
            swapped = tuple(sorted(1 if i == 0 else 0 if i == 1 else i for i in subset))
            return 0.5 * (game.value(subset) + game.value(swapped))

        sym = GameSpec.from_function(n, symmetrized)
        assert abs(shapley_exact(sym, 0) - shapley_exact(sym, 1)) < AXIOM_TOLERANCE

        # dummy: an appended player with zero marginals earns nothing
        padded = GameSpec.from_function(
            n + 1, lambda s: game.value(tuple(i for i in s if i != n))
        )
        assert abs(shapley_exact(padded, n)) < AXIOM_TOLERANCE
        assert abs(absence_shapley(padded, n)) < AXIOM_TOLERANCE

        # additive game: each player earns exactly its weight
        weights = [rng.uniform(0, 0.2) for _ in range(n)]
        adder = additive_game(weights)
        for i in range(n):
            assert abs(shapley_exact(adder, i) - weights[i]) < AXIOM_TOLERANCE
    report("shapley axioms (efficiency/symmetry/dummy/additive, 200 games)")


def _exhaustive_check(game, trace, r, mode):
    chosen = []
    remaining = set(range(game.n))
    full = frozenset(range(game.n))
    for step in trace.steps:
        size = min(r, len(remaining))
        best_group, best_value = None, None
        for combo in combinations(sorted(remaining), size):
            keep = set(chosen) | set(combo)
            if mode == MODE_INSERTION:
                value = game.value(tuple(sorted(keep)))
                wins = best_value is None or value > best_value
            else:
                value = game.value(tuple(sorted(full - keep)))
                wins = best_value is None or value < best_value
            if wins:
                best_group, best_value = combo, value
        assert step.selected == best_group, (
            f"step {step.index}: engine chose {step.selected}, exhaustive {best_group}"
        )
        chosen.extend(step.selected)
        remaining -= set(step.selected)


def test_greedy_step_optimality():
    """Every greedy step is the exhaustive argmax/argmin (50 games, n <= 12)."""
    rng = SplitMix64(555)
    sizes = [rng.randint(4, 11) for _ in range(48)] + [12, 12]
    for trial, n in enumerate(sizes):
        game = random_game(n, seed=rng.next_u64())
        detector, image, grid = game_setup(game.values, n)
        for r in (1, 2, 3):
            for mode in (MODE_INSERTION, MODE_DELETION):
                cfg = EngineConfig(
                    mode=mode, reward=class_reward(), group_size=r,
                    select_top=n, gamma=1.0,
                )
                run = insert_run if mode == MODE_INSERTION else delete_run
                trace = run(detector, image, grid, range(n), cfg)
                _exhaustive_check(game, trace, r, mode)
    report("greedy step-optimality (50 games, r in {1,2,3}, both modes)")


def test_synergy_detection():
    """A dominant pair is found by grouped selection but missed at r=1."""
    values = np.zeros(8)
    values[0b001] = 0.05   # {0}
    values[0b010] = 0.05   # {1}
    values[0b100] = 0.3    # {2}
    values[0b011] = 0.9    # {0,1}: the synergy pair
    values[0b101] = 0.35
    values[0b110] = 0.35
    values[0b111] = 1.0
    detector, image, grid = game_setup(values, 3)

    paired = insert_run(
        detector, image, grid, range(3),
        EngineConfig(mode=MODE_INSERTION, reward=class_reward(),
                     group_size=2, select_top=3, gamma=1.0),
    )
    assert paired.steps[0].selected == (0, 1)

    single = insert_run(
        detector, image, grid, range(3),
        EngineConfig(mode=MODE_INSERTION, reward=class_reward()),
    )
    assert single.steps[0].selected == (2,)
    report("synergy detection (r=2 finds the pair, r=1 takes the lone patch)")


def _budget_grid(n):
    shapes = {10: (2, 5), 64: (8, 8), 256: (16, 16)}
    d_h, d_w = shapes[n]
    return PatchGrid(image_w=d_w, image_h=d_h, d_h=d_h, d_w=d_w)


def test_budget_exactness():
    """Instrumented detector calls equal the predicted budget on the full
    (n, r, L, gamma) product; deletion included at the two smaller sizes."""
    rng = SplitMix64(777)
    checked = 0
    for n in (10, 64, 256):
        grid = _budget_grid(n)
        image = to_float_image(scene_image(grid.image_w, grid.image_h, seed=n))
        weights = {i: rng.uniform(0, 2.0 / n) for i in range(n)}
        box = BBox(0, 0, grid.image_w, grid.image_h)
        for r in (1, 2):
            for width in (8, 30):
                for gamma in (0.0, 0.1, 1.0):
                    predicted = evaluation_budget(n, r, width, gamma)
                    modes = (MODE_INSERTION, MODE_DELETION) if n <= 64 else (MODE_INSERTION,)
                    for mode in modes:
                        detector = AdditiveDetector(weights, box, 0, 2, image, grid)
                        cfg = EngineConfig(
                            mode=mode, reward=class_reward(), group_size=r,
                            select_top=width, gamma=gamma,
                        )
                        run = insert_run if mode == MODE_INSERTION else delete_run
                        trace = run(detector, image, grid, range(n), cfg)
                        assert trace.step_evaluations() == predicted
                        assert detector.calls == predicted + 1  # + baseline
                        checked += 1
    assert evaluation_budget(10, 1, 30, 0.1) == 55
    report(f"budget exactness ({checked} runs, incl. r=1 n=10 -> 55 calls)")


def test_faithfulness_dominance():
    """The engine's own order beats random orders on seeded additive games."""
    n = 64
    insertion_wins = 0
    deletion_wins = 0
    seeds = range(20)
    for seed in seeds:
        rng = SplitMix64(9000 + seed)
        weights = {i: rng.uniform(0.2, 1.0) for i in range(n)}
        scale = 0.9 / math.fsum(weights.values())
        weights = {i: w * scale for i, w in weights.items()}
        detector, image, grid = additive_setup(weights, n, seed=rng.next_u64())
        reward = class_reward()

        ins_cfg = EngineConfig(mode=MODE_INSERTION, reward=reward)
        ins_trace = insert_run(detector, image, grid, range(n), ins_cfg)
        engine_ins = auc(
            perturbation_curve(detector, image, grid, ins_trace.patch_order(),
                               MODE_INSERTION, reward)
        )
        del_cfg = EngineConfig(mode=MODE_DELETION, reward=reward)
        del_trace = delete_run(detector, image, grid, range(n), del_cfg)
        engine_del = auc(
            perturbation_curve(detector, image, grid, del_trace.patch_order(),
                               MODE_DELETION, reward)
        )

        random_ins, random_del = [], []
        for _ in range(50):
            order = list(range(n))
            rng.shuffle(order)
            random_ins.append(
                auc(perturbation_curve(detector, image, grid, order, MODE_INSERTION, reward))
            )
            random_del.append(
                auc(perturbation_curve(detector, image, grid, order, MODE_DELETION, reward))
            )
        if engine_ins > np.mean(random_ins):
            insertion_wins += 1
        if engine_del < np.mean(random_del):
            deletion_wins += 1
    assert insertion_wins >= 19, f"insertion wins: {insertion_wins}/20"
    assert deletion_wins >= 19, f"deletion wins: {deletion_wins}/20"
    report(
        f"faithfulness dominance (insertion {insertion_wins}/20, "
        f"deletion {deletion_wins}/20 vs 50 random orders)"
    )


def test_bias_scenario(tmp_path):
    """The marker-biased detector yields marker + instance patches early; the
    unbiased control keeps the marker out of the early picks."""
    out = tmp_path / "bias"
    assert main(["bias-bench", "--seed", "11", "--out", str(out)]) == 0
    report_text = (out / "bias_report.txt").read_text()
    fields = dict(line.split(" ", 1) for line in report_text.splitlines())
    window = int(fields["window"])
    assert fields["status"] == "pass"
    assert 1 <= int(fields["marker_step"]) <= window
    assert 1 <= int(fields["first_instance_step"]) <= window

    control = tmp_path / "control"
    assert main(["bias-bench", "--seed", "11", "--beta", "0", "--out", str(control)]) == 0
    control_text = (control / "bias_report.txt").read_text()
    assert "marker_step -1" in control_text
    report("bias scenario (marker+instance early; beta=0 negative control)")


def test_table_arithmetic():
    """The published insertion/deletion/over-all triples are consistent."""
    from vxcode.metrics import overall

    triples = [
        (0.904, 0.053, 0.851), (0.906, 0.052, 0.854), (0.909, 0.052, 0.857),
        (0.912, 0.072, 0.840), (0.918, 0.069, 0.849), (0.922, 0.067, 0.855),
        (0.841, 0.073, 0.768), (0.835, 0.069, 0.766), (0.838, 0.067, 0.771),
        (0.827, 0.067, 0.760), (0.841, 0.066, 0.775), (0.850, 0.063, 0.787),
    ]
    for ins, dele, oa in triples:
        assert overall(ins, dele) == pytest.approx(oa, abs=1e-12)
    report("table arithmetic (12 published insertion/deletion/over-all triples)")


def test_heatmap_conformance():
    """Hand-traced heat maps match exactly; the first patch always gets 1.0."""
    grid = line_grid(3)

    def trace_of(mode, rewards, baseline):
        steps = tuple(
            TraceStep(index=k + 1, selected=(k,), reward=r, evaluations=1)
            for k, r in enumerate(rewards)
        )
        return ExplanationTrace(mode=mode, grid=grid, candidates=(0, 1, 2),
                                baseline=baseline, steps=steps)

    ins = build_heatmap(trace_of("insertion", [0.5, 0.8, 1.0], 0.0))
    assert ins[0, 0] == 1.0
    assert ins[0, 1] == 1.0 - 0.5
    assert ins[0, 2] == 1.0 - 0.8

    dele = build_heatmap(trace_of("deletion", [0.6, 0.3, 0.0], 1.0))
    assert dele[0, 0] == 1.0
    assert dele[0, 1] == 0.6
    assert dele[0, 2] == 0.3

    rng = SplitMix64(31)
    for trial in range(25):
        n = rng.randint(1, 8)
        g = line_grid(n)
        order = list(range(n))
        rng.shuffle(order)
        rewards = [rng.uniform() for _ in range(n)]
        steps = tuple(
            TraceStep(index=k + 1, selected=(p,), reward=r, evaluations=1)
            for k, (p, r) in enumerate(zip(order, rewards))
        )
        trace = ExplanationTrace(mode="insertion", grid=g,
                                 candidates=tuple(range(n)), baseline=0.0, steps=steps)
        heat = build_heatmap(trace)
        assert heat[0, order[0]] == 1.0
        assert heat.max() == 1.0
    report("heat-map conformance (hand-traced values exact, first patch 1.0)")


def test_metrics_criteria():
    """AUC edge values, energy proportionality, argmax invariance."""
    fracs = tuple(i / 4 for i in range(5))
    assert auc(Curve(fracs, (1.0,) * 5)) == pytest.approx(1.0, abs=1e-12)
    assert auc(Curve(fracs, (0.0,) * 5)) == 0.0
    assert auc(Curve(fracs, fracs)) == pytest.approx(0.5, abs=1e-12)

    uniform = np.ones((16, 16))
    assert energy_pointing_game(uniform, BBox(0, 0, 8, 8)) == pytest.approx(0.25)
    rng = SplitMix64(77)
    heat = np.array([[rng.uniform() for _ in range(8)] for _ in range(8)])
    region = BBox(2, 2, 6, 6)
    base_energy = energy_pointing_game(heat, region)
    assert energy_pointing_game(3.5 * heat, region) == pytest.approx(base_energy)

    base_hit = pointing_game(heat, region)
    for transform in (lambda h: h ** 3, lambda h: 0.2 * h + 0.05, np.exp):
        assert pointing_game(transform(heat), region) == base_hit
    report("metrics (trapezoid AUC values, EPG proportionality, PG invariance)")
