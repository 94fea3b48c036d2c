"""Importance scoring, thresholding, random and greedy mask construction."""
import numpy as np
import pytest
import torch
import torch.nn as nn

from pathgen.baselines import (
    ScoreField,
    greedy_prune,
    intgrad_importance,
    keep_count,
    magnitude_importance,
    random_mask,
    random_scores,
    taylor_importance,
    threshold_to_mask,
)
from pathgen.instrument import TargetModel
from pathgen.masks import PathwayMask
from pathgen.zoo import ConvClassifier

from conftest import one_conv_model


def positive_linear_model(channels: int = 4) -> TargetModel:
    """Conv stage that never clips on positive inputs: ReLU acts as identity."""
    torch.manual_seed(0)
    conv = nn.Conv2d(3, channels, kernel_size=3, padding=1, bias=False)
    with torch.no_grad():
        conv.weight.abs_()
    head = nn.Linear(channels * 8 * 8, 3)
    features = nn.Sequential(conv, nn.ReLU())
    return TargetModel(ConvClassifier("custom", features, head, (3, 8, 8), 3))


class TestTaylor:
    def test_zero_activation_zero_score(self):
        model = TargetModel(one_conv_model(weight=2.0))
        scores = taylor_importance(model, torch.full((1, 1, 1), -1.0), 0)
        # Negative pixel -> ReLU output 0 -> score 0 regardless of gradient.
        assert scores.layers[0].item() == 0.0

    def test_constant_logit_zero_scores(self):
        net = one_conv_model(weight=2.0)
        with torch.no_grad():
            net.head.weight.zero_()
        model = TargetModel(net)
        scores = taylor_importance(model, torch.full((1, 1, 1), 3.0), 0)
        assert torch.all(scores.layers[0] == 0.0)

    def test_hand_derived_product(self):
        # Activation 6, head weight for class0 on that unit is 1 -> |6 * 1|.
        model = TargetModel(one_conv_model(weight=2.0))
        scores = taylor_importance(model, torch.full((1, 1, 1), 3.0), 0)
        assert scores.layers[0].item() == pytest.approx(6.0)

    def test_finite_difference_oracle(self, toy_model):
        torch.manual_seed(1)
        x = torch.rand(3, 16, 16)
        scores = taylor_importance(toy_model, x, 0)
        _, acts = toy_model.capture_activations(x)
        # FD on a handful of activation entries via a pointwise bump mask.
        rng = torch.Generator().manual_seed(2)
        layer = 1
        flat_idx = torch.randperm(acts.tensors[layer].numel(), generator=rng)[:10]
        for idx in flat_idx:
            a_val = acts.tensors[layer].flatten()[idx].item()
            h = 1e-3
            outs = []
            for bump in (1 + h, 1 - h):
                masks = PathwayMask.ones(toy_model.layer_specs)
                m = masks.masks[layer].flatten()
                m[idx] = bump
                with torch.no_grad():
                    outs.append(toy_model.masked_forward(x, masks)[0].item())
            # d logit / d a = (f(a*(1+h)) - f(a*(1-h))) / (2 h a)
            if a_val == 0.0:
                assert scores.layers[layer].flatten()[idx].item() == 0.0
                continue
            grad = (outs[0] - outs[1]) / (2 * h * a_val)
            expected = abs(a_val * grad)
            assert scores.layers[layer].flatten()[idx].item() == pytest.approx(
                expected, rel=1e-2, abs=1e-4
            )


class TestIntgrad:
    def test_baseline_equals_input_gives_zero(self, toy_model):
        x = torch.rand(3, 16, 16)
        scores = intgrad_importance(toy_model, x, 0, steps=8, baseline=x)
        for layer in scores.layers:
            assert torch.all(layer == 0.0)

    def test_linear_model_equals_activation_times_gradient(self):
        model = positive_linear_model()
        x = torch.rand(3, 8, 8) + 0.1
        scores = intgrad_importance(model, x, 1, steps=20)
        ts = taylor_importance(model, x, 1)  # |a * g| with constant g
        assert torch.allclose(scores.layers[0].abs(), ts.layers[0], atol=1e-5)

    def test_completeness_on_linear_network(self):
        model = positive_linear_model()
        with torch.no_grad():
            model.net.head.bias.zero_()
        x = torch.rand(3, 8, 8) + 0.1
        with torch.no_grad():
            logits, _ = model.capture_activations(x)
        scores = intgrad_importance(model, x, 2, steps=50)
        total = sum(layer.sum().item() for layer in scores.layers)
        assert total == pytest.approx(logits[2].item(), abs=1e-6)

    def test_refinement_convergence(self):
        model = positive_linear_model()
        x = torch.rand(3, 8, 8) + 0.1
        coarse = intgrad_importance(model, x, 0, steps=20).layers[0]
        fine = intgrad_importance(model, x, 0, steps=2000).layers[0]
        rel = (coarse - fine).norm() / fine.norm()
        assert rel.item() <= 1e-3

    def test_steps_validation(self, toy_model):
        with pytest.raises(ValueError, match="steps"):
            intgrad_importance(toy_model, torch.rand(3, 16, 16), 0, steps=1)


class TestMagnitude:
    def test_scores_are_activations(self, toy_model):
        _, acts = toy_model.capture_activations(torch.rand(3, 16, 16))
        scores = magnitude_importance(acts)
        for s, a in zip(scores.layers, acts.tensors):
            assert torch.equal(s, a)

    def test_explicit_values(self):
        field = magnitude_importance([torch.tensor([6.0, 0.0, 2.0])])
        assert field.layers[0].tolist() == [6.0, 0.0, 2.0]


class TestThreshold:
    def test_sparsity_zero_keeps_all(self):
        field = ScoreField([torch.rand(2, 3, 3)])
        mask = threshold_to_mask(field, 0.0)
        assert mask.num_kept() == 18

    def test_exact_top_k(self):
        scores = torch.tensor([5.0, 1.0, 9.0, 3.0, 7.0, 2.0, 8.0, 0.0, 4.0, 6.0])
        mask = threshold_to_mask(ScoreField([scores.reshape(1, 2, 5)]), 0.7)
        kept = mask.masks[0].flatten()
        assert kept.sum() == 3  # ceil(0.3 * 10)
        assert kept[torch.tensor([2, 6, 4])].tolist() == [1.0, 1.0, 1.0]

    def test_tie_break_prefers_lower_flat_index(self):
        scores = torch.tensor([1.0, 1.0, 1.0, 1.0])
        mask = threshold_to_mask(ScoreField([scores.reshape(1, 1, 4)]), 0.5)
        assert mask.masks[0].flatten().tolist() == [1.0, 1.0, 0.0, 0.0]

    def test_exact_counts_random(self):
        rng = np.random.default_rng(0)
        for _ in range(25):
            shape = (int(rng.integers(1, 4)), int(rng.integers(1, 6)), int(rng.integers(1, 6)))
            s = float(rng.uniform(0, 0.99))
            field = ScoreField([torch.rand(shape), torch.rand(shape)])
            mask = threshold_to_mask(field, s)
            for m in mask.masks:
                assert int(m.sum().item()) == keep_count(m.numel(), s)

    def test_global_scope_counts_whole_network(self):
        field = ScoreField([torch.rand(1, 2, 2), torch.rand(1, 4, 4)])
        mask = threshold_to_mask(field, 0.5, scope="global")
        assert mask.num_kept() == keep_count(20, 0.5)

    def test_raising_score_never_drops_element(self):
        torch.manual_seed(3)
        base = torch.rand(1, 3, 3)
        mask = threshold_to_mask(ScoreField([base.clone()]), 0.6)
        kept_idx = (mask.masks[0].flatten() == 1.0).nonzero().flatten()
        target = kept_idx[0].item()
        boosted = base.clone().flatten()
        boosted[target] += 5.0
        mask2 = threshold_to_mask(ScoreField([boosted.reshape(1, 3, 3)]), 0.6)
        assert mask2.masks[0].flatten()[target] == 1.0

    def test_sparsity_one_rejected(self):
        with pytest.raises(ValueError):
            threshold_to_mask(ScoreField([torch.rand(1, 2, 2)]), 1.0)


class TestRandomMask:
    def test_sparsity_zero_all_ones(self):
        mask = random_mask([(2, 3, 3)], 0.0, seed=0)
        assert mask.num_kept() == 18

    def test_seed_reproducible(self):
        a = random_mask([(2, 4, 4), (1, 5, 5)], 0.6, seed=42)
        b = random_mask([(2, 4, 4), (1, 5, 5)], 0.6, seed=42)
        for x, y in zip(a.masks, b.masks):
            assert torch.equal(x, y)

    def test_kept_fraction_over_draws(self):
        # Exact per-draw counts: the fraction over 1000 draws stays within
        # 1% of the target by construction.
        n = 10_000
        s = 0.37
        fractions = []
        for seed in range(1000):
            m = random_mask([(1, 100, 100)], s, seed=seed)
            fractions.append(m.num_kept() / n)
        assert abs(float(np.mean(fractions)) - (1 - s)) <= 0.01

    def test_random_scores_threshold_equivalence(self):
        # Thresholded random scores sample uniformly, like random_mask.
        field = random_scores([(1, 10, 10)], seed=7)
        mask = threshold_to_mask(field, 0.9)
        assert int(mask.masks[0].sum().item()) == 10


class TestGreedy:
    def test_constant_logits_prune_everything(self):
        net = one_conv_model(weight=2.0)
        with torch.no_grad():
            net.head.weight.zero_()
        model = TargetModel(net)
        x = torch.full((1, 1, 1), 3.0)
        scores = magnitude_importance(model.capture_activations(x)[1])
        result = greedy_prune(model, x, scores, chunk_fraction=1.0)
        assert result.sparsity == 1.0
        with torch.no_grad():
            pred = model.masked_forward(x, result.mask).argmax().item()
        logits, _ = model.capture_activations(x)
        assert pred == logits.argmax().item()

    def test_full_chunk_is_all_or_nothing(self, toy_model):
        x = torch.rand(3, 16, 16)
        scores = magnitude_importance(toy_model.capture_activations(x)[1])
        result = greedy_prune(toy_model, x, scores, chunk_fraction=1.0)
        assert result.sparsity in (0.0, 1.0)

    def test_matches_brute_force_prefix_search(self, toy_model):
        torch.manual_seed(4)
        x = torch.rand(3, 16, 16)
        scores = taylor_importance(toy_model, x, int(toy_model.predict(x).item()))
        chunk_fraction = 0.05
        result = greedy_prune(toy_model, x, scores, chunk_fraction=chunk_fraction)

        # Independent enumeration over ascending-score prefixes.
        flat = torch.cat([t.flatten() for t in scores.layers])
        order = torch.argsort(flat, stable=True)
        total = flat.numel()
        chunk = int(np.ceil(chunk_fraction * total))
        with torch.no_grad():
            original = toy_model.masked_forward(x, PathwayMask.ones(toy_model.layer_specs))
        orig_class = original.argmax().item()
        best = 0
        for removed in range(chunk, total + chunk, chunk):
            removed = min(removed, total)
            flat_mask = torch.ones(total)
            flat_mask[order[:removed]] = 0.0
            masks, offset = [], 0
            for spec in toy_model.layer_specs:
                size = int(np.prod(spec))
                masks.append(flat_mask[offset : offset + size].reshape(spec))
                offset += size
            with torch.no_grad():
                pred = toy_model.masked_forward(x, PathwayMask(masks)).argmax().item()
            if pred != orig_class:
                break
            best = removed
            if removed == total:
                break
        assert result.elements_removed == best

    def test_misclassified_input_flagged(self, toy_model):
        x = torch.rand(3, 16, 16)
        pred = int(toy_model.predict(x).item())
        wrong = 1 - pred
        scores = magnitude_importance(toy_model.capture_activations(x)[1])
        result = greedy_prune(toy_model, x, scores, label=wrong)
        assert not result.initially_correct
        assert result.mask.firing_sparsity() == 0.0

    def test_prediction_always_preserved(self, toy_model):
        torch.manual_seed(5)
        for i in range(3):
            x = torch.rand(3, 16, 16)
            scores = random_scores(toy_model.layer_specs, seed=i)
            result = greedy_prune(toy_model, x, scores, chunk_fraction=0.1)
            with torch.no_grad():
                pred = toy_model.masked_forward(x, result.mask).argmax().item()
            assert pred == int(toy_model.predict(x).item())
