import math

import pytest
import torch

from poel.config import LossWeights
from poel.features import FeatureExtractor
from poel.losses import (LossReport, bce_adversarial_d, bce_adversarial_g, charbonnier,
                         gram_matrix, hinge_adversarial_d, hinge_adversarial_g,
                         lambda_multiplexer, lpips_perceptual, patched_style_loss,
                         total_objective)

# sqrt(0.003^2 + 1e-12) at 40 digits (mpmath)
CHARBONNIER_003 = 3.000000166666662037e-3


@pytest.fixture(scope="module")
def fx64():
    return FeatureExtractor(seed=0).double()


class TestCharbonnier:
    def test_zero_residual_gives_eps(self):
        x = torch.rand(3, 8, 8, dtype=torch.float64)
        assert float(charbonnier(x, x, 1e-6)) == pytest.approx(1e-6, rel=1e-9)

    def test_single_element_high_precision(self):
        x = torch.tensor([0.503], dtype=torch.float64)
        y = torch.tensor([0.500], dtype=torch.float64)
        assert float(charbonnier(x, y, 1e-6)) == pytest.approx(CHARBONNIER_003, abs=1e-12)

    def test_eps_zero_reduces_to_l1(self):
        x = torch.tensor([-2.0], dtype=torch.float64)
        y = torch.zeros(1, dtype=torch.float64)
        assert float(charbonnier(x, y, 0.0)) == 2.0

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            charbonnier(torch.zeros(2), torch.zeros(3))

    def test_lower_bound_eps(self):
        torch.manual_seed(0)
        x, y = torch.rand(50), torch.rand(50)
        assert float(charbonnier(x, y, 1e-6)) >= 1e-6


class TestHinge:
    def test_satisfied_margins_zero_loss(self):
        assert float(hinge_adversarial_d(torch.tensor([2.0]), torch.tensor([-2.0]))) == 0.0

    def test_zero_logits_loss_two(self):
        assert float(hinge_adversarial_d(torch.tensor([0.0]), torch.tensor([0.0]))) == 2.0

    def test_generator_negated_mean(self):
        assert float(hinge_adversarial_g(torch.tensor([1.0, -1.0]))) == 0.0
        assert float(hinge_adversarial_g(torch.tensor([3.0]))) == -3.0

    def test_d_nonnegative(self):
        torch.manual_seed(0)
        r, f = torch.randn(100), torch.randn(100)
        assert float(hinge_adversarial_d(r, f)) >= 0.0


class TestBce:
    def test_generator_half_prob(self):
        v = float(bce_adversarial_g(torch.tensor([0.5], dtype=torch.float64)))
        assert v == pytest.approx(math.log(2.0), abs=1e-12)

    def test_perfect_discriminator_limit(self):
        d = 1e-9
        v = float(bce_adversarial_d(torch.tensor([1.0 - d], dtype=torch.float64),
                                    torch.tensor([d], dtype=torch.float64)))
        assert v == pytest.approx(0.0, abs=1e-8)

    def test_uninformative_discriminator(self):
        half = torch.tensor([0.5], dtype=torch.float64)
        assert float(bce_adversarial_d(half, half)) == pytest.approx(2 * math.log(2.0), abs=1e-12)

    def test_d_nonnegative(self):
        torch.manual_seed(0)
        r = torch.rand(64) * 0.98 + 0.01
        f = torch.rand(64) * 0.98 + 0.01
        assert float(bce_adversarial_d(r, f)) >= 0.0


class TestGramMatrix:
    def test_single_channel_of_ones(self):
        g = gram_matrix(torch.ones(1, 2, 2, dtype=torch.float64), normalize=True)
        assert g.shape == (1, 1)
        assert float(g[0, 0]) == 1.0

    def test_disjoint_support_orthogonal(self):
        f = torch.zeros(2, 2, 2)
        f[0, 0, 0] = 3.0
        f[1, 1, 1] = 4.0
        g = gram_matrix(f, normalize=False)
        assert float(g[0, 1]) == 0.0 and float(g[1, 0]) == 0.0

    def test_matches_triple_loop_bruteforce(self):
        torch.manual_seed(0)
        f = torch.rand(3, 4, 4, dtype=torch.float64)
        g = gram_matrix(f, normalize=False)
        for a in range(3):
            for b in range(3):
                acc = 0.0
                for i in range(4):
                    for j in range(4):
                        acc += float(f[a, i, j]) * float(f[b, i, j])
                assert abs(float(g[a, b]) - acc) < 1e-12

    def test_normalization_divides_by_area(self):
        torch.manual_seed(1)
        f = torch.rand(2, 5, 3, dtype=torch.float64)
        assert torch.allclose(gram_matrix(f, True) * 15, gram_matrix(f, False))

    def test_bad_rank(self):
        with pytest.raises(ValueError):
            gram_matrix(torch.zeros(4, 4))


def _tile_oracle(x, x_hat, fx, patch):
    """Independent tiling oracle: explicit loops over tiles and layers."""
    total = 0.0
    for fa, fb in zip(fx(x), fx(x_hat)):
        fa, fb = fa[0], fb[0]
        c, h, w = fa.shape
        vals = []
        for i in range(0, h, patch):
            for j in range(0, w, patch):
                ta = fa[:, i:i + patch, j:j + patch]
                tb = fb[:, i:i + patch, j:j + patch]
                area = ta.shape[1] * ta.shape[2]
                ga = (ta.reshape(c, -1) @ ta.reshape(c, -1).T) / area
                gb = (tb.reshape(c, -1) @ tb.reshape(c, -1).T) / area
                vals.append(float(((ga - gb) ** 2).sum()))
        total += sum(vals) / len(vals)
    return total


class TestPatchedStyle:
    def test_identical_inputs_zero(self, fx64):
        x = torch.rand(3, 64, 64, dtype=torch.float64)
        assert float(patched_style_loss(x, x, fx64)) == 0.0

    def test_matches_tiling_oracle(self, fx64):
        torch.manual_seed(0)
        x = torch.rand(3, 64, 64, dtype=torch.float64)
        y = (x + 0.1 * torch.randn_like(x)).clamp(0, 1)
        got = float(patched_style_loss(x, y, fx64))
        want = _tile_oracle(x, y, fx64, 16)
        assert got == pytest.approx(want, abs=1e-9)

    def test_single_patch_equals_unpatched(self, fx64):
        # 16x16 input: the first tap is exactly one 16x16 patch
        torch.manual_seed(1)
        x = torch.rand(3, 16, 16, dtype=torch.float64)
        y = torch.rand(3, 16, 16, dtype=torch.float64)
        fa = fx64(x)[0][0]
        fb = fx64(y)[0][0]
        direct = float(((gram_matrix(fa) - gram_matrix(fb)) ** 2).sum())
        single_layer = _tile_oracle(x, y, fx64, 16)
        got = float(patched_style_loss(x, y, fx64))
        assert got == pytest.approx(single_layer, abs=1e-12)
        # first-layer contribution is the plain gram difference
        rest = single_layer - direct
        assert rest >= -1e-12

    def test_patch_size_of_full_map_equals_unpatched(self, fx64):
        torch.manual_seed(2)
        x = torch.rand(3, 32, 32, dtype=torch.float64)
        y = torch.rand(3, 32, 32, dtype=torch.float64)
        full = float(patched_style_loss(x, y, fx64, patch_size=10 ** 6))
        direct = 0.0
        for fa, fb in zip(fx64(x), fx64(y)):
            direct += float(((gram_matrix(fa[0]) - gram_matrix(fb[0])) ** 2).sum())
        assert full == pytest.approx(direct, rel=1e-12)

    def test_nonnegative(self, fx64):
        torch.manual_seed(3)
        x = torch.rand(3, 48, 48, dtype=torch.float64)
        y = torch.rand(3, 48, 48, dtype=torch.float64)
        assert float(patched_style_loss(x, y, fx64)) >= 0.0


class TestLpips:
    def test_identical_inputs_zero(self, fx64):
        x = torch.rand(3, 32, 32, dtype=torch.float64)
        assert float(lpips_perceptual(x, x, fx64)) == 0.0

    def test_nonnegative(self, fx64):
        torch.manual_seed(0)
        for _ in range(5):
            x = torch.rand(3, 32, 32, dtype=torch.float64)
            y = torch.rand(3, 32, 32, dtype=torch.float64)
            assert float(lpips_perceptual(x, y, fx64)) >= 0.0

    def test_interpolation_monotonicity_probe(self, fx64):
        # halfway toward the clean image scores no worse than the fully
        # corrupted one, over 20 random seeds
        wins = 0
        for seed in range(20):
            torch.manual_seed(seed)
            x = torch.rand(3, 32, 32, dtype=torch.float64)
            noise = 0.3 * torch.randn_like(x)
            far = (x + noise).clamp(0, 1)
            mid = (x + 0.5 * noise).clamp(0, 1)
            wins += float(lpips_perceptual(x, mid, fx64)) <= float(
                lpips_perceptual(x, far, fx64))
        assert wins == 20


class TestMultiplexer:
    def test_at_target_uses_above_weight(self):
        w = LossWeights(rate_above=4.0, rate_below=1.0, target_bpp=0.15)
        assert lambda_multiplexer(0.15, w) == 4.0

    def test_below_target(self):
        w = LossWeights(rate_above=4.0, rate_below=1.0, target_bpp=0.15)
        assert lambda_multiplexer(0.0, w) == 1.0
        assert lambda_multiplexer(0.15 - 1e-9, w) == 1.0

    def test_scaling_both_weights_scales_rate_term(self):
        w1 = LossWeights(rate_above=4.0, rate_below=1.0, target_bpp=0.15)
        w3 = LossWeights(rate_above=12.0, rate_below=3.0, target_bpp=0.15)
        for rate in (0.01, 0.15, 0.5):
            assert lambda_multiplexer(rate, w3) * rate == pytest.approx(
                3.0 * lambda_multiplexer(rate, w1) * rate)

    def test_tensor_rate_accepted(self):
        w = LossWeights(rate_above=4.0, rate_below=1.0, target_bpp=0.15)
        assert lambda_multiplexer(torch.tensor(0.2, requires_grad=True), w) == 4.0

    def test_weight_ordering_enforced(self):
        with pytest.raises(ValueError):
            LossWeights(rate_above=1.0, rate_below=2.0)
        with pytest.raises(ValueError):
            LossWeights(rate_above=1.0, rate_below=0.0)


class TestTotalObjective:
    def _inputs(self, seed=0):
        torch.manual_seed(seed)
        x = torch.rand(3, 32, 32, dtype=torch.float64)
        x_hat = (x + 0.05 * torch.randn_like(x)).clamp(0, 1)
        y_hat = torch.randn(80, 2, 2, dtype=torch.float64)
        logits = torch.randn(1, 2, 2, dtype=torch.float64)
        return x, x_hat, y_hat, logits

    def test_single_term_reduction(self, fx64):
        x, x_hat, y_hat, logits = self._inputs()
        w = LossWeights(perceptual=0.0, reconstruction=1.0, adversarial=0.0, style=0.0,
                        rate_above=2.0, rate_below=1.0, target_bpp=0.3)
        r = total_objective(x, x_hat, y_hat, torch.tensor(0.0), logits, fx64, w)
        assert float(r.total) == pytest.approx(float(charbonnier(x, x_hat, w.charbonnier_eps)))

    def test_zero_distortion_leaves_rate_term(self, fx64):
        x = torch.rand(3, 32, 32, dtype=torch.float64)
        w = LossWeights(perceptual=1.0, reconstruction=0.0, adversarial=1.0, style=1.0,
                        rate_above=2.0, rate_below=1.0, target_bpp=0.3)
        rate = torch.tensor(0.4)
        r = total_objective(x, x, torch.zeros(80, 2, 2), rate, torch.zeros(1, 2, 2), fx64, w)
        assert float(r.total) == pytest.approx(2.0 * 0.4)

    def test_compositional_oracle(self, fx64):
        x, x_hat, y_hat, logits = self._inputs(1)
        w = LossWeights(perceptual=1.3, reconstruction=7.0, adversarial=0.25, style=2.5,
                        rate_above=3.0, rate_below=1.0, target_bpp=0.2)
        rate = torch.tensor(0.35, dtype=torch.float64)
        r = total_objective(x, x_hat, y_hat, rate, logits, fx64, w)
        hand = (1.3 * float(lpips_perceptual(x, x_hat, fx64))
                + 7.0 * float(charbonnier(x, x_hat, w.charbonnier_eps))
                + 0.25 * float(hinge_adversarial_g(logits))
                + 2.5 * float(patched_style_loss(x, x_hat, fx64))
                + 3.0 * 0.35)
        assert float(r.total) == pytest.approx(hand, abs=1e-12)
        assert r.rate_weight == 3.0

    def test_report_serialization(self, fx64):
        x, x_hat, y_hat, logits = self._inputs(2)
        w = LossWeights()
        r = total_objective(x, x_hat, y_hat, torch.tensor(0.1), logits, fx64, w)
        d = r.as_dict()
        assert set(d) >= {"perceptual", "reconstruction", "adversarial", "style",
                          "rate_bpp", "rate_weight", "total", "loss_weights"}
        assert isinstance(r.to_json(), str)


class TestGradients:
    """Finite-difference suite: autodiff vs central differences in float64."""

    EPS = 1e-5
    TOL = 1e-4
    N_COORDS = 20

    def _check(self, fn, x_hat, *rest):
        x_hat = x_hat.detach().clone().requires_grad_(True)
        fn(x_hat, *rest).backward()
        grad = x_hat.grad.clone()
        g = torch.Generator().manual_seed(0)
        flat = x_hat.detach().view(-1)
        gflat = grad.view(-1)
        for _ in range(self.N_COORDS):
            idx = int(torch.randint(flat.numel(), (1,), generator=g))
            orig = float(flat[idx])
            with torch.no_grad():
                flat[idx] = orig + self.EPS
                up = float(fn(x_hat, *rest))
                flat[idx] = orig - self.EPS
                dn = float(fn(x_hat, *rest))
                flat[idx] = orig
            fd = (up - dn) / (2 * self.EPS)
            ad = float(gflat[idx])
            scale = max(abs(fd), abs(ad), 1e-6)
            assert abs(fd - ad) / scale < self.TOL, f"{fn}: fd={fd} ad={ad}"

    def _pair(self, seed):
        torch.manual_seed(seed)
        x = torch.rand(3, 32, 32, dtype=torch.float64)
        x_hat = (x + 0.1 * torch.randn_like(x)).clamp(0.05, 0.95)
        return x, x_hat

    def test_charbonnier(self):
        x, x_hat = self._pair(0)
        self._check(lambda xh: charbonnier(x, xh, 1e-6), x_hat)

    def test_hinge_g(self):
        torch.manual_seed(1)
        logits = torch.randn(1, 4, 4, dtype=torch.float64)
        self._check(lambda lg: hinge_adversarial_g(lg), logits)

    def test_hinge_d(self):
        torch.manual_seed(2)
        real = torch.randn(1, 4, 4, dtype=torch.float64) * 2
        fake = torch.randn(1, 4, 4, dtype=torch.float64) * 2
        self._check(lambda f: hinge_adversarial_d(real, f), fake)
        self._check(lambda r: hinge_adversarial_d(r, fake), real)

    def test_bce_g(self):
        torch.manual_seed(3)
        probs = torch.rand(1, 4, 4, dtype=torch.float64) * 0.8 + 0.1
        self._check(lambda p: bce_adversarial_g(p), probs)

    def test_bce_d(self):
        torch.manual_seed(4)
        real = torch.rand(1, 4, 4, dtype=torch.float64) * 0.8 + 0.1
        fake = torch.rand(1, 4, 4, dtype=torch.float64) * 0.8 + 0.1
        self._check(lambda f: bce_adversarial_d(real, f), fake)

    def test_patched_style(self, fx64):
        x, x_hat = self._pair(5)
        self._check(lambda xh: patched_style_loss(x, xh, fx64), x_hat)

    def test_lpips(self, fx64):
        x, x_hat = self._pair(6)
        self._check(lambda xh: lpips_perceptual(x, xh, fx64), x_hat)

    def test_total_objective(self, fx64):
        x, x_hat = self._pair(7)
        torch.manual_seed(8)
        logits_src = torch.randn(1, 2, 2, dtype=torch.float64)
        w = LossWeights(perceptual=2.0, reconstruction=5.0, adversarial=0.1, style=1.0,
                        rate_above=2.0, rate_below=1.0, target_bpp=0.3)

        def fn(xh):
            return total_objective(x, xh, None, torch.tensor(0.4, dtype=torch.float64),
                                   logits_src, fx64, w).total

        self._check(fn, x_hat)


class TestFeatureExtractor:
    def test_deterministic_per_seed(self):
        a = FeatureExtractor(seed=3)
        b = FeatureExtractor(seed=3)
        x = torch.rand(3, 32, 32)
        for fa, fb in zip(a(x), b(x)):
            assert torch.equal(fa, fb)
        c = FeatureExtractor(seed=4)
        assert not torch.equal(a(x)[0], c(x)[0])

    def test_frozen(self):
        fx = FeatureExtractor()
        assert all(not p.requires_grad for p in fx.parameters())

    def test_save_load_roundtrip(self, tmp_path):
        fx = FeatureExtractor(seed=9)
        p = tmp_path / "fx.pt"
        fx.save_weights(p)
        fx2 = FeatureExtractor.from_file(p)
        x = torch.rand(3, 40, 40)
        for fa, fb in zip(fx(x), fx2(x)):
            assert torch.equal(fa, fb)

    def test_feature_pyramid_shapes(self):
        fx = FeatureExtractor(channels=(8, 16, 24, 24))
        feats = fx(torch.rand(3, 64, 64))
        assert [tuple(f.shape[1:]) for f in feats] == [
            (8, 64, 64), (16, 32, 32), (24, 16, 16), (24, 8, 8)]
