import math

import numpy as np
import pytest
import torch

from sketchquery.config import ModelConfig
from sketchquery.core import PAD_ID
from sketchquery.objectives import (EPS, asl_loss, caption_loss,
                                    embedding_loss, total_loss)


def _unit_rows(n, d, seed=0, dtype=torch.float64):
    g = torch.Generator().manual_seed(seed)
    x = torch.randn(n, d, generator=g, dtype=dtype)
    return x / x.norm(dim=1, keepdim=True)


class TestEmbeddingLoss:
    def test_singleton_batch_is_zero(self):
        q = _unit_rows(1, 8)
        assert float(embedding_loss(q, q, 0.5)) == pytest.approx(0.0, abs=1e-12)

    @pytest.mark.parametrize("n", [2, 4, 8])
    @pytest.mark.parametrize("tau", [0.07, 0.5, 1.0])
    def test_identical_rows_give_ln_n(self, n, tau):
        """All-identical rows make every similarity equal, so both row and
        column softmaxes are uniform and the loss is ln N for any tau."""
        row = _unit_rows(1, 16, seed=n)
        q = row.repeat(n, 1)
        assert float(embedding_loss(q, q, tau)) == pytest.approx(math.log(n), abs=1e-10)

    def test_orthonormal_two_by_two(self):
        q = torch.eye(2, dtype=torch.float64)
        want = math.log(1 + math.exp(-1))
        assert float(embedding_loss(q, q, 1.0)) == pytest.approx(want, abs=1e-12)

    def test_empty_batch_rejected(self):
        with pytest.raises(ValueError):
            embedding_loss(torch.zeros(0, 4), torch.zeros(0, 4), 1.0)

    def test_non_normalized_rejected(self):
        q = _unit_rows(3, 8)
        with pytest.raises(ValueError):
            embedding_loss(q * 2.0, q, 1.0)

    def test_symmetric_under_row_permutation(self):
        q = _unit_rows(6, 16, seed=1)
        i = _unit_rows(6, 16, seed=2)
        perm = torch.randperm(6, generator=torch.Generator().manual_seed(3))
        a = float(embedding_loss(q, i, 0.3))
        b = float(embedding_loss(q[perm], i[perm], 0.3))
        assert a == pytest.approx(b, abs=1e-12)

    def test_role_swap_invariant(self):
        q = _unit_rows(5, 12, seed=4)
        i = _unit_rows(5, 12, seed=5)
        assert float(embedding_loss(q, i, 0.2)) == pytest.approx(
            float(embedding_loss(i, q, 0.2)), abs=1e-12)

    def test_against_scalar_oracle(self):
        """Direct evaluation of the symmetric CE via explicit softmax rows."""
        q = _unit_rows(4, 8, seed=6)
        i = _unit_rows(4, 8, seed=7)
        tau = 0.4
        s = (q @ i.T / tau).numpy()

        def ce_rows(mat):
            tot = 0.0
            for r in range(mat.shape[0]):
                e = np.exp(mat[r] - mat[r].max())
                tot += -math.log(e[r] / e.sum())
            return tot / mat.shape[0]

        want = 0.5 * (ce_rows(s) + ce_rows(s.T))
        assert float(embedding_loss(q, i, tau)) == pytest.approx(want, abs=1e-10)


class TestAslLoss:
    def test_reduces_to_bce_at_half(self):
        logits = torch.zeros(1, 1, dtype=torch.float64)
        targets = torch.ones(1, 1, dtype=torch.float64)
        assert float(asl_loss(logits, targets, 0, 0, 0.0)) == pytest.approx(
            math.log(2), abs=1e-12)

    def test_margin_clips_easy_negative(self):
        p = torch.tensor([[0.05]], dtype=torch.float64)
        logits = torch.logit(p)
        targets = torch.zeros(1, 1, dtype=torch.float64)
        for gamma_neg in (0.0, 1.0, 4.0):
            assert float(asl_loss(logits, targets, 0, gamma_neg, 0.1)) == 0.0

    def test_positive_focusing(self):
        p = torch.tensor([[0.8]], dtype=torch.float64)
        logits = torch.logit(p)
        targets = torch.ones(1, 1, dtype=torch.float64)
        want = 0.2 * -math.log(0.8)
        assert float(asl_loss(logits, targets, 1, 0, 0.0)) == pytest.approx(want, rel=1e-12)

    def test_matches_mean_bce_on_random_inputs(self):
        """gamma+ = gamma- = 0, margin 0 is exactly mean binary cross
        entropy; checked on 100 random instances."""
        g = torch.Generator().manual_seed(0)
        for _ in range(100):
            n = int(torch.randint(1, 6, (1,), generator=g))
            l = int(torch.randint(1, 7, (1,), generator=g))
            logits = torch.randn(n, l, generator=g, dtype=torch.float64) * 3
            targets = (torch.rand(n, l, generator=g, dtype=torch.float64) < 0.4).double()
            got = float(asl_loss(logits, targets, 0, 0, 0.0))
            want = float(torch.nn.functional.binary_cross_entropy_with_logits(
                logits, targets))
            assert got == pytest.approx(want, abs=1e-6)

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ValueError):
            asl_loss(torch.zeros(2, 3), torch.zeros(2, 4))


def _caption_oracle(logits: np.ndarray, tokens: np.ndarray) -> float:
    """Position-by-position scalar re-derivation of the caption loss."""
    total, count = 0.0, 0
    n, s, v = logits.shape
    for row in range(n):
        for t in range(s - 1):
            target = tokens[row, t + 1]
            if target == PAD_ID:
                continue
            z = logits[row, t]
            e = np.exp(z - z.max())
            total += -math.log(e[target] / e.sum())
            count += 1
    return total / count


class TestCaptionLoss:
    def test_uniform_logits_give_ln_v(self):
        v = 100
        logits = torch.zeros(1, 4, v, dtype=torch.float64)
        tokens = torch.tensor([[1, 7, 9, 2]])
        assert float(caption_loss(logits, tokens)) == pytest.approx(
            math.log(v), abs=1e-12)

    def test_confident_correct_logits_vanish(self):
        """A 100-logit gap toward the target drives the loss below 1e-6."""
        v = 10
        tokens = torch.tensor([[1, 5, 2]])
        logits = torch.zeros(1, 3, v, dtype=torch.float64)
        logits[0, 0, 5] = 100.0
        logits[0, 1, 2] = 100.0
        assert float(caption_loss(logits, tokens)) < 1e-6

    def test_padding_masked_out(self):
        g = torch.Generator().manual_seed(1)
        logits = torch.randn(1, 4, 8, generator=g, dtype=torch.float64)
        tokens = torch.tensor([[1, 5, 2, PAD_ID]])
        longer = torch.cat([logits, torch.randn(1, 2, 8, generator=g,
                                                dtype=torch.float64)], dim=1)
        tokens_padded = torch.tensor([[1, 5, 2, PAD_ID, PAD_ID, PAD_ID]])
        a = float(caption_loss(logits, tokens))
        b = float(caption_loss(longer, tokens_padded))
        assert a == pytest.approx(b, abs=1e-12)

    def test_bos_only_rejected(self):
        logits = torch.zeros(1, 1, 8, dtype=torch.float64)
        with pytest.raises(ValueError):
            caption_loss(logits, torch.tensor([[1]]))

    def test_against_position_oracle(self):
        g = torch.Generator().manual_seed(3)
        for _ in range(20):
            n = int(torch.randint(1, 4, (1,), generator=g))
            s = int(torch.randint(2, 6, (1,), generator=g))
            v = int(torch.randint(5, 11, (1,), generator=g))
            logits = torch.randn(n, s, v, generator=g, dtype=torch.float64)
            tokens = torch.randint(1, v, (n, s), generator=g)
            tokens[:, 0] = 1
            # pad random tails
            for row in range(n):
                cut = int(torch.randint(2, s + 1, (1,), generator=g))
                tokens[row, cut:] = PAD_ID
            got = float(caption_loss(logits, tokens))
            want = _caption_oracle(logits.numpy(), tokens.numpy())
            assert got == pytest.approx(want, rel=1e-10)


class TestTotalLoss:
    def setup_method(self):
        self.cfg = ModelConfig()

    def test_zero_components(self):
        assert total_loss(0.0, 0.0, 0.0, self.cfg).total == 0.0

    def test_unit_components_weight_ratio(self):
        # 10/1/100 classification/caption/contrastive weighting
        assert total_loss(1.0, 1.0, 1.0, self.cfg).total == pytest.approx(111.0)

    def test_arithmetic(self):
        bd = total_loss(0.5, 0.2, 3.0, self.cfg)
        assert bd.total == pytest.approx(100 * 0.5 + 10 * 0.2 + 1 * 3.0)

    def test_nan_aborts(self):
        with pytest.raises(FloatingPointError):
            total_loss(float("nan"), 0.0, 0.0, self.cfg)

    def test_breakdown_identity(self):
        bd = total_loss(0.1, 0.2, 0.3, self.cfg)
        assert bd.total == pytest.approx(
            self.cfg.w_class * bd.l_c + self.cfg.w_caption * bd.l_d
            + self.cfg.w_embed * bd.l_e)


class TestPaddingFromBatches:
    def test_batch_padding_never_affects_losses(self, tmp_path):
        """Batches padded to the model max length give the same caption
        loss and text embeddings as minimally padded ones."""
        from sketchquery.config import AugmentConfig, ModelConfig
        from sketchquery.data import (Vocabulary, generate_toy_dataset,
                                      load_manifest, make_batch, pad_tokens)
        from sketchquery.core import TokenSequence
        from sketchquery.encoders import build_model

        generate_toy_dataset(6, seed=2, out_dir=tmp_path, canvas=16)
        manifest = load_manifest(tmp_path / "manifest.jsonl")
        vocab = Vocabulary.load(tmp_path / "vocab.json")
        cfg = ModelConfig(embed_dim=16, image_size=16, patch_size=8,
                          vocab_size=len(vocab), max_caption_len=24,
                          num_labels=12, encoder_width=32, encoder_depth=1,
                          encoder_heads=2, decoder_width=32, decoder_depth=1,
                          decoder_heads=2, classifier_hidden=16)
        batch = make_batch(manifest, 4, vocab, cfg, AugmentConfig.disabled(),
                           seed=0)
        model = build_model(cfg, seed=0, dtype=torch.float64).eval()
        tight = torch.from_numpy(batch.target_tokens)
        seqs = [TokenSequence(tuple(t for t in row if t != PAD_ID))
                for row in batch.target_tokens]
        wide = torch.from_numpy(pad_tokens(seqs, cfg.max_caption_len))
        emb = torch.zeros(4, cfg.embed_dim, dtype=torch.float64)
        with torch.no_grad():
            loss_tight = caption_loss(model.decoder(emb, tight), tight)
            loss_wide = caption_loss(model.decoder(emb, wide), wide)
            text_tight = model.text(tight)
            text_wide = model.text(wide)
        assert float(loss_tight) == pytest.approx(float(loss_wide), abs=1e-12)
        assert float((text_tight - text_wide).abs().max()) < 1e-12


class TestLossGradients:
    """Analytic (autograd) vs central finite differences at float64."""

    @staticmethod
    def _fd_check(fn, inputs, rel_tol=1e-4, h=1e-6, samples=10, seed=0):
        """abs(fd - analytic) <= atol + rel_tol * max(|fd|, |analytic|); the
        small atol covers vanishing-gradient coordinates where relative
        error is ill-defined."""
        inputs = [x.clone().requires_grad_(True) for x in inputs]
        out = fn(*inputs)
        grads = torch.autograd.grad(out, inputs, allow_unused=True)
        rng = np.random.default_rng(seed)
        for x, g in zip(inputs, grads):
            if g is None:
                continue
            flat = x.detach().reshape(-1)
            gflat = g.reshape(-1)
            idx = rng.choice(flat.numel(), size=min(samples, flat.numel()),
                             replace=False)
            for i in idx:
                orig = float(flat[i])
                flat[i] = orig + h
                hi = float(fn(*[t.detach() for t in inputs]))
                flat[i] = orig - h
                lo = float(fn(*[t.detach() for t in inputs]))
                flat[i] = orig
                fd = (hi - lo) / (2 * h)
                an = float(gflat[i])
                assert abs(fd - an) <= 1e-7 + rel_tol * max(abs(fd), abs(an)), (fd, an)

    def test_embedding_loss_grad(self):
        q = _unit_rows(4, 6, seed=10)
        i = _unit_rows(4, 6, seed=11)
        self._fd_check(lambda a, b: embedding_loss(a, b, 0.5), [q, i])

    def test_asl_loss_grad(self):
        g = torch.Generator().manual_seed(12)
        logits = torch.randn(4, 6, generator=g, dtype=torch.float64)
        targets = (torch.rand(4, 6, generator=g, dtype=torch.float64) < 0.5).double()
        self._fd_check(
            lambda l: asl_loss(l, targets, 1.0, 4.0, 0.05), [logits])

    def test_caption_loss_grad(self):
        g = torch.Generator().manual_seed(13)
        logits = torch.randn(2, 5, 10, generator=g, dtype=torch.float64)
        tokens = torch.tensor([[1, 4, 7, 2, PAD_ID], [1, 3, 2, PAD_ID, PAD_ID]])
        self._fd_check(lambda l: caption_loss(l, tokens), [logits])
