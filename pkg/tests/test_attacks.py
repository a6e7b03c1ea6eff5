"""Attack correctness: projections, closed-form oracles, invariants."""

import numpy as np
import pytest

from lsrobust import (
    AttackConfig,
    CWConfig,
    DenseLayer,
    Model,
    ValidationError,
    apgd_ce,
    cw_l2,
    fgsm,
    forward,
    init_model,
    make_attack,
    multitargeted,
    odi_init,
    our_linf_attack,
    pgd,
    pgd_cw,
    predict,
    project_ball,
    synth_blobs,
    train,
    TrainConfig,
)


def linear_model(W, b=None):
    W = np.asarray(W, dtype=float)
    b = np.zeros(W.shape[0]) if b is None else np.asarray(b, dtype=float)
    return Model((DenseLayer(W, b, "identity"),))


def random_linear_instance(rng, dim=6, classes=3, margin_scale=1.0):
    W = rng.normal(size=(classes, dim)) * margin_scale
    b = rng.normal(size=classes) * 0.1
    x = rng.uniform(0.3, 0.7, dim)
    m = linear_model(W, b)
    t = int(predict(m, x))
    return m, x, t


class TestProjectBall:
    def test_linf_clamp(self):
        out = project_ball(np.array([0.75]), np.array([0.5]), 0.1, "linf")
        assert np.allclose(out, [0.6])

    def test_idempotent(self):
        rng = np.random.default_rng(0)
        for p in ("linf", "l2"):
            x_orig = rng.uniform(0, 1, 8)
            cand = x_orig + rng.normal(0, 1, 8)
            once = project_ball(cand, x_orig, 0.2, p)
            twice = project_ball(once, x_orig, 0.2, p)
            assert np.array_equal(once, twice)

    def test_inside_ball_unchanged(self):
        x_orig = np.full(5, 0.5)
        cand = x_orig + 0.05
        for p in ("linf", "l2"):
            assert np.array_equal(project_ball(cand, x_orig, 0.2, p), cand)

    def test_l2_scale_then_clamp_matches_convex_oracle(self):
        # frozen cases verified against a cvxpy nearest-point solve
        x_orig = np.array([0.5, 0.5, 0.5])
        cand = x_orig + np.array([0.6, 0.0, 0.0])  # distance 2*eps
        out = project_ball(cand, x_orig, 0.3, "l2")
        assert np.allclose(out, [0.8, 0.5, 0.5], atol=1e-9)
        # box clamp active after rescaling
        out2 = project_ball(np.array([1.5, 0.5, 0.1]),
                            np.array([0.9, 0.5, 0.1]), 0.3, "l2")
        assert np.allclose(out2, [1.0, 0.5, 0.1], atol=1e-9)

    def test_feasible_output(self):
        rng = np.random.default_rng(1)
        for p in ("linf", "l2"):
            for _ in range(50):
                x_orig = rng.uniform(0, 1, 6)
                cand = rng.normal(0.5, 2.0, 6)
                out = project_ball(cand, x_orig, 0.15, p)
                assert out.min() >= 0 and out.max() <= 1
                delta = out - x_orig
                if p == "linf":
                    assert np.abs(delta).max() <= 0.15 + 1e-12
                else:
                    assert np.linalg.norm(delta) <= 0.15 + 1e-12


class TestFgsm:
    def test_linear_closed_form_200_instances(self):
        # binary linear model: FGSM is optimal in the ball; success iff
        # margin <= eps * ||w_other - w_t||_1 (instances kept off the box
        # boundary so clipping never binds)
        rng = np.random.default_rng(2)
        eps = 0.05
        agree = 0
        for _ in range(200):
            W = rng.normal(size=(2, 8))
            x = rng.uniform(0.3, 0.7, 8)
            m = linear_model(W)
            z = forward(m, x)
            t = int(np.argmax(z))
            margin = z[t] - z[1 - t]
            predicted_success = margin <= eps * np.abs(W[1 - t] - W[t]).sum()
            out = fgsm(m, x, t, eps)
            agree += out.success == predicted_success
        assert agree == 200

    def test_zero_eps_returns_original(self):
        m = init_model([4, 6, 3], seed=0)
        x = np.random.default_rng(3).uniform(0.2, 0.8, 4)
        out = fgsm(m, x, int(predict(m, x)), 0.0)
        assert np.array_equal(out.x_adv, x)
        assert out.norm == 0.0

    def test_always_within_ball_and_box(self):
        rng = np.random.default_rng(4)
        m = init_model([6, 10, 4], seed=5)
        for _ in range(30):
            x = rng.uniform(0, 1, 6)
            out = fgsm(m, x, int(rng.integers(0, 4)), 0.2)
            assert out.x_adv.min() >= 0 and out.x_adv.max() <= 1
            assert np.abs(out.x_adv - x).max() <= 0.2 + 1e-9

    def test_zero_gradient_diagnostic(self):
        m = linear_model(np.zeros((3, 5)))
        x = np.full(5, 0.5)
        out = fgsm(m, x, 0, 0.1)  # argmax of all-zero logits is class 0
        assert out.zero_gradient
        assert not out.success
        assert np.array_equal(out.x_adv, x)


class TestPgd:
    def test_family_degeneracy_equals_fgsm_bitwise(self):
        m = init_model([5, 8, 3], seed=6)
        rng = np.random.default_rng(7)
        for _ in range(20):
            x = rng.uniform(0, 1, 5)
            t = int(rng.integers(0, 3))
            cfg = AttackConfig(eps=0.1, steps=1, step_size=0.2,
                               init="original", loss="cross_entropy",
                               restarts=1, rng_seed=0)
            a = pgd(m, x, t, cfg)
            b = fgsm(m, x, t, 0.1)
            assert np.array_equal(a.x_adv, b.x_adv)
            assert a.success == b.success

    def test_deterministic_under_seed(self):
        m = init_model([6, 12, 4], seed=8)
        x = np.random.default_rng(9).uniform(0, 1, 6)
        cfg = AttackConfig(eps=0.15, steps=10, restarts=3, rng_seed=11)
        a = pgd(m, x, 1, cfg)
        b = pgd(m, x, 1, cfg)
        assert np.array_equal(a.x_adv, b.x_adv)
        assert np.array_equal(a.loss_trace, b.loss_trace)
        assert a.best_loss == b.best_loss

    def test_monotone_restarts(self):
        m = init_model([6, 12, 4], seed=10)
        x = np.random.default_rng(12).uniform(0, 1, 6)
        best = -np.inf
        for restarts in (1, 2, 4, 8):
            cfg = AttackConfig(eps=0.1, steps=5, restarts=restarts,
                               rng_seed=3)
            out = pgd(m, x, 2, cfg)
            assert out.best_loss >= best - 1e-15
            best = out.best_loss

    def test_l2_norm_variant_feasible(self):
        m = init_model([6, 8, 3], seed=13)
        x = np.random.default_rng(14).uniform(0.2, 0.8, 6)
        cfg = AttackConfig(eps=0.5, norm="l2", steps=10, step_size=0.1,
                           rng_seed=0)
        out = pgd(m, x, 0, cfg)
        assert np.linalg.norm(out.x_adv - x) <= 0.5 + 1e-9

    def test_corner_oracle_agreement(self):
        # tiny linear models: exhaustive corner decision vs 10-restart PGD
        from lsrobust import exhaustive_oracle

        rng = np.random.default_rng(15)
        agree = 0
        for _ in range(100):
            m, x, t = random_linear_instance(rng, dim=4, classes=3,
                                             margin_scale=0.4)
            oracle = exhaustive_oracle(m, x, t, 0.1)
            cfg = AttackConfig(eps=0.1, steps=10, step_size=0.02,
                               restarts=10, rng_seed=17)
            out = pgd(m, x, t, cfg)
            agree += out.success == oracle.adversarial_exists
            if out.success:
                assert oracle.adversarial_exists  # attack never beats oracle
        assert agree >= 95

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            AttackConfig(eps=0.0)
        with pytest.raises(ValidationError):
            AttackConfig(eps=0.1, steps=0)
        with pytest.raises(ValidationError):
            AttackConfig(eps=0.1, restarts=0)
        with pytest.raises(ValidationError):
            AttackConfig(eps=0.1, init="zero_image")
        with pytest.raises(ValidationError):
            AttackConfig(eps=0.1, loss="targeted_margin")

    def test_targeted_margin_loss_drives_the_target_up(self):
        m = init_model([5, 12, 4], seed=50)
        x = np.random.default_rng(51).uniform(0.2, 0.8, 5)
        t = int(predict(m, x))
        j = (t + 1) % 4
        cfg = AttackConfig(eps=0.2, steps=15, loss="targeted_margin",
                           target_class=j, init="original", rng_seed=0)
        out = pgd(m, x, t, cfg)
        z0 = forward(m, x)
        z1 = forward(m, out.x_adv)
        assert z1[j] - z1[t] >= z0[j] - z0[t]

    def test_logit_dot_loss_ascends_the_direction(self):
        m = init_model([5, 12, 4], seed=52)
        x = np.random.default_rng(53).uniform(0.2, 0.8, 5)
        d = np.array([1.0, -1.0, 0.5, -0.5])
        cfg = AttackConfig(eps=0.2, steps=15, loss="logit_dot", direction=d,
                           init="original", rng_seed=0)
        out = pgd(m, x, 0, cfg)
        assert forward(m, out.x_adv) @ d >= forward(m, x) @ d
        assert np.abs(out.x_adv - x).max() <= 0.2 + 1e-9


class TestPgdCw:
    def test_margin_positive_implies_success_flag(self):
        rng = np.random.default_rng(18)
        m = init_model([5, 10, 4], seed=19)
        for _ in range(20):
            x = rng.uniform(0, 1, 5)
            t = int(predict(m, x))
            cfg = AttackConfig(eps=0.3, steps=10, rng_seed=4)
            out = pgd_cw(m, x, t, cfg)
            if out.best_loss > 0:
                assert out.success

    def test_binary_linear_same_success_set_as_ce(self):
        # for 2 classes the CE and margin gradients share signs, so the
        # seeded trajectories and success sets coincide
        rng = np.random.default_rng(20)
        for _ in range(50):
            W = rng.normal(size=(2, 6))
            x = rng.uniform(0.3, 0.7, 6)
            m = linear_model(W)
            t = int(predict(m, x))
            cfg = AttackConfig(eps=0.05, steps=8, step_size=0.01, rng_seed=9)
            a = pgd(m, x, t, cfg)
            b = pgd_cw(m, x, t, cfg)
            assert a.success == b.success


class TestMultitargeted:
    def test_two_classes_degenerates_to_pgd_cw(self):
        rng = np.random.default_rng(21)
        W = rng.normal(size=(2, 5))
        m = linear_model(W)
        x = rng.uniform(0.3, 0.7, 5)
        t = int(predict(m, x))
        cfg = AttackConfig(eps=0.1, steps=6, restarts=1, rng_seed=13)
        a = multitargeted(m, x, t, cfg)
        b = pgd_cw(m, x, t, cfg)
        assert np.array_equal(a.x_adv, b.x_adv)
        assert a.success == b.success

    def test_more_targets_never_hurt(self):
        m = init_model([6, 12, 5], seed=22)
        rng = np.random.default_rng(23)
        for _ in range(10):
            x = rng.uniform(0, 1, 6)
            t = int(predict(m, x))
            single = multitargeted(
                m, x, t, AttackConfig(eps=0.2, steps=5, restarts=1,
                                      rng_seed=31))
            full = multitargeted(
                m, x, t, AttackConfig(eps=0.2, steps=5, restarts=8,
                                      rng_seed=31))
            assert full.best_loss >= single.best_loss - 1e-15
            if single.success:
                assert full.success


class TestOdiInit:
    def test_zero_steps_is_noop(self):
        m = init_model([4, 6, 3], seed=24)
        x = np.random.default_rng(25).uniform(0, 1, 4)
        assert np.array_equal(odi_init(m, x, 0.1, 0, 0.1), x)

    def test_output_feasible(self):
        m = init_model([4, 6, 3], seed=26)
        rng = np.random.default_rng(27)
        for _ in range(20):
            x = rng.uniform(0, 1, 4)
            start = odi_init(m, x, 0.1, 2, 0.1, seed=int(rng.integers(1e6)))
            assert start.min() >= 0 and start.max() <= 1
            assert np.abs(start - x).max() <= 0.1 + 1e-9

    def test_diversifies_logits_more_than_random_ball(self):
        # mechanism claim: ODI starts spread out in logit space
        train_set = synth_blobs(4, 100, 16, separation=4.0, seed=0)
        model, _ = train(init_model([16, 32, 4], seed=7), train_set,
                         TrainConfig(epochs=10, rng_seed=7))
        x = train_set.X[0]
        eps = 0.1
        odi_starts = np.stack([odi_init(model, x, eps, 2, eps, seed=s)
                               for s in range(20)])
        rng = np.random.default_rng(99)
        ball_starts = np.stack([
            np.clip(x + rng.uniform(-eps, eps, x.size), 0, 1)
            for _ in range(20)
        ])

        def mean_pairwise(Z):
            d = Z[:, None, :] - Z[None, :, :]
            return np.sqrt((d ** 2).sum(-1)).mean()

        odi_spread = mean_pairwise(forward(model, odi_starts))
        ball_spread = mean_pairwise(forward(model, ball_starts))
        assert odi_spread > ball_spread


class TestApgdCe:
    def test_requires_auto_mode(self):
        m = init_model([4, 6, 3], seed=28)
        cfg = AttackConfig(eps=0.1, steps=10, rng_seed=0)
        with pytest.raises(ValidationError):
            apgd_ce(m, np.full(4, 0.5), 0, cfg)

    def test_never_halves_on_linear_model(self):
        # on a linear model the loss plateaus at the ball corner; the
        # non-decreasing convention keeps the success ratio at 1
        rng = np.random.default_rng(29)
        W = rng.normal(size=(3, 6))
        m = linear_model(W)
        x = rng.uniform(0.35, 0.65, 6)
        t = int(predict(m, x))
        cfg = AttackConfig(eps=0.02, steps=50, step_size_mode="auto",
                           init="original", rng_seed=0)
        out = apgd_ce(m, x, t, cfg)
        # with eta fixed at 2*eps and init=original, iterates pin to the
        # corner after one step; losses never decrease along the trace
        diffs = np.diff(out.loss_trace)
        assert np.all(diffs >= -1e-12)

    def test_feasible_and_deterministic(self):
        m = init_model([6, 10, 4], seed=30)
        x = np.random.default_rng(31).uniform(0, 1, 6)
        cfg = AttackConfig(eps=0.15, steps=30, step_size_mode="auto",
                           rng_seed=7)
        a = apgd_ce(m, x, 0, cfg)
        b = apgd_ce(m, x, 0, cfg)
        assert np.array_equal(a.x_adv, b.x_adv)
        assert a.x_adv.min() >= 0 and a.x_adv.max() <= 1
        assert np.abs(a.x_adv - x).max() <= 0.15 + 1e-9


class TestCwL2:
    def test_c_to_zero_never_leaves_start(self):
        # with a vanishing classification term the norm term dominates, so
        # the perturbation can only shrink from its starting value
        train_set = synth_blobs(3, 100, 8, separation=5.0, seed=1)
        model, _ = train(init_model([8, 16, 3], seed=3), train_set,
                         TrainConfig(epochs=15, rng_seed=3))
        x = train_set.X[5]
        t = int(train_set.y[5])
        assert int(predict(model, x)) == t  # confidently classified
        cw = CWConfig(c=1e-8, steps=100, learning_rate=0.05,
                      starting_point="original", eps=1.0)
        out = cw_l2(model, x, t, cw)
        # the start itself sits at the tanh-clipped image
        delta_init = np.linalg.norm(np.clip(x, 0.02, 0.98) - x)
        assert not out.success
        assert out.norm <= delta_init + 1e-9

    def test_recovers_hyperplane_distance_within_5_percent(self):
        rng = np.random.default_rng(32)
        checked = 0
        for _ in range(20):
            W = rng.normal(size=(2, 8))
            m = linear_model(W)
            x = rng.uniform(0.35, 0.65, 8)
            z = forward(m, x)
            t = int(np.argmax(z))
            w_diff = W[1 - t] - W[t]
            dist = (z[t] - z[1 - t]) / np.linalg.norm(w_diff)
            if dist > 0.25:  # keep the optimum off the box boundary
                continue
            cw = CWConfig(c=5.0, steps=800, learning_rate=0.01,
                          starting_point="original", eps=10.0)
            out = cw_l2(m, x, t, cw)
            assert out.success
            assert out.norm <= dist * 1.05
            assert out.norm >= dist * 0.95
            checked += 1
        assert checked >= 5

    def test_within_budget_flag(self):
        m = init_model([4, 6, 3], seed=33)
        x = np.random.default_rng(34).uniform(0, 1, 4)
        cw = CWConfig(c=1.0, steps=50, learning_rate=0.05,
                      starting_point="zero_image", eps=1e-9)
        out = cw_l2(m, x, 0, cw)
        if out.norm > 1e-9:
            assert not out.within_budget

    def test_box_feasible_by_substitution(self):
        m = init_model([5, 8, 3], seed=35)
        rng = np.random.default_rng(36)
        for start in ("zero_image", "original"):
            x = rng.uniform(0, 1, 5)
            cw = CWConfig(c=0.5, steps=60, learning_rate=0.1,
                          starting_point=start, eps=2.0)
            out = cw_l2(m, x, 1, cw)
            assert out.x_adv.min() >= 0.0 and out.x_adv.max() <= 1.0

    def test_config_validation(self):
        with pytest.raises(ValidationError):
            CWConfig(c=0.0)
        with pytest.raises(ValidationError):
            CWConfig(starting_point="elsewhere")


class TestOurLinfAttack:
    def test_midpoint_init_interior_pixel(self):
        # w=0 maps an interior pixel to the exact interval midpoint == x
        m = init_model([1, 4, 2], seed=37)
        out = our_linf_attack(m, np.array([0.5]), 0, 8 / 255, steps=1,
                              step_size=1e-12)
        # candidate a0 equals x at interior pixels, so nothing can improve
        assert abs(out.x_adv[0] - 0.5) <= 8 / 255

    def test_boundary_pixel_midpoint_shift(self):
        # frozen: x=0.01, eps=8/255 -> a0 = (0 + 0.0413725...)/2
        m = linear_model(np.zeros((2, 1)))
        X = np.array([[0.01]])
        lo = np.maximum(X - 8 / 255, 0.0)
        hi = np.minimum(X + 8 / 255, 1.0)
        assert lo[0, 0] == 0.0
        a0 = lo + (hi - lo) * 0.5
        assert abs(a0[0, 0] - 0.020686274509803921569) < 1e-15

    def test_every_iterate_within_bounds(self):
        m = init_model([6, 10, 4], seed=38)
        rng = np.random.default_rng(39)
        for _ in range(10):
            x = rng.uniform(0, 1, 6)
            t = int(rng.integers(0, 4))
            out = our_linf_attack(m, x, t, 0.2, steps=40, step_size=0.5)
            lo = np.maximum(x - 0.2, 0.0)
            hi = np.minimum(x + 0.2, 1.0)
            assert np.all(out.x_adv >= lo) and np.all(out.x_adv <= hi)
            assert out.x_adv.min() >= 0.0 and out.x_adv.max() <= 1.0

    def test_needs_no_projection_against_project_ball(self):
        # outputs are already fixed points of the projection operator
        m = init_model([5, 8, 3], seed=40)
        rng = np.random.default_rng(41)
        for _ in range(10):
            x = rng.uniform(0, 1, 5)
            out = our_linf_attack(m, x, 0, 0.15, steps=30, step_size=0.3)
            projected = project_ball(out.x_adv, x, 0.15, "linf")
            assert np.array_equal(projected, out.x_adv)

    def test_corner_oracle_agreement_linear(self):
        from lsrobust import exhaustive_oracle

        rng = np.random.default_rng(42)
        agree = 0
        for _ in range(100):
            m, x, t = random_linear_instance(rng, dim=4, classes=3)
            oracle = exhaustive_oracle(m, x, t, 0.3)
            out = our_linf_attack(m, x, t, 0.3, steps=500, step_size=0.1)
            agree += out.success == oracle.adversarial_exists
            if out.success:
                assert oracle.adversarial_exists
        assert agree >= 95

    def test_deterministic(self):
        m = init_model([5, 8, 3], seed=43)
        x = np.random.default_rng(44).uniform(0, 1, 5)
        a = our_linf_attack(m, x, 1, 0.1, steps=25, step_size=0.2)
        b = our_linf_attack(m, x, 1, 0.1, steps=25, step_size=0.2)
        assert np.array_equal(a.x_adv, b.x_adv)
        assert np.array_equal(a.loss_trace, b.loss_trace)


class TestPresets:
    def test_table_preset_names_resolve(self):
        for name in ("fgsm", "pgd10", "pgd20", "pgd40", "pgd-cw", "mt",
                     "odi", "apgd-ce", "cw", "cw-orig", "ours"):
            attack = make_attack(name, 0.1, seed=0)
            assert attack.name == name
            assert attack.describe()["params"]

    def test_pgd_presets_use_2eps_over_k(self):
        for k in (10, 20, 40):
            attack = make_attack(f"pgd{k}", 0.3)
            assert attack.config.steps == k
            assert abs(attack.config.step_size - 2 * 0.3 / k) < 1e-12

    def test_mt_has_18_restarts(self):
        assert make_attack("mt", 0.1).config.restarts == 18

    def test_unknown_preset(self):
        with pytest.raises(ValidationError):
            make_attack("pgdx", 0.1)

    def test_run_batch_matches_per_example(self):
        m = init_model([5, 8, 3], seed=45)
        rng = np.random.default_rng(46)
        X = rng.uniform(0, 1, (4, 5))
        T = np.array([0, 1, 2, 0])
        attack = make_attack("pgd10", 0.1, seed=3)
        batch = attack.run_batch(m, X, T)
        assert len(batch) == 4
        for out in batch:
            assert out.x_adv.min() >= 0 and out.x_adv.max() <= 1
            assert np.isfinite(out.best_loss)
