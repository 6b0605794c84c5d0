import numpy as np
import pytest

from relucert.network import classify, eval_network, generate_random_network
from relucert.verifier import (FALSIFIED, UNKNOWN, VERIFIED, RobustnessInstance,
                               attack_upper_bound, batch_verify, build_input_box,
                               format_report_line, generate_instances,
                               load_instances, margin_objective, save_instances,
                               verify, write_report)


class TestInputBox:
    def test_clipping(self):
        inst = RobustnessInstance(np.array([0.01, 0.99]), 0.05, 0)
        box = build_input_box(inst)
        assert np.allclose(box.lower, [0.0, 0.94])
        assert np.allclose(box.upper, [0.06, 1.0])

    def test_zero_radius_point_box(self):
        inst = RobustnessInstance(np.array([0.5, 0.25]), 0.0, 0)
        box = build_input_box(inst)
        assert np.array_equal(box.lower, box.upper)

    def test_canonical_epsilon(self):
        inst = RobustnessInstance(np.array([0.5]), 0.026, 0)
        box = build_input_box(inst)
        assert box.lower[0] == pytest.approx(0.474)
        assert box.upper[0] == pytest.approx(0.526)

    def test_invalid_center_rejected(self):
        with pytest.raises(ValueError):
            RobustnessInstance(np.array([1.5]), 0.1, 0)
        with pytest.raises(ValueError):
            RobustnessInstance(np.array([0.5]), -0.1, 0)


class TestMarginObjective:
    def test_margin_evaluates_to_logit_difference(self):
        net = generate_random_network([3, 4, 3], seed=2)
        rng = np.random.default_rng(0)
        for _ in range(20):
            x = rng.uniform(0, 1, 3)
            z, y = eval_network(net, x)
            for k in range(3):
                for t in range(3):
                    obj = margin_objective(net, k, t)
                    assert obj.value(z) == pytest.approx(y[k] - y[t], abs=1e-12)

    def test_class_range_checked(self):
        net = generate_random_network([2, 2, 2], seed=0)
        with pytest.raises(ValueError):
            margin_objective(net, 2, 0)


class TestGoldenThreshold:
    """The golden network as a 1-output regressor with a decision threshold:
    a method with bound below the threshold certifies, one above cannot."""

    def test_bound_methods_straddle_threshold(self, golden_net, golden_box):
        from relucert.propagation import interval_bounds, \
            build_neuron_hulls, tightened_bound, expr_from_row, initial_pair
        sb = interval_bounds(golden_net, golden_box)
        pairs = {p: initial_pair("deeppoly", sb[p], *golden_net.row(p))
                 for p in range(2, 6)}
        obj = expr_from_row(*golden_net.row(6), eta=6)
        beta = 4.0
        plain = tightened_bound(golden_box, pairs, obj, 0, {})
        tight = tightened_bound(golden_box, pairs, obj, 1,
                                build_neuron_hulls(golden_net, sb))
        assert not plain < beta          # 4.0: cannot certify y < 4
        assert tight < beta              # 23/6: certifies


class TestAttack:
    def test_misclassified_center_immediate(self):
        net = generate_random_network([3, 4, 2], seed=4)
        rng = np.random.default_rng(1)
        x = rng.uniform(0, 1, 3)
        wrong = 1 - classify(net, x)
        inst = RobustnessInstance(x, 0.05, wrong)
        adv = attack_upper_bound(net, inst)
        assert adv is not None and np.array_equal(adv, x)

    def test_witness_inside_box(self):
        net = generate_random_network([4, 8, 8, 3], seed=2, weight_scale=0.8)
        insts = generate_instances(net, 30, epsilon=0.15, seed=3)
        found = 0
        for inst in insts:
            if classify(net, inst.x_hat) != inst.label:
                continue
            adv = attack_upper_bound(net, inst, restarts=40, steps=20)
            if adv is None:
                continue
            found += 1
            assert np.all(np.abs(adv - inst.x_hat) <= inst.epsilon + 1e-12)
            assert np.all(adv >= -1e-12) and np.all(adv <= 1 + 1e-12)
            assert classify(net, adv) != inst.label
        assert found >= 1  # the radius is large enough that some flips exist

    def test_linear_network_attack_matches_box_maximum(self):
        # no ReLU: gradient ascent must reach the closed-form maximizer
        net = generate_random_network([3], seed=9)
        # outputs are affine rows of the inputs; pick t = argmin margin
        rng = np.random.default_rng(5)
        x = rng.uniform(0.3, 0.7, 3)
        t = classify(net, x)
        inst = RobustnessInstance(x, 0.2, t)
        box = build_input_box(inst)
        best = -np.inf
        for k in range(net.n_outputs):
            if k == t:
                continue
            obj = margin_objective(net, k, t)
            c = obj.coeffs[:3]
            best = max(best, float(np.maximum(c, 0) @ box.upper
                                   + np.minimum(c, 0) @ box.lower) + obj.constant)
        adv = attack_upper_bound(net, inst, restarts=8, steps=60, lr=0.05)
        if best > 1e-9:
            assert adv is not None
            z, y = eval_network(net, adv)
            got = max(y[k] - y[t] for k in range(net.n_outputs) if k != t)
            assert got >= best - 0.02  # near the vertex optimum
        else:
            assert adv is None

    def test_deterministic_for_seed(self):
        net = generate_random_network([3, 5, 2], seed=6)
        inst = generate_instances(net, 1, epsilon=0.3, seed=7)[0]
        a = attack_upper_bound(net, inst, seed=3)
        b = attack_upper_bound(net, inst, seed=3)
        assert (a is None and b is None) or np.array_equal(a, b)


class TestVerify:
    def test_zero_radius_verifies(self):
        net = generate_random_network([3, 4, 2], seed=1)
        rng = np.random.default_rng(2)
        x = rng.uniform(0, 1, 3)
        inst = RobustnessInstance(x, 0.0, classify(net, x))
        rep = verify(net, inst, method="interval")
        assert rep.verdict == VERIFIED

    def test_falsified_attaches_checked_witness(self):
        net = generate_random_network([4, 8, 8, 3], seed=2, weight_scale=0.8)
        insts = generate_instances(net, 20, epsilon=0.2, seed=3)
        seen = False
        for inst in insts:
            if classify(net, inst.x_hat) != inst.label:
                continue
            rep = verify(net, inst, method="deeppoly")
            if rep.verdict == FALSIFIED:
                seen = True
                assert classify(net, rep.witness) != inst.label
                assert rep.witness_label != inst.label
        assert seen

    def test_never_both_verified_and_falsified(self):
        # a verified instance admits no witness: re-run the attack directly
        net = generate_random_network([4, 8, 3], seed=12, weight_scale=0.7)
        insts = generate_instances(net, 15, epsilon=0.05, seed=13)
        for inst in insts:
            if classify(net, inst.x_hat) != inst.label:
                continue
            rep = verify(net, inst, method="fastc2v")
            if rep.verdict == VERIFIED:
                assert attack_upper_bound(net, inst) is None

    def test_unknown_when_attack_off(self, golden_net):
        # threshold framing aside, a 2-class random net with some hard case
        net = generate_random_network([4, 8, 8, 3], seed=2, weight_scale=0.8)
        insts = generate_instances(net, 30, epsilon=0.12, seed=3)
        for inst in insts:
            if classify(net, inst.x_hat) != inst.label:
                continue
            rep = verify(net, inst, method="interval", attack=False)
            assert rep.verdict in (VERIFIED, UNKNOWN)

    def test_margins_all_bounded_by_default(self):
        net = generate_random_network([3, 5, 4], seed=3)
        inst = generate_instances(net, 1, epsilon=0.01, seed=4)[0]
        rep = verify(net, inst, method="deeppoly")
        assert sorted(rep.margin_bounds) == [k for k in range(4) if k != inst.label]


class TestBatch:
    def test_counts_and_determinism(self):
        net = generate_random_network([4, 8, 8, 3], seed=2, weight_scale=0.8)
        insts = generate_instances(net, 10, epsilon=0.1, seed=3)
        r1 = batch_verify(net, insts, method="deeppoly", deterministic=True)
        r2 = batch_verify(net, insts, method="deeppoly", deterministic=True)
        assert sum(r1.counts.values()) == 10
        lines1 = [format_report_line(i, rep) for i, rep in enumerate(r1.reports)]
        lines2 = [format_report_line(i, rep) for i, rep in enumerate(r2.reports)]
        assert lines1 == lines2  # byte-identical in deterministic mode

    def test_method_dominance_counts(self):
        net = generate_random_network([4, 10, 10, 3], seed=2, weight_scale=0.9)
        insts = generate_instances(net, 12, epsilon=0.08, seed=5)
        res = {m: batch_verify(net, insts, method=m)
               for m in ("interval", "fastlin", "deeppoly", "fastc2v")}
        assert res["interval"].counts[VERIFIED] <= res["fastlin"].counts[VERIFIED]
        assert res["interval"].counts[VERIFIED] <= res["deeppoly"].counts[VERIFIED]
        assert res["deeppoly"].counts[VERIFIED] <= res["fastc2v"].counts[VERIFIED]

    def test_misclassified_centers_skipped(self):
        net = generate_random_network([4, 8, 8, 3], seed=2, weight_scale=0.8)
        insts = list(generate_instances(net, 5, epsilon=0.05, seed=3))
        wrong = RobustnessInstance(insts[0].x_hat, 0.05,
                                   (insts[0].label + 1) % net.n_outputs)
        res = batch_verify(net, insts + [wrong], method="interval")
        assert res.counts["skipped"] >= 1
        assert res.reports[-1] is None

    def test_empty_instances(self):
        net = generate_random_network([2, 2, 2], seed=0)
        res = batch_verify(net, [], method="interval")
        assert sum(res.counts.values()) == 0 and res.reports == []

    def test_error_entries_reported_and_skipped(self):
        net = generate_random_network([2, 2, 2], seed=0)
        res = batch_verify(net, ["instances.txt:3: bad instance line"],
                           method="interval")
        assert len(res.errors) == 1 and res.reports == [None]


class TestInstanceIO:
    def test_round_trip(self, tmp_path):
        net = generate_random_network([3, 4, 2], seed=8)
        insts = generate_instances(net, 7, epsilon=0.026, seed=9)
        p = tmp_path / "inst.txt"
        save_instances(p, insts)
        loaded = load_instances(p)
        assert len(loaded) == 7
        for a, b in zip(loaded, insts):
            assert np.array_equal(a.x_hat, b.x_hat)
            assert a.epsilon == b.epsilon and a.label == b.label

    def test_lenient_loader_collects_errors(self, tmp_path):
        p = tmp_path / "inst.txt"
        p.write_text("label=0 epsilon=0.1 x=0.5,0.5\nnot an instance\n")
        out = load_instances(p, strict=False)
        assert isinstance(out[0], RobustnessInstance)
        assert isinstance(out[1], str) and ":2:" in out[1]
        with pytest.raises(Exception):
            load_instances(p, strict=True)

    def test_report_file(self, tmp_path):
        net = generate_random_network([3, 4, 2], seed=8)
        insts = generate_instances(net, 3, epsilon=0.02, seed=9)
        res = batch_verify(net, insts, method="interval", deterministic=True)
        p = tmp_path / "report.txt"
        write_report(p, res, "interval")
        lines = p.read_text().splitlines()
        assert len(lines) == 4 and lines[-1].startswith("summary ")
        assert all(l.startswith("instance=") for l in lines[:-1])
