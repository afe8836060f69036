import numpy as np
import pytest

from ricreg import (
    DataBlock,
    Hyperparams,
    IntegrationConfig,
    NumericsError,
    fit,
    rls_add,
    rls_fit,
    rls_new,
    rls_remove,
    solve_direct,
)
from ricreg.problems import relative_l1


def rand_instance(rng, n, m, count):
    hyper = Hyperparams(gamma=rng.uniform(0.5, 2.0, n), theta0=rng.normal(size=n))
    blocks = [
        DataBlock(
            phi=rng.normal(size=(m, n)),
            y=rng.normal(size=m),
            lam=float(rng.uniform(0.1, 2.0)),
        )
        for _ in range(count)
    ]
    return hyper, blocks


class TestRlsAdd:
    def test_zero_weight_is_noop(self):
        hyper = Hyperparams(gamma=[1.0, 1.0], theta0=[0.0, 0.0])
        st = rls_new(hyper)
        assert rls_add(st, DataBlock(phi=[[1.0, 1.0]], y=[1.0], lam=0.0)) is st

    def test_hand_computed_scalar_update(self):
        # p0 = 1, phi = [1], y = [1], lam = 1:
        # p1 = 1 - 1/(1+1) = 0.5, q1 = 0 + 1*0.5*1 - 0 = 0.5.
        hyper = Hyperparams(gamma=[1.0], theta0=[0.0])
        st = rls_add(rls_new(hyper), DataBlock(phi=[[1.0]], y=[1.0]))
        assert st.p[0, 0] == pytest.approx(0.5, abs=1e-15)
        assert st.q[0] == pytest.approx(0.5, abs=1e-15)

    def test_state_matches_direct_inverse(self):
        rng = np.random.default_rng(1)
        for trial in range(10):
            n = int(rng.integers(2, 8))
            hyper, blocks = rand_instance(rng, n, int(rng.integers(1, 4)), 12)
            st = rls_fit(hyper, blocks)
            a = np.diag(hyper.gamma) + sum(b.lam * b.phi.T @ b.phi for b in blocks)
            p_exact = np.linalg.inv(a)
            scale = np.max(np.abs(p_exact))
            assert np.max(np.abs(st.p - p_exact)) <= 1e-10 * scale

    def test_minimizer_matches_oracle(self):
        rng = np.random.default_rng(2)
        hyper, blocks = rand_instance(rng, 6, 2, 30)
        st = rls_fit(hyper, blocks)
        oracle = solve_direct(hyper, blocks)
        assert relative_l1(st.theta_star(hyper), oracle.theta_star) <= 1e-10


class TestRlsRemove:
    def test_add_then_remove_is_identity(self):
        rng = np.random.default_rng(3)
        hyper, blocks = rand_instance(rng, 5, 2, 6)
        st = rls_fit(hyper, blocks)
        extra = DataBlock(phi=rng.normal(size=(2, 5)), y=rng.normal(size=2), lam=0.9)
        st2 = rls_remove(rls_add(st, extra), extra)
        assert np.max(np.abs(st2.p - st.p)) < 1e-12
        assert np.max(np.abs(st2.q - st.q)) < 1e-12

    def test_remove_from_fresh_state_fails(self):
        hyper = Hyperparams(gamma=[1.0, 1.0], theta0=[0.0, 0.0])
        blk = DataBlock(phi=[[2.0, 0.0]], y=[1.0], lam=1.0)
        with pytest.raises(NumericsError, match="not removable"):
            rls_remove(rls_new(hyper), blk)

    def test_remove_one_of_two_matches_oracle(self):
        rng = np.random.default_rng(4)
        hyper, blocks = rand_instance(rng, 4, 1, 2)
        st = rls_fit(hyper, blocks)
        st2 = rls_remove(st, blocks[1])
        oracle = solve_direct(hyper, blocks[:1])
        assert relative_l1(st2.theta_star(hyper), oracle.theta_star) <= 1e-10


class TestRlsInvariants:
    def test_exactness_against_oracle_over_many_instances(self):
        rng = np.random.default_rng(5)
        for trial in range(100):
            n = int(rng.integers(1, 21))
            m = int(rng.integers(1, 6))
            count = int(rng.integers(0, 51))
            hyper, blocks = rand_instance(rng, n, m, count)
            st = rls_fit(hyper, blocks)
            oracle = solve_direct(hyper, blocks)
            assert relative_l1(st.theta_star(hyper), oracle.theta_star) <= 1e-10

    def test_inverse_increases_by_block_information(self):
        rng = np.random.default_rng(6)
        hyper, blocks = rand_instance(rng, 5, 3, 4)
        st = rls_new(hyper)
        for blk in blocks:
            st_next = rls_add(st, blk)
            increment = np.linalg.inv(st_next.p) - np.linalg.inv(st.p)
            expected = blk.lam * blk.phi.T @ blk.phi
            assert np.max(np.abs(increment - expected)) <= 1e-10 * max(
                1.0, np.max(np.abs(expected))
            )
            st = st_next

    def test_agrees_with_flow_integration_at_fine_step(self):
        rng = np.random.default_rng(7)
        hyper, blocks = rand_instance(rng, 4, 2, 3)
        via_rls = rls_fit(hyper, blocks)
        via_flow = fit(hyper, blocks, IntegrationConfig(step_h=1e-4))
        assert np.max(np.abs(via_rls.p - via_flow.p)) <= 1e-8
        assert np.max(np.abs(via_rls.q - via_flow.q)) <= 1e-8

    def test_disagreement_shrinks_fourth_order_with_step(self):
        rng = np.random.default_rng(8)
        hyper, blocks = rand_instance(rng, 3, 1, 2)
        exact = rls_fit(hyper, blocks)
        errs = {}
        for h in (2e-2, 1e-2):
            st = fit(hyper, blocks, IntegrationConfig(step_h=h))
            errs[h] = np.abs(st.p - exact.p).sum() + np.abs(st.q - exact.q).sum()
        assert errs[2e-2] / errs[1e-2] >= 8.0
