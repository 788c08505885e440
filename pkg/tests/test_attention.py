"""Attention tests: additive scoring, section weights, jointly normalized
word weights with the beta-inside-softmax scaling, context vectors, and
exact coverage bookkeeping."""

import numpy as np
import pytest

from strata import numerics as nm
from strata.attention import (
    AttentionScorer,
    DualAttention,
    context_vector,
    initial_coverage,
    section_weights,
    update_coverage,
    word_weights,
)
from strata.encoder import EncodedDocument

RNG = np.random.default_rng


def rigged_scorer(hidden, v0, with_coverage=False):
    """Identity W1, zero W2/b, v = [v0, 0, ...]: score = v0 * tanh(h[0])."""
    s = AttentionScorer(hidden, RNG(0), "t", with_coverage=with_coverage)
    s.W1.data[:] = np.eye(hidden)
    s.W2.data[:] = 0.0
    s.b.data[:] = 0.0
    s.v.data[:] = 0.0
    s.v.data[0] = v0
    return s


def fake_encoded(rng, ns=2, length=3, hidden=4, nb=1, word_mask=None, section_mask=None):
    if word_mask is None:
        word_mask = np.ones((nb, ns, length), dtype=bool)
    if section_mask is None:
        section_mask = np.ones((nb, ns), dtype=bool)
    ws = rng.normal(size=(nb, ns, length, hidden)) * word_mask[..., None]
    ss = rng.normal(size=(nb, ns, hidden)) * section_mask[..., None]
    return EncodedDocument(
        word_states=nm.constant(ws),
        section_states=nm.constant(ss),
        doc_vector=nm.constant(rng.normal(size=(nb, hidden))),
        word_mask=word_mask,
        section_mask=section_mask,
    )


# -- raw scorer -----------------------------------------------------------------


def test_score_zero_projection_vector():
    s = AttentionScorer(4, RNG(1), "t")
    s.v.data[:] = 0.0
    assert s.score_single(RNG(2).normal(size=4), RNG(3).normal(size=4)) == 0.0


def test_zero_coverage_equals_coverage_off():
    s = AttentionScorer(4, RNG(4), "t", with_coverage=True)
    s.w_cov.data[:] = RNG(5).normal(size=4)  # nonzero so the term could bite
    h, q = RNG(6).normal(size=4), RNG(7).normal(size=4)
    assert s.score_single(h, q, cov=0.0) == s.score_single(h, q)


def test_score_matches_reference_formula():
    rng = RNG(8)
    s = AttentionScorer(5, rng, "t", with_coverage=True)
    s.w_cov.data[:] = rng.normal(size=5)
    h, q, cov = rng.normal(size=5), rng.normal(size=5), 0.37
    got = s.score_single(h, q, cov=cov)
    ref = float(s.v.data @ np.tanh(s.W1.data.T @ h + s.W2.data.T @ q + cov * s.w_cov.data + s.b.data))
    assert got == pytest.approx(ref, abs=1e-9)


def test_scores_without_coverage_bit_identical_to_plain_scorer():
    rng = RNG(9)
    with_cov = AttentionScorer(4, RNG(10), "a", with_coverage=True)
    with_cov.w_cov.data[:] = rng.normal(size=4)
    plain = AttentionScorer(4, RNG(10), "b", with_coverage=False)
    states = nm.constant(rng.normal(size=(2, 3, 4)))
    q = nm.constant(rng.normal(size=(2, 4)))
    a = with_cov.scores(states, q).data
    b = plain.scores(states, q).data
    assert (a == b).all()


def test_coverage_input_requires_coverage_scorer():
    s = AttentionScorer(3, RNG(11), "t", with_coverage=False)
    with pytest.raises(ValueError, match="without a coverage input"):
        s.scores(nm.constant(np.zeros((1, 2, 3))), nm.constant(np.zeros((1, 3))), nm.constant(np.zeros((1, 2))))


# -- section weights ---------------------------------------------------------------


def test_single_section_gets_all_weight():
    s = AttentionScorer(4, RNG(12), "t")
    beta = section_weights(s, nm.constant(RNG(13).normal(size=(1, 1, 4))), nm.constant(RNG(14).normal(size=(1, 4))), np.array([[True]]))
    np.testing.assert_allclose(beta.data, [[1.0]])


def test_identical_sections_uniform_beta():
    s = AttentionScorer(4, RNG(15), "t")
    state = RNG(16).normal(size=4)
    states = nm.constant(np.stack([state, state, state])[None])
    beta = section_weights(s, states, nm.constant(RNG(17).normal(size=(1, 4))), np.ones((1, 3), dtype=bool))
    np.testing.assert_allclose(beta.data, np.full((1, 3), 1 / 3), atol=1e-12)


def test_beta_from_scores_zero_and_ln3():
    # scores (0, ln 3) -> exp-normalize -> (1, 3)/4
    s = rigged_scorer(4, v0=2.0)
    h2 = np.zeros(4)
    h2[0] = np.arctanh(np.log(3.0) / 2.0)
    states = nm.constant(np.stack([np.zeros(4), h2])[None])
    beta = section_weights(s, states, nm.constant(np.zeros((1, 4))), np.ones((1, 2), dtype=bool))
    np.testing.assert_allclose(beta.data, [[0.25, 0.75]], atol=1e-9)


def test_beta_sums_over_real_sections_only():
    s = AttentionScorer(4, RNG(18), "t")
    states = nm.constant(RNG(19).normal(size=(1, 3, 4)))
    mask = np.array([[True, True, False]])
    beta = section_weights(s, states, nm.constant(RNG(20).normal(size=(1, 4))), mask)
    assert beta.data[0, 2] == 0.0
    assert beta.data.sum() == pytest.approx(1.0, abs=1e-6)


# -- word weights --------------------------------------------------------------------


def test_single_word_alpha_is_one():
    s = AttentionScorer(4, RNG(21), "t")
    ws = nm.constant(RNG(22).normal(size=(1, 1, 1, 4)))
    alpha = word_weights(s, ws, nm.constant([[1.0]]), nm.constant(np.zeros((1, 4))), np.ones((1, 1, 1), dtype=bool))
    np.testing.assert_allclose(alpha.data, [[[1.0]]])


def test_equal_scores_uniform_beta_give_uniform_alpha():
    s = rigged_scorer(4, v0=1.0)
    w = np.zeros(4)
    w[0] = 0.3
    ws = nm.constant(np.broadcast_to(w, (1, 2, 3, 4)).copy())
    beta = nm.constant([[0.5, 0.5]])
    alpha = word_weights(s, ws, beta, nm.constant(np.zeros((1, 4))), np.ones((1, 2, 3), dtype=bool))
    np.testing.assert_allclose(alpha.data, np.full((1, 2, 3), 1 / 6), atol=1e-12)


def test_alpha_from_rigged_scores_and_beta():
    # raw scores (2, 2), beta (0.75, 0.25) -> logits (1.5, 0.5)
    s = rigged_scorer(4, v0=4.0)
    w = np.zeros(4)
    w[0] = np.arctanh(0.5)
    ws = nm.constant(np.broadcast_to(w, (1, 2, 1, 4)).copy())
    beta = nm.constant([[0.75, 0.25]])
    alpha = word_weights(s, ws, beta, nm.constant(np.zeros((1, 4))), np.ones((1, 2, 1), dtype=bool))
    np.testing.assert_allclose(alpha.data.ravel(), [0.7310585786300049, 0.2689414213699951], atol=1e-4)


def test_alpha_jointly_normalized_not_per_section():
    rng = RNG(23)
    s = AttentionScorer(4, rng, "t")
    enc = fake_encoded(rng)
    beta = section_weights(AttentionScorer(4, rng, "u"), enc.section_states, nm.constant(rng.normal(size=(1, 4))), enc.section_mask)
    alpha = word_weights(s, enc.word_states, beta, nm.constant(rng.normal(size=(1, 4))), enc.word_mask)
    assert alpha.data.sum() == pytest.approx(1.0, abs=1e-6)
    per_section = alpha.data.sum(axis=2)[0]
    # a per-section renormalization would force these equal to beta
    assert np.abs(per_section - beta.data[0]).max() > 1e-3


def test_beta_zero_does_not_suppress_a_section():
    # beta scales the logit, so beta=0 leaves exp(0)=1 mass, by construction
    rng = RNG(24)
    s = AttentionScorer(4, rng, "t")
    enc = fake_encoded(rng)
    beta = nm.constant([[0.0, 1.0]])
    alpha = word_weights(s, enc.word_states, beta, nm.constant(rng.normal(size=(1, 4))), enc.word_mask)
    assert alpha.data[0, 0].sum() > 0.05


def test_alpha_zero_at_masked_positions_and_error_when_empty():
    rng = RNG(25)
    s = AttentionScorer(4, rng, "t")
    mask = np.array([[[True, False, True], [False, False, False]]])
    enc = fake_encoded(rng, word_mask=mask)
    alpha = word_weights(s, enc.word_states, nm.constant([[0.5, 0.5]]), nm.constant(rng.normal(size=(1, 4))), mask)
    assert (alpha.data[~mask[:, :, :]] == 0.0).all()
    with pytest.raises(ValueError, match="empty attention support"):
        word_weights(s, enc.word_states, nm.constant([[0.5, 0.5]]), nm.constant(rng.normal(size=(1, 4))), np.zeros_like(mask))


# -- context vector --------------------------------------------------------------------


def test_one_hot_alpha_returns_that_state():
    rng = RNG(26)
    ws = rng.normal(size=(1, 2, 3, 4))
    alpha = np.zeros((1, 2, 3))
    alpha[0, 1, 2] = 1.0
    ctx = context_vector(nm.constant(alpha), nm.constant(ws))
    np.testing.assert_allclose(ctx.data[0], ws[0, 1, 2], atol=1e-12)


def test_uniform_alpha_over_two_states_averages():
    rng = RNG(27)
    ws = rng.normal(size=(1, 1, 2, 4))
    alpha = np.full((1, 1, 2), 0.5)
    ctx = context_vector(nm.constant(alpha), nm.constant(ws))
    np.testing.assert_allclose(ctx.data[0], ws[0, 0].mean(axis=0), atol=1e-12)


def test_context_coordinates_convex():
    rng = RNG(28)
    s = AttentionScorer(4, rng, "t")
    for trial in range(10):
        enc = fake_encoded(RNG(100 + trial))
        alpha = word_weights(s, enc.word_states, nm.constant([[0.6, 0.4]]), nm.constant(rng.normal(size=(1, 4))), enc.word_mask)
        ctx = context_vector(alpha, enc.word_states)
        flat = enc.word_states.data.reshape(-1, 4)
        lo, hi = flat.min(axis=0), flat.max(axis=0)
        assert (ctx.data[0] >= lo - 1e-12).all() and (ctx.data[0] <= hi + 1e-12).all()


# -- coverage ------------------------------------------------------------------------------


def test_initial_coverage_is_zero():
    cov = initial_coverage(1, 2, 3)
    np.testing.assert_array_equal(cov.data, np.zeros((1, 2, 3)))


def test_update_coverage_adds():
    cov = nm.constant([[0.2, 0.1]])
    alpha = nm.constant([[0.5, 0.5]])
    np.testing.assert_allclose(update_coverage(cov, alpha).data, [[0.7, 0.6]])


def test_coverage_total_mass_after_T_steps():
    rng = RNG(29)
    s = AttentionScorer(4, rng, "t", with_coverage=True)
    s.w_cov.data[:] = rng.normal(size=4) * 0.1
    enc = fake_encoded(rng)
    cov = initial_coverage(1, 2, 3)
    alphas = []
    for t in range(5):
        alpha = word_weights(s, enc.word_states, nm.constant([[0.5, 0.5]]), nm.constant(rng.normal(size=(1, 4))), enc.word_mask, coverage=cov)
        alphas.append(alpha.data.copy())
        cov = update_coverage(cov, alpha)
    assert cov.data.sum() == pytest.approx(5.0, abs=1e-6)
    # bookkeeping is exact: same-order accumulation reproduces it bitwise
    acc = np.zeros((1, 2, 3))
    for a in alphas:
        acc = acc + a
    np.testing.assert_array_equal(cov.data, acc)


# -- full dual step and gradient flow ----------------------------------------------------------


def test_dual_attention_state_invariants():
    rng = RNG(30)
    attn = DualAttention(4, rng)
    mask = np.array([[[True, True, False], [True, False, False]]])
    enc = fake_encoded(rng, word_mask=mask)
    cov = initial_coverage(1, 2, 3)
    state = attn.step(enc, nm.constant(rng.normal(size=(1, 4))), cov, use_coverage=True)
    assert state.alpha.data.sum() == pytest.approx(1.0, abs=1e-6)
    assert (state.alpha.data >= 0).all()
    assert state.beta.data.sum() == pytest.approx(1.0, abs=1e-6)
    assert (state.alpha.data[~mask] == 0.0).all()
    assert state.context.shape == (1, 4)


def test_gradients_flow_through_beta_into_alpha():
    rng = RNG(31)
    attn = DualAttention(3, rng)
    params = attn.params()
    for p in params.values():
        p.data[:] = rng.normal(scale=0.6, size=p.data.shape)
    enc = fake_encoded(rng, ns=2, length=2, hidden=3)
    s_prev = nm.constant(rng.normal(size=(1, 3)))
    cov_mat = rng.random((1, 2, 2))
    cproj = nm.constant(rng.normal(size=(1, 3)))

    def build():
        state = attn.step(enc, s_prev, nm.constant(cov_mat), use_coverage=True)
        return (state.context * cproj).sum()

    nm.zero_grads(params)
    loss = build()
    grads = nm.gradients(loss, params)
    assert np.abs(grads["attention.section.W1"]).max() > 0  # beta path is live
    for name, p in params.items():
        def f(p=p):
            with nm.no_grad():
                return build().item()
        err = nm.max_rel_error(grads[name], nm.fd_gradient(f, p))
        assert err <= 1e-4, f"{name}: rel err {err:.2e}"
