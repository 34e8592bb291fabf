import numpy as np
import pytest

from stroketok.matrix_codec import TO_UNIT, scale, to_matrix
from stroketok.svg_io import gen_synthetic
from stroketok.tensor_engine import ParameterStore, Tensor, backward, no_grad
from stroketok.vq_codec import (
    BadTokenId,
    CodecConfig,
    Codebook,
    Diverged,
    EmptyCodebook,
    StrokeTokenSeq,
    codec_loss,
    decode,
    detokenize,
    encode,
    init_codec_params,
    load_tokens,
    load_vq_checkpoint,
    lookup_tokens,
    make_codebook,
    quantize_residual,
    save_tokens,
    save_vq_checkpoint,
    straight_through,
    tokenize,
    train,
    _decode_tensor,
)


def small_cfg(**kw) -> CodecConfig:
    base = dict(
        compression_stages=1,
        rvq_depth=2,
        codebook_size=8,
        code_dim=6,
        channels=(12,),
        steps=10,
        batch_size=4,
        seed=3,
    )
    base.update(kw)
    return CodecConfig(**base)


def book_from_arrays(levels: list[np.ndarray]) -> Codebook:
    tensors = [Tensor(np.asarray(lv, dtype=float), requires_grad=True) for lv in levels]
    usage = [np.zeros(lv.data.shape[0], dtype=np.int64) for lv in tensors]
    return Codebook(levels=tensors, usage=usage)


def scaled_corpus(n: int, seed: int):
    out = []
    for g in gen_synthetic(n, seed):
        out.append(scale(to_matrix(g), TO_UNIT, g.viewbox))
    return out


def brute_force_rvq(point: np.ndarray, levels: list[np.ndarray]):
    """Independent oracle: python loops, strict-< nearest neighbor."""
    tokens = []
    residual = point.astype(float).copy()
    total = np.zeros_like(residual)
    for li, book in enumerate(levels):
        best, best_d = 0, None
        for e, entry in enumerate(book):
            d = 0.0
            for a, b in zip(residual, entry):
                d += (a - b) ** 2
            if best_d is None or d < best_d:
                best, best_d = e, d
        tokens.append(li * len(book) + best)
        residual = residual - book[best]
        total = total + book[best]
    return tokens, total


def test_quantize_hand_example():
    # two levels of two entries each; worked by hand
    book = book_from_arrays([[(0.0, 0.0), (1.0, 1.0)], [(0.0, 0.0), (0.2, 0.0)]])
    z = np.array([[1.2], [1.0]])  # one timestep, Dim=2
    zq, seq = quantize_residual(z, book)
    assert seq.tokens == [1, 2 + 1]
    np.testing.assert_allclose(zq.data[:, 0], [1.2, 1.0], atol=1e-15)


def test_quantize_exact_match_zero_error():
    book = book_from_arrays([[(0.5, -0.25), (2.0, 2.0)], [(0.0, 0.0), (1.0, 0.0)]])
    z = np.array([[0.5], [-0.25]])
    zq, seq = quantize_residual(z, book)
    assert seq.tokens == [0, 2]
    np.testing.assert_array_equal(zq.data, z)


def test_depth_one_is_plain_vq():
    book = book_from_arrays([[(0.0, 0.0), (1.0, 1.0), (3.0, 3.0)]])
    z = np.array([[0.9, 2.6], [1.1, 2.4]])
    zq, seq = quantize_residual(z, book)
    assert seq.tokens == [1, 2]
    np.testing.assert_allclose(zq.data, [[1.0, 3.0], [1.0, 3.0]])


def test_tie_goes_to_lowest_index():
    book = book_from_arrays([[(1.0, 0.0), (1.0, 0.0), (0.0, 0.0)]])
    z = np.array([[1.0], [0.0]])
    _, seq = quantize_residual(z, book)
    assert seq.tokens == [0]
    # equidistant between entries 0 and 2
    book2 = book_from_arrays([[(1.0, 0.0), (5.0, 5.0), (-1.0, 0.0)]])
    _, seq2 = quantize_residual(np.array([[0.0], [0.0]]), book2)
    assert seq2.tokens == [0]


def test_quantize_matches_bruteforce_oracle():
    rng = np.random.default_rng(2024)
    for _ in range(120):
        dim = int(rng.integers(1, 17))
        size = int(rng.integers(2, 65))
        depth = int(rng.integers(1, 4))
        levels = [rng.normal(size=(size, dim)) for _ in range(depth)]
        if rng.random() < 0.3:  # inject duplicate entries to exercise ties
            for lv in levels:
                lv[size // 2] = lv[0]
        t_len = int(rng.integers(1, 5))
        z = rng.normal(size=(dim, t_len))
        book = book_from_arrays(levels)
        zq, seq = quantize_residual(z, book)
        for t in range(t_len):
            tokens, total = brute_force_rvq(z[:, t], levels)
            assert seq.tokens[t * depth : (t + 1) * depth] == tokens
            np.testing.assert_allclose(zq.data[:, t], total, atol=1e-12)


def test_residual_monotone_with_zero_entry():
    rng = np.random.default_rng(6)
    for _ in range(30):
        dim, size, depth = 5, 7, 3
        levels = [rng.normal(size=(size, dim)) for _ in range(depth)]
        for lv in levels:
            lv[0] = 0.0  # zero vector always available
        z = rng.normal(size=(dim, 4))
        book = book_from_arrays(levels)
        residual = z.T.copy()
        norms = [np.linalg.norm(residual, axis=1)]
        for lv in levels:
            d2 = ((residual[:, None, :] - lv[None]) ** 2).sum(2)
            idx = np.argmin(d2, axis=1)
            residual = residual - lv[idx]
            norms.append(np.linalg.norm(residual, axis=1))
        for a, b in zip(norms, norms[1:]):
            assert np.all(b <= a + 1e-12)


def test_quantize_usage_counts():
    book = book_from_arrays([[(0.0, 0.0), (1.0, 1.0)]])
    z = np.array([[1.0, 0.9, 0.0], [1.0, 1.1, 0.1]])
    quantize_residual(z, book, update_usage=True)
    assert book.usage[0].tolist() == [1, 2]


def test_empty_codebook():
    with pytest.raises(EmptyCodebook):
        quantize_residual(np.zeros((2, 1)), Codebook(levels=[], usage=[]))


def test_encode_shapes_and_padding():
    cfg = small_cfg()
    store = init_codec_params(cfg, np.random.default_rng(0))
    rows = np.zeros((8, 9))
    z, pad = encode(__import__("stroketok.matrix_codec", fromlist=["StrokeMatrix"]).StrokeMatrix(rows, scaled=True), cfg, store)
    assert z.data.shape == (cfg.code_dim, 4) and pad == 0

    cfg2 = small_cfg(compression_stages=2, channels=(12, 12))
    store2 = init_codec_params(cfg2, np.random.default_rng(0))
    from stroketok.matrix_codec import StrokeMatrix

    z2, pad2 = encode(StrokeMatrix(np.zeros((8, 9)), scaled=True), cfg2, store2)
    assert z2.data.shape == (cfg2.code_dim, 2) and pad2 == 0

    z3, pad3 = encode(StrokeMatrix(np.zeros((7, 9)), scaled=True), cfg2, store2)
    assert z3.data.shape == (cfg2.code_dim, 2) and pad3 == 1


def test_decode_shape_and_clamp():
    from stroketok.matrix_codec import StrokeMatrix

    cfg = small_cfg()
    store = init_codec_params(cfg, np.random.default_rng(1))
    # blow up decoder weights so raw outputs exceed [-1, 1]
    store["dec0.proj.w"].data *= 1000.0
    zq = np.random.default_rng(2).normal(size=(cfg.code_dim, 4))
    m = decode(zq, cfg, store)
    assert m.rows.shape == (8, 9)
    assert m.scaled
    assert np.all(np.isfinite(m.rows))
    assert np.abs(m.rows).max() <= 1.0
    trimmed = decode(zq, cfg, store, original_len=5)
    assert trimmed.rows.shape == (5, 9)


def test_loss_zero_and_alpha_off():
    z = Tensor(np.array([[1.0], [0.0]]), requires_grad=True)
    zq = Tensor(z.data.copy())
    recon = Tensor(np.zeros((9, 4)), requires_grad=True)
    target = np.zeros((9, 4))
    total, l_cb, l_cm, l_rc = codec_loss(target, recon, z, zq, alpha=1.0)
    assert float(total.data) == 0.0

    rng = np.random.default_rng(0)
    recon2 = Tensor(rng.normal(size=(9, 4)), requires_grad=True)
    zq2 = Tensor(rng.normal(size=(2, 1)))
    total2, _, _, l_rc2 = codec_loss(target, recon2, z, zq2, alpha=0.0)
    assert float(total2.data) == pytest.approx(float(l_rc2.data))


def test_loss_hand_arithmetic():
    # Z=(1,0), Zq=(0,0), matrices equal, alpha=1 -> each VQ term is 0.5
    z = Tensor(np.array([[1.0], [0.0]]), requires_grad=True)
    zq = Tensor(np.zeros((2, 1)))
    recon = Tensor(np.zeros((9, 2)))
    total, l_cb, l_cm, l_rc = codec_loss(np.zeros((9, 2)), recon, z, zq, alpha=1.0)
    assert float(l_cb.data) == pytest.approx(0.5)
    assert float(l_cm.data) == pytest.approx(0.5)
    assert float(l_rc.data) == 0.0
    assert float(total.data) == pytest.approx(1.0)


def test_gradient_routing_as_printed():
    """Commitment term -> codebook only; codebook term -> encoder only."""
    cfg = small_cfg()
    rng = np.random.default_rng(5)
    store = init_codec_params(cfg, rng)
    codebook = make_codebook(cfg, store)
    for lv in codebook.levels:
        lv.data = rng.normal(size=lv.data.shape)
    corpus = scaled_corpus(2, 40)
    m = corpus[0]

    z, _ = encode(m, cfg, store)
    zq, _ = quantize_residual(z, codebook)
    _, l_cb, l_cm, _ = codec_loss(
        np.zeros((9, 2)), Tensor(np.zeros((9, 2)), requires_grad=True), z, zq, 1.0
    )

    backward(l_cm)
    enc_names = [n for n, _ in store.trainable() if n.startswith("enc")]
    for n in enc_names:
        assert store[n].grad is None or not np.any(store[n].grad)
    assert any(np.any(lv.grad) for lv in codebook.levels if lv.grad is not None)

    store.zero_grads()
    z2, _ = encode(m, cfg, store)
    zq2, _ = quantize_residual(z2, codebook)
    _, l_cb2, _, _ = codec_loss(
        np.zeros((9, 2)), Tensor(np.zeros((9, 2)), requires_grad=True), z2, zq2, 1.0
    )
    backward(l_cb2)
    for lv in codebook.levels:
        assert lv.grad is None or not np.any(lv.grad)
    assert any(
        store[n].grad is not None and np.any(store[n].grad) for n in enc_names
    )


def test_straight_through_matches_identity_graph():
    """With a codebook that reproduces Z exactly, encoder grads equal the
    no-quantizer autoencoder grads."""
    cfg = small_cfg(rvq_depth=2)
    rng = np.random.default_rng(9)
    store = init_codec_params(cfg, rng)
    m = scaled_corpus(1, 77)[0]

    with no_grad():
        z_plain, pad = encode(m, cfg, store)
    from stroketok.vq_codec import pad_rows

    target, _ = pad_rows(m.rows, cfg.compression_stages)

    # level 0 holds every latent column exactly; level 1 holds only zeros
    cols = z_plain.data.T
    book = book_from_arrays([cols, np.zeros((2, cfg.code_dim))])

    z, _ = encode(m, cfg, store)
    zq, _ = quantize_residual(z, book)
    np.testing.assert_allclose(zq.data, z.data, atol=1e-12)
    recon = _decode_tensor(straight_through(z, zq), cfg, store)
    loss = codec_loss(target, recon, z, zq, 1.0)[0]
    backward(loss)
    grads_st = {n: t.grad.copy() for n, t in store.trainable() if t.grad is not None}

    store.zero_grads()
    z_id, _ = encode(m, cfg, store)
    recon_id = _decode_tensor(z_id, cfg, store)
    l_rc = codec_loss(target, recon_id, z_id, Tensor(z_id.data.copy()), 1.0)[0]
    backward(l_rc)
    for name, g in grads_st.items():
        ref = store[name].grad
        assert ref is not None
        assert np.abs(g - ref).max() < 1e-10, name


def test_train_overfit_single_graphic():
    cfg = small_cfg(
        codebook_size=16,
        code_dim=8,
        rvq_depth=2,
        channels=(24,),
        steps=2000,
        batch_size=1,
        lr=2e-3,
        seed=11,
        target_recon=5e-4,
    )
    corpus = scaled_corpus(1, 300)
    store, codebook, logs = train(corpus, cfg)
    assert logs[-1]["recon"] < 1e-3
    # smoothed loss non-increasing over the run (window 100)
    totals = np.array([row["total"] for row in logs])
    if len(totals) >= 200:
        w = 100
        smooth = np.convolve(totals, np.ones(w) / w, mode="valid")
        assert smooth[-1] <= smooth[0]


def test_train_seed_determinism(tmp_path):
    cfg = small_cfg(steps=30, seed=21)
    corpus = scaled_corpus(4, 50)
    s1, c1, _ = train(corpus, cfg)
    s2, c2, _ = train(corpus, cfg)
    p1, p2 = tmp_path / "a.stkt", tmp_path / "b.stkt"
    save_vq_checkpoint(str(p1), s1, c1, cfg)
    save_vq_checkpoint(str(p2), s2, c2, cfg)
    assert p1.read_bytes() == p2.read_bytes()


def test_train_diverged():
    cfg = small_cfg(steps=5, lr=1e6)
    corpus = scaled_corpus(2, 8)
    store = init_codec_params(cfg, np.random.default_rng(0))
    store["enc0.down.w"].data *= np.inf
    # direct loop would NaN; train() raises instead of looping forever
    with pytest.raises(Diverged):
        corpus2 = [
            type(corpus[0])(rows=np.full_like(corpus[0].rows, np.nan), scaled=True)
        ]
        train(corpus2, cfg)


def test_tokenize_detokenize_contracts():
    cfg = small_cfg(steps=60, codebook_size=16, code_dim=8, channels=(16,), seed=5)
    graphics = gen_synthetic(4, 61)
    corpus = [scale(to_matrix(g), TO_UNIT, g.viewbox) for g in graphics]
    store, codebook, _ = train(corpus, cfg)

    g = graphics[0]
    seq = tokenize(g, store, codebook, cfg)
    expected_frames = -(-g.command_count() // cfg.rate)
    assert len(seq.tokens) == cfg.rvq_depth * expected_frames
    assert seq.latent_len == expected_frames
    assert all(0 <= t < cfg.rvq_depth * cfg.codebook_size for t in seq.tokens)
    assert seq.meta["orig_len"] == g.command_count()

    out = detokenize(seq, store, codebook, cfg)
    # decode trims to orig_len rows; from_matrix may prepend one synthesized
    # MoveTo when the first decoded row is not a move
    assert g.command_count() <= out.command_count() <= g.command_count() + 1
    assert out.viewbox == g.viewbox

    with pytest.raises(BadTokenId):
        bad = StrokeTokenSeq(
            tokens=[cfg.rvq_depth * cfg.codebook_size],
            latent_len=1,
            meta=seq.meta,
        )
        detokenize(bad, store, codebook, cfg)


def test_lookup_tokens_total_on_any_valid_ids():
    book = book_from_arrays([[(1.0, 0.0), (0.0, 1.0)], [(5.0, 5.0), (7.0, 7.0)]])
    out = lookup_tokens([0, 0], book)  # two level-0 ids in one frame
    np.testing.assert_allclose(out[:, 0], [2.0, 0.0])
    with pytest.raises(BadTokenId):
        lookup_tokens([4], book)


def test_token_file_round_trip(tmp_path):
    cfg = small_cfg()
    seq = StrokeTokenSeq(tokens=[0, 9, 3, 11], latent_len=2, meta={})
    p = tmp_path / "g.tok"
    save_tokens(seq, str(p), cfg)
    text = p.read_text().splitlines()
    assert text[0] == "# stroketok v1 d=2 B=8 stages=1"
    assert text[1:] == ["0", "9", "3", "11"]
    loaded = load_tokens(str(p))
    assert loaded.tokens == seq.tokens
    assert loaded.latent_len == 2
    assert loaded.meta["codebook_size"] == 8


def test_checkpoint_round_trip(tmp_path):
    cfg = small_cfg(steps=8)
    corpus = scaled_corpus(3, 17)
    store, codebook, _ = train(corpus, cfg)
    p = tmp_path / "vq.stkt"
    save_vq_checkpoint(str(p), store, codebook, cfg)
    store2, codebook2, cfg2 = load_vq_checkpoint(str(p))
    assert cfg2 == cfg
    for name in store.names():
        assert np.array_equal(store[name].data, store2[name].data)
    g = gen_synthetic(1, 31)[0]
    s1 = tokenize(g, store, codebook, cfg)
    s2 = tokenize(g, store2, codebook2, cfg2)
    assert s1.tokens == s2.tokens
