import math

import numpy as np
import pytest

from text2sign import rnn, seq2seq
from text2sign.corpus import CorpusPair, ParallelCorpus
from text2sign.errors import TrainingDiverged
from text2sign.seq2seq import (
    TrainingConfig,
    build_model,
    encode_source,
    evaluate,
    greedy_decode,
    load_model,
    pair_loss,
    save_loss_csv,
    save_model,
    train,
    translate,
)
from text2sign.tokenizer import build_vocab, tokenize

TINY_CORPUS = ParallelCorpus((
    CorpusPair("¿Qué tal?", ("Tú", "Bien")),
    CorpusPair("Buenos días", ("Bien", "Día")),
    CorpusPair("¡Vamos a comer!", ("Vamos", "Comer")),
    CorpusPair("Dame la mano", ("Dame", "mano")),
))

TINY_CONFIG = TrainingConfig(learning_rate=0.01, epochs=60, val_fraction=0.0,
                             seed=3, n_hidden=24)


@pytest.fixture(scope="module")
def tiny_model():
    return train(TINY_CORPUS, TINY_CONFIG)


def fresh_model(corpus, config):
    rng = np.random.default_rng(config.seed)
    return build_model(build_vocab(corpus, "source"), build_vocab(corpus, "target"),
                       config, rng)


def test_initial_loss_near_uniform(shipped_corpus):
    config = TrainingConfig(n_hidden=32, seed=0)
    model = fresh_model(shipped_corpus, config)
    total, tokens = 0.0, 0
    for pair in shipped_corpus:
        loss, n = pair_loss(model, pair)
        total += loss
        tokens += n
    per_token = total / tokens
    bound = math.log(len(model.tgt_vocab))
    assert abs(per_token - bound) / bound < 0.2


def test_decoder_starts_from_encoder_final_state(monkeypatch, tiny_model):
    model, _ = tiny_model
    final = encode_source(model, model.src_vocab.encode(tokenize("¿Qué tal?")))
    seen = []
    original = rnn.lstm_cell_forward

    def spy(x, state, params, tanh_output_gate=False):
        seen.append(state)
        return original(x, state, params, tanh_output_gate)

    monkeypatch.setattr(rnn, "lstm_cell_forward", spy)
    greedy_decode(model, final)
    first = seen[0]
    assert np.array_equal(first.a, final.a) and np.array_equal(first.c, final.c)


def test_decoding_terminates_within_cap(tiny_model):
    model, _ = tiny_model
    for text in ("¿Qué tal?", "palabras totalmente desconocidas aquí", ""):
        out = greedy_decode(model, encode_source(model, model.src_vocab.encode(tokenize(text))))
        assert len(out) <= model.max_decode_len


def test_translate_empty_text(tiny_model):
    model, _ = tiny_model
    glosses = translate(model, "")
    assert isinstance(glosses, list)
    assert len(glosses) <= model.max_decode_len


def test_tiny_memorization(tiny_model):
    model, history = tiny_model
    assert history.train[-1] < 0.1 * history.train[0]
    metrics = evaluate(model, TINY_CORPUS)
    assert metrics.exact_match_rate == 1.0
    assert metrics.token_accuracy == 1.0


def test_single_pair_memorization():
    corpus = ParallelCorpus((CorpusPair("hola", ("Hola",)),))
    config = TrainingConfig(learning_rate=0.02, epochs=40, val_fraction=0.0,
                            seed=1, n_hidden=12)
    model, history = train(corpus, config)
    assert history.train[-1] < 0.05
    assert translate(model, "hola") == ["Hola"]


def test_training_is_bit_reproducible():
    config = TrainingConfig(learning_rate=0.01, epochs=5, val_fraction=0.25,
                            seed=9, n_hidden=10)
    model_a, hist_a = train(TINY_CORPUS, config)
    model_b, hist_b = train(TINY_CORPUS, config)
    assert hist_a.train == hist_b.train
    assert hist_a.val == hist_b.val
    for name, arr in model_a.parameters().items():
        assert np.array_equal(arr, model_b.parameters()[name])


def test_validation_losses_recorded():
    config = TrainingConfig(learning_rate=0.01, epochs=4, val_fraction=0.25,
                            seed=2, n_hidden=8)
    _, history = train(TINY_CORPUS, config)
    assert len(history.train) == 4 and len(history.val) == 4
    assert all(math.isfinite(v) and v >= 0 for v in history.train + history.val)


def test_training_divergence_detected(monkeypatch):
    monkeypatch.setattr(seq2seq, "_pair_forward",
                        lambda *args, **kwargs: ({}, float("nan")))
    config = TrainingConfig(learning_rate=0.01, epochs=2, val_fraction=0.0,
                            seed=0, n_hidden=8)
    with pytest.raises(TrainingDiverged):
        train(TINY_CORPUS, config)


def test_evaluate_perfect_and_chance(tiny_model):
    model, _ = tiny_model
    assert evaluate(model, TINY_CORPUS).exact_match_rate == 1.0
    untrained = fresh_model(TINY_CORPUS, TrainingConfig(n_hidden=8, seed=123))
    metrics = evaluate(untrained, TINY_CORPUS)
    assert metrics.exact_match_rate <= 0.25
    assert metrics.token_accuracy < 0.5


def test_evaluate_empty_corpus(tiny_model):
    model, _ = tiny_model
    with pytest.raises(ValueError):
        evaluate(model, ParallelCorpus(()))


def test_gradient_check_through_encoder_decoder():
    """Finite differences through the full seq2seq composition, including the
    encoder-to-decoder state handoff."""
    corpus = ParallelCorpus((
        CorpusPair("ab cd", ("X", "Y")),
        CorpusPair("cd", ("Y",)),
    ))
    config = TrainingConfig(n_hidden=3, seed=5)
    model = fresh_model(corpus, config)
    enc_in, dec_in, targets = seq2seq._teacher_inputs(model, corpus[0])

    grads, _ = seq2seq._pair_forward(model, enc_in, dec_in, targets, with_grads=True)
    params = model.parameters()

    h = 1e-6
    worst = 0.0
    for name, arr in params.items():
        flat = arr.reshape(-1)
        gflat = grads[name].reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            _, lp = seq2seq._pair_forward(model, enc_in, dec_in, targets, with_grads=False)
            flat[i] = orig - h
            _, lm = seq2seq._pair_forward(model, enc_in, dec_in, targets, with_grads=False)
            flat[i] = orig
            fd = (lp - lm) / (2 * h)
            err = abs(gflat[i] - fd) / max(abs(gflat[i]) + abs(fd), 1e-3)
            worst = max(worst, err)
    assert worst < 1e-5


def test_checkpoint_round_trip(tmp_path, tiny_model):
    model, _ = tiny_model
    path = tmp_path / "model.npz"
    save_model(model, path)
    loaded = load_model(path)
    assert loaded.src_vocab.tokens == model.src_vocab.tokens
    assert loaded.tgt_vocab.tokens == model.tgt_vocab.tokens
    assert loaded.n_hidden == model.n_hidden
    for name, arr in model.parameters().items():
        assert np.array_equal(arr, loaded.parameters()[name])
    assert translate(loaded, "¿Qué tal?") == translate(model, "¿Qué tal?")


def test_checkpoint_version_guard(tmp_path, tiny_model):
    model, _ = tiny_model
    path = tmp_path / "model.npz"
    save_model(model, path)
    import io
    import json

    with np.load(path) as data:
        arrays = {k: data[k] for k in data.files if k != "meta"}
        meta = json.loads(str(data["meta"]))
    meta["format_version"] = 999
    buf = io.BytesIO()
    np.savez(buf, meta=np.str_(json.dumps(meta)), **arrays)
    path.write_bytes(buf.getvalue())
    with pytest.raises(ValueError, match="version"):
        load_model(path)


def test_loss_csv(tmp_path, tiny_model):
    _, history = tiny_model
    path = tmp_path / "loss.csv"
    save_loss_csv(history, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "epoch,train_loss,val_loss"
    assert len(lines) == 1 + len(history.train)
    first = lines[1].split(",")
    assert first[0] == "1"
    assert float(first[1]) == pytest.approx(history.train[0])
    assert first[2] == ""  # no validation split in the tiny config
