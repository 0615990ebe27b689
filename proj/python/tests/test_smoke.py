import math

import pytest

import toyvlm


def test_tokenizer_round_trip():
    tok = toyvlm.Tokenizer()
    assert tok.vocab_size == 262
    ids = tok.encode('USER: <img>"<image>"</img>')
    assert 256 in ids  # <img> is a single token
    assert tok.decode(ids) == 'USER: <img>"<image>"</img>'


def test_template_rendering():
    rec = {"kind": "nlp", "prompt": "Hello?", "response": "Hi."}
    text = toyvlm.render_template(rec, "vicuna_v1")
    assert text == 'USER: "Hello?" ASSITANT: "Hi." </s>'
    qwen = toyvlm.render_template(rec, "qwen")
    assert qwen.startswith("<|im_start|>")


def test_metrics():
    assert toyvlm.levenshtein("kitten", "sitting") == 3
    assert toyvlm.anls("abcd", ["abcc"]) == pytest.approx(0.75)
    assert toyvlm.relaxed_accuracy("105", "100")
    assert not toyvlm.relaxed_accuracy("106", "100")
    assert toyvlm.iou([0, 0, 2, 2], [1, 1, 3, 3]) == pytest.approx(1.0 / 7.0)
    assert toyvlm.normalize_box([50, 100, 150, 200], 500, 500) == [100, 200, 300, 400]
    assert toyvlm.denormalize_box([100, 200, 300, 400], 500, 500) == [50.0, 100.0, 150.0, 200.0]


def test_gen_document_deterministic():
    a = toyvlm.gen_document(seed=7)
    b = toyvlm.gen_document(seed=7)
    assert a == b
    assert a["width"] == a["height"] == 64
    assert len(a["pixels"]) == 64 * 64 * 3
    assert a["markdown"].startswith("# ")


def test_model_shapes_and_generate(tmp_path):
    model = toyvlm.Model("toy", seed=1)
    page = tmp_path / "page.ppm"
    toyvlm.write_text_page("HELLO", 64, str(page))
    assert model.encode_image_shape(str(page)) == [16, 64]
    out = model.generate("What is this?", image_path=str(page), max_new_tokens=4)
    assert isinstance(out, bytes) and len(out) <= 4
    rec = {"kind": "nlp", "prompt": "A", "response": "B"}
    loss = model.loss(rec)
    assert math.isfinite(loss) and loss > 0


def test_checkpoint_round_trip(tmp_path):
    model = toyvlm.Model("toy_tiny_plus", seed=3)
    path = tmp_path / "m.ckpt"
    model.save(str(path), stage_tag="tiny_plus")
    info = toyvlm.inspect_checkpoint(str(path))
    assert info["stage"] == "tiny_plus"
    assert info["n_tensors"] == len(model.param_names())
    loaded = toyvlm.Model.from_checkpoint(str(path))
    assert loaded.group_checksum("vocab_branch") == model.group_checksum("vocab_branch")
    assert loaded.stage_tag == "tiny_plus"


def test_errors():
    with pytest.raises(ValueError):
        toyvlm.Model("nope")
    with pytest.raises(OSError):
        toyvlm.inspect_checkpoint("/does/not/exist.ckpt")
