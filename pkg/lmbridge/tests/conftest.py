import json

import pytest


VOCAB = [
    "[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]",
    # whole words
    "the", "heat", "island", "effect", "urban", "areas", "warm", "quickly",
    "cities", "trap", "solar", "radiation", "concrete", "absorbs", "energy",
    "night", "cooling", "slows", "down", "wind", "patterns", "shift", "over",
    "dense", "districts", "trees", "reduce", "surface", "temperatures",
    "water", "bodies", "moderate", "local", "climate", "models", "predict",
    "stronger", "effects", "in", "summer", "and", "weaker", "ones", "winter",
    "planners", "respond", "with", "green", "roofs", "reflective", "materials",
    "help", "a", "lot", ".", ",",
    # pieces so that some words split into multiple subwords
    "micro", "##climates", "##heat", "over##", "anti",
]


@pytest.fixture(scope="session")
def tiny_model_dir(tmp_path_factory):
    """A seeded 12-head, 4-layer masked-LM saved to disk for offline loading."""
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    root = tmp_path_factory.mktemp("tiny-lm")
    vocab_file = root / "vocab.txt"
    vocab_file.write_text("\n".join(VOCAB) + "\n")
    tokenizer = BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True)
    config = BertConfig(
        vocab_size=len(VOCAB),
        hidden_size=24,
        num_hidden_layers=4,
        num_attention_heads=12,
        intermediate_size=48,
        max_position_embeddings=128,
    )
    torch.manual_seed(1234)
    model = BertModel(config)
    model_dir = root / "model"
    model.save_pretrained(model_dir)
    tokenizer.save_pretrained(model_dir)
    return str(model_dir)


@pytest.fixture(scope="session")
def fixture_corpus(tmp_path_factory):
    """20 sentences over the tiny model's vocabulary, incl. multi-subword words."""
    texts = [
        "The heat island effect warms urban areas. Cities trap solar radiation.",
        "Concrete absorbs energy. Night cooling slows down.",
        "Wind patterns shift over dense districts. Trees reduce surface temperatures.",
        "Water bodies moderate local climate. Models predict stronger effects in summer.",
        "Weaker ones in winter. Planners respond with green roofs.",
        "Reflective materials help a lot. Microclimates shift quickly.",
        "Urban trees help a lot. Dense districts warm quickly.",
        "Solar radiation warms concrete. Green roofs reduce heat.",
        "Summer effects in cities. Winter cooling slows down.",
        "The heat island effect in summer. Microclimates over districts.",
    ]
    path = tmp_path_factory.mktemp("corpus") / "fixture.jsonl"
    with open(path, "w", encoding="utf-8") as fh:
        for i, text in enumerate(texts):
            fh.write(json.dumps({"id": f"abs{i:02d}", "text": text}) + "\n")
    return str(path)
