"""Swap the synthetic attention for a real language model via lmbridge.

The training and tagging code never sees the language model: it reads
attention tensors from an archive file.  The lmbridge package (a separate
install) produces that archive from any Hugging Face masked LM.  By default
this demo builds a tiny randomly initialised 12-head model so it runs
offline; pass a model id or path as the first argument to use a real one.

    python demos/03_lm_bridge.py [model-id-or-path]
"""

import json
import sys
import tempfile
from pathlib import Path

from attnphrase.attnfeat import ArchiveProvider
from attnphrase.classifier import ModelCheckpoint, TrainConfig, init_params
from attnphrase.corpus import load_corpus
from attnphrase.tagger import OVERLAP, tag_corpus
from lmbridge import export_attention

workdir = Path(tempfile.mkdtemp(prefix="lmbridge-demo-"))

if len(sys.argv) > 1:
    model_id = sys.argv[1]
else:
    print("no model given; building a tiny random 12-head stand-in")
    import torch
    from transformers import BertConfig, BertModel, BertTokenizerFast

    vocab = ["[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"] + [
        w for w in "the heat island effect warms urban areas at night . cities trap solar radiation".split()
    ]
    vocab_file = workdir / "vocab.txt"
    vocab_file.write_text("\n".join(dict.fromkeys(vocab)) + "\n")
    torch.manual_seed(0)
    model = BertModel(BertConfig(
        vocab_size=len(dict.fromkeys(vocab)), hidden_size=24, num_hidden_layers=3,
        num_attention_heads=12, intermediate_size=48, max_position_embeddings=128,
    ))
    model_id = str(workdir / "model")
    model.save_pretrained(model_id)
    BertTokenizerFast(vocab_file=str(vocab_file), do_lower_case=True).save_pretrained(model_id)

corpus_path = workdir / "corpus.jsonl"
with open(corpus_path, "w", encoding="utf-8") as fh:
    fh.write(json.dumps({"id": "a1", "text": "The heat island effect warms urban areas at night."}) + "\n")
    fh.write(json.dumps({"id": "a2", "text": "Cities trap solar radiation. The heat island effect warms cities."}) + "\n")

archive_path = workdir / "attention.ucat"
manifest = export_attention(
    corpus_path, archive_path, model_id=model_id, manifest_path=workdir / "manifest.json"
)
print(f"exported {manifest.sentence_count} sentences from {manifest.model_id}")
print(f"layers {manifest.layer_indices}, {manifest.n_heads} heads, crc32 {manifest.archive_crc32:#010x}")

# The primary pipeline consumes the archive exactly as it would a synthetic
# one.  An untrained classifier is enough to show the plumbing end to end.
docs = load_corpus(corpus_path)
checkpoint = ModelCheckpoint(
    params=init_params(len(manifest.layer_indices) * manifest.n_heads, seed=0),
    config=TrainConfig(k_max=6), best_epoch=1, val_f1=0.0,
    n_channels=len(manifest.layer_indices) * manifest.n_heads,
)
provider = ArchiveProvider(archive_path)
predictions, _ = tag_corpus(docs, provider, checkpoint, 0.0, OVERLAP)
provider.close()
print(f"tagger scored {len(predictions)} candidate spans from the bridge archive")
for p in predictions[:5]:
    print(f"  {p.doc_id} sent {p.span.sent_idx} [{p.span.start}:{p.span.end}] p={p.probability:.3f}")
