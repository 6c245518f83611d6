"""Silver-label generation walkthrough.

Repeated multi-word patterns inside a single document make surprisingly
good unsupervised phrase labels: an author who writes "heat island effect"
twice in one abstract almost certainly means it as a unit.  This script
mines those core phrases from a toy document and contrasts them with
dictionary (gazetteer) matching, which only ever finds what the dictionary
already contains.
"""

from attnphrase.corpus import document_from_text
from attnphrase.labelgen import gazetteer_match, mine_core_phrases, sample_negatives

TEXT = (
    "The heat island effect raises urban temperatures at night. "
    "Planners measure the heat island effect with satellite data. "
    "Dense construction amplifies it, and dense construction is spreading."
)

doc = document_from_text("demo", TEXT)
print("document sentences:")
for i, sent in enumerate(doc.sentences):
    print(f"  [{i}] {' '.join(sent.words)}")

print("\ncore phrases (maximal patterns repeated >= 2 times):")
positives = mine_core_phrases(doc, min_freq=2, k_max=6)
for label in sorted(positives, key=lambda l: l.span.key):
    words = doc.sentences[label.span.sent_idx].words[label.span.start : label.span.end]
    print(f"  sent {label.span.sent_idx} [{label.span.start}:{label.span.end}] -> {' '.join(words)}")

# A gazetteer that only knows the partial phrase finds only the partial
# phrase -- this is the core argument for corpus-internal repetition over
# external dictionaries.
print('\ngazetteer matching with the incomplete entry "island effect":')
for label in sorted(gazetteer_match(doc, ["island effect"]), key=lambda l: l.span.key):
    words = doc.sentences[label.span.sent_idx].words[label.span.start : label.span.end]
    print(f"  sent {label.span.sent_idx} [{label.span.start}:{label.span.end}] -> {' '.join(words)}")

print("\nsampled negative spans (one per positive, uniform over the rest):")
for label in sorted(sample_negatives(doc, positives, seed=7), key=lambda l: l.span.key):
    words = doc.sentences[label.span.sent_idx].words[label.span.start : label.span.end]
    print(f"  sent {label.span.sent_idx} [{label.span.start}:{label.span.end}] -> {' '.join(words)}")
