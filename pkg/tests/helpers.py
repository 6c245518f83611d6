"""Shared construction helpers for the test suite."""


def make_doc(doc_id, sentences):
    """Build a Document directly from token lists (bypasses the tokenizer)."""
    from attnphrase.corpus import Document, SentenceTokens

    sents = []
    offset = 0
    for words in sentences:
        sents.append(SentenceTokens(words=tuple(words), doc_offset=offset))
        offset += len(words)
    return Document(id=doc_id, raw_text=" ".join(" ".join(w) for w in sentences), sentences=sents)
