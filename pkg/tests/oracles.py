"""Independent brute-force reference implementations used by the tests.

These deliberately avoid the production code paths: plain enumeration,
pairwise checks and direct indexing only.
"""

from collections import Counter

from attnphrase.corpus import Document


def brute_force_core_patterns(words, min_freq, k_max, stopwords):
    """Reference miner: enumerate every n-gram, count, filter, prune maximality."""
    counts = Counter()
    for n in range(2, k_max + 1):
        for i in range(len(words) - n + 1):
            counts[tuple(words[i : i + n])] += 1

    def valid(g):
        if g[0] in stopwords or g[-1] in stopwords:
            return False
        for tok in g:
            if tok.isdigit():
                return False
            if not any(ch.isalnum() for ch in tok):
                return False
        return True

    frequent = {g for g, c in counts.items() if c >= min_freq and valid(g)}
    maximal = set()
    for g in frequent:
        contained = False
        for h in frequent:
            if len(h) > len(g):
                for i in range(len(h) - len(g) + 1):
                    if h[i : i + len(g)] == g:
                        contained = True
                        break
            if contained:
                break
        if not contained:
            maximal.add(g)
    return maximal


def brute_force_core_spans(doc: Document, min_freq, k_max, stopwords):
    """Every in-sentence occurrence of a reference core pattern."""
    patterns = brute_force_core_patterns(doc.word_sequence, min_freq, k_max, stopwords)
    spans = set()
    for sent_idx, sent in enumerate(doc.sentences):
        for n in range(2, k_max + 1):
            for i in range(len(sent.words) - n + 1):
                if tuple(sent.words[i : i + n]) in patterns:
                    spans.add((sent_idx, i, i + n))
    return spans


def brute_force_gazetteer_spans(doc: Document, entries, k_max):
    """Quadratic all-substring matcher with greedy longest-first selection."""
    spans = set()
    for sent_idx, sent in enumerate(doc.sentences):
        matches = []
        for i in range(len(sent.words)):
            for j in range(i + 2, min(i + k_max, len(sent.words)) + 1):
                if tuple(sent.words[i:j]) in entries:
                    matches.append((i, j))
        matches.sort(key=lambda m: (-(m[1] - m[0]), m[0]))
        taken = []
        for i, j in matches:
            if all(j <= a or i >= b for a, b in taken):
                taken.append((i, j))
        spans.update((sent_idx, i, j) for i, j in taken)
    return spans


def brute_force_span_count(n, k_max):
    count = 0
    for i in range(n):
        for j in range(i + 2, n + 1):
            if j - i <= k_max:
                count += 1
    return count
