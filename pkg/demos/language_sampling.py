"""How the temperature exponent flattens a skewed language distribution.

Run: python demos/language_sampling.py
"""
import itertools
from collections import Counter

from deskt5 import MixtureSpec, language_probs, mixed_stream
from deskt5.harness import default_cipher_spec, gen_cipher_corpus
from deskt5.corpus import stats_from_items

counts = {"en": 4000, "xa": 3000, "xb": 2000, "xc": 1500, "xd": 1000, "xe": 600}
print("lang  " + "  ".join(f"a={a:<4}" for a in (1.0, 0.7, 0.3, 0.0)))
dists = {a: language_probs(counts, a) for a in (1.0, 0.7, 0.3, 0.0)}
for lang in counts:
    print(f"{lang:4}  " + "  ".join(f"{dists[a].prob(lang):.4f}" for a in dists))

# the mixture draws parallel data with probability r, monolingual otherwise
corpus = gen_cipher_corpus(default_cipher_spec(0))
stats = stats_from_items(corpus.mono, corpus.parallel)
for r in (0.1, 0.5):
    draws = list(itertools.islice(mixed_stream(corpus.mono, corpus.parallel, stats, MixtureSpec(0.3, r, 0)), 20000))
    kinds = Counter(t.kind for t in draws)
    print(f"\nr={r}: parallel fraction {kinds['parallel'] / len(draws):.3f}")
    mono = Counter(t.key for t in draws if t.kind == "mono")
    total = sum(mono.values())
    print("  mono share  " + "  ".join(f"{k}={mono[k] / total:.3f}" for k in counts))
