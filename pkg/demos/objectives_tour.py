"""Walk one sentence pair through every pre-training objective.

Run: python demos/objectives_tour.py
"""
import numpy as np

from deskt5 import NoiseSpec, Objective, build_example, build_vocab
from deskt5.corpus import Document, ParallelPair
from deskt5.objectives import reconstruct, render_example

vocab = build_vocab(["en", "de"], sentinel_count=100)
noise = NoiseSpec(noise_density=0.15, mean_span_length=3.0)
rng = np.random.default_rng(0)

pair = ParallelPair("en", "de", "the small house is red", "das kleine haus ist rot")
doc = Document("en", "the small house is red and the garden is green")

for objective in Objective:
    item = doc if objective is Objective.MLM else pair
    ex = build_example(objective, item, vocab, noise, rng)
    print(render_example(ex, vocab))
    print()

# span corruption is invertible: splicing the target spans back gives the input
ex = build_example(Objective.MLM, doc, vocab, noise, np.random.default_rng(1))
restored = reconstruct(ex.input, ex.target, vocab)
print("reconstructed:", bytes(t - vocab.byte_offset for t in restored).decode())
