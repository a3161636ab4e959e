"""
Cosine retrieval, contrastive pairs, and the ranking loss
=========================================================

Build an embedding index over personas, retrieve the group nearest a query,
assemble hard/random negative training pairs, and evaluate the contrastive
loss that would train the embedder.
"""

import numpy as np

from popalign import (
    EmbeddingIndex,
    build_training_pairs,
    contrastive_loss,
    contrastive_loss_from_scores,
    make_trait_personas,
    top_k_retrieve,
)

rng = np.random.default_rng(11)

# personas embedded in trait space: two latent groups, one tight and one wide
tight = rng.normal([2.0, 0.0, 0.0], 0.15, (30, 3))
wide = rng.normal([-1.0, 1.0, 0.5], 0.8, (70, 3))
thetas = np.concatenate([tight, wide])
personas = make_trait_personas(thetas)
index = EmbeddingIndex.build([p.id for p in personas], thetas)

query = np.array([1.0, 0.0, 0.0])  # points at the tight group
hits = top_k_retrieve(query, index, k=8)
print("top 8 for the tight-group query:")
for pid, score in hits:
    print(f"  {pid}  cosine {score:.4f}")
tight_ids = {p.id for p in personas[:30]}
print("hits inside the tight group:", sum(1 for pid, _ in hits if pid in tight_ids), "of 8")

# contrastive pairs: positives are the retrieved personas, negatives mix the
# hardest lookalikes with random fillers
queries = [(f"q{j}", thetas[j] + rng.normal(0, 0.05, 3), personas[j].id) for j in (0, 45)]
pairs = build_training_pairs(index, queries, n_hard=4, n_random=3, seed=2)
for p in pairs:
    print(p.query_id, "positive", p.positive_id, "negatives", list(p.negative_ids), "exhausted", p.exhausted)

# the loss on embeddings, and the same value from raw similarity scores
q, pos = thetas[0], thetas[0]
negs = [thetas[45], thetas[60]]
print("loss(query = its own positive):", contrastive_loss(q, pos, negs))
print("score form, well separated:    ", contrastive_loss_from_scores(1.0, [-0.2, 0.1]))
print("score form, indistinguishable: ", contrastive_loss_from_scores(0.5, [0.5]), "= log 2")

# more or harder negatives always raise the loss
for k in range(1, 5):
    print(f"  {k} negatives at s=0.3:", contrastive_loss_from_scores(0.9, [0.3] * k))
