"""Translational embeddings on two disconnected cliques: link-prediction
quality and the nearest neighbours of one country from each clique."""
from gravitykg.fixtures import two_clique_kg
from gravitykg.projection import neighborhood, pca_3d
from gravitykg.transe import TranseConfig, evaluate_links, train


def main():
    kg = two_clique_kg()
    space, trace = train(kg, TranseConfig(seed=7))
    m = evaluate_links(kg.triples, space)
    drop = 1 - trace.mean_loss[-1] / trace.mean_loss[0]
    print(f"{len(kg.entities)} entities, {len(kg.triples)} triples, relations {[r.name for r in kg.relations]}")
    print(f"loss {trace.mean_loss[0]:.3f} -> {trace.mean_loss[-1]:.3f} ({100 * drop:.0f}% drop)")
    print(f"hits@1 {m.hits_at_1:.3f}  hits@3 {m.hits_at_3:.3f}  mrr {m.mrr:.3f}")
    for lab in ("A00", "B00"):
        print(lab, [(n, round(d, 3)) for n, d in neighborhood(lab, space, 6)])
    proj = pca_3d(space)
    print("explained variance", [round(v, 3) for v in proj.explained_variance])


if __name__ == "__main__":
    main()
