"""
Faceted catalogs and synthetic ratings
======================================

Items carry one value per facet (cuisine, area, price, vibe by default).
Users get latent facet tastes; ratings are sampled from the dot product
of taste and item facets plus noise. Everything is seeded.
"""

from convrec import SyntheticConfig, generate_synthetic, items_matching, split

cat = generate_synthetic(SyntheticConfig(seed=0))
print(f"catalog: {len(cat.items)} items, {len(cat.users)} users, "
      f"{len(cat.ratings)} ratings")
print(f"facets: {[(name, len(values)) for name, values in cat.schema.facets]}")

item = cat.items[0]
named = {name: cat.schema.values(j)[v]
         for j, (name, v) in enumerate(zip(cat.schema.names, item.values))}
print(f"\nfirst item {item.item_id}: {named}")

# facet-value filters drive both the rule policies and the chat service
hits = items_matching(cat, {0: item.values[0], 1: item.values[1]})
print(f"items sharing its cuisine and area: {len(hits)}")
exact = items_matching(cat, dict(enumerate(item.values)))
print(f"items matching on all four facets: {len(exact)}")

# fixed-ratio split used by every training stage
sp = split(cat, (0.8, 0.1, 0.1), seed=0)
print(f"\nsplit sizes: train {len(sp.train)}, dev {len(sp.dev)}, "
      f"test {len(sp.test)}")
r = sp.train[0]
print(f"sample rating: user {r.user_id} item {r.item_id} -> {r.rating:.2f}")
