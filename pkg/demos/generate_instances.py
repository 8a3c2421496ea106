"""Generate synthetic instances and inspect their structure.

Builds the simple variant (gamma travel times whose means equal planar
distances, so the triangle inequality holds) and the hard variant (a seeded
share of edges has its mean inflated until some triangle verifiably
breaks), prints summary statistics for both, and round-trips one instance
through the JSON file format.
"""

import itertools

from dsop import (
    GammaDist,
    GeneratorConfig,
    generate_synthetic,
    load_instance,
    save_instance,
    validate_instance,
)


def base_mean(instance, a, b):
    dist = instance.edge(a, b).bands[0].dist
    return dist.shape * dist.scale


def triangle_violations(instance):
    bad = 0
    for a, b, c in itertools.combinations(range(instance.vertex_count), 3):
        ab, bc, ac = (base_mean(instance, *p) for p in ((a, b), (b, c), (a, c)))
        if ac > ab + bc + 1e-9 or ab > ac + bc + 1e-9 or bc > ab + ac + 1e-9:
            bad += 1
    return bad


def describe(label, instance):
    shapes = [band.dist.shape for e in instance.edges for band in e.bands
              if isinstance(band.dist, GammaDist)]
    bands = {len(e.bands) for e in instance.edges}
    rewards = [v.reward for v in instance.vertices]
    print(f"{label}:")
    print(f"  vertices {instance.vertex_count}, directed edges {len(instance.edges)}, "
          f"bands per edge {sorted(bands)}")
    print(f"  gamma shapes in [{min(shapes):.2f}, {max(shapes):.2f}], "
          f"rewards in [{min(rewards):.0f}, {max(rewards):.0f}]")
    print(f"  broken triangles (base means): {triangle_violations(instance)}")
    print(f"  validation violations: {len(validate_instance(instance))}")


def main():
    simple = generate_synthetic(GeneratorConfig(vertex_count=12, theta=2.0, seed=42))
    hard = generate_synthetic(
        GeneratorConfig(vertex_count=12, theta=None, hard_variant=True, seed=42)
    )
    describe("simple variant (seed 42)", simple)
    describe("hard variant (seed 42)", hard)

    text = save_instance(simple)
    again = load_instance(text)
    print(f"\nJSON round trip: {len(text)} bytes, "
          f"identical: {again == simple}")
    print("first lines of the file format:")
    for line in text.splitlines()[:6]:
        print(f"  {line}")


if __name__ == "__main__":
    main()
