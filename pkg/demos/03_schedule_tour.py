"""The deep-to-shallow boundary schedule in action.

A client's distillation boundary starts at the deepest drop-set entry and
moves one entry shallower every z0 participations, clamping at the
shallowest. Personalization deepens as the shared knowledge shrinks.
"""

import math

from fedd2s import models
from fedd2s.protocol import DropConfig, distillation_layer

desk = models.desk_spec(classes=10, input_shape=(8, 8, 1))
print(f"desk default drop set: {models.default_drop_set(desk)} "
      f"(deepest conv + dense stack; flatten at {models.flatten_index(desk)} is never eligible)")


def show(drop_set, z0, z_max=13) -> None:
    cfg = DropConfig(drop_set, z0)
    row = " ".join(f"{distillation_layer(z, cfg)}" for z in range(1, z_max + 1))
    label = "inf" if math.isinf(z0) else z0
    print(f"  drop {str(drop_set):<14} z0={label:<4} z=1..{z_max}:  {row}")


print("\nboundary by participation count:")
show((3, 5, 6), 3)
show((2, 3, 5, 6), 3)
show((2, 3, 5, 6), 2)
show((6,), math.inf)

print("\nwith z0=3 every boundary serves three participations before the")
print("schedule drops to the next shallower entry and finally sticks.")
