"""
From joint-space dexterity to a workspace field
===============================================

Sampling random arm postures builds a map of the best manipulability
reachable at each workspace cell; a small network smooths that map into
a differentiable field whose gradient can steer the base.
"""

import numpy as np

from teleosim.kinematics import planar_two_link
from teleosim.manipfield import (GuidanceParams, guidance_cue, oracle_field,
                                 train_surrogate)

chain = planar_two_link(1.0, 1.0)
bounds = [[-2.1, 2.1], [-2.1, 2.1], [-0.05, 0.05]]
grid = oracle_field(chain, bounds, resolution=0.1, n_samples=300_000, seed=0)

# the two-link arm is most dexterous on the right-angle ring at radius
# sqrt(2); dexterity collapses both at the center fold and at full stretch
pts, vals = grid.known_points()
radius = np.linalg.norm(pts[:, :2], axis=1)
print("radius   best manipulability in band")
for lo in np.arange(0.0, 2.0, 0.25):
    band = (radius >= lo) & (radius < lo + 0.25)
    print(f"{lo:4.2f}-{lo + 0.25:4.2f}   {vals[band].max():.3f}")

surrogate = train_surrogate(grid, seed=0)
print(f"\nsurrogate held-out rmse {np.sqrt(surrogate.val_mse):.4f} "
      f"(field max {vals.max():.3f})")

# near full stretch the elbow is almost straight and dexterity collapses;
# a pure field-ascent cue (blend weight 0 on the outward term) points the
# base back toward the dexterous ring.  This field is radially symmetric,
# which makes the default half-and-half blend cancel at the rim; the
# asymmetric whole-arm field used in sessions has no such degeneracy.
params = GuidanceParams(alpha=0.0, manip_threshold=0.6, stretch_radius=0.3)
cue = guidance_cue([2.0, 0.0, 0.0], surrogate, params)
print(f"cue at stretched pose: active={cue.active}, "
      f"force ({cue.force_xy[0]:+.2f}, {cue.force_xy[1]:+.2f}) N")
