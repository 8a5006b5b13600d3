"""
A tour of the point-gripper world
=================================

Drop a cube, push it across the table, then pick it up.
"""
import numpy as np

from pandalite.simcore import ObjectState, WorldState, advance

# a cube hovering 20 cm above the table falls under gravity
world = WorldState(objects=[ObjectState(pos=[0.1, 0.0, 0.2])])
for step in range(12):
    world = advance(world, np.zeros(3), 0.0)
print("cube after 0.48 s of free fall:", world.objects[0].pos.round(4))

# put the closed gripper behind the cube and sweep it along +x
world = WorldState(gripper_pos=[-0.05, 0.0, 0.02], objects=[ObjectState(pos=[0.0, 0.0, 0.02])])
for step in range(6):
    world = advance(world, [0.02, 0.0, 0.0], 0.0)
    print(f"push {step}: gripper x {world.gripper_pos[0]:+.3f}  cube x {world.objects[0].pos[0]:+.3f}"
          f"  touched {world.touched}")

# open the fingers, lower onto the cube and close them to grasp
world = WorldState(gripper_pos=[0.0, 0.0, 0.1], finger_opening=0.08,
                   objects=[ObjectState(pos=[0.0, 0.0, 0.02])])
world = advance(world, [0.0, 0.0, -0.04], 0.0)
world = advance(world, [0.0, 0.0, -0.04], 0.0)
world = advance(world, np.zeros(3), -0.08)
print("attached object:", world.attached)
world = advance(world, [0.05, 0.0, 0.05], 0.0)
print("lifted cube to", world.objects[0].pos.round(3))
