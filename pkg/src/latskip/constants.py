"""Frozen physics and rendering constants for the toy environments.

The arena is the square [-1, 1]^2. Integration is semi-implicit Euler at
``DT`` seconds per sub-step. All values here are fixed; environment
behavior is configured only through ``EnvConfig``.
"""

DT = 0.05

# Shared body parameters.
CUP_MASS = 1.0
BALL_MASS = 0.5
FORCE_SCALE = 2.0
DAMPING = 0.9  # multiplicative velocity decay per sub-step

# Two-timescale catch: the ball hangs off the cup on a slack tether and is
# drawn toward it by a weak constant attraction. The cup answers the action
# directly; the ball answers only through the slowly built-up pull, which is
# what separates the two timescales.
SPRING_K = 8.0          # tether stiffness once taut
TETHER_LENGTH = 0.35    # slack length; also the reset radius of the ball
BALL_ATTRACT = 0.1      # constant-magnitude pull of the ball toward the cup
CATCH_RADIUS = 0.1

# Point reacher: a force-driven point effector chasing a slowly orbiting
# target.
TARGET_ORBIT = 0.5      # radius of the target's circular track
TARGET_DRIFT = 0.05     # angular speed of the target, rad/s
REACH_RADIUS = 0.1

# Rendering.
FRAME_CHANNELS = 3
FRAME_STACK = 3
BALL_COLOR = 0   # red channel
CUP_COLOR = 1    # green channel

# Distractor magnitudes per difficulty.
COLOR_SHIFT = {"easy": 0.1, "medium": 0.3}
CAMERA_SHIFT = {"easy": 1, "medium": 3}
