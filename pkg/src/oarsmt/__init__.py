"""Obstacle-avoiding rectilinear Steiner trees on grid mazes: exact and
approximate solvers, a recurrent convolutional solver with a termination
check, and the tooling to train and benchmark them."""

__version__ = "0.1.0"
