from .chain import chain_mdp
from .hanoi import hanoi_mdp, hanoi_subgoals
from .nine_rooms import DoorwaySpec, Layout, nine_rooms_mdp, nine_rooms_subgoals
from .random_mdp import random_mdp

__all__ = [
    "DoorwaySpec",
    "Layout",
    "chain_mdp",
    "hanoi_mdp",
    "hanoi_subgoals",
    "nine_rooms_mdp",
    "nine_rooms_subgoals",
    "random_mdp",
]
