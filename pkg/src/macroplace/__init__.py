"""Macro placement toolkit: an RL agent places macros on a gridded canvas
under hard density masking, standard-cell clusters settle by a force-directed
step, and one proxy cost kernel (wirelength + routed congestion) drives both
PPO training (with supervised pretraining and transfer) and a
simulated-annealing baseline."""

__version__ = "0.1.0"
