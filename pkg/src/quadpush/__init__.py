"""Hierarchical MPC for quadruped planar pushing: contact optimizer, loco-manipulation MPC and simulator."""

__version__ = "0.1.0"
