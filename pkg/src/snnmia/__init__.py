"""Membership-inference auditing of spiking neural networks."""
