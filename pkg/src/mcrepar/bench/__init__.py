"""Sweep harness behind the ``mcrepar`` command."""
