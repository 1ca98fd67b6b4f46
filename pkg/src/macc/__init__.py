"""macc: a desk-scale testbed where many agents explore a shared black-box
task, record submissions and reproduction attempts on an incentive-driven
blackboard, and receive rewards from pluggable allocation mechanisms."""

__version__ = "0.1.0"
