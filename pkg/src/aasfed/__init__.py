"""Multi-organization digital-twin federation: copy-on-write shell cloning,
registry synchronization, and an embedded BPMN-subset workflow engine."""

__version__ = "0.1.0"
