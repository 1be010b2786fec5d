"""Simulated laser logic-state imaging of FPGA fabrics and golden-model Trojan detection."""

__version__ = "0.1.0"
