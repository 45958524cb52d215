"""Registration and fidelity evaluation for ultra-widefield RI/FA image pairs."""

__version__ = "1.0.0"
