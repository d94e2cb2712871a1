"""Command-line entry point of the FedPLT simulator."""
