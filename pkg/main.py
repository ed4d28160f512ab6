"""
Main entry point for the corridor planner command line.
"""
from cli import cli

# Run the command line when executed directly
if __name__ == "__main__":
    cli()
