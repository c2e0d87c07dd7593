# Command-line entry point for the toolkit
