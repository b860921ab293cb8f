# CLI command groups for the seed scheduler
