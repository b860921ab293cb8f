# Initialization file for formatting package
