# Stability lab tests
