# Lattice geometry and flip-rate models
