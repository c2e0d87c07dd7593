# Voter-model perturbation toolkit - main application package
