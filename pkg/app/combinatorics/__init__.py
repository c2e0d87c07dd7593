# Exact combinatorics: cancellative representation, set partitions, drift identities
