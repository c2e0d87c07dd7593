# Services module - simulation, estimation and run bookkeeping
