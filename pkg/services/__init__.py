# Corridor, controller synthesis, oracle, reporting and plotting services
