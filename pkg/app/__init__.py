# Bayesian degree-corrected blockmodels for static and temporal networks
# Version 1.0.0
