"""Physics fit models and figure-of-merit extractors."""
from .hbt import fit_antibunching_cw, hbt_pulsed_g2
from .hom import (default_hom_positions, fit_hom_cw, fit_hom_pulsed, hom_cw_baseline,
                  postselected_visibility, raw_visibility)
from .models import MODELS
from .spectro import (degree_of_polarization, fit_dop, fit_lifetime, fit_powerlaw,
                      purcell_ratio, slope_ratio, splitting_ratio)

__all__ = [
    "fit_antibunching_cw", "hbt_pulsed_g2", "fit_hom_cw", "fit_hom_pulsed",
    "default_hom_positions", "hom_cw_baseline", "postselected_visibility", "raw_visibility",
    "fit_lifetime", "purcell_ratio", "fit_dop", "degree_of_polarization", "fit_powerlaw",
    "slope_ratio", "splitting_ratio", "MODELS",
]
