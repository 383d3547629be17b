"""Regional cholera incidence forecasting with boosted trees."""
