# RelGrad Models Package
