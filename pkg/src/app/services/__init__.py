# RelGrad Services Package
