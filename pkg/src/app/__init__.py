# RelGrad Application Package
