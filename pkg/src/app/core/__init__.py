# RelGrad Core Package
