"""Multi-class linear discriminant analysis for high-dimensional Gaussian data.

The package provides the population-optimal rule and four fitted rules
(pseudoinverse LDA, two thresholding-based sparse rules, an l1-regularized
linear-programming rule, and a nearest shrunken centroid baseline), plus
exact misclassification-gap bounds, sparsity and rate diagnostics, and a
reproducible simulation harness with a command line front end.
"""

__version__ = "0.1.0"
