"""strata: abstractive summarization of long sectioned documents on plain numpy.

A self-contained research stack: a tiny reverse-mode autodiff core, a
hierarchical section/word encoder, a two-level attentive decoder with a
copy/generate mixture output layer, Adagrad training, beam-search inference,
and ROUGE evaluation, wired together behind one CLI.

Scope: everything here runs on a single CPU core at desk scale. Published
benchmark scores for models of this family come from corpora of hundreds
of thousands of documents and multi-day accelerator training; those
absolute numbers are not reproducible at desk scale and are explicitly
out of scope. The test suite instead verifies mechanism-level properties:
gradient correctness, distribution invariants, search optimality on
enumerable spaces, overfitting capacity, verbatim copying of source
tokens, preprocessing conformance, and bit-level determinism.
"""

__version__ = "0.1.0"
