"""Transcript summarization via vector-quantized utterance representations.

The toolkit ingests livestream transcripts, trains a small vector-quantized
autoencoder over utterance embeddings, and extracts salient utterances from
5-minute clips by counting prominent latent codes. Unsupervised baselines
(lead, SumBasic, LexRank, TextRank) and the evaluation metrics used to compare
them ship alongside.
"""

__version__ = "0.1.0"
