"""Cross-modal symbol grounding with paired BiLSTM-CTC networks.

Two networks (visual and audio) each transcribe a sequence into output
channels whose meaning is not fixed in advance. An EM-style binding step
learns which channel codes which semantic concept, and the networks teach
each other through DTW-aligned CTC targets, pooled by elementwise max on
the concepts both transcripts share.
"""

__version__ = "0.1.0"
