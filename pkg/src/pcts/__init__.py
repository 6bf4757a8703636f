"""Prompt-tuning clickbait detection over re-ranked news summaries."""

from .detector import DetectionResult, DetectorTrainConfig, score, train_detector
from .prompt_templates import NO_SUMMARY, PromptTemplate, builtin_templates, render
from .text_metrics import rouge_l, rouge_n, tokenize
from .verbalizer import Verbalizer, build_verbalizer, integrate

__version__ = "0.1.0"

__all__ = [
    "DetectionResult", "DetectorTrainConfig", "NO_SUMMARY", "PromptTemplate", "Verbalizer",
    "build_verbalizer", "builtin_templates", "integrate", "render", "rouge_l", "rouge_n", "score",
    "tokenize", "train_detector",
]
