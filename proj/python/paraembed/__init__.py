"""Paraphrastic sentence embeddings: subword averaging trained with a margin loss."""

from ._core import (
    EmbeddingModel,
    FormatError,
    TrainConfig,
    Vocabulary,
    build_dataset,
    cosine,
    dataset_size,
    embed_file,
    eval_sts,
    load_model,
    margin_loss,
    mega_batch_size_at,
    mine_bitext,
    normalize,
    num_threads,
    pearson,
    read_embeddings,
    save_model,
    score_file,
    score_pair,
    set_num_threads,
    train,
    train_vocab,
    trigram_overlap,
    whitespace_token_count,
)

__all__ = [
    "EmbeddingModel",
    "FormatError",
    "TrainConfig",
    "Vocabulary",
    "build_dataset",
    "cosine",
    "dataset_size",
    "embed_file",
    "eval_sts",
    "load_model",
    "margin_loss",
    "mega_batch_size_at",
    "mine_bitext",
    "normalize",
    "num_threads",
    "pearson",
    "read_embeddings",
    "save_model",
    "score_file",
    "score_pair",
    "set_num_threads",
    "train",
    "train_vocab",
    "trigram_overlap",
    "whitespace_token_count",
]
