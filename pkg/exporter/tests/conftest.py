import pytest
import torch


@pytest.fixture(scope="session")
def mixtral_checkpoint(tmp_path_factory):
    """A tiny random-weight Mixtral-architecture checkpoint saved to disk."""
    from transformers import MixtralConfig, MixtralForCausalLM

    cfg = MixtralConfig(
        hidden_size=16,
        intermediate_size=32,
        num_hidden_layers=2,
        num_attention_heads=4,
        num_key_value_heads=2,
        num_local_experts=4,
        num_experts_per_tok=2,
        vocab_size=300,
        max_position_embeddings=128,
    )
    torch.manual_seed(1234)
    model = MixtralForCausalLM(cfg)
    path = tmp_path_factory.mktemp("ckpt") / "tiny-mixtral"
    model.save_pretrained(path)
    return path


@pytest.fixture
def texts_file(tmp_path):
    path = tmp_path / "texts.txt"
    path.write_text("the cat sat\na dog ran fast\nrivers flow downhill\n")
    return path
