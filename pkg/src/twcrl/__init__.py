"""Time-weighted contrastive reward learning."""
